#pragma once

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <thread>
#include <vector>

#include "hsid/checkpoint.hpp"
#include "hsid/config.hpp"
#include "hsid/data.hpp"
#include "hsid/detector.hpp"
#include "hsid/eval.hpp"
#include "hsid/hs1.hpp"
#include "hsid/hsr.hpp"
#include "hsid/objectives.hpp"
#include "hsid/optim.hpp"

namespace hsid {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Run directory layout
// ---------------------------------------------------------------------------

struct RunPaths {
  std::string root;
  std::string data_dir() const { return root + "/data"; }
  std::string manifest() const { return data_dir() + "/manifest.jsonl"; }
  std::string checkpoints_dir() const { return root + "/checkpoints"; }
  std::string hsr_checkpoint() const { return checkpoints_dir() + "/hsr.hsck"; }
  std::string detector_checkpoint() const { return checkpoints_dir() + "/detector.hsck"; }
  std::string logs_dir() const { return root + "/logs"; }
  std::string hsr_loss_csv() const { return logs_dir() + "/hsr_loss.csv"; }
  std::string detector_loss_csv() const { return logs_dir() + "/detector_loss.csv"; }
  std::string reports_dir() const { return root + "/reports"; }
  std::string report_csv() const { return reports_dir() + "/report.csv"; }
  std::string summary_json() const { return reports_dir() + "/summary.json"; }
  std::string reconstruct_dir() const { return root + "/reconstruct"; }
};

inline RunPaths run_paths(const RunConfig& cfg) { return RunPaths{cfg.run_dir()}; }

inline std::size_t worker_count() {
  if (const char* env = std::getenv("HSI_DETECT_THREADS")) {
    const long n = std::strtol(env, nullptr, 10);
    if (n >= 1) return static_cast<std::size_t>(n);
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return std::min<std::size_t>(hw == 0 ? 1 : hw, 4);
}

// ---------------------------------------------------------------------------
// Dataset generation and (re)loading
// ---------------------------------------------------------------------------

// Scene synthesis is embarrassingly parallel: each pair depends only on
// (seed, scene index), so the worker split cannot change the result.
inline Dataset generate_dataset(std::uint64_t seed, const DatasetConfig& cfg) {
  if (cfg.n_scenes < 10) throw ConfigError("n_scenes must be at least 10");
  if (cfg.kinds.empty()) throw ConfigError("manipulation kind list is empty");
  cfg.splits.validate();

  Dataset ds = [&] {
    Dataset empty;
    empty.pairs.resize(cfg.n_scenes);
    return empty;
  }();
  const std::size_t workers = std::min(worker_count(), cfg.n_scenes);
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w)
    pool.emplace_back([&, w] {
      for (std::size_t i = w; i < cfg.n_scenes; i += workers)
        ds.pairs[i] = make_sample_pair(seed, i, cfg);
    });
  for (std::thread& t : pool) t.join();

  // Same partition assignment as make_dataset.
  std::vector<std::size_t> order(cfg.n_scenes);
  std::iota(order.begin(), order.end(), 0);
  Rng split_rng = Rng::stream(seed, "split", 0);
  split_rng.shuffle(order);
  const std::size_t n_train =
      static_cast<std::size_t>(std::llround(cfg.splits.train * static_cast<double>(cfg.n_scenes)));
  const std::size_t n_val =
      static_cast<std::size_t>(std::llround(cfg.splits.val * static_cast<double>(cfg.n_scenes)));
  if (n_train + n_val > cfg.n_scenes)
    throw ConfigError("split fractions leave no room for the test partition");
  for (std::size_t i = 0; i < cfg.n_scenes; ++i)
    ds.pairs[order[i]].partition =
        i < n_train ? Partition::Train : (i < n_train + n_val ? Partition::Val : Partition::Test);
  return ds;
}

struct GenDataResult {
  std::size_t n_train = 0, n_val = 0, n_test = 0;  // sample counts (2 per scene)
};

inline std::string sample_file_name(std::size_t scene_index, bool fake) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "s%05zu_%s.hs1", scene_index, fake ? "fake" : "real");
  return buf;
}

inline GenDataResult write_dataset(const RunPaths& paths, const Dataset& ds) {
  fs::create_directories(paths.data_dir());
  std::string manifest;
  GenDataResult counts;
  for (std::size_t i = 0; i < ds.pairs.size(); ++i) {
    const SamplePair& sp = ds.pairs[i];
    for (const LabeledSample* s : {&sp.real, &sp.fake}) {
      const std::string rel = "data/" + sample_file_name(i, s->fake);
      save_hs1(paths.root + "/" + rel, s->hsi);
      json line;
      line["path"] = rel;
      line["label"] = s->fake ? "fake" : "real";
      if (s->fake) line["manip_id"] = *s->manip_id;
      else line["manip_id"] = nullptr;
      line["scene_seed"] = s->scene_seed;
      line["partition"] = partition_name(sp.partition);
      manifest += line.dump() + "\n";
    }
    switch (sp.partition) {
      case Partition::Train: counts.n_train += 2; break;
      case Partition::Val: counts.n_val += 2; break;
      case Partition::Test: counts.n_test += 2; break;
    }
  }
  detail::write_file(paths.manifest(), manifest);
  return counts;
}

// Rebuilds the dataset from manifest + HS1 files. The stored cube is the
// source of truth; the RGB projection is recomputed from it.
inline Dataset load_dataset(const RunPaths& paths) {
  std::ifstream f(paths.manifest());
  if (!f) throw IoError("missing dataset manifest " + paths.manifest() + " (run gen-data first)");
  Dataset ds;
  std::map<std::uint64_t, std::size_t> by_seed;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(f, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw FormatError(paths.manifest() + ":" + std::to_string(line_no) + ": " + e.what());
    }
    LabeledSample s;
    const std::string rel = j.at("path").get<std::string>();
    s.hsi = load_hs1(paths.root + "/" + rel);
    s.rgb = project_rgb(s.hsi);
    s.fake = j.at("label").get<std::string>() == "fake";
    if (!j.at("manip_id").is_null()) s.manip_id = j.at("manip_id").get<int>();
    s.scene_seed = j.at("scene_seed").get<std::uint64_t>();
    s.check_invariants();
    const Partition part = partition_from_name(j.at("partition").get<std::string>());

    auto it = by_seed.find(s.scene_seed);
    if (it == by_seed.end()) {
      by_seed.emplace(s.scene_seed, ds.pairs.size());
      ds.pairs.emplace_back();
      it = by_seed.find(s.scene_seed);
    }
    SamplePair& sp = ds.pairs[it->second];
    sp.partition = part;
    (s.fake ? sp.fake : sp.real) = std::move(s);
  }
  for (const SamplePair& sp : ds.pairs)
    if (sp.real.hsi.height == 0 || sp.fake.hsi.height == 0)
      throw FormatError(paths.manifest() + ": incomplete pair for scene " +
                        std::to_string(sp.real.scene_seed));
  return ds;
}

// ---------------------------------------------------------------------------
// HSR pretraining
// ---------------------------------------------------------------------------

struct HsrTrainResult {
  ParamStore params;
  std::vector<std::pair<std::size_t, double>> history;  // (step, batch MRAE before update)
  std::size_t steps_run = 0;
  double val_mrae = -1.0;  // last validation value, if a val set exists
};

inline double hsr_validation_mrae(const ParamStore& params, const HsrConfig& cfg,
                                  const std::vector<const LabeledSample*>& val) {
  double acc = 0.0;
  for (const LabeledSample* s : val) {
    SpectralImage recon = hsr_apply(params, cfg, s->rgb);
    acc += mrae(recon.data, s->hsi.data);
  }
  return acc / static_cast<double>(val.size());
}

inline HsrTrainResult pretrain_hsr(const RunConfig& cfg, const Dataset& ds) {
  const HsrConfig& net = cfg.hsr.net;
  std::vector<const LabeledSample*> train = ds.partition_samples(Partition::Train);
  std::vector<const LabeledSample*> val = ds.partition_samples(Partition::Val);
  if (train.empty()) throw ConfigError("hsr pretraining: train partition is empty");

  HsrTrainResult result;
  result.params = hsr_init_params(net, cfg.seed);
  AdamState opt;
  opt.hyper.lr = cfg.hsr.lr;

  const std::size_t eval_every = 100;
  for (std::size_t step = 0; step < cfg.hsr.steps; ++step) {
    Rng batch_rng = Rng::stream(cfg.seed, "hsr_batch", step);
    Tape tape;
    ParamVars pv = register_params(tape, result.params);
    Var loss;
    for (std::size_t b = 0; b < cfg.hsr.batch; ++b) {
      const LabeledSample* s = train[batch_rng.next_below(train.size())];
      Var recon = hsr_reconstruct(pv, tape.constant(s->rgb.data), net);
      Var term = mrae(recon, tape.constant(s->hsi.data));
      loss = loss.valid() ? add(loss, term) : term;
    }
    loss = mul_const(loss, 1.0 / static_cast<double>(cfg.hsr.batch));
    const double loss_value = loss.val().scalar_value();
    if (!std::isfinite(loss_value))
      throw TrainingError("hsr pretraining diverged at step " + std::to_string(step));
    result.history.emplace_back(step, loss_value);

    Gradients g = tape.backward(loss);
    adam_step(result.params, collect_grads(g, pv), opt);
    result.steps_run = step + 1;

    if (cfg.hsr.stop_mrae > 0 && !val.empty() && (step + 1) % eval_every == 0) {
      result.val_mrae = hsr_validation_mrae(result.params, net, val);
      if (result.val_mrae <= cfg.hsr.stop_mrae) break;
    }
  }
  if (!val.empty()) result.val_mrae = hsr_validation_mrae(result.params, net, val);
  return result;
}

// ---------------------------------------------------------------------------
// Detector training
// ---------------------------------------------------------------------------

// A (real, fake) pair already mapped to the detector's input space: the
// reconstructed cube in hsi mode, the raw projection in the rgb ablation.
struct DetPair {
  Tensor real_input;
  Tensor fake_input;
  int manip_id = 0;
};

inline Tensor detector_input(const LabeledSample& s, bool rgb_mode, const ParamStore* hsr_params,
                             const HsrConfig* hsr_cfg) {
  if (rgb_mode) return s.rgb.data;
  if (!hsr_params || !hsr_cfg)
    throw ConfigError("hsi input mode requires a frozen HSR checkpoint");
  return hsr_apply(*hsr_params, *hsr_cfg, s.rgb).data;
}

inline std::vector<DetPair> build_detector_pairs(const Dataset& ds, Partition part,
                                                 std::optional<int> kind_filter, bool rgb_mode,
                                                 const ParamStore* hsr_params,
                                                 const HsrConfig* hsr_cfg) {
  std::vector<DetPair> out;
  for (const SamplePair* sp : ds.partition_pairs(part, kind_filter)) {
    DetPair p;
    p.real_input = detector_input(sp->real, rgb_mode, hsr_params, hsr_cfg);
    p.fake_input = detector_input(sp->fake, rgb_mode, hsr_params, hsr_cfg);
    p.manip_id = *sp->fake.manip_id;
    out.push_back(std::move(p));
  }
  return out;
}

struct DetTrainResult {
  ParamStore params;
  std::vector<std::pair<std::size_t, LossBreakdown>> history;  // per step, before update
  std::size_t steps_run = 0;
};

inline DetTrainResult train_detector(const RunConfig& cfg, const std::vector<DetPair>& pairs) {
  if (pairs.empty()) throw ConfigError("detector training: no pairs for kind " + cfg.detector.train_kind);
  const DetectorConfig det = cfg.detector_config();
  DetTrainResult result;
  result.params = detector_init_params(det, cfg.seed);
  AdamState opt;
  opt.hyper.lr = cfg.detector.lr;

  for (std::size_t step = 0; step < cfg.detector.steps; ++step) {
    Rng batch_rng = Rng::stream(cfg.seed, "det_batch", step);
    Tape tape;
    ParamVars pv = register_params(tape, result.params);

    std::vector<ClsTarget> cls;
    std::vector<Var> embeddings;
    std::vector<bool> emb_fake;
    std::vector<ReconTriple> recon;
    for (std::size_t b = 0; b < cfg.detector.batch; ++b) {
      const DetPair& p = pairs[batch_rng.next_below(pairs.size())];
      auto [oreal, ofake] =
          forward_pair(pv, tape.constant(p.real_input), tape.constant(p.fake_input), det);
      cls.push_back({oreal.logits.binary, oreal.logits.specific, false, std::nullopt});
      cls.push_back({ofake.logits.binary, ofake.logits.specific, true, p.manip_id});
      embeddings.push_back(oreal.embedding);
      emb_fake.push_back(false);
      embeddings.push_back(ofake.embedding);
      emb_fake.push_back(true);
      recon.push_back({oreal.self_recon, oreal.cross_recon, oreal.input});
      recon.push_back({ofake.self_recon, ofake.cross_recon, ofake.input});
    }
    auto [cls_bin, cls_spec] = multitask_cls_loss(tape, cls);
    Var con = contrastive_reg_loss(tape, embeddings, emb_fake, det.margin);
    Var rec = reconstruction_loss(tape, recon);
    LossVars loss = total_loss(tape, cls_bin, cls_spec, con, rec, cfg.detector.lambdas);
    const LossBreakdown breakdown = loss.values();
    if (!std::isfinite(breakdown.total))
      throw TrainingError("detector training diverged at step " + std::to_string(step));
    result.history.emplace_back(step, breakdown);

    Gradients g = tape.backward(loss.total);
    adam_step(result.params, collect_grads(g, pv), opt);
    result.steps_run = step + 1;
  }
  return result;
}

// ---------------------------------------------------------------------------
// Scoring and evaluation
// ---------------------------------------------------------------------------

struct TrainedDetector {
  ParamStore params;
  DetectorConfig config;
  // Frozen stage-1 network, present in hsi mode.
  const ParamStore* hsr_params = nullptr;
  const HsrConfig* hsr_config = nullptr;
};

inline SampleScorer make_scorer(const TrainedDetector& model) {
  auto cache = std::make_shared<std::map<const LabeledSample*, double>>();
  return [model, cache](const LabeledSample& s) {
    auto it = cache->find(&s);
    if (it != cache->end()) return it->second;
    Tensor input = detector_input(s, model.config.rgb_input, model.hsr_params, model.hsr_config);
    const double score = detector_score(model.params, model.config, input);
    cache->emplace(&s, score);
    return score;
  };
}

inline std::vector<ManipKind> kinds_from_names(const std::vector<std::string>& names) {
  std::vector<ManipKind> out;
  for (const std::string& n : names) out.push_back(manip_kind_from_name(n));
  return out;
}

inline ReportRow evaluate_detector(const RunConfig& cfg, const TrainedDetector& model,
                                   const Dataset& ds) {
  EvalProtocol protocol;
  protocol.train_kind = cfg.detector.train_kind;
  protocol.test_kinds = kinds_from_names(cfg.eval.kinds);
  protocol.train_scene_seeds = ds.partition_scene_seeds(Partition::Train);
  return cross_manipulation_eval(make_scorer(model), ds, protocol);
}

// ---------------------------------------------------------------------------
// Artifact writers
// ---------------------------------------------------------------------------

inline void write_hsr_loss_csv(const std::string& path, const HsrTrainResult& r,
                               std::size_t log_every) {
  std::string csv = "step,mrae\n";
  for (const auto& [step, loss] : r.history)
    if (step % log_every == 0 || step + 1 == r.steps_run)
      csv += std::to_string(step) + "," + format_double(loss) + "\n";
  detail::write_file(path, csv);
}

inline void write_detector_loss_csv(const std::string& path, const DetTrainResult& r,
                                    std::size_t log_every) {
  std::string csv = "step,cls_binary,cls_specific,contrastive,reconstruction,total\n";
  for (const auto& [step, b] : r.history)
    if (step % log_every == 0 || step + 1 == r.steps_run)
      csv += std::to_string(step) + "," + format_double(b.cls_binary) + "," +
             format_double(b.cls_specific) + "," + format_double(b.contrastive) + "," +
             format_double(b.reconstruction) + "," + format_double(b.total) + "\n";
  detail::write_file(path, csv);
}

inline void write_report(const RunPaths& paths, const ReportTable& table) {
  table.check_invariants();
  std::string csv = "train_kind,test_kind,auc\n";
  for (const ReportRow& row : table.rows)
    for (const auto& [kind, a] : row.aucs)
      csv += row.train_kind + "," + kind + "," + format_double(a) + "\n";
  detail::write_file(paths.report_csv(), csv);

  json summary;
  summary["positive_class"] = "fake";
  summary["rows"] = json::array();
  for (const ReportRow& row : table.rows) {
    json r;
    r["train_kind"] = row.train_kind;
    json aucs;
    for (const auto& [kind, a] : row.aucs) aucs[kind] = a;
    r["aucs"] = aucs;
    r["avg"] = row.avg;
    summary["rows"].push_back(r);
  }
  detail::write_file(paths.summary_json(), summary.dump(2) + "\n");
}

inline std::string format_report_row(const ReportRow& row) {
  std::string out = "train=" + row.train_kind + ":";
  for (const auto& [kind, a] : row.aucs) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), " %s=%.4f", kind.c_str(), a);
    out += buf;
  }
  char buf[32];
  std::snprintf(buf, sizeof(buf), " avg=%.4f", row.avg);
  out += buf;
  return out;
}

// ---------------------------------------------------------------------------
// Commands (library form; the CLI maps exceptions to exit codes)
// ---------------------------------------------------------------------------

inline GenDataResult cmd_gen_data(const RunConfig& cfg, std::string* message = nullptr) {
  const RunPaths paths = run_paths(cfg);
  Dataset ds = generate_dataset(cfg.seed, cfg.dataset_config());
  GenDataResult counts = write_dataset(paths, ds);
  if (message)
    *message = "wrote " + std::to_string(2 * ds.pairs.size()) + " samples (train " +
               std::to_string(counts.n_train) + ", val " + std::to_string(counts.n_val) +
               ", test " + std::to_string(counts.n_test) + ") under " + paths.data_dir();
  return counts;
}

inline HsrTrainResult cmd_pretrain_hsr(const RunConfig& cfg, std::string* message = nullptr) {
  const RunPaths paths = run_paths(cfg);
  Dataset ds = load_dataset(paths);
  HsrTrainResult result = pretrain_hsr(cfg, ds);
  fs::create_directories(paths.checkpoints_dir());
  fs::create_directories(paths.logs_dir());
  save_checkpoint(paths.hsr_checkpoint(), result.params, cfg.hash());
  write_hsr_loss_csv(paths.hsr_loss_csv(), result, cfg.hsr.log_every);
  if (message) {
    char buf[160];
    std::snprintf(buf, sizeof(buf), "hsr: %zu steps, final batch mrae %.5f, val mrae %.5f -> %s",
                  result.steps_run, result.history.back().second, result.val_mrae,
                  paths.hsr_checkpoint().c_str());
    *message = buf;
  }
  return result;
}

// Loads the frozen stage-1 checkpoint: detector.hsr_checkpoint if set (reuse
// across runs), else this run's own pretrain-hsr output.
inline ParamStore load_hsr_for_detector(const RunConfig& cfg) {
  const std::string path = cfg.detector.hsr_checkpoint.empty()
                               ? run_paths(cfg).hsr_checkpoint()
                               : cfg.detector.hsr_checkpoint;
  if (!fs::exists(path))
    throw ConfigError("detector.input is \"hsi\" but the hsr checkpoint " + path +
                      " does not exist (run pretrain-hsr first or set detector.hsr_checkpoint)");
  Checkpoint ck = load_checkpoint(path);
  verify_params(ck.params, hsr_init_params(cfg.hsr.net, 0), "hsr checkpoint");
  return std::move(ck.params);
}

inline DetTrainResult cmd_train_detector(const RunConfig& cfg, std::string* message = nullptr) {
  const RunPaths paths = run_paths(cfg);
  Dataset ds = load_dataset(paths);
  const bool rgb_mode = cfg.detector.input == "rgb";
  ParamStore hsr_params;
  if (!rgb_mode) hsr_params = load_hsr_for_detector(cfg);
  const int kind = static_cast<int>(manip_kind_from_name(cfg.detector.train_kind));
  std::vector<DetPair> pairs =
      build_detector_pairs(ds, Partition::Train, kind, rgb_mode,
                           rgb_mode ? nullptr : &hsr_params, rgb_mode ? nullptr : &cfg.hsr.net);
  DetTrainResult result = train_detector(cfg, pairs);
  fs::create_directories(paths.checkpoints_dir());
  fs::create_directories(paths.logs_dir());
  save_checkpoint(paths.detector_checkpoint(), result.params, cfg.hash());
  write_detector_loss_csv(paths.detector_loss_csv(), result, cfg.detector.log_every);
  if (message) {
    char buf[160];
    std::snprintf(buf, sizeof(buf), "detector: %zu steps on %zu pairs, final total loss %.5f -> %s",
                  result.steps_run, pairs.size(), result.history.back().second.total,
                  paths.detector_checkpoint().c_str());
    *message = buf;
  }
  return result;
}

inline ReportTable cmd_eval(const RunConfig& cfg, const std::string& checkpoint_path,
                            std::string* message = nullptr) {
  const RunPaths paths = run_paths(cfg);
  Dataset ds = load_dataset(paths);
  const std::string det_path =
      checkpoint_path.empty() ? paths.detector_checkpoint() : checkpoint_path;
  if (!fs::exists(det_path)) throw IoError("detector checkpoint not found: " + det_path);
  Checkpoint ck = load_checkpoint(det_path);
  const DetectorConfig det = cfg.detector_config();
  verify_params(ck.params, detector_init_params(det, 0), "detector checkpoint");

  TrainedDetector model;
  model.params = std::move(ck.params);
  model.config = det;
  ParamStore hsr_params;
  if (!det.rgb_input) {
    hsr_params = load_hsr_for_detector(cfg);
    model.hsr_params = &hsr_params;
    model.hsr_config = &cfg.hsr.net;
  }

  ReportTable table;
  table.rows.push_back(evaluate_detector(cfg, model, ds));
  fs::create_directories(paths.reports_dir());
  write_report(paths, table);
  if (message) *message = format_report_row(table.rows[0]) + "\n-> " + paths.report_csv();
  return table;
}

struct ReconstructResult {
  std::string output_hs1;
  std::vector<std::string> band_files;
};

inline ReconstructResult cmd_reconstruct(const RunConfig& cfg, const std::string& checkpoint_path,
                                         const std::string& input_path, bool dump_bands,
                                         std::string* message = nullptr) {
  const RunPaths paths = run_paths(cfg);
  const std::string ck_path = checkpoint_path.empty() ? paths.hsr_checkpoint() : checkpoint_path;
  if (!fs::exists(ck_path)) throw IoError("hsr checkpoint not found: " + ck_path);
  Checkpoint ck = load_checkpoint(ck_path);
  verify_params(ck.params, hsr_init_params(cfg.hsr.net, 0), "hsr checkpoint");

  Tensor cube = load_hs1_cube(input_path);
  RgbImage rgb;
  if (cube.shape[0] == 3) {
    rgb.height = cube.shape[1];
    rgb.width = cube.shape[2];
    rgb.data = cube;
  } else if (cube.shape[0] == kBands) {
    const std::size_t h = cube.shape[1], w = cube.shape[2];
    rgb = project_rgb(SpectralImage(h, w, std::move(cube)));
  } else {
    throw FormatError(input_path + ": expected 3 or " + std::to_string(kBands) + " channels, got " +
                      std::to_string(cube.shape[0]));
  }

  SpectralImage recon = hsr_apply(ck.params, cfg.hsr.net, rgb);
  const std::string stem = fs::path(input_path).stem().string();
  ReconstructResult result;
  result.output_hs1 = paths.reconstruct_dir() + "/" + stem + "_recon.hs1";
  save_hs1(result.output_hs1, recon);
  if (dump_bands)
    result.band_files = dump_bands_pgm(paths.reconstruct_dir() + "/" + stem + "_bands", recon);
  if (message)
    *message = "reconstructed " + std::to_string(rgb.width) + "x" + std::to_string(rgb.height) +
               " -> " + result.output_hs1 +
               (dump_bands ? " (+" + std::to_string(result.band_files.size()) + " band files)" : "");
  return result;
}

}  // namespace hsid
