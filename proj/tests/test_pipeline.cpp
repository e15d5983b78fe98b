#include <gtest/gtest.h>

#include <filesystem>

#include "hsid/pipeline.hpp"

using namespace hsid;
namespace fs = std::filesystem;

namespace {

RunConfig tiny_config(const std::string& tag) {
  RunConfig cfg;
  cfg.seed = 11;
  cfg.paths.out_dir = (fs::temp_directory_path() / ("hsid_pipe_" + tag)).string();
  cfg.data.n_scenes = 12;
  cfg.data.size = 16;
  cfg.data.splits = {0.5, 0.25, 0.25};
  cfg.hsr.net.stages = 1;
  cfg.hsr.net.base_channels = 8;
  cfg.hsr.steps = 6;
  cfg.hsr.batch = 2;
  cfg.hsr.stop_mrae = -1;
  cfg.detector.channels = 8;
  cfg.detector.steps = 6;
  cfg.detector.batch = 2;
  cfg.detector.train_kind = "band_notch";
  return cfg;
}

}  // namespace

TEST(Pipeline, GenerateMatchesMakeDataset) {
  RunConfig cfg = tiny_config("gen");
  Dataset a = generate_dataset(cfg.seed, cfg.dataset_config());
  Dataset b = make_dataset(cfg.seed, cfg.dataset_config());
  ASSERT_EQ(a.pairs.size(), b.pairs.size());
  for (std::size_t i = 0; i < a.pairs.size(); ++i) {
    EXPECT_EQ(a.pairs[i].partition, b.pairs[i].partition);
    EXPECT_EQ(a.pairs[i].real.hsi.data.data, b.pairs[i].real.hsi.data.data);
    EXPECT_EQ(a.pairs[i].fake.hsi.data.data, b.pairs[i].fake.hsi.data.data);
  }
}

TEST(Pipeline, DatasetDiskRoundTrip) {
  RunConfig cfg = tiny_config("roundtrip");
  fs::remove_all(cfg.paths.out_dir);
  std::string msg;
  GenDataResult counts = cmd_gen_data(cfg, &msg);
  EXPECT_EQ(counts.n_train + counts.n_val + counts.n_test, 24u);

  const RunPaths paths = run_paths(cfg);
  Dataset loaded = load_dataset(paths);
  Dataset fresh = generate_dataset(cfg.seed, cfg.dataset_config());
  ASSERT_EQ(loaded.pairs.size(), fresh.pairs.size());
  // Stored cubes are the f32 truncation of the generated ones.
  std::size_t matched = 0;
  for (const SamplePair& lp : loaded.pairs)
    for (const SamplePair& fp : fresh.pairs)
      if (fp.real.scene_seed == lp.real.scene_seed) {
        ++matched;
        EXPECT_EQ(lp.partition, fp.partition);
        ASSERT_EQ(lp.fake.manip_id, fp.fake.manip_id);
        for (std::size_t i = 0; i < lp.real.hsi.data.size(); ++i)
          EXPECT_EQ(static_cast<float>(fp.real.hsi.data.data[i]),
                    static_cast<float>(lp.real.hsi.data.data[i]));
      }
  EXPECT_EQ(matched, loaded.pairs.size());

  // Rerun writes byte-identical manifest.
  const std::string first = detail::read_file(paths.manifest());
  cmd_gen_data(cfg);
  EXPECT_EQ(detail::read_file(paths.manifest()), first);
}

TEST(Pipeline, ManifestLineCountAndBalance) {
  RunConfig cfg = tiny_config("manifest");
  fs::remove_all(cfg.paths.out_dir);
  cmd_gen_data(cfg);
  std::ifstream f(run_paths(cfg).manifest());
  std::size_t lines = 0, reals = 0;
  std::string line;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    ++lines;
    if (json::parse(line).at("label") == "real") ++reals;
  }
  EXPECT_EQ(lines, 2 * cfg.data.n_scenes);
  EXPECT_EQ(reals * 2, lines);
}

TEST(Pipeline, EndToEndSmokeAndDeterminism) {
  RunConfig cfg = tiny_config("e2e");
  fs::remove_all(cfg.paths.out_dir);
  const RunPaths paths = run_paths(cfg);
  cmd_gen_data(cfg);

  HsrTrainResult hsr1 = cmd_pretrain_hsr(cfg);
  EXPECT_EQ(hsr1.steps_run, cfg.hsr.steps);
  for (const auto& [step, loss] : hsr1.history) EXPECT_TRUE(std::isfinite(loss));
  EXPECT_TRUE(fs::exists(paths.hsr_checkpoint()));
  EXPECT_TRUE(fs::exists(paths.hsr_loss_csv()));

  // Loss CSV is identical across reruns.
  const std::string csv1 = detail::read_file(paths.hsr_loss_csv());
  cmd_pretrain_hsr(cfg);
  EXPECT_EQ(detail::read_file(paths.hsr_loss_csv()), csv1);

  // Same config drives the whole pipeline: the detector finds this run's
  // hsr checkpoint without naming it.
  RunConfig det_cfg = cfg;
  DetTrainResult det = cmd_train_detector(det_cfg);
  EXPECT_EQ(det.steps_run, det_cfg.detector.steps);
  const RunPaths det_paths = run_paths(det_cfg);
  EXPECT_TRUE(fs::exists(det_paths.detector_checkpoint()));

  // Loss CSV columns match the loss breakdown fields.
  std::ifstream csv(det_paths.detector_loss_csv());
  std::string header;
  std::getline(csv, header);
  EXPECT_EQ(header, "step,cls_binary,cls_specific,contrastive,reconstruction,total");

  ReportTable table = cmd_eval(det_cfg, "");
  ASSERT_EQ(table.rows.size(), 1u);
  EXPECT_EQ(table.rows[0].aucs.size(), 3u);
  EXPECT_NO_THROW(table.check_invariants());

  // Deterministic rerun of eval produces identical report files.
  const std::string report1 = detail::read_file(det_paths.report_csv());
  const std::string summary1 = detail::read_file(det_paths.summary_json());
  cmd_eval(det_cfg, "");
  EXPECT_EQ(detail::read_file(det_paths.report_csv()), report1);
  EXPECT_EQ(detail::read_file(det_paths.summary_json()), summary1);
}

TEST(Pipeline, MissingInputsRaiseDocumentedErrors) {
  RunConfig cfg = tiny_config("missing");
  fs::remove_all(cfg.paths.out_dir);
  EXPECT_THROW(cmd_pretrain_hsr(cfg), IoError);  // no dataset yet

  cmd_gen_data(cfg);
  RunConfig det_cfg = cfg;  // hsi input, but pretrain-hsr has not run
  EXPECT_THROW(cmd_train_detector(det_cfg), ConfigError);
  det_cfg.detector.hsr_checkpoint = "/nonexistent/hsr.hsck";
  EXPECT_THROW(cmd_train_detector(det_cfg), ConfigError);

  EXPECT_THROW(cmd_eval(cfg, ""), IoError);  // no detector checkpoint
}

TEST(Pipeline, RgbModeNeedsNoHsrCheckpoint) {
  RunConfig cfg = tiny_config("rgbmode");
  cfg.detector.input = "rgb";
  fs::remove_all(cfg.paths.out_dir);
  cmd_gen_data(cfg);
  DetTrainResult det = cmd_train_detector(cfg);
  EXPECT_EQ(det.steps_run, cfg.detector.steps);
  ReportTable table = cmd_eval(cfg, "");
  EXPECT_EQ(table.rows[0].aucs.size(), 3u);
}

TEST(Pipeline, ReconstructCommandWritesArtifacts) {
  RunConfig cfg = tiny_config("recon");
  fs::remove_all(cfg.paths.out_dir);
  const RunPaths paths = run_paths(cfg);
  cmd_gen_data(cfg);
  cmd_pretrain_hsr(cfg);

  // 31-band input: project then reconstruct.
  const std::string input31 = paths.root + "/data/" + sample_file_name(0, false);
  ReconstructResult r = cmd_reconstruct(cfg, "", input31, /*dump_bands=*/true);
  EXPECT_TRUE(fs::exists(r.output_hs1));
  EXPECT_EQ(load_hs1_cube(r.output_hs1).shape[0], kBands);
  EXPECT_EQ(r.band_files.size(), kBands);

  // Reconstruct -> save -> load preserves values at f32.
  Tensor cube = load_hs1_cube(r.output_hs1);
  SpectralImage direct = hsr_apply(load_checkpoint(paths.hsr_checkpoint()).params, cfg.hsr.net,
                                   project_rgb(load_hs1(input31)));
  for (std::size_t i = 0; i < cube.size(); ++i)
    EXPECT_EQ(static_cast<float>(direct.data.data[i]), static_cast<float>(cube.data[i]));

  // 3-channel input path.
  const std::string rgb_path = paths.root + "/rgb_input.hs1";
  save_hs1(rgb_path, project_rgb(load_hs1(input31)).data);
  ReconstructResult r2 = cmd_reconstruct(cfg, "", rgb_path, false);
  EXPECT_EQ(load_hs1_cube(r2.output_hs1).shape, (Shape{kBands, 16, 16}));

  // Wrong channel count is a format error.
  const std::string bad_path = paths.root + "/bad_input.hs1";
  save_hs1(bad_path, Tensor({5, 16, 16}, 0.1));
  EXPECT_THROW(cmd_reconstruct(cfg, "", bad_path, false), FormatError);
}
