#pragma once

#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "hsid/common.hpp"
#include "hsid/data.hpp"
#include "hsid/detector.hpp"
#include "hsid/hsr.hpp"
#include "hsid/objectives.hpp"

namespace hsid {

using json = nlohmann::json;

namespace cfgdetail {

inline void check_keys(const json& j, const std::vector<std::string>& allowed,
                       const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be a JSON object");
  for (const auto& [key, _] : j.items()) {
    bool ok = false;
    for (const std::string& a : allowed) ok = ok || key == a;
    if (!ok) throw ConfigError("unknown key \"" + key + "\" in " + where);
  }
}

template <typename T>
T get_or(const json& j, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(std::string("bad value for \"") + key + "\"");
  }
}

}  // namespace cfgdetail

// Whole-run configuration. A stable serialization of the fully-defaulted
// document is hashed to name the run directory, so key order and omitted
// defaults never matter.
struct RunConfig {
  std::uint64_t seed = 1;

  struct Paths {
    std::string out_dir = "runs";
  } paths;

  struct DataSection {
    std::size_t n_scenes = 400;
    std::size_t size = 32;
    std::size_t n_materials = 4;
    std::vector<std::string> kinds = {"band_notch", "high_freq_grid", "band_shuffle_noise"};
    SplitFractions splits;
  } data;

  struct HsrSection {
    HsrConfig net;
    std::size_t steps = 1200;
    double lr = 1e-3;
    std::size_t batch = 4;
    std::size_t log_every = 10;
    double stop_mrae = 0.12;  // early stop on the val partition; <0 disables
  } hsr;

  struct DetectorSection {
    std::size_t channels = 32;
    std::size_t k = 3;
    std::string input = "hsi";  // or "rgb"
    LossWeights lambdas;
    double margin = 1.0;
    std::size_t steps = 1200;
    double lr = 1e-3;
    std::size_t batch = 4;  // pairs per step
    std::size_t log_every = 10;
    std::string train_kind = "band_notch";
    std::string hsr_checkpoint;  // required when input == "hsi"
  } detector;

  struct EvalSection {
    std::vector<std::string> kinds = {"band_notch", "high_freq_grid", "band_shuffle_noise"};
  } eval;

  static RunConfig from_json(const json& j) {
    cfgdetail::check_keys(j, {"seed", "paths", "data", "hsr", "detector", "eval"}, "config");
    RunConfig c;
    c.seed = cfgdetail::get_or<std::uint64_t>(j, "seed", c.seed);
    if (j.contains("paths")) {
      const json& p = j.at("paths");
      cfgdetail::check_keys(p, {"out_dir"}, "paths");
      c.paths.out_dir = cfgdetail::get_or<std::string>(p, "out_dir", c.paths.out_dir);
    }
    if (j.contains("data")) {
      const json& d = j.at("data");
      cfgdetail::check_keys(d, {"n_scenes", "size", "n_materials", "kinds", "splits"}, "data");
      c.data.n_scenes = cfgdetail::get_or<std::size_t>(d, "n_scenes", c.data.n_scenes);
      c.data.size = cfgdetail::get_or<std::size_t>(d, "size", c.data.size);
      c.data.n_materials = cfgdetail::get_or<std::size_t>(d, "n_materials", c.data.n_materials);
      c.data.kinds = cfgdetail::get_or<std::vector<std::string>>(d, "kinds", c.data.kinds);
      if (d.contains("splits")) {
        const json& s = d.at("splits");
        cfgdetail::check_keys(s, {"train", "val", "test"}, "data.splits");
        c.data.splits.train = cfgdetail::get_or<double>(s, "train", c.data.splits.train);
        c.data.splits.val = cfgdetail::get_or<double>(s, "val", c.data.splits.val);
        c.data.splits.test = cfgdetail::get_or<double>(s, "test", c.data.splits.test);
      }
    }
    if (j.contains("hsr")) {
      const json& h = j.at("hsr");
      cfgdetail::check_keys(h,
                            {"stages", "base_channels", "heads", "depth", "positional_branch",
                             "steps", "lr", "batch", "log_every", "stop_mrae"},
                            "hsr");
      c.hsr.net.stages = cfgdetail::get_or<std::size_t>(h, "stages", c.hsr.net.stages);
      c.hsr.net.base_channels = cfgdetail::get_or<std::size_t>(h, "base_channels", c.hsr.net.base_channels);
      c.hsr.net.heads = cfgdetail::get_or<std::size_t>(h, "heads", c.hsr.net.heads);
      c.hsr.net.depth = cfgdetail::get_or<std::size_t>(h, "depth", c.hsr.net.depth);
      c.hsr.net.positional_branch =
          cfgdetail::get_or<bool>(h, "positional_branch", c.hsr.net.positional_branch);
      c.hsr.steps = cfgdetail::get_or<std::size_t>(h, "steps", c.hsr.steps);
      c.hsr.lr = cfgdetail::get_or<double>(h, "lr", c.hsr.lr);
      c.hsr.batch = cfgdetail::get_or<std::size_t>(h, "batch", c.hsr.batch);
      c.hsr.log_every = cfgdetail::get_or<std::size_t>(h, "log_every", c.hsr.log_every);
      c.hsr.stop_mrae = cfgdetail::get_or<double>(h, "stop_mrae", c.hsr.stop_mrae);
    }
    if (j.contains("detector")) {
      const json& d = j.at("detector");
      cfgdetail::check_keys(d,
                            {"channels", "k", "input", "lambda_cls", "lambda_con", "lambda_rec",
                             "margin", "steps", "lr", "batch", "log_every", "train_kind",
                             "hsr_checkpoint"},
                            "detector");
      c.detector.channels = cfgdetail::get_or<std::size_t>(d, "channels", c.detector.channels);
      c.detector.k = cfgdetail::get_or<std::size_t>(d, "k", c.detector.k);
      c.detector.input = cfgdetail::get_or<std::string>(d, "input", c.detector.input);
      c.detector.lambdas.cls = cfgdetail::get_or<double>(d, "lambda_cls", c.detector.lambdas.cls);
      c.detector.lambdas.con = cfgdetail::get_or<double>(d, "lambda_con", c.detector.lambdas.con);
      c.detector.lambdas.rec = cfgdetail::get_or<double>(d, "lambda_rec", c.detector.lambdas.rec);
      c.detector.margin = cfgdetail::get_or<double>(d, "margin", c.detector.margin);
      c.detector.steps = cfgdetail::get_or<std::size_t>(d, "steps", c.detector.steps);
      c.detector.lr = cfgdetail::get_or<double>(d, "lr", c.detector.lr);
      c.detector.batch = cfgdetail::get_or<std::size_t>(d, "batch", c.detector.batch);
      c.detector.log_every = cfgdetail::get_or<std::size_t>(d, "log_every", c.detector.log_every);
      c.detector.train_kind = cfgdetail::get_or<std::string>(d, "train_kind", c.detector.train_kind);
      c.detector.hsr_checkpoint =
          cfgdetail::get_or<std::string>(d, "hsr_checkpoint", c.detector.hsr_checkpoint);
    }
    if (j.contains("eval")) {
      const json& e = j.at("eval");
      cfgdetail::check_keys(e, {"kinds"}, "eval");
      c.eval.kinds = cfgdetail::get_or<std::vector<std::string>>(e, "kinds", c.eval.kinds);
    }
    c.validate();
    return c;
  }

  json to_json() const {
    json j;
    j["seed"] = seed;
    j["paths"] = {{"out_dir", paths.out_dir}};
    j["data"] = {{"n_scenes", data.n_scenes},
                 {"size", data.size},
                 {"n_materials", data.n_materials},
                 {"kinds", data.kinds},
                 {"splits",
                  {{"train", data.splits.train}, {"val", data.splits.val}, {"test", data.splits.test}}}};
    j["hsr"] = {{"stages", hsr.net.stages},
                {"base_channels", hsr.net.base_channels},
                {"heads", hsr.net.heads},
                {"depth", hsr.net.depth},
                {"positional_branch", hsr.net.positional_branch},
                {"steps", hsr.steps},
                {"lr", hsr.lr},
                {"batch", hsr.batch},
                {"log_every", hsr.log_every},
                {"stop_mrae", hsr.stop_mrae}};
    j["detector"] = {{"channels", detector.channels},
                     {"k", detector.k},
                     {"input", detector.input},
                     {"lambda_cls", detector.lambdas.cls},
                     {"lambda_con", detector.lambdas.con},
                     {"lambda_rec", detector.lambdas.rec},
                     {"margin", detector.margin},
                     {"steps", detector.steps},
                     {"lr", detector.lr},
                     {"batch", detector.batch},
                     {"log_every", detector.log_every},
                     {"train_kind", detector.train_kind},
                     {"hsr_checkpoint", detector.hsr_checkpoint}};
    j["eval"] = {{"kinds", eval.kinds}};
    return j;
  }

  void validate() const {
    if (data.n_scenes < 10) throw ConfigError("data.n_scenes must be >= 10");
    if (data.size == 0 || data.size % 4 != 0) throw ConfigError("data.size must be a positive multiple of 4");
    if (data.n_materials < 2 || data.n_materials > 6) throw ConfigError("data.n_materials out of [2,6]");
    if (data.kinds.empty()) throw ConfigError("data.kinds must be non-empty");
    for (const std::string& k : data.kinds) manip_kind_from_name(k);
    data.splits.validate();
    hsr.net.validate();
    if (hsr.steps == 0 || hsr.batch == 0 || hsr.log_every == 0) throw ConfigError("hsr: steps, batch, log_every must be positive");
    if (hsr.lr <= 0) throw ConfigError("hsr.lr must be positive");
    if (detector.input != "hsi" && detector.input != "rgb")
      throw ConfigError("detector.input must be \"hsi\" or \"rgb\"");
    DetectorConfig dc = detector_config();
    dc.validate();
    if (detector.steps == 0 || detector.batch == 0 || detector.log_every == 0)
      throw ConfigError("detector: steps, batch, log_every must be positive");
    if (detector.lr <= 0) throw ConfigError("detector.lr must be positive");
    manip_kind_from_name(detector.train_kind);
    if (eval.kinds.empty()) throw ConfigError("eval.kinds must be non-empty");
    for (const std::string& k : eval.kinds) manip_kind_from_name(k);
    const std::size_t div = 1ull << hsr.net.depth;
    if (data.size % div != 0)
      throw ConfigError("data.size must be divisible by 2^hsr.depth = " + std::to_string(div));
  }

  DatasetConfig dataset_config() const {
    DatasetConfig dc;
    dc.n_scenes = data.n_scenes;
    dc.size = data.size;
    dc.n_materials = data.n_materials;
    dc.kinds.clear();
    for (const std::string& k : data.kinds) dc.kinds.push_back(manip_kind_from_name(k));
    dc.splits = data.splits;
    return dc;
  }

  DetectorConfig detector_config() const {
    DetectorConfig dc;
    dc.channels = detector.channels;
    dc.k_classes = detector.k;
    dc.rgb_input = detector.input == "rgb";
    dc.margin = detector.margin;
    return dc;
  }

  std::uint64_t hash() const { return fnv1a64(to_json().dump()); }

  std::string run_dir() const { return paths.out_dir + "/" + hex16(hash()); }
};

inline RunConfig load_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open config " + path);
  json j;
  try {
    j = json::parse(f);
  } catch (const json::exception& e) {
    throw ConfigError("config " + path + " is not valid JSON: " + e.what());
  }
  return RunConfig::from_json(j);
}

}  // namespace hsid
