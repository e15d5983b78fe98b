#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "hsid/rng.hpp"
#include "hsid/tensor.hpp"

namespace hsid {

// Fixed spectral grid: 31 bands, 400..700 nm, 10 nm step.
inline constexpr std::size_t kBands = 31;

inline double band_wavelength_nm(std::size_t band) { return 400.0 + 10.0 * static_cast<double>(band); }

// H x W x 31 radiance cube, band-major ([band][row][col]).
struct SpectralImage {
  std::size_t height = 0, width = 0;
  Tensor data;  // shape {31, H, W}

  SpectralImage() = default;
  SpectralImage(std::size_t h, std::size_t w) : height(h), width(w), data({kBands, h, w}) {}
  SpectralImage(std::size_t h, std::size_t w, Tensor t) : height(h), width(w), data(std::move(t)) {
    if (data.shape != Shape{kBands, h, w})
      throw ShapeError("spectral image expects " + shape_str({kBands, h, w}) + ", got " +
                       shape_str(data.shape));
  }

  double& at(std::size_t band, std::size_t y, std::size_t x) { return data.at3(band, y, x); }
  double at(std::size_t band, std::size_t y, std::size_t x) const { return data.at3(band, y, x); }
};

// H x W x 3 image in [0,1], channel-major (r,g,b).
struct RgbImage {
  std::size_t height = 0, width = 0;
  Tensor data;  // shape {3, H, W}

  RgbImage() = default;
  RgbImage(std::size_t h, std::size_t w) : height(h), width(w), data({3, h, w}) {}

  double& at(std::size_t ch, std::size_t y, std::size_t x) { return data.at3(ch, y, x); }
  double at(std::size_t ch, std::size_t y, std::size_t x) const { return data.at3(ch, y, x); }
};

// 3x31 camera response. Rows are Gaussian bumps at 610/540/470 nm (sigma
// 40 nm) sampled on the band grid and normalized to sum 1; fixed constants so
// every derived artifact is reproducible bit for bit.
struct ResponseMatrix {
  Tensor weights;  // shape {3, 31}

  static const ResponseMatrix& standard() {
    static const ResponseMatrix r = build();
    return r;
  }

  double at(std::size_t ch, std::size_t band) const { return weights.at2(ch, band); }

 private:
  static ResponseMatrix build() {
    ResponseMatrix r;
    r.weights = Tensor({3, kBands});
    const double centers[3] = {610.0, 540.0, 470.0};
    const double sigma = 40.0;
    for (std::size_t ch = 0; ch < 3; ++ch) {
      double s = 0.0;
      for (std::size_t b = 0; b < kBands; ++b) {
        double d = (band_wavelength_nm(b) - centers[ch]) / sigma;
        double w = std::exp(-0.5 * d * d);
        r.weights.at2(ch, b) = w;
        s += w;
      }
      for (std::size_t b = 0; b < kBands; ++b) r.weights.at2(ch, b) /= s;
    }
    return r;
  }
};

// Linear projection rgb = R * spectrum per pixel (no gamma).
inline RgbImage project_rgb(const SpectralImage& hsi, const ResponseMatrix& r = ResponseMatrix::standard()) {
  RgbImage rgb(hsi.height, hsi.width);
  const std::size_t hw = hsi.height * hsi.width;
  for (std::size_t ch = 0; ch < 3; ++ch) {
    double* out = rgb.data.data.data() + ch * hw;
    for (std::size_t b = 0; b < kBands; ++b) {
      const double w = r.at(ch, b);
      const double* src = hsi.data.data.data() + b * hw;
      for (std::size_t i = 0; i < hw; ++i) out[i] += w * src[i];
    }
  }
  return rgb;
}

// ---------------------------------------------------------------------------
// Synthetic scenes
// ---------------------------------------------------------------------------

// Spectral signature: one wide base bump plus up to two narrow ones.
struct Material {
  int id = 0;
  std::vector<double> signature;  // 31 values in [0,1]
};

namespace detail {

// Bilinear sample of a g x g grid stretched over h x w (corners align).
inline double grid_bilinear(const std::vector<double>& grid, std::size_t g, std::size_t y,
                            std::size_t x, std::size_t h, std::size_t w) {
  auto coord = [g](std::size_t i, std::size_t n) {
    if (n <= 1) return 0.0;
    return static_cast<double>(i) * static_cast<double>(g - 1) / static_cast<double>(n - 1);
  };
  double fy = coord(y, h), fx = coord(x, w);
  std::size_t y0 = static_cast<std::size_t>(fy), x0 = static_cast<std::size_t>(fx);
  std::size_t y1 = std::min(y0 + 1, g - 1), x1 = std::min(x0 + 1, g - 1);
  double ty = fy - static_cast<double>(y0), tx = fx - static_cast<double>(x0);
  double a = grid[y0 * g + x0] * (1 - tx) + grid[y0 * g + x1] * tx;
  double b = grid[y1 * g + x0] * (1 - tx) + grid[y1 * g + x1] * tx;
  return a * (1 - ty) + b * ty;
}

inline std::vector<double> random_grid(Rng& rng, std::size_t g, double lo, double hi) {
  std::vector<double> v(g * g);
  for (double& x : v) x = rng.next_uniform(lo, hi);
  return v;
}

}  // namespace detail

inline Material make_material(std::uint64_t scene_seed, std::size_t index) {
  Rng rng = Rng::stream(scene_seed, "material", index);
  Material m;
  m.id = static_cast<int>(index);
  m.signature.assign(kBands, 0.0);
  struct Bump {
    double amp, center, sigma;
  };
  std::vector<Bump> bumps;
  // Wide base keeps every band away from zero (denominators in relative
  // errors stay sane); narrow bumps carry the scene-to-scene variation.
  bumps.push_back({rng.next_uniform(0.2, 0.35), rng.next_uniform(520.0, 580.0),
                   rng.next_uniform(300.0, 450.0)});
  std::size_t narrow = rng.next_below(3);  // 0..2 extra bumps
  for (std::size_t i = 0; i < narrow; ++i)
    bumps.push_back({rng.next_uniform(0.25, 0.6), rng.next_uniform(420.0, 680.0),
                     rng.next_uniform(28.0, 60.0)});
  double peak = 0.0;
  for (std::size_t b = 0; b < kBands; ++b) {
    double v = 0.0;
    for (const Bump& bp : bumps) {
      double d = (band_wavelength_nm(b) - bp.center) / bp.sigma;
      v += bp.amp * std::exp(-0.5 * d * d);
    }
    m.signature[b] = v;
    peak = std::max(peak, v);
  }
  if (peak > 0.95)
    for (double& v : m.signature) v *= 0.95 / peak;
  return m;
}

// Smooth abundance mixture of per-scene materials times a gentle illumination
// field. Per-pixel abundances are non-negative and sum to 1.
inline SpectralImage synth_scene(std::uint64_t seed, std::size_t size, std::size_t n_materials) {
  if (size == 0 || size % 4 != 0)
    throw ConfigError("scene size " + std::to_string(size) + " must be a positive multiple of 4");
  if (n_materials < 2 || n_materials > 6)
    throw ConfigError("n_materials " + std::to_string(n_materials) + " out of [2,6]");

  std::vector<Material> mats;
  for (std::size_t i = 0; i < n_materials; ++i) mats.push_back(make_material(seed, i));

  const std::size_t g = 4;
  std::vector<std::vector<double>> fields;
  for (std::size_t i = 0; i < n_materials; ++i) {
    Rng rng = Rng::stream(seed, "abundance", i);
    fields.push_back(detail::random_grid(rng, g, 0.1, 1.0));
  }
  Rng illum_rng = Rng::stream(seed, "illumination", 0);
  std::vector<double> illum = detail::random_grid(illum_rng, g, 0.9, 1.05);

  SpectralImage img(size, size);
  std::vector<double> abundance(n_materials);
  for (std::size_t y = 0; y < size; ++y)
    for (std::size_t x = 0; x < size; ++x) {
      double total = 0.0;
      for (std::size_t i = 0; i < n_materials; ++i) {
        abundance[i] = detail::grid_bilinear(fields[i], g, y, x, size, size);
        total += abundance[i];
      }
      const double ill = detail::grid_bilinear(illum, g, y, x, size, size);
      for (std::size_t b = 0; b < kBands; ++b) {
        double v = 0.0;
        for (std::size_t i = 0; i < n_materials; ++i)
          v += (abundance[i] / total) * mats[i].signature[b];
        img.at(b, y, x) = std::clamp(v * ill, 0.0, 1.0);
      }
    }
  return img;
}

// ---------------------------------------------------------------------------
// Manipulations
// ---------------------------------------------------------------------------

enum class ManipKind { BandNotch = 0, HighFreqGrid = 1, BandShuffleNoise = 2 };

inline const char* manip_kind_name(ManipKind k) {
  switch (k) {
    case ManipKind::BandNotch: return "band_notch";
    case ManipKind::HighFreqGrid: return "high_freq_grid";
    case ManipKind::BandShuffleNoise: return "band_shuffle_noise";
  }
  throw ConfigError("unknown manipulation kind");
}

inline ManipKind manip_kind_from_name(const std::string& name) {
  for (ManipKind k : {ManipKind::BandNotch, ManipKind::HighFreqGrid, ManipKind::BandShuffleNoise})
    if (name == manip_kind_name(k)) return k;
  throw ConfigError("unknown manipulation kind: " + name);
}

struct Manipulation {
  ManipKind kind = ManipKind::BandNotch;
  // band_notch
  double notch_center_nm = 550.0;
  double notch_width_bands = 2.0;
  double notch_depth = 0.3;
  // high_freq_grid
  double grid_amplitude = 0.03;
  std::size_t grid_period_px = 2;
  std::size_t grid_band_count = 8;
  // band_shuffle_noise
  double noise_sigma = 0.02;
  // shared smooth region mask
  double mask_frac_lo = 0.05;
  double mask_frac_hi = 0.25;

  void validate() const {
    if (notch_depth < 0.0 || notch_depth > 1.0) throw ConfigError("notch depth out of [0,1]");
    if (notch_width_bands <= 0.0) throw ConfigError("notch width must be positive");
    if (grid_period_px < 2 || grid_period_px % 2 != 0) throw ConfigError("grid period must be even and >= 2");
    if (grid_band_count == 0 || grid_band_count > kBands) throw ConfigError("grid band count out of [1,31]");
    if (noise_sigma < 0.0) throw ConfigError("noise sigma must be non-negative");
    if (!(mask_frac_lo >= 0.05 && mask_frac_hi <= 0.25 && mask_frac_lo <= mask_frac_hi))
      throw ConfigError("mask fraction range must lie within [0.05, 0.25]");
  }
};

// Smooth blobby pixel mask covering an exact count within [5%, 25%] of pixels.
inline std::vector<bool> region_mask(std::uint64_t seed, std::size_t h, std::size_t w,
                                     double frac_lo, double frac_hi) {
  Rng rng = Rng::stream(seed, "mask", 0);
  const std::size_t g = 5;
  std::vector<double> grid = detail::random_grid(rng, g, 0.0, 1.0);
  const double frac = rng.next_uniform(frac_lo, frac_hi);
  const std::size_t hw = h * w;
  std::size_t k = static_cast<std::size_t>(std::llround(frac * static_cast<double>(hw)));
  const std::size_t k_lo = static_cast<std::size_t>(std::ceil(frac_lo * static_cast<double>(hw)));
  const std::size_t k_hi = static_cast<std::size_t>(std::floor(frac_hi * static_cast<double>(hw)));
  k = std::clamp(k, k_lo, k_hi);

  std::vector<std::size_t> order(hw);
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> field(hw);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) field[y * w + x] = detail::grid_bilinear(grid, g, y, x, h, w);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return field[a] > field[b]; });
  std::vector<bool> mask(hw, false);
  for (std::size_t i = 0; i < k; ++i) mask[order[i]] = true;
  return mask;
}

inline SpectralImage apply_manipulation(const SpectralImage& img, const Manipulation& m,
                                        std::uint64_t seed) {
  m.validate();
  SpectralImage out = img;
  const std::size_t h = img.height, w = img.width, hw = h * w;
  std::vector<bool> mask = region_mask(seed, h, w, m.mask_frac_lo, m.mask_frac_hi);

  switch (m.kind) {
    case ManipKind::BandNotch: {
      // Gaussian-windowed attenuation, truncated at 3 widths so bands outside
      // the window stay bit-identical.
      const double sigma_nm = m.notch_width_bands * 10.0;
      for (std::size_t b = 0; b < kBands; ++b) {
        const double d = band_wavelength_nm(b) - m.notch_center_nm;
        if (std::abs(d) > 3.0 * sigma_nm) continue;
        const double factor = 1.0 - m.notch_depth * std::exp(-0.5 * (d / sigma_nm) * (d / sigma_nm));
        double* band = out.data.data.data() + b * hw;
        for (std::size_t i = 0; i < hw; ++i)
          if (mask[i]) band[i] = std::clamp(band[i] * factor, 0.0, 1.0);
      }
      break;
    }
    case ManipKind::HighFreqGrid: {
      Rng rng = Rng::stream(seed, "grid_bands", 0);
      std::vector<std::size_t> bands(kBands);
      std::iota(bands.begin(), bands.end(), 0);
      rng.shuffle(bands);
      bands.resize(m.grid_band_count);
      const std::size_t half = m.grid_period_px / 2;
      for (std::size_t b : bands) {
        double* band = out.data.data.data() + b * hw;
        for (std::size_t y = 0; y < h; ++y)
          for (std::size_t x = 0; x < w; ++x) {
            const std::size_t i = y * w + x;
            if (!mask[i]) continue;
            const double sgn = ((y / half + x / half) % 2 == 0) ? 1.0 : -1.0;
            band[i] = std::clamp(band[i] + sgn * m.grid_amplitude, 0.0, 1.0);
          }
      }
      break;
    }
    case ManipKind::BandShuffleNoise: {
      Rng rng = Rng::stream(seed, "noise", 0);
      for (std::size_t b = 0; b < kBands; ++b) {
        double* band = out.data.data.data() + b * hw;
        for (std::size_t i = 0; i < hw; ++i) {
          const double n = rng.next_normal();  // stream advances uniformly
          if (mask[i] && m.noise_sigma > 0.0)
            band[i] = std::clamp(band[i] + m.noise_sigma * n, 0.0, 1.0);
        }
      }
      break;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Labeled samples and datasets
// ---------------------------------------------------------------------------

enum class Partition { Train = 0, Val = 1, Test = 2 };

inline const char* partition_name(Partition p) {
  switch (p) {
    case Partition::Train: return "train";
    case Partition::Val: return "val";
    case Partition::Test: return "test";
  }
  throw ConfigError("unknown partition");
}

inline Partition partition_from_name(const std::string& s) {
  for (Partition p : {Partition::Train, Partition::Val, Partition::Test})
    if (s == partition_name(p)) return p;
  throw FormatError("unknown partition: " + s);
}

struct LabeledSample {
  SpectralImage hsi;
  RgbImage rgb;  // always project_rgb(hsi) at creation
  bool fake = false;
  std::optional<int> manip_id;  // set iff fake
  std::uint64_t scene_seed = 0;

  void check_invariants() const {
    if (fake != manip_id.has_value())
      throw ContractError("labeled sample: manip_id must be present iff fake");
    if (!hsi.data.all_finite() || !rgb.data.all_finite())
      throw ContractError("labeled sample: non-finite values");
  }
};

struct SamplePair {
  LabeledSample real;
  LabeledSample fake;
  Partition partition = Partition::Train;
};

struct SplitFractions {
  double train = 0.7, val = 0.1, test = 0.2;

  void validate() const {
    if (train < 0 || val < 0 || test < 0 || std::abs(train + val + test - 1.0) > 1e-9)
      throw ConfigError("split fractions must be non-negative and sum to 1");
  }
};

struct Dataset {
  std::vector<SamplePair> pairs;

  std::vector<const LabeledSample*> partition_samples(Partition p) const {
    std::vector<const LabeledSample*> out;
    for (const SamplePair& sp : pairs)
      if (sp.partition == p) {
        out.push_back(&sp.real);
        out.push_back(&sp.fake);
      }
    return out;
  }

  std::vector<const SamplePair*> partition_pairs(Partition p, std::optional<int> manip_id = {}) const {
    std::vector<const SamplePair*> out;
    for (const SamplePair& sp : pairs)
      if (sp.partition == p && (!manip_id || sp.fake.manip_id == manip_id)) out.push_back(&sp);
    return out;
  }

  std::vector<std::uint64_t> partition_scene_seeds(Partition p) const {
    std::vector<std::uint64_t> out;
    for (const SamplePair& sp : pairs)
      if (sp.partition == p) out.push_back(sp.real.scene_seed);
    return out;
  }
};

struct DatasetConfig {
  std::size_t n_scenes = 100;
  std::size_t size = 32;
  std::size_t n_materials = 4;
  std::vector<ManipKind> kinds = {ManipKind::BandNotch, ManipKind::HighFreqGrid,
                                  ManipKind::BandShuffleNoise};
  SplitFractions splits;
  Manipulation manip;  // per-kind parameters shared across the dataset
};

inline SamplePair make_sample_pair(std::uint64_t seed, std::size_t scene_index,
                                   const DatasetConfig& cfg) {
  Rng scene_rng = Rng::stream(seed, "scene", scene_index);
  const std::uint64_t scene_seed = scene_rng.next_u64();
  SpectralImage scene = synth_scene(scene_seed, cfg.size, cfg.n_materials);

  Rng kind_rng = Rng::stream(seed, "kind", scene_index);
  const ManipKind kind = cfg.kinds[kind_rng.next_below(cfg.kinds.size())];
  Manipulation manip = cfg.manip;
  manip.kind = kind;
  Rng manip_rng = Rng::stream(seed, "manip", scene_index);
  const std::uint64_t manip_seed = manip_rng.next_u64();

  SamplePair sp;
  sp.real.hsi = scene;
  sp.real.rgb = project_rgb(scene);
  sp.real.fake = false;
  sp.real.scene_seed = scene_seed;
  sp.real.check_invariants();

  sp.fake.hsi = apply_manipulation(scene, manip, manip_seed);
  sp.fake.rgb = project_rgb(sp.fake.hsi);
  sp.fake.fake = true;
  sp.fake.manip_id = static_cast<int>(kind);
  sp.fake.scene_seed = scene_seed;
  sp.fake.check_invariants();
  return sp;
}

// One real + one fake per scene, scene-disjoint partitions. The scene content
// depends only on (seed, scene index), so datasets that differ only in
// `kinds` share identical scenes and an identical partition split.
inline Dataset make_dataset(std::uint64_t seed, const DatasetConfig& cfg) {
  if (cfg.n_scenes < 10) throw ConfigError("n_scenes must be at least 10");
  if (cfg.kinds.empty()) throw ConfigError("manipulation kind list is empty");
  cfg.splits.validate();
  cfg.manip.validate();

  const std::size_t n = cfg.n_scenes;
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng split_rng = Rng::stream(seed, "split", 0);
  split_rng.shuffle(order);
  const std::size_t n_train = static_cast<std::size_t>(std::llround(cfg.splits.train * static_cast<double>(n)));
  const std::size_t n_val = static_cast<std::size_t>(std::llround(cfg.splits.val * static_cast<double>(n)));
  if (n_train + n_val > n) throw ConfigError("split fractions leave no room for the test partition");
  std::vector<Partition> part(n);
  for (std::size_t i = 0; i < n; ++i)
    part[order[i]] = i < n_train ? Partition::Train : (i < n_train + n_val ? Partition::Val : Partition::Test);

  Dataset ds;
  ds.pairs.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    SamplePair sp = make_sample_pair(seed, i, cfg);
    sp.partition = part[i];
    ds.pairs.push_back(std::move(sp));
  }
  return ds;
}

}  // namespace hsid
