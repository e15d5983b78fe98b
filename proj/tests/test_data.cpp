#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "hsid/data.hpp"

using namespace hsid;

TEST(ResponseMatrix, RowsSumToOne) {
  const ResponseMatrix& r = ResponseMatrix::standard();
  for (std::size_t ch = 0; ch < 3; ++ch) {
    double s = 0.0;
    for (std::size_t b = 0; b < kBands; ++b) {
      s += r.at(ch, b);
      EXPECT_GE(r.at(ch, b), 0.0);
    }
    EXPECT_NEAR(s, 1.0, 1e-9);
  }
}

TEST(ProjectRgb, FlatSpectrumGivesEqualChannels) {
  SpectralImage img(2, 2);
  for (double& v : img.data.data) v = 0.37;
  RgbImage rgb = project_rgb(img);
  for (double v : rgb.data.data) EXPECT_NEAR(v, 0.37, 1e-12);
}

TEST(ProjectRgb, BandImpulsePicksColumn) {
  const ResponseMatrix& r = ResponseMatrix::standard();
  for (std::size_t j : {0ul, 15ul, 30ul}) {
    SpectralImage img(1, 1);
    img.at(j, 0, 0) = 1.0;
    RgbImage rgb = project_rgb(img);
    for (std::size_t ch = 0; ch < 3; ++ch) EXPECT_DOUBLE_EQ(rgb.at(ch, 0, 0), r.at(ch, j));
  }
}

TEST(ProjectRgb, Linearity) {
  Rng rng = Rng::stream(21, "proj_linearity", 0);
  SpectralImage a(4, 4), b(4, 4), s(4, 4);
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    a.data.data[i] = rng.next_unit();
    b.data.data[i] = rng.next_unit();
    s.data.data[i] = a.data.data[i] + b.data.data[i];
  }
  RgbImage pa = project_rgb(a), pb = project_rgb(b), ps = project_rgb(s);
  for (std::size_t i = 0; i < pa.data.size(); ++i)
    EXPECT_NEAR(ps.data.data[i], pa.data.data[i] + pb.data.data[i], 1e-12);
}

TEST(SynthScene, DeterministicAndBounded) {
  SpectralImage a = synth_scene(99, 16, 4);
  SpectralImage b = synth_scene(99, 16, 4);
  EXPECT_EQ(a.data.data, b.data.data);
  for (double v : a.data.data) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
  SpectralImage c = synth_scene(100, 16, 4);
  EXPECT_NE(a.data.data, c.data.data);
}

TEST(SynthScene, InvalidConfigRejected) {
  EXPECT_THROW(synth_scene(1, 15, 4), ConfigError);
  EXPECT_THROW(synth_scene(1, 16, 1), ConfigError);
  EXPECT_THROW(synth_scene(1, 16, 7), ConfigError);
}

TEST(SynthScene, SpectraAreSmoothAcrossBands) {
  // Mean absolute second difference across bands, 100 seeded scenes.
  double acc = 0.0;
  std::size_t count = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    SpectralImage img = synth_scene(seed, 16, 4);
    for (std::size_t y = 0; y < img.height; ++y)
      for (std::size_t x = 0; x < img.width; ++x)
        for (std::size_t b = 1; b + 1 < kBands; ++b) {
          acc += std::abs(img.at(b + 1, y, x) - 2.0 * img.at(b, y, x) + img.at(b - 1, y, x));
          ++count;
        }
  }
  EXPECT_LT(acc / static_cast<double>(count), 0.05);
}

TEST(RegionMask, CoverageWithinBounds) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    std::vector<bool> mask = region_mask(seed, 32, 32, 0.05, 0.25);
    std::size_t k = 0;
    for (bool b : mask) k += b ? 1 : 0;
    EXPECT_GE(k, static_cast<std::size_t>(std::ceil(0.05 * 1024)));
    EXPECT_LE(k, static_cast<std::size_t>(std::floor(0.25 * 1024)));
  }
}

TEST(ApplyManipulation, NullParametersAreIdentity) {
  SpectralImage img = synth_scene(7, 16, 3);
  for (ManipKind kind : {ManipKind::BandNotch, ManipKind::HighFreqGrid, ManipKind::BandShuffleNoise}) {
    Manipulation m;
    m.kind = kind;
    m.notch_depth = 0.0;
    m.grid_amplitude = 0.0;
    m.noise_sigma = 0.0;
    SpectralImage out = apply_manipulation(img, m, 5);
    EXPECT_EQ(out.data.data, img.data.data) << manip_kind_name(kind);
  }
}

TEST(ApplyManipulation, BandNotchTouchesOnlyWindowBands) {
  SpectralImage img = synth_scene(8, 16, 3);
  Manipulation m;  // center 550, width 2 bands -> window is 550 +- 60 nm
  SpectralImage out = apply_manipulation(img, m, 5);
  const std::size_t hw = img.height * img.width;
  bool changed_inside = false;
  for (std::size_t b = 0; b < kBands; ++b) {
    const bool inside = std::abs(band_wavelength_nm(b) - 550.0) <= 60.0;
    for (std::size_t i = 0; i < hw; ++i) {
      const double d = out.data.data[b * hw + i] - img.data.data[b * hw + i];
      if (!inside)
        EXPECT_EQ(d, 0.0) << "band " << b;
      else if (d != 0.0)
        changed_inside = true;
    }
  }
  EXPECT_TRUE(changed_inside);
}

TEST(ApplyManipulation, UnknownKindParametersRejected) {
  Manipulation m;
  m.notch_depth = 1.5;
  SpectralImage img = synth_scene(7, 16, 3);
  EXPECT_THROW(apply_manipulation(img, m, 1), ConfigError);
}

// Module-level embodiment of the motivating claim: a band notch is far more
// visible in the spectral cube than in its RGB projection.
TEST(ApplyManipulation, RgbVisibilityGap) {
  std::size_t satisfied = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    SpectralImage scene = synth_scene(seed, 16, 4);
    Manipulation m;
    SpectralImage fake = apply_manipulation(scene, m, seed + 1000);
    RgbImage rgb_real = project_rgb(scene), rgb_fake = project_rgb(fake);

    const std::size_t hw = scene.height * scene.width;
    double hsi_linf = 0.0, rgb_linf = 0.0;
    for (std::size_t i = 0; i < hw; ++i) {
      double mh = 0.0, mr = 0.0;
      for (std::size_t b = 0; b < kBands; ++b)
        mh = std::max(mh, std::abs(fake.data.data[b * hw + i] - scene.data.data[b * hw + i]));
      for (std::size_t ch = 0; ch < 3; ++ch)
        mr = std::max(mr, std::abs(rgb_fake.data.data[ch * hw + i] - rgb_real.data.data[ch * hw + i]));
      hsi_linf += mh;
      rgb_linf += mr;
    }
    if (hsi_linf >= 2.0 * rgb_linf) ++satisfied;
  }
  EXPECT_GE(satisfied, 95u);
}

TEST(MakeDataset, PartitionsAreSceneDisjointAndBalanced) {
  DatasetConfig cfg;
  cfg.n_scenes = 40;
  cfg.size = 16;
  Dataset ds = make_dataset(123, cfg);
  ASSERT_EQ(ds.pairs.size(), 40u);

  std::set<std::uint64_t> train, val, test;
  for (const SamplePair& sp : ds.pairs) {
    EXPECT_EQ(sp.real.scene_seed, sp.fake.scene_seed);
    EXPECT_FALSE(sp.real.fake);
    EXPECT_TRUE(sp.fake.fake);
    ASSERT_TRUE(sp.fake.manip_id.has_value());
    auto& dst = sp.partition == Partition::Train ? train
                : sp.partition == Partition::Val ? val
                                                 : test;
    dst.insert(sp.real.scene_seed);
  }
  EXPECT_EQ(train.size() + val.size() + test.size(), 40u);
  for (std::uint64_t s : train) {
    EXPECT_EQ(val.count(s), 0u);
    EXPECT_EQ(test.count(s), 0u);
  }
  // 50% real per partition by pairing.
  auto samples = ds.partition_samples(Partition::Train);
  std::size_t fakes = 0;
  for (const LabeledSample* s : samples) fakes += s->fake ? 1 : 0;
  EXPECT_EQ(fakes * 2, samples.size());
}

TEST(MakeDataset, DeterministicAndSceneStableAcrossKindLists) {
  DatasetConfig cfg;
  cfg.n_scenes = 12;
  cfg.size = 16;
  Dataset a = make_dataset(5, cfg);
  Dataset b = make_dataset(5, cfg);
  ASSERT_EQ(a.pairs.size(), b.pairs.size());
  for (std::size_t i = 0; i < a.pairs.size(); ++i) {
    EXPECT_EQ(a.pairs[i].real.hsi.data.data, b.pairs[i].real.hsi.data.data);
    EXPECT_EQ(a.pairs[i].fake.hsi.data.data, b.pairs[i].fake.hsi.data.data);
    EXPECT_EQ(a.pairs[i].partition, b.pairs[i].partition);
  }

  // Restricting the kind list must not change scenes or the split.
  DatasetConfig notch_only = cfg;
  notch_only.kinds = {ManipKind::BandNotch};
  Dataset c = make_dataset(5, notch_only);
  for (std::size_t i = 0; i < a.pairs.size(); ++i) {
    EXPECT_EQ(a.pairs[i].real.hsi.data.data, c.pairs[i].real.hsi.data.data);
    EXPECT_EQ(a.pairs[i].partition, c.pairs[i].partition);
    EXPECT_EQ(c.pairs[i].fake.manip_id, static_cast<int>(ManipKind::BandNotch));
  }
}

TEST(MakeDataset, ConfigErrors) {
  DatasetConfig cfg;
  cfg.n_scenes = 5;
  EXPECT_THROW(make_dataset(1, cfg), ConfigError);
  cfg.n_scenes = 12;
  cfg.kinds.clear();
  EXPECT_THROW(make_dataset(1, cfg), ConfigError);
  cfg.kinds = {ManipKind::BandNotch};
  cfg.splits.train = 0.9;
  cfg.splits.val = 0.9;
  cfg.splits.test = -0.8;
  EXPECT_THROW(make_dataset(1, cfg), ConfigError);
}

TEST(LabeledSample, InvariantEnforced) {
  LabeledSample s;
  s.hsi = synth_scene(3, 16, 3);
  s.rgb = project_rgb(s.hsi);
  s.fake = true;  // missing manip_id
  EXPECT_THROW(s.check_invariants(), ContractError);
  s.manip_id = 0;
  EXPECT_NO_THROW(s.check_invariants());
}
