#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "hsid/data.hpp"
#include "hsid/hs1.hpp"

using namespace hsid;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& name) {
  fs::path dir = fs::temp_directory_path() / ("hsid_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

}  // namespace

TEST(Hs1, RoundTripIsLosslessAtF32) {
  fs::path dir = temp_dir("hs1_roundtrip");
  SpectralImage img = synth_scene(42, 16, 3);
  const std::string path = (dir / "img.hs1").string();
  save_hs1(path, img);
  SpectralImage back = load_hs1(path);
  ASSERT_EQ(back.height, img.height);
  ASSERT_EQ(back.width, img.width);
  for (std::size_t i = 0; i < img.data.size(); ++i)
    EXPECT_EQ(static_cast<float>(img.data.data[i]), static_cast<float>(back.data.data[i]));

  // Save-load-save produces identical bytes.
  const std::string path2 = (dir / "img2.hs1").string();
  save_hs1(path2, back);
  std::ifstream a(path, std::ios::binary), b(path2, std::ios::binary);
  std::string ba((std::istreambuf_iterator<char>(a)), std::istreambuf_iterator<char>());
  std::string bb((std::istreambuf_iterator<char>(b)), std::istreambuf_iterator<char>());
  EXPECT_EQ(ba, bb);
}

TEST(Hs1, FileSizeMatchesHeaderArithmetic) {
  fs::path dir = temp_dir("hs1_size");
  SpectralImage img(8, 12);
  const std::string path = (dir / "img.hs1").string();
  save_hs1(path, img);
  EXPECT_EQ(fs::file_size(path), 20u + 4u * 8 * 12 * kBands);
}

TEST(Hs1, CorruptMagicRejected) {
  fs::path dir = temp_dir("hs1_magic");
  SpectralImage img(4, 4);
  const std::string path = (dir / "img.hs1").string();
  save_hs1(path, img);
  {
    std::fstream f(path, std::ios::binary | std::ios::in | std::ios::out);
    f.seekp(0);
    f.put('X');
  }
  try {
    load_hs1(path);
    FAIL() << "expected FormatError";
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("offset 0"), std::string::npos) << e.what();
  }
}

TEST(Hs1, BadVersionAndTruncationRejected) {
  fs::path dir = temp_dir("hs1_bad");
  SpectralImage img(4, 4);
  const std::string path = (dir / "img.hs1").string();
  save_hs1(path, img);
  {
    std::fstream f(path, std::ios::binary | std::ios::in | std::ios::out);
    f.seekp(4);
    f.put(static_cast<char>(9));
  }
  EXPECT_THROW(load_hs1(path), FormatError);

  save_hs1(path, img);
  fs::resize_file(path, fs::file_size(path) - 7);
  EXPECT_THROW(load_hs1(path), FormatError);

  fs::resize_file(path, 10);
  EXPECT_THROW(load_hs1(path), FormatError);
}

TEST(Hs1, MissingFileIsIoError) { EXPECT_THROW(load_hs1("/nonexistent/nope.hs1"), IoError); }

TEST(Hs1, GenericCubeSupportsRgb) {
  fs::path dir = temp_dir("hs1_rgb");
  Tensor rgb({3, 6, 6}, 0.25);
  const std::string path = (dir / "rgb.hs1").string();
  save_hs1(path, rgb);
  Tensor back = load_hs1_cube(path);
  EXPECT_EQ(back.shape, (Shape{3, 6, 6}));
  EXPECT_THROW(load_hs1(path), FormatError);  // 31 bands required for spectral load
}

TEST(Pgm, DumpsAllBandsNamedByWavelength) {
  fs::path dir = temp_dir("pgm");
  SpectralImage img = synth_scene(5, 16, 3);
  auto paths = dump_bands_pgm(dir.string(), img);
  ASSERT_EQ(paths.size(), kBands);
  EXPECT_TRUE(fs::exists(dir / "band_400.pgm"));
  EXPECT_TRUE(fs::exists(dir / "band_700.pgm"));
  // P5 header + one byte per pixel
  EXPECT_EQ(fs::file_size(dir / "band_400.pgm"), std::string("P5\n16 16\n255\n").size() + 16 * 16);
}
