#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "hsid/data.hpp"
#include "hsid/tensor.hpp"

namespace hsid {

// HS1 container (little-endian): magic "HS1\0", u32 version=1, u32 H, u32 W,
// u32 C, then C*H*W 32-bit floats, band-major, row-major within band.
// File size is exactly 20 + 4*H*W*C bytes.

namespace detail {

inline void put_u32(std::string& out, std::uint32_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
  out.push_back(static_cast<char>((v >> 16) & 0xff));
  out.push_back(static_cast<char>((v >> 24) & 0xff));
}

inline std::uint32_t get_u32(const std::string& in, std::size_t at) {
  return static_cast<std::uint32_t>(static_cast<unsigned char>(in[at])) |
         (static_cast<std::uint32_t>(static_cast<unsigned char>(in[at + 1])) << 8) |
         (static_cast<std::uint32_t>(static_cast<unsigned char>(in[at + 2])) << 16) |
         (static_cast<std::uint32_t>(static_cast<unsigned char>(in[at + 3])) << 24);
}

inline void put_f32(std::string& out, float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, 4);
  put_u32(out, bits);
}

inline float get_f32(const std::string& in, std::size_t at) {
  std::uint32_t bits = get_u32(in, at);
  float v;
  std::memcpy(&v, &bits, 4);
  return v;
}

inline std::string read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path);
  std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return bytes;
}

inline void write_file(const std::string& path, const std::string& bytes) {
  std::filesystem::path p(path);
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot write " + path);
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw IoError("short write to " + path);
}

}  // namespace detail

// Serializes a C x H x W cube; values are clamped to [0,1] and stored as f32.
inline void save_hs1(const std::string& path, const Tensor& cube) {
  if (cube.rank() != 3) throw ShapeError("HS1 payload must be C x H x W, got " + shape_str(cube.shape));
  const std::uint32_t c = static_cast<std::uint32_t>(cube.shape[0]);
  const std::uint32_t h = static_cast<std::uint32_t>(cube.shape[1]);
  const std::uint32_t w = static_cast<std::uint32_t>(cube.shape[2]);
  std::string out;
  out.reserve(20 + 4 * cube.size());
  out += "HS1";
  out.push_back('\0');
  detail::put_u32(out, 1);
  detail::put_u32(out, h);
  detail::put_u32(out, w);
  detail::put_u32(out, c);
  for (double v : cube.data)
    detail::put_f32(out, static_cast<float>(std::clamp(v, 0.0, 1.0)));
  detail::write_file(path, out);
}

inline void save_hs1(const std::string& path, const SpectralImage& img) { save_hs1(path, img.data); }

// Loads any HS1 cube (C x H x W).
inline Tensor load_hs1_cube(const std::string& path) {
  const std::string in = detail::read_file(path);
  if (in.size() < 20) throw FormatError(path + ": truncated header at offset " + std::to_string(in.size()));
  if (in.compare(0, 4, std::string("HS1\0", 4)) != 0) throw FormatError(path + ": bad magic at offset 0");
  const std::uint32_t version = detail::get_u32(in, 4);
  if (version != 1)
    throw FormatError(path + ": unsupported version " + std::to_string(version) + " at offset 4");
  const std::uint32_t h = detail::get_u32(in, 8);
  const std::uint32_t w = detail::get_u32(in, 12);
  const std::uint32_t c = detail::get_u32(in, 16);
  if (h == 0 || w == 0 || c == 0) throw FormatError(path + ": zero extent in header at offset 8");
  const std::size_t expect = 20 + 4ull * h * w * c;
  if (in.size() != expect)
    throw FormatError(path + ": payload ends at offset " + std::to_string(in.size()) + ", expected " +
                      std::to_string(expect));
  Tensor cube({c, h, w});
  for (std::size_t i = 0; i < cube.size(); ++i)
    cube.data[i] = static_cast<double>(detail::get_f32(in, 20 + 4 * i));
  return cube;
}

inline SpectralImage load_hs1(const std::string& path) {
  Tensor cube = load_hs1_cube(path);
  if (cube.shape[0] != kBands)
    throw FormatError(path + ": expected " + std::to_string(kBands) + " bands, got " +
                      std::to_string(cube.shape[0]));
  const std::size_t h = cube.shape[1], w = cube.shape[2];
  return SpectralImage(h, w, std::move(cube));
}

// 8-bit binary PGM of one band, values scaled from [0,1].
inline void save_pgm8(const std::string& path, const Tensor& plane) {
  if (plane.rank() != 2) throw ShapeError("PGM expects H x W, got " + shape_str(plane.shape));
  const std::size_t h = plane.shape[0], w = plane.shape[1];
  std::string out = "P5\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
  for (double v : plane.data) {
    const double c = std::clamp(v, 0.0, 1.0);
    out.push_back(static_cast<char>(static_cast<unsigned char>(std::lround(c * 255.0))));
  }
  detail::write_file(path, out);
}

// Writes band_<nm>.pgm for all 31 bands into dir.
inline std::vector<std::string> dump_bands_pgm(const std::string& dir, const SpectralImage& img) {
  std::vector<std::string> paths;
  const std::size_t hw = img.height * img.width;
  for (std::size_t b = 0; b < kBands; ++b) {
    Tensor plane({img.height, img.width});
    std::copy_n(img.data.data.begin() + static_cast<long>(b * hw), hw, plane.data.begin());
    const std::string path =
        dir + "/band_" + std::to_string(static_cast<int>(band_wavelength_nm(b))) + ".pgm";
    save_pgm8(path, plane);
    paths.push_back(path);
  }
  return paths;
}

}  // namespace hsid
