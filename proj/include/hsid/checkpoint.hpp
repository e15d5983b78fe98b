#pragma once

#include <cstdint>
#include <string>

#include "hsid/hs1.hpp"
#include "hsid/optim.hpp"

namespace hsid {

// HSCK checkpoint (little-endian): magic "HSCK", u32 version=1,
// u64 config hash, u32 entry count, then per entry: u32 name length,
// UTF-8 name, u8 dtype tag (0 = f32), u32 rank, u32 extents, payload.
// Entries are written in name order, so save -> load -> save is byte-stable.

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  std::uint64_t config_hash = 0;
  ParamStore params;
};

inline void save_checkpoint(const std::string& path, const ParamStore& params,
                            std::uint64_t config_hash) {
  std::string out;
  out += "HSCK";
  detail::put_u32(out, kCheckpointVersion);
  detail::put_u32(out, static_cast<std::uint32_t>(config_hash & 0xffffffffULL));
  detail::put_u32(out, static_cast<std::uint32_t>(config_hash >> 32));
  detail::put_u32(out, static_cast<std::uint32_t>(params.size()));
  for (const auto& [name, tensor] : params) {
    detail::put_u32(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    out.push_back(static_cast<char>(0));  // dtype tag: f32
    detail::put_u32(out, static_cast<std::uint32_t>(tensor.rank()));
    for (std::size_t e : tensor.shape) detail::put_u32(out, static_cast<std::uint32_t>(e));
    for (double v : tensor.data) detail::put_f32(out, static_cast<float>(v));
  }
  detail::write_file(path, out);
}

inline Checkpoint load_checkpoint(const std::string& path) {
  const std::string in = detail::read_file(path);
  auto need = [&](std::size_t at, std::size_t bytes) {
    if (at + bytes > in.size())
      throw FormatError(path + ": truncated at offset " + std::to_string(in.size()) + ", needed " +
                        std::to_string(at + bytes));
  };
  need(0, 16);
  if (in.compare(0, 4, "HSCK") != 0) throw FormatError(path + ": bad magic at offset 0");
  const std::uint32_t version = detail::get_u32(in, 4);
  if (version != kCheckpointVersion)
    throw FormatError(path + ": unsupported version " + std::to_string(version) + " at offset 4");
  Checkpoint ck;
  ck.config_hash = static_cast<std::uint64_t>(detail::get_u32(in, 8)) |
                   (static_cast<std::uint64_t>(detail::get_u32(in, 12)) << 32);
  std::size_t at = 16;
  need(at, 4);
  const std::uint32_t count = detail::get_u32(in, at);
  at += 4;
  for (std::uint32_t i = 0; i < count; ++i) {
    need(at, 4);
    const std::uint32_t name_len = detail::get_u32(in, at);
    at += 4;
    need(at, name_len);
    std::string name = in.substr(at, name_len);
    at += name_len;
    need(at, 1);
    const unsigned char dtype = static_cast<unsigned char>(in[at]);
    at += 1;
    if (dtype != 0)
      throw FormatError(path + ": unknown dtype tag " + std::to_string(dtype) + " at offset " +
                        std::to_string(at - 1));
    need(at, 4);
    const std::uint32_t rank = detail::get_u32(in, at);
    at += 4;
    if (rank == 0 || rank > 8) throw FormatError(path + ": bad rank " + std::to_string(rank));
    Shape shape;
    for (std::uint32_t r = 0; r < rank; ++r) {
      need(at, 4);
      shape.push_back(detail::get_u32(in, at));
      at += 4;
    }
    Tensor t(shape);
    need(at, 4 * t.size());
    for (std::size_t k = 0; k < t.size(); ++k) {
      t.data[k] = static_cast<double>(detail::get_f32(in, at));
      at += 4;
    }
    ck.params.emplace(std::move(name), std::move(t));
  }
  if (at != in.size())
    throw FormatError(path + ": trailing bytes at offset " + std::to_string(at));
  return ck;
}

// A checkpoint is usable only if every expected entry is present with the
// expected shape (extra entries are also rejected).
inline void verify_params(const ParamStore& loaded, const ParamStore& expected,
                          const std::string& what) {
  for (const auto& [name, tensor] : expected) {
    auto it = loaded.find(name);
    if (it == loaded.end()) throw FormatError(what + ": missing parameter " + name);
    if (it->second.shape != tensor.shape)
      throw FormatError(what + ": parameter " + name + " has shape " + shape_str(it->second.shape) +
                        ", expected " + shape_str(tensor.shape));
  }
  for (const auto& [name, _] : loaded)
    if (!expected.count(name)) throw FormatError(what + ": unexpected parameter " + name);
}

}  // namespace hsid
