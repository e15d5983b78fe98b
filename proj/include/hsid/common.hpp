#pragma once

#include <cstdint>
#include <cstdio>
#include <stdexcept>
#include <string>
#include <string_view>

namespace hsid {

// Error taxonomy. Each maps to a CLI exit code in tools/hsi_detect.cpp:
// ConfigError -> 2, IoError/FormatError -> 3, TrainingError -> 4,
// ProtocolError -> 5, everything else -> 1.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

class ShapeError : public Error {
 public:
  explicit ShapeError(const std::string& msg) : Error("shape error: " + msg) {}
};

class ContractError : public Error {
 public:
  explicit ContractError(const std::string& msg) : Error("contract error: " + msg) {}
};

class LabelError : public Error {
 public:
  explicit LabelError(const std::string& msg) : Error("label error: " + msg) {}
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& msg) : Error("config error: " + msg) {}
};

class FormatError : public Error {
 public:
  explicit FormatError(const std::string& msg) : Error("format error: " + msg) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& msg) : Error("io error: " + msg) {}
};

class TrainingError : public Error {
 public:
  explicit TrainingError(const std::string& msg) : Error("training error: " + msg) {}
};

class ProtocolError : public Error {
 public:
  explicit ProtocolError(const std::string& msg) : Error("protocol error: " + msg) {}
};

class EvalError : public Error {
 public:
  explicit EvalError(const std::string& msg) : Error("evaluation error: " + msg) {}
};

inline std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// Shortest-exact decimal for a double; stable across runs, round-trips exactly.
inline std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  double back = 0.0;
  std::sscanf(buf, "%lf", &back);
  if (back == v) {
    for (int prec = 1; prec < 17; ++prec) {
      char cand[64];
      std::snprintf(cand, sizeof(cand), "%.*g", prec, v);
      std::sscanf(cand, "%lf", &back);
      if (back == v) return cand;
    }
  }
  return buf;
}

inline std::string hex16(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace hsid
