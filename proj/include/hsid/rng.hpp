#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>
#include <vector>

#include "hsid/common.hpp"

namespace hsid {

// Counter-based splittable generator. Every stochastic site in the pipeline
// derives its stream from (seed, site_label, item_index), so results do not
// depend on call order or scheduling and any item can be regenerated alone.
class Rng {
 public:
  static Rng stream(std::uint64_t seed, std::string_view site, std::uint64_t index) {
    std::uint64_t key = mix(seed ^ 0x9e3779b97f4a7c15ULL);
    key = mix(key ^ fnv1a64(site));
    key = mix(key ^ index);
    return Rng(key);
  }

  explicit Rng(std::uint64_t state) : state_(state) {}

  std::uint64_t next_u64() {
    state_ += 0x9e3779b97f4a7c15ULL;
    return mix(state_);
  }

  // Uniform in [0, 1).
  double next_unit() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double next_uniform(double lo, double hi) { return lo + (hi - lo) * next_unit(); }

  // Uniform integer in [0, n).
  std::uint64_t next_below(std::uint64_t n) {
    if (n == 0) throw ContractError("Rng::next_below(0)");
    return next_u64() % n;
  }

  // Box-Muller; no rejection, so the stream stays counter-aligned.
  double next_normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = next_unit();
    double u2 = next_unit();
    if (u1 < 1e-300) u1 = 1e-300;
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

  // In-place Fisher-Yates.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(next_below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  static std::uint64_t mix(std::uint64_t z) {
    z ^= z >> 30;
    z *= 0xbf58476d1ce4e5b9ULL;
    z ^= z >> 27;
    z *= 0x94d049bb133111ebULL;
    z ^= z >> 31;
    return z;
  }

  std::uint64_t state_;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

}  // namespace hsid
