#pragma once

#include <string>

#include "hsid/optim.hpp"
#include "hsid/rng.hpp"
#include "hsid/tape.hpp"

namespace hsid {

// Seeded parameter construction. Streams are keyed by parameter name, so
// adding or removing a layer never disturbs the others.
class ParamInit {
 public:
  ParamInit(ParamStore& store, std::uint64_t seed) : store_(&store), seed_(seed) {}

  // Conv kernel + per-channel bias. Fan-in-scaled uniform; bias zero.
  void conv(const std::string& name, std::size_t cout, std::size_t cin_per_group, std::size_t kh,
            std::size_t kw, bool zero = false) {
    matrix_like(name + "/w", {cout, cin_per_group, kh, kw}, cin_per_group * kh * kw, zero);
    store_->emplace(name + "/b", Tensor({cout}));
  }

  void linear(const std::string& name, std::size_t out, std::size_t in, bool zero = false) {
    matrix_like(name + "/w", {out, in}, in, zero);
    store_->emplace(name + "/b", Tensor({out}));
  }

  // Bias-free projection matrix.
  void matrix(const std::string& name, std::size_t out, std::size_t in, bool zero = false) {
    matrix_like(name, {out, in}, in, zero);
  }

  void constant(const std::string& name, Shape shape, double value) {
    store_->emplace(name, Tensor(std::move(shape), value));
  }

 private:
  void matrix_like(const std::string& name, Shape shape, std::size_t fan_in, bool zero) {
    Tensor t(std::move(shape));
    if (!zero) {
      const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
      Rng rng = Rng::stream(seed_, name, 0);
      for (double& v : t.data) v = rng.next_uniform(-bound, bound);
    }
    store_->emplace(name, std::move(t));
  }

  ParamStore* store_;
  std::uint64_t seed_;
};

// y = conv(x, name/w) + name/b
inline Var conv_layer(const ParamVars& pv, const std::string& name, Var x, std::size_t stride,
                      std::size_t pad, std::size_t groups = 1) {
  return add_channels(conv2d(x, pv.at(name + "/w"), stride, pad, groups), pv.at(name + "/b"));
}

// y = W x + b for a vector x
inline Var linear_layer(const ParamVars& pv, const std::string& name, Var x) {
  return add(matvec(pv.at(name + "/w"), x), pv.at(name + "/b"));
}

}  // namespace hsid
