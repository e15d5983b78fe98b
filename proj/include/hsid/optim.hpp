#pragma once

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "hsid/rng.hpp"
#include "hsid/tape.hpp"
#include "hsid/tensor.hpp"

namespace hsid {

// Named parameter collection. std::map keeps iteration order stable, which
// checkpoint serialization and seeded initialization rely on.
using ParamStore = std::map<std::string, Tensor>;
using GradStore = std::map<std::string, Tensor>;

// Leaf handles for one forward pass: every parameter registered on the tape.
struct ParamVars {
  std::map<std::string, Var> vars;

  Var at(const std::string& name) const {
    auto it = vars.find(name);
    if (it == vars.end()) throw ContractError("unknown parameter: " + name);
    return it->second;
  }
};

inline ParamVars register_params(Tape& tape, const ParamStore& params, bool trainable = true) {
  ParamVars pv;
  for (const auto& [name, tensor] : params) {
    Tensor t = tensor;
    t.requires_grad = trainable;
    pv.vars.emplace(name, tape.leaf(std::move(t)));
  }
  return pv;
}

inline GradStore collect_grads(const Gradients& g, const ParamVars& pv) {
  GradStore out;
  for (const auto& [name, var] : pv.vars) out.emplace(name, g.at(var));
  return out;
}

struct AdamHyper {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// First/second moment estimates per parameter plus the shared step count.
struct AdamState {
  std::map<std::string, Tensor> m;
  std::map<std::string, Tensor> v;
  long t = 0;
  AdamHyper hyper;
};

// One Adam update with bias correction. Refuses the step (state untouched)
// if any gradient is non-finite.
inline void adam_step(ParamStore& params, const GradStore& grads, AdamState& state) {
  for (const auto& [name, g] : grads) {
    auto it = params.find(name);
    if (it == params.end()) throw ContractError("adam_step: gradient for unknown parameter " + name);
    if (!same_shape(it->second, g))
      throw ShapeError("adam_step: gradient shape " + shape_str(g.shape) + " for " + name +
                       " does not match parameter " + shape_str(it->second.shape));
    if (!g.all_finite()) throw TrainingError("non-finite gradient for " + name + "; step refused");
  }
  state.t += 1;
  const AdamHyper& h = state.hyper;
  const double bc1 = 1.0 - std::pow(h.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(h.beta2, static_cast<double>(state.t));
  for (auto& [name, p] : params) {
    auto git = grads.find(name);
    if (git == grads.end()) continue;
    const Tensor& g = git->second;
    Tensor& m = state.m.try_emplace(name, Tensor(p.shape)).first->second;
    Tensor& v = state.v.try_emplace(name, Tensor(p.shape)).first->second;
    for (std::size_t i = 0; i < p.size(); ++i) {
      m.data[i] = h.beta1 * m.data[i] + (1.0 - h.beta1) * g.data[i];
      v.data[i] = h.beta2 * v.data[i] + (1.0 - h.beta2) * g.data[i] * g.data[i];
      double mhat = m.data[i] / bc1;
      double vhat = v.data[i] / bc2;
      p.data[i] -= h.lr * mhat / (std::sqrt(vhat) + h.eps);
    }
  }
}

// ---------------------------------------------------------------------------
// Finite-difference gradient checking
// ---------------------------------------------------------------------------

// Builds a scalar loss from tracked inputs; called once per evaluation point.
using ScalarGraph = std::function<Var(Tape&, const std::vector<Var>&)>;

namespace detail {

inline double eval_scalar(const ScalarGraph& f, const std::vector<Tensor>& inputs) {
  Tape tape;
  std::vector<Var> vars;
  vars.reserve(inputs.size());
  for (const Tensor& t : inputs) vars.push_back(tape.constant(t));
  Var y = f(tape, vars);
  return y.val().scalar_value();
}

}  // namespace detail

// Max over checked components of |analytic - central_difference| relative to
// max(|analytic|, |central_difference|, 1e-8). `component_cap` bounds how many
// components per input are probed (0 = all), sampled from a seeded stream.
inline double grad_check(const ScalarGraph& f, std::vector<Tensor> inputs, double eps = 1e-5,
                         std::size_t component_cap = 0, std::uint64_t sample_seed = 0) {
  if (!(eps >= 1e-7 && eps <= 1e-3)) throw ContractError("grad_check: eps must be in [1e-7, 1e-3]");
  for (const Tensor& t : inputs)
    if (!t.all_finite()) throw ContractError("grad_check: inputs must be finite");

  std::vector<Tensor> analytic;
  {
    Tape tape;
    std::vector<Var> vars;
    vars.reserve(inputs.size());
    for (const Tensor& t : inputs) {
      Tensor tt = t;
      tt.requires_grad = true;
      vars.push_back(tape.leaf(std::move(tt)));
    }
    Var y = f(tape, vars);
    if (!y.val().is_scalar())
      throw ContractError("grad_check: function must return a scalar, got " + shape_str(y.val().shape));
    Gradients g = tape.backward(y);
    for (const Var& v : vars) analytic.push_back(g.at(v));
  }

  double worst = 0.0;
  for (std::size_t ti = 0; ti < inputs.size(); ++ti) {
    std::vector<std::size_t> comps;
    const std::size_t n = inputs[ti].size();
    if (component_cap == 0 || component_cap >= n) {
      comps.resize(n);
      for (std::size_t i = 0; i < n; ++i) comps[i] = i;
    } else {
      std::vector<std::size_t> all(n);
      for (std::size_t i = 0; i < n; ++i) all[i] = i;
      Rng rng = Rng::stream(sample_seed, "grad_check_components", ti);
      rng.shuffle(all);
      comps.assign(all.begin(), all.begin() + static_cast<long>(component_cap));
    }
    for (std::size_t ci : comps) {
      const double orig = inputs[ti].data[ci];
      inputs[ti].data[ci] = orig + eps;
      const double fp = detail::eval_scalar(f, inputs);
      inputs[ti].data[ci] = orig - eps;
      const double fm = detail::eval_scalar(f, inputs);
      inputs[ti].data[ci] = orig;
      const double numeric = (fp - fm) / (2.0 * eps);
      const double a = analytic[ti].data[ci];
      const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
      worst = std::max(worst, std::abs(a - numeric) / denom);
    }
  }
  return worst;
}

}  // namespace hsid
