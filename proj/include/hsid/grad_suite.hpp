#pragma once

#include <functional>
#include <string>
#include <vector>

#include "hsid/detector.hpp"
#include "hsid/hsr.hpp"
#include "hsid/objectives.hpp"
#include "hsid/optim.hpp"
#include "hsid/rng.hpp"

namespace hsid {

// One finite-difference check site. Engine primitives check every component
// over 20 seeded inputs at 1e-5; the composite network sites check a seeded
// component subset at 1e-4 (full sweeps there would take hours, not minutes).
struct GradSiteReport {
  std::string name;
  double max_err = 0.0;
  double tol = 0.0;
  bool pass() const { return max_err <= tol; }
};

namespace gradsuite {

inline Tensor rand_t(Rng& rng, Shape s, double lo, double hi) {
  Tensor t(std::move(s));
  for (double& v : t.data) v = rng.next_uniform(lo, hi);
  return t;
}

// Magnitudes in [lo, hi], random sign: keeps kinked ops (relu, abs, ...) away
// from their kink by more than the finite-difference step.
inline Tensor rand_signed(Rng& rng, Shape s, double lo, double hi) {
  Tensor t(std::move(s));
  for (double& v : t.data) v = rng.next_uniform(lo, hi) * (rng.next_unit() < 0.5 ? -1.0 : 1.0);
  return t;
}

// Projects an op output to a scalar through weights drawn once per run, so
// every output element's backward rule is exercised and the checked function
// stays fixed across finite-difference evaluations.
inline double check_weighted(const std::function<Var(Tape&, const std::vector<Var>&)>& op,
                             std::vector<Tensor> inputs, Rng& wrng) {
  Shape out_shape;
  {
    Tape probe;
    std::vector<Var> vars;
    for (const Tensor& t : inputs) vars.push_back(probe.constant(t));
    out_shape = op(probe, vars).val().shape;
  }
  Tensor w(out_shape);
  for (double& v : w.data) v = wrng.next_uniform(-1.0, 1.0);
  return grad_check(
      [&](Tape& tape, const std::vector<Var>& v) {
        return sum(mul(op(tape, v), tape.constant(w)));
      },
      std::move(inputs));
}

struct Site {
  std::string name;
  double tol;
  std::size_t runs;
  std::function<double(std::uint64_t run, std::uint64_t seed)> check;
};

inline std::vector<Site> primitive_sites() {
  const double tol = 1e-5;
  const std::size_t runs = 20;
  std::vector<Site> sites;
  auto unary_site = [&](const std::string& name, std::function<Var(Var)> op,
                        std::function<Tensor(Rng&)> gen) {
    sites.push_back({name, tol, runs, [=](std::uint64_t run, std::uint64_t sd) {
                       Rng rng = Rng::stream(sd, "gc_" + name, run);
                       Rng wrng = Rng::stream(sd, "gcw_" + name, run);
                       Tensor in = gen(rng);
                       return check_weighted(
                           [&](Tape&, const std::vector<Var>& v) { return op(v[0]); }, {in}, wrng);
                     }});
  };
  auto binary_site = [&](const std::string& name, std::function<Var(Var, Var)> op,
                         std::function<Tensor(Rng&)> gen_a, std::function<Tensor(Rng&)> gen_b) {
    sites.push_back({name, tol, runs, [=](std::uint64_t run, std::uint64_t sd) {
                       Rng rng = Rng::stream(sd, "gc_" + name, run);
                       Rng wrng = Rng::stream(sd, "gcw_" + name, run);
                       Tensor a = gen_a(rng);
                       Tensor b = gen_b(rng);
                       return check_weighted(
                           [&](Tape&, const std::vector<Var>& v) { return op(v[0], v[1]); }, {a, b},
                           wrng);
                     }});
  };

  auto box = [](Shape s, double lo, double hi) {
    return [=](Rng& rng) { return rand_t(rng, s, lo, hi); };
  };
  auto signed_box = [](Shape s, double lo, double hi) {
    return [=](Rng& rng) { return rand_signed(rng, s, lo, hi); };
  };

  binary_site("add", [](Var a, Var b) { return add(a, b); }, box({3, 4}, -2, 2), box({3, 4}, -2, 2));
  binary_site("sub", [](Var a, Var b) { return sub(a, b); }, box({3, 4}, -2, 2), box({3, 4}, -2, 2));
  binary_site("mul", [](Var a, Var b) { return mul(a, b); }, box({3, 4}, -2, 2), box({3, 4}, -2, 2));
  binary_site("div", [](Var a, Var b) { return div(a, b); }, box({3, 4}, -2, 2),
              signed_box({3, 4}, 0.3, 2));
  unary_site("add_const", [](Var a) { return add_const(a, 0.7); }, box({3, 4}, -2, 2));
  unary_site("mul_const", [](Var a) { return mul_const(a, -1.3); }, box({3, 4}, -2, 2));
  unary_site("max_const", [](Var a) { return max_const(a, 0.5); },
             [](Rng& rng) {
               Tensor t = rand_t(rng, {3, 4}, -2, 2);
               for (double& v : t.data)
                 if (std::abs(v - 0.5) < 0.05) v += 0.2;
               return t;
             });
  binary_site("scale_by_scalar", [](Var a, Var s) { return scale_by_scalar(a, s); },
              box({3, 4}, -2, 2), box({1}, 0.5, 2));
  unary_site("relu", [](Var a) { return relu(a); }, signed_box({3, 4}, 0.05, 2));
  unary_site("abs", [](Var a) { return abs_op(a); }, signed_box({3, 4}, 0.05, 2));
  unary_site("gelu", [](Var a) { return gelu(a); }, box({3, 4}, -2, 2));
  unary_site("sigmoid", [](Var a) { return sigmoid(a); }, box({3, 4}, -3, 3));
  unary_site("softplus", [](Var a) { return softplus(a); }, box({3, 4}, -3, 3));
  unary_site("exp", [](Var a) { return exp_op(a); }, box({3, 4}, -2, 1));
  unary_site("sqrt", [](Var a) { return sqrt_op(a); }, box({3, 4}, 0.1, 2));
  unary_site("recip", [](Var a) { return recip(a); }, signed_box({3, 4}, 0.2, 2));
  unary_site("clamp01", [](Var a) { return clamp01(a); },
             [](Rng& rng) {
               Tensor t({3, 4});
               for (double& v : t.data) {
                 const std::uint64_t bucket = rng.next_below(3);
                 v = bucket == 0   ? rng.next_uniform(0.05, 0.95)
                     : bucket == 1 ? rng.next_uniform(1.05, 1.5)
                                   : rng.next_uniform(-0.5, -0.05);
               }
               return t;
             });
  unary_site("reshape", [](Var a) { return reshape(a, {2, 6}); }, box({3, 4}, -2, 2));
  unary_site("transpose", [](Var a) { return transpose(a); }, box({3, 4}, -2, 2));
  binary_site("concat_dim0", [](Var a, Var b) { return concat({a, b}, 0); }, box({2, 3}, -2, 2),
              box({4, 3}, -2, 2));
  binary_site("concat_dim1", [](Var a, Var b) { return concat({a, b}, 1); }, box({3, 2}, -2, 2),
              box({3, 3}, -2, 2));
  unary_site("narrow", [](Var a) { return narrow(a, 1, 1, 2); }, box({3, 4}, -2, 2));
  binary_site("matmul", [](Var a, Var b) { return matmul(a, b); }, box({3, 4}, -1, 1),
              box({4, 5}, -1, 1));
  binary_site("matvec", [](Var a, Var b) { return matvec(a, b); }, box({4, 5}, -1, 1),
              box({5}, -1, 1));
  binary_site("conv2d_s1", [](Var x, Var k) { return conv2d(x, k, 1, 1); }, box({2, 5, 5}, -1, 1),
              box({3, 2, 3, 3}, -1, 1));
  binary_site("conv2d_s2", [](Var x, Var k) { return conv2d(x, k, 2, 1); }, box({2, 6, 6}, -1, 1),
              box({4, 2, 4, 4}, -1, 1));
  binary_site("conv2d_depthwise", [](Var x, Var k) { return conv2d(x, k, 1, 1, 3); },
              box({3, 5, 5}, -1, 1), box({3, 1, 3, 3}, -1, 1));
  unary_site("nearest_upsample2", [](Var a) { return nearest_upsample2(a); }, box({2, 3, 3}, -2, 2));
  unary_site("softmax_axis0", [](Var a) { return softmax(a, 0); }, box({4, 5}, -2, 2));
  unary_site("softmax_axis1", [](Var a) { return softmax(a, 1); }, box({4, 5}, -2, 2));
  sites.push_back({"softmax_ce", tol, runs, [](std::uint64_t run, std::uint64_t sd) {
                     Rng rng = Rng::stream(sd, "gc_softmax_ce", run);
                     Tensor logits = rand_t(rng, {5}, -2, 2);
                     const std::size_t target = run % 5;
                     return grad_check(
                         [&](Tape&, const std::vector<Var>& v) { return softmax_ce(v[0], target); },
                         {logits});
                   }});
  unary_site("sum", [](Var a) { return sum(a); }, box({3, 4}, -2, 2));
  unary_site("mean", [](Var a) { return mean(a); }, box({3, 4}, -2, 2));
  unary_site("variance", [](Var a) { return variance(a); }, box({3, 4}, -2, 2));
  unary_site("channel_mean", [](Var a) { return channel_mean(a); }, box({3, 4, 4}, -2, 2));
  binary_site("add_channels", [](Var x, Var b) { return add_channels(x, b); },
              box({3, 4, 4}, -2, 2), box({3}, -1, 1));
  binary_site("mul_channels", [](Var x, Var s) { return mul_channels(x, s); },
              box({3, 4, 4}, -2, 2), box({3}, -1, 1));
  return sites;
}

inline std::vector<Site> composite_sites() {
  std::vector<Site> sites;

  // SST stage forward at desk-scale width on a 16x16 map.
  sites.push_back({"sst_forward_16x16", 1e-4, 2, [](std::uint64_t run, std::uint64_t sd) {
                     HsrConfig cfg;
                     cfg.stages = 1;
                     ParamStore params = hsr_init_params(cfg, sd + run);
                     Rng fill = Rng::stream(sd, "gc_sst_fill", run);
                     for (auto& [name, t] : params)
                       for (double& v : t.data) v = fill.next_uniform(-0.2, 0.2);
                     Rng rng = Rng::stream(sd, "gc_sst", run);
                     Tensor x = rand_t(rng, {cfg.base_channels, 16, 16}, -1, 1);
                     return grad_check(
                         [&](Tape& tape, const std::vector<Var>& v) {
                           ParamVars pv = register_params(tape, params, false);
                           return mean(sst_forward(pv, "hsr/stage0", v[0], cfg));
                         },
                         {x}, 1e-5, /*component_cap=*/64, /*sample_seed=*/sd + 17 * run);
                   }});

  sites.push_back({"hsr_reconstruct_16x16", 1e-4, 2, [](std::uint64_t run, std::uint64_t sd) {
                     HsrConfig cfg;
                     cfg.stages = 1;
                     ParamStore params = hsr_init_params(cfg, sd + run);
                     Rng fill = Rng::stream(sd, "gc_hsr_fill", run);
                     for (auto& [name, t] : params)
                       for (double& v : t.data) v = fill.next_uniform(-0.2, 0.2);
                     Rng rng = Rng::stream(sd, "gc_hsr", run);
                     Tensor x = rand_t(rng, {3, 16, 16}, 0.05, 0.95);
                     return grad_check(
                         [&](Tape& tape, const std::vector<Var>& v) {
                           ParamVars pv = register_params(tape, params, false);
                           return mean(hsr_reconstruct(pv, v[0], cfg));
                         },
                         {x}, 1e-5, /*component_cap=*/48, /*sample_seed=*/sd + 19 * run);
                   }});

  // Full detector training loss on a (real, fake) pair of 31 x 16 x 16 cubes.
  sites.push_back({"detector_loss_16x16x31", 1e-4, 2, [](std::uint64_t run, std::uint64_t sd) {
                     DetectorConfig cfg;
                     ParamStore params = detector_init_params(cfg, sd + run);
                     Rng rng = Rng::stream(sd, "gc_det", run);
                     Tensor real = rand_t(rng, {kBands, 16, 16}, 0.02, 0.98);
                     Tensor fake = rand_t(rng, {kBands, 16, 16}, 0.02, 0.98);
                     auto loss_fn = [&](Tape& tape, const std::vector<Var>& v) {
                       ParamVars pv = register_params(tape, params, false);
                       auto [oa, ob] = forward_pair(pv, v[0], v[1], cfg);
                       std::vector<ClsTarget> cls = {
                           {oa.logits.binary, oa.logits.specific, false, std::nullopt},
                           {ob.logits.binary, ob.logits.specific, true, static_cast<int>(run % 3)}};
                       auto [cb, cs] = multitask_cls_loss(tape, cls);
                       Var con = contrastive_reg_loss(tape, {oa.embedding, ob.embedding},
                                                      {false, true}, cfg.margin);
                       Var rec = reconstruction_loss(tape, {{oa.self_recon, oa.cross_recon, oa.input},
                                                            {ob.self_recon, ob.cross_recon, ob.input}});
                       return total_loss(tape, cb, cs, con, rec, LossWeights{}).total;
                     };
                     return grad_check(loss_fn, {real, fake}, 1e-5, /*component_cap=*/96,
                                       /*sample_seed=*/sd + 23 * run);
                   }});
  return sites;
}

}  // namespace gradsuite

inline std::vector<GradSiteReport> run_grad_suite(std::uint64_t seed) {
  std::vector<GradSiteReport> reports;
  auto run_sites = [&](const std::vector<gradsuite::Site>& sites) {
    for (const auto& site : sites) {
      GradSiteReport r;
      r.name = site.name;
      r.tol = site.tol;
      for (std::uint64_t run = 0; run < site.runs; ++run)
        r.max_err = std::max(r.max_err, site.check(run, seed));
      reports.push_back(std::move(r));
    }
  };
  run_sites(gradsuite::primitive_sites());
  run_sites(gradsuite::composite_sites());
  return reports;
}

}  // namespace hsid
