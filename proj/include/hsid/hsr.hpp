#pragma once

#include <string>
#include <vector>

#include "hsid/data.hpp"
#include "hsid/nn.hpp"
#include "hsid/optim.hpp"
#include "hsid/tape.hpp"

namespace hsid {

// Spectral reconstruction network: a cascade of U-shaped stages whose
// attention runs across the channel (spectral) dimension. Maps 3 x H x W in
// [0,1] to a 31 x H x W estimate in [0,1].
struct HsrConfig {
  std::size_t stages = 2;
  std::size_t base_channels = 16;
  std::size_t heads = 2;
  std::size_t depth = 2;  // U levels per stage
  bool positional_branch = true;

  void validate() const {
    if (stages < 1) throw ConfigError("hsr: stages must be >= 1");
    if (depth < 1) throw ConfigError("hsr: depth must be >= 1");
    if (heads == 0 || base_channels % heads != 0)
      throw ConfigError("hsr: heads must divide base_channels (" + std::to_string(heads) + " vs " +
                        std::to_string(base_channels) + ")");
  }

  std::size_t level_width(std::size_t level) const { return base_channels << level; }
};

namespace hsrdetail {

inline void init_block(ParamInit& init, const std::string& name, std::size_t width,
                       std::size_t heads, bool positional) {
  init.matrix(name + "/attn/wq", width, width);
  init.matrix(name + "/attn/wk", width, width);
  init.matrix(name + "/attn/wv", width, width);
  // Zero output projection: every block starts as (near) identity.
  init.matrix(name + "/attn/wo", width, width, /*zero=*/true);
  init.constant(name + "/attn/ob", {width}, 0.0);
  init.constant(name + "/attn/temp", {heads}, 1.0);
  if (positional) init.conv(name + "/attn/pos", width, 1, 3, 3);
  init.conv(name + "/ffn/c1", 2 * width, width, 1, 1);
  init.conv(name + "/ffn/c2", width, 2 * width, 1, 1);
}

}  // namespace hsrdetail

inline ParamStore hsr_init_params(const HsrConfig& cfg, std::uint64_t seed,
                                  const std::string& prefix = "hsr") {
  cfg.validate();
  ParamStore store;
  ParamInit init(store, seed);
  init.conv(prefix + "/embed", cfg.base_channels, 3, 3, 3);
  for (std::size_t s = 0; s < cfg.stages; ++s) {
    const std::string sp = prefix + "/stage" + std::to_string(s);
    init.conv(sp + "/ein", cfg.base_channels, cfg.base_channels, 3, 3);
    for (std::size_t l = 0; l < cfg.depth; ++l) {
      const std::size_t w = cfg.level_width(l);
      hsrdetail::init_block(init, sp + "/down" + std::to_string(l), w, cfg.heads,
                            cfg.positional_branch);
      init.conv(sp + "/dsample" + std::to_string(l), 2 * w, w, 4, 4);
      hsrdetail::init_block(init, sp + "/up" + std::to_string(l), w, cfg.heads,
                            cfg.positional_branch);
      init.conv(sp + "/up" + std::to_string(l) + "/half", w, 2 * w, 1, 1);
      init.conv(sp + "/up" + std::to_string(l) + "/fuse", w, 2 * w, 1, 1);
    }
    hsrdetail::init_block(init, sp + "/bott", cfg.level_width(cfg.depth), cfg.heads,
                          cfg.positional_branch);
    init.conv(sp + "/eout", cfg.base_channels, cfg.base_channels, 3, 3, /*zero=*/true);
  }
  init.conv(prefix + "/head", kBands, cfg.base_channels, 3, 3, /*zero=*/true);
  init.matrix(prefix + "/lift", kBands, 3);  // linear 3->31 long-range residual
  return store;
}

// Spectral-wise self-attention. Each channel's flattened spatial map is one
// token; attention mixes tokens per head through a (C/heads)^2 matrix with a
// learnable per-head temperature, plus an optional depthwise positional
// branch on V and the residual input.
inline Var spectral_attention(const ParamVars& pv, const std::string& name, Var x,
                              std::size_t heads, bool positional,
                              std::vector<Tensor>* attn_capture = nullptr) {
  const Tensor& tx = x.val();
  if (tx.rank() != 3) throw ShapeError("spectral_attention expects C x H x W");
  const std::size_t c = tx.shape[0], h = tx.shape[1], w = tx.shape[2];
  if (heads == 0 || c % heads != 0)
    throw ConfigError("spectral_attention: heads " + std::to_string(heads) +
                      " must divide channels " + std::to_string(c));
  const std::size_t d = c / heads;

  Var tokens = reshape(x, {c, h * w});
  Var q = matmul(pv.at(name + "/wq"), tokens);
  Var k = matmul(pv.at(name + "/wk"), tokens);
  Var v = matmul(pv.at(name + "/wv"), tokens);
  Var temp = pv.at(name + "/temp");

  std::vector<Var> heads_out;
  for (std::size_t g = 0; g < heads; ++g) {
    Var qg = narrow(q, 0, g * d, d);
    Var kg = narrow(k, 0, g * d, d);
    Var vg = narrow(v, 0, g * d, d);
    Var scores = scale_by_scalar(matmul(kg, transpose(qg)), narrow(temp, 0, g, 1));
    Var attn = softmax(scores, 0);  // columns sum to 1
    if (attn_capture) attn_capture->push_back(attn.val());
    heads_out.push_back(matmul(transpose(attn), vg));
  }
  Var mixed = heads == 1 ? heads_out[0] : concat(heads_out, 0);
  Var out = add_channels(reshape(matmul(pv.at(name + "/wo"), mixed), {c, h, w}), pv.at(name + "/ob"));
  if (positional) {
    Var v3 = reshape(v, {c, h, w});
    out = add(out, conv_layer(pv, name + "/pos", v3, 1, 1, /*groups=*/c));
  }
  return add(out, x);
}

namespace hsrdetail {

inline Var block(const ParamVars& pv, const std::string& name, Var x, std::size_t heads,
                 bool positional) {
  Var a = spectral_attention(pv, name + "/attn", x, heads, positional);
  Var f = conv_layer(pv, name + "/ffn/c2", gelu(conv_layer(pv, name + "/ffn/c1", a, 1, 0)), 1, 0);
  return add(a, f);
}

}  // namespace hsrdetail

// One U-shaped stage with a stage-level residual; identity when the output
// conv is zero.
inline Var sst_forward(const ParamVars& pv, const std::string& stage_prefix, Var x,
                       const HsrConfig& cfg) {
  const Tensor& tx = x.val();
  if (tx.rank() != 3) throw ShapeError("sst_forward expects C x H x W");
  const std::size_t divisor = 1ull << cfg.depth;
  if (tx.shape[1] % divisor != 0 || tx.shape[2] % divisor != 0)
    throw ShapeError("sst_forward: spatial extents " + std::to_string(tx.shape[1]) + "x" +
                     std::to_string(tx.shape[2]) + " must be divisible by 2^depth = " +
                     std::to_string(divisor));

  Var e = conv_layer(pv, stage_prefix + "/ein", x, 1, 1);
  std::vector<Var> skips;
  for (std::size_t l = 0; l < cfg.depth; ++l) {
    e = hsrdetail::block(pv, stage_prefix + "/down" + std::to_string(l), e, cfg.heads,
                         cfg.positional_branch);
    skips.push_back(e);
    e = conv_layer(pv, stage_prefix + "/dsample" + std::to_string(l), e, 2, 1);
  }
  e = hsrdetail::block(pv, stage_prefix + "/bott", e, cfg.heads, cfg.positional_branch);
  for (std::size_t l = cfg.depth; l-- > 0;) {
    const std::string up = stage_prefix + "/up" + std::to_string(l);
    Var u = conv_layer(pv, up + "/half", nearest_upsample2(e), 1, 0);
    Var fused = conv_layer(pv, up + "/fuse", concat({u, skips[l]}, 0), 1, 0);
    e = hsrdetail::block(pv, up, fused, cfg.heads, cfg.positional_branch);
  }
  Var out = conv_layer(pv, stage_prefix + "/eout", e, 1, 1);
  return add(out, x);
}

// RGB -> 31-band estimate, clamped to [0,1]. A learned 3->31 linear lift of
// the input feeds a long-range residual around the stage cascade.
inline Var hsr_reconstruct(const ParamVars& pv, Var rgb, const HsrConfig& cfg,
                           const std::string& prefix = "hsr") {
  cfg.validate();
  const Tensor& ti = rgb.val();
  if (ti.rank() != 3 || ti.shape[0] != 3)
    throw ShapeError("hsr_reconstruct expects 3 x H x W, got " + shape_str(ti.shape));
  if (!ti.all_finite()) throw ShapeError("hsr_reconstruct: non-finite input");

  Var f = conv_layer(pv, prefix + "/embed", rgb, 1, 1);
  for (std::size_t s = 0; s < cfg.stages; ++s)
    f = sst_forward(pv, prefix + "/stage" + std::to_string(s), f, cfg);
  Var head = conv_layer(pv, prefix + "/head", f, 1, 1);

  const std::size_t h = ti.shape[1], w = ti.shape[2];
  Var lift = reshape(matmul(pv.at(prefix + "/lift"), reshape(rgb, {3, h * w})), {kBands, h, w});
  return clamp01(add(head, lift));
}

// Mean relative absolute error with an epsilon-stabilized denominator.
// Asymmetric by definition: the second argument is the reference.
inline constexpr double kMraeEps = 1e-3;

inline Var mrae(Var pred, Var target) {
  require_same_shape(pred.val(), target.val(), "mrae");
  return mean(div(abs_op(sub(pred, target)), add_const(target, kMraeEps)));
}

inline double mrae(const Tensor& pred, const Tensor& target) {
  require_same_shape(pred, target, "mrae");
  double acc = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i)
    acc += std::abs(pred.data[i] - target.data[i]) / (target.data[i] + kMraeEps);
  return acc / static_cast<double>(pred.size());
}

// Forward pass outside any training tape (frozen parameters).
inline SpectralImage hsr_apply(const ParamStore& params, const HsrConfig& cfg, const RgbImage& rgb,
                               const std::string& prefix = "hsr") {
  Tape tape;
  ParamVars pv = register_params(tape, params, /*trainable=*/false);
  Var out = hsr_reconstruct(pv, tape.constant(rgb.data), cfg, prefix);
  return SpectralImage(rgb.height, rgb.width, out.val());
}

}  // namespace hsid
