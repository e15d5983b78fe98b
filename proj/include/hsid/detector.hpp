#pragma once

#include <optional>
#include <string>
#include <vector>

#include "hsid/data.hpp"
#include "hsid/nn.hpp"
#include "hsid/optim.hpp"
#include "hsid/tape.hpp"

namespace hsid {

// Epsilon for all channel-std computations (population variance convention).
inline constexpr double kAdainEps = 1e-5;

// Per-channel (mu, sigma) pair; sigma is epsilon-stabilized.
struct StyleStats {
  std::vector<double> mu;
  std::vector<double> sigma;

  void check(std::size_t channels) const {
    if (mu.size() != channels || sigma.size() != channels)
      throw ShapeError("style stats length " + std::to_string(mu.size()) + " does not match " +
                       std::to_string(channels) + " channels");
    for (double s : sigma)
      if (!(s >= kAdainEps)) throw ContractError("style sigma below epsilon");
  }
};

// Channel-wise spatial statistics of a C x H x W map.
inline StyleStats stats(const Tensor& x) {
  if (x.rank() != 3) throw ShapeError("stats expects C x H x W, got " + shape_str(x.shape));
  const std::size_t c = x.shape[0], hw = x.shape[1] * x.shape[2];
  StyleStats st;
  st.mu.resize(c);
  st.sigma.resize(c);
  for (std::size_t ch = 0; ch < c; ++ch) {
    const double* p = x.data.data() + ch * hw;
    double m = 0.0;
    for (std::size_t i = 0; i < hw; ++i) m += p[i];
    m /= static_cast<double>(hw);
    double v = 0.0;
    for (std::size_t i = 0; i < hw; ++i) v += (p[i] - m) * (p[i] - m);
    v /= static_cast<double>(hw);
    st.mu[ch] = m;
    st.sigma[ch] = std::max(std::sqrt(v), kAdainEps);
  }
  return st;
}

// AdaIN(x, y) = sigma(y) * (x - mu(x)) / max(sigma(x), eps) + mu(y), with the
// moments taken over each channel's spatial extent.
inline Tensor adain(const Tensor& x, const StyleStats& style) {
  if (x.rank() != 3) throw ShapeError("adain expects C x H x W, got " + shape_str(x.shape));
  style.check(x.shape[0]);
  const std::size_t c = x.shape[0], hw = x.shape[1] * x.shape[2];
  StyleStats sx = stats(x);
  Tensor out(x.shape);
  for (std::size_t ch = 0; ch < c; ++ch) {
    const double* p = x.data.data() + ch * hw;
    double* q = out.data.data() + ch * hw;
    const double scale = style.sigma[ch] / sx.sigma[ch];  // sx.sigma already >= eps
    for (std::size_t i = 0; i < hw; ++i) q[i] = scale * (p[i] - sx.mu[ch]) + style.mu[ch];
  }
  return out;
}

// Recorded variant used inside the decoder; mu_y/sigma_y are 1-D nodes of
// length C. Matches the plain version bit for bit given equal inputs.
inline Var adain(Var x, Var mu_y, Var sigma_y) {
  const Tensor& tx = x.val();
  if (tx.rank() != 3) throw ShapeError("adain expects C x H x W, got " + shape_str(tx.shape));
  if (mu_y.val().shape != Shape{tx.shape[0]} || sigma_y.val().shape != Shape{tx.shape[0]})
    throw ShapeError("adain: style length does not match " + std::to_string(tx.shape[0]) +
                     " channels");
  Var mu_x = channel_mean(x);
  Var centered = add_channels(x, neg(mu_x));
  // max(sigma, eps) computed as sqrt(max(var, eps^2)): same value, and the
  // sqrt input stays positive even on constant channels (dead ReLU units).
  Var var_x = max_const(channel_mean(mul(centered, centered)), kAdainEps * kAdainEps);
  Var inv = recip(sqrt_op(var_x));
  Var normalized = mul_channels(centered, inv);
  return add_channels(mul_channels(normalized, sigma_y), mu_y);
}

// ---------------------------------------------------------------------------
// Disentanglement network
// ---------------------------------------------------------------------------

struct DetectorConfig {
  std::size_t channels = 32;   // fingerprint common/specific width; encoders go in->c->2c
  std::size_t k_classes = 3;   // specific manipulation families
  bool rgb_input = false;      // 3-channel ablation instead of the 31-band cube
  double margin = 1.0;         // contrastive margin

  std::size_t input_channels() const { return rgb_input ? 3 : kBands; }
  // AdaIN sites: decoder input (2c) and the map after the first up-level (c).
  std::size_t style_width() const { return 3 * channels; }

  void validate() const {
    if (channels < 2) throw ConfigError("detector: channels must be >= 2");
    if (k_classes < 1) throw ConfigError("detector: k_classes must be >= 1");
    if (margin <= 0.0) throw ConfigError("detector: margin must be positive");
  }
};

inline ParamStore detector_init_params(const DetectorConfig& cfg, std::uint64_t seed,
                                       const std::string& prefix = "det") {
  cfg.validate();
  ParamStore store;
  ParamInit init(store, seed);
  const std::size_t c = cfg.channels, in = cfg.input_channels();
  init.conv(prefix + "/content/c0", c, in, 4, 4);
  init.conv(prefix + "/content/c1", 2 * c, c, 4, 4);
  init.conv(prefix + "/fp/c0", c, in, 4, 4);
  init.conv(prefix + "/fp/c1", 2 * c, c, 4, 4);
  init.linear(prefix + "/bin", 2, c);
  init.linear(prefix + "/spec", cfg.k_classes, c);
  init.linear(prefix + "/style", 2 * cfg.style_width(), 2 * c);
  init.conv(prefix + "/dec/d0", c, 2 * c, 3, 3);
  init.conv(prefix + "/dec/d1", c, c, 3, 3);
  init.conv(prefix + "/dec/out", in, c, 3, 3);
  return store;
}

// Shared forgery evidence (common) versus method-specific evidence; both are
// views over the fingerprint encoder's output, whose first half is common.
struct FingerprintFeature {
  Var common;
  Var specific;
  Var full;  // pre-split map (common ‖ specific)
};

// Strided conv stack in -> c -> 2c with ReLU; output spatial extent is (H/4, W/4).
inline Var encode_content(const ParamVars& pv, Var hsi, const std::string& prefix = "det") {
  Var h0 = relu(conv_layer(pv, prefix + "/content/c0", hsi, 2, 1));
  return relu(conv_layer(pv, prefix + "/content/c1", h0, 2, 1));
}

inline FingerprintFeature encode_fingerprint(const ParamVars& pv, Var hsi, std::size_t channels,
                                             const std::string& prefix = "det") {
  Var h0 = relu(conv_layer(pv, prefix + "/fp/c0", hsi, 2, 1));
  Var full = relu(conv_layer(pv, prefix + "/fp/c1", h0, 2, 1));
  FingerprintFeature f;
  f.full = full;
  f.common = narrow(full, 0, 0, channels);
  f.specific = narrow(full, 0, channels, channels);
  return f;
}

// Binary head reads only common evidence; the specific head only specific.
struct HeadLogits {
  Var binary;    // (real, fake)
  Var specific;  // K manipulation families
};

inline HeadLogits classify(const ParamVars& pv, const FingerprintFeature& f,
                           const std::string& prefix = "det") {
  HeadLogits out;
  out.binary = linear_layer(pv, prefix + "/bin", channel_mean(f.common));
  out.specific = linear_layer(pv, prefix + "/spec", channel_mean(f.specific));
  return out;
}

// Pooled fingerprint -> (mu ‖ raw sigma); sigma passes through softplus + eps,
// so it is strictly positive.
struct StyleVars {
  Var mu;     // length style_width
  Var sigma;  // length style_width
};

inline StyleVars style_from_fingerprint(const ParamVars& pv, const FingerprintFeature& f,
                                        const DetectorConfig& cfg,
                                        const std::string& prefix = "det") {
  Var packed = linear_layer(pv, prefix + "/style", channel_mean(f.full));
  const std::size_t w = cfg.style_width();
  StyleVars s;
  s.mu = narrow(packed, 0, 0, w);
  s.sigma = add_const(softplus(narrow(packed, 0, w, w)), kAdainEps);
  return s;
}

// Two up-levels (nearest x2 + conv, ReLU), each preceded by AdaIN on its
// style slice; final conv to the input band count, sigmoid into [0,1].
inline Var decode(const ParamVars& pv, Var content, const StyleVars& style,
                  const DetectorConfig& cfg, const std::string& prefix = "det") {
  const std::size_t c = cfg.channels;
  Var a0 = adain(content, narrow(style.mu, 0, 0, 2 * c), narrow(style.sigma, 0, 0, 2 * c));
  Var u1 = relu(conv_layer(pv, prefix + "/dec/d0", nearest_upsample2(a0), 1, 1));
  Var a1 = adain(u1, narrow(style.mu, 0, 2 * c, c), narrow(style.sigma, 0, 2 * c, c));
  Var u2 = relu(conv_layer(pv, prefix + "/dec/d1", nearest_upsample2(a1), 1, 1));
  return sigmoid(conv_layer(pv, prefix + "/dec/out", u2, 1, 1));
}

struct DetectorOutput {
  Var input;            // the consumed image (31 x H x W, or 3 x H x W for the ablation)
  Var content;
  FingerprintFeature fingerprint;
  HeadLogits logits;
  Var embedding;        // pooled common features (contrastive input)
  StyleVars style;
  Var self_recon;
  Var cross_recon;      // only set by forward_pair
};

inline DetectorOutput forward_sample(const ParamVars& pv, Var image, const DetectorConfig& cfg,
                                     const std::string& prefix = "det") {
  DetectorOutput out;
  out.input = image;
  out.content = encode_content(pv, image, prefix);
  out.fingerprint = encode_fingerprint(pv, image, cfg.channels, prefix);
  out.logits = classify(pv, out.fingerprint, prefix);
  out.embedding = channel_mean(out.fingerprint.common);
  out.style = style_from_fingerprint(pv, out.fingerprint, cfg, prefix);
  out.self_recon = decode(pv, out.content, out.style, cfg, prefix);
  return out;
}

// Paired forward: each sample is also reconstructed from its own content and
// the partner's fingerprint style (cross-reconstruction).
inline std::pair<DetectorOutput, DetectorOutput> forward_pair(const ParamVars& pv, Var a, Var b,
                                                              const DetectorConfig& cfg,
                                                              const std::string& prefix = "det") {
  const Tensor &ta = a.val(), &tb = b.val();
  if (ta.shape != tb.shape)
    throw ShapeError("forward_pair: extents " + shape_str(ta.shape) + " and " +
                     shape_str(tb.shape) + " differ");
  DetectorOutput oa = forward_sample(pv, a, cfg, prefix);
  DetectorOutput ob = forward_sample(pv, b, cfg, prefix);
  oa.cross_recon = decode(pv, oa.content, ob.style, cfg, prefix);
  ob.cross_recon = decode(pv, ob.content, oa.style, cfg, prefix);
  return {oa, ob};
}

// P(fake) from the binary head, for scoring outside training.
inline double detector_score(const ParamStore& params, const DetectorConfig& cfg,
                             const Tensor& image, const std::string& prefix = "det") {
  Tape tape;
  ParamVars pv = register_params(tape, params, /*trainable=*/false);
  FingerprintFeature f = encode_fingerprint(pv, tape.constant(image), cfg.channels, prefix);
  HeadLogits logits = classify(pv, f, prefix);
  Tensor p = softmax(logits.binary, 0).val();
  return p.data[1];  // index 0 = real, 1 = fake
}

}  // namespace hsid
