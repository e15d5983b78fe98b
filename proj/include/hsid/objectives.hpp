#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "hsid/tape.hpp"

namespace hsid {

struct LossWeights {
  double cls = 1.0;
  double con = 0.05;
  double rec = 0.3;
};

struct LossBreakdown {
  double cls_binary = 0.0;
  double cls_specific = 0.0;
  double contrastive = 0.0;
  double reconstruction = 0.0;
  double total = 0.0;

  // total must equal the weighted sum exactly as computed here.
  static double combine(const LossBreakdown& p, const LossWeights& w) {
    return w.cls * (p.cls_binary + p.cls_specific) + w.con * p.contrastive + w.rec * p.reconstruction;
  }
};

// Recorded loss terms plus their extracted values.
struct LossVars {
  Var cls_binary;
  Var cls_specific;
  Var contrastive;
  Var reconstruction;
  Var total;

  LossBreakdown values() const {
    LossBreakdown b;
    b.cls_binary = cls_binary.val().scalar_value();
    b.cls_specific = cls_specific.val().scalar_value();
    b.contrastive = contrastive.val().scalar_value();
    b.reconstruction = reconstruction.val().scalar_value();
    b.total = total.val().scalar_value();
    return b;
  }
};

// One classification target: binary label plus the manipulation family for
// fakes. Real samples are masked out of the specific head's loss.
struct ClsTarget {
  Var binary_logits;
  Var specific_logits;
  bool fake = false;
  std::optional<int> manip_id;
};

// Batch-averaged softmax cross-entropies for both heads.
inline std::pair<Var, Var> multitask_cls_loss(Tape& tape, const std::vector<ClsTarget>& batch) {
  if (batch.empty()) throw ContractError("multitask_cls_loss: empty batch");
  const double inv = 1.0 / static_cast<double>(batch.size());
  Var bin_sum;
  Var spec_sum;
  for (const ClsTarget& t : batch) {
    if (t.fake != t.manip_id.has_value())
      throw LabelError("manip_id must be present iff the sample is fake");
    Var b = softmax_ce(t.binary_logits, t.fake ? 1 : 0);
    bin_sum = bin_sum.valid() ? add(bin_sum, b) : b;
    if (t.fake) {
      if (*t.manip_id < 0) throw LabelError("negative manipulation class");
      Var s = softmax_ce(t.specific_logits, static_cast<std::size_t>(*t.manip_id));
      spec_sum = spec_sum.valid() ? add(spec_sum, s) : s;
    }
  }
  Var bin = mul_const(bin_sum, inv);
  Var spec = spec_sum.valid() ? mul_const(spec_sum, inv) : tape.constant(Tensor::scalar(0.0));
  return {bin, spec};
}

// Margin-based pairwise hinge on L2-normalized embeddings: same-label pairs
// contribute d^2, different-label pairs max(0, margin - d)^2; mean over pairs.
inline Var contrastive_reg_loss(Tape& tape, const std::vector<Var>& embeddings,
                                const std::vector<bool>& fake, double margin) {
  if (embeddings.size() < 2) throw ContractError("contrastive_reg_loss: batch must be >= 2");
  if (embeddings.size() != fake.size())
    throw ContractError("contrastive_reg_loss: embeddings and labels differ in length");
  std::vector<Var> unit;
  unit.reserve(embeddings.size());
  for (Var e : embeddings) {
    Var norm = sqrt_op(add_const(sum(mul(e, e)), 1e-12));
    unit.push_back(scale_by_scalar(e, recip(norm)));
  }
  Var acc;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < unit.size(); ++i)
    for (std::size_t j = i + 1; j < unit.size(); ++j) {
      Var diff = sub(unit[i], unit[j]);
      Var d2 = sum(mul(diff, diff));
      Var term;
      if (fake[i] == fake[j]) {
        term = d2;
      } else {
        Var d = sqrt_op(add_const(d2, 1e-12));
        Var hinge = relu(add_const(neg(d), margin));
        term = mul(hinge, hinge);
      }
      acc = acc.valid() ? add(acc, term) : term;
      ++pairs;
    }
  return mul_const(acc, 1.0 / static_cast<double>(pairs));
}

struct ReconTriple {
  Var self_recon;
  Var cross_recon;
  Var original;
};

// L1 self-reconstruction plus L1 cross-reconstruction against the content
// provider's original, averaged over the batch.
inline Var reconstruction_loss(Tape& tape, const std::vector<ReconTriple>& batch) {
  if (batch.empty()) throw ContractError("reconstruction_loss: empty batch");
  Var acc;
  for (const ReconTriple& t : batch) {
    require_same_shape(t.self_recon.val(), t.original.val(), "reconstruction_loss");
    require_same_shape(t.cross_recon.val(), t.original.val(), "reconstruction_loss");
    Var term = add(mean(abs_op(sub(t.self_recon, t.original))),
                   mean(abs_op(sub(t.cross_recon, t.original))));
    acc = acc.valid() ? add(acc, term) : term;
  }
  (void)tape;
  return mul_const(acc, 1.0 / static_cast<double>(batch.size()));
}

inline LossVars total_loss(Tape& tape, Var cls_binary, Var cls_specific, Var contrastive,
                           Var reconstruction, const LossWeights& w) {
  LossVars out;
  out.cls_binary = cls_binary;
  out.cls_specific = cls_specific;
  out.contrastive = contrastive;
  out.reconstruction = reconstruction;
  const struct {
    const char* name;
    Var v;
  } parts[] = {{"cls_binary", cls_binary},
               {"cls_specific", cls_specific},
               {"contrastive", contrastive},
               {"reconstruction", reconstruction}};
  for (const auto& p : parts)
    if (!std::isfinite(p.v.val().scalar_value()))
      throw TrainingError(std::string("non-finite loss component: ") + p.name);
  (void)tape;
  out.total = add(add(mul_const(add(cls_binary, cls_specific), w.cls), mul_const(contrastive, w.con)),
                  mul_const(reconstruction, w.rec));
  return out;
}

}  // namespace hsid
