#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <deque>
#include <functional>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "hsid/tensor.hpp"

namespace hsid {

class Tape;

// Handle to a node on a tape. Cheap to copy; the tape owns the value.
struct Var {
  Tape* tape = nullptr;
  int id = -1;
  const Tensor& val() const;
  bool valid() const { return tape != nullptr && id >= 0; }
};

// Per-node gradients produced by Tape::backward. Nodes off the loss path
// report a zero tensor.
class Gradients {
 public:
  explicit Gradients(const Tape& tape);

  // Zero-initialized buffer for accumulation (backward rules write here).
  Tensor& buf(int id, const Shape& shape) {
    Tensor& t = grads_[static_cast<std::size_t>(id)];
    if (t.data.empty()) t = Tensor(shape);
    return t;
  }

  bool has(int id) const { return !grads_[static_cast<std::size_t>(id)].data.empty(); }

  Tensor at(int id) const;
  Tensor at(const Var& v) const { return at(v.id); }

 private:
  friend class Tape;
  const Tape* tape_;
  std::vector<Tensor> grads_;
};

// Define-by-run reverse-mode tape. Nodes are appended in execution order, so
// parents always precede children; backward walks the list once in reverse.
class Tape {
 public:
  using BackFn = std::function<void(const Tape&, int self, Gradients&)>;

  struct Node {
    Tensor value;
    std::vector<int> parents;
    BackFn back;
    bool active = false;  // true if any grad-requiring leaf feeds this node
  };

  Var leaf(Tensor t) {
    bool active = t.requires_grad;
    return wrap(push(std::move(t), {}, nullptr, active));
  }

  Var constant(Tensor t) {
    t.requires_grad = false;
    return wrap(push(std::move(t), {}, nullptr, false));
  }

  const Tensor& value(int id) const { return nodes_[static_cast<std::size_t>(id)].value; }
  std::size_t size() const { return nodes_.size(); }

  void clear() { nodes_.clear(); }

  Gradients backward(const Var& loss) {
    if (loss.tape != this) throw ContractError("backward: loss lives on another tape");
    const Tensor& root = value(loss.id);
    if (!root.is_scalar())
      throw ContractError("backward: loss must be scalar, got shape " + shape_str(root.shape));
    Gradients g(*this);
    g.buf(loss.id, root.shape).data[0] = 1.0;
    for (int i = loss.id; i >= 0; --i) {
      const Node& n = nodes_[static_cast<std::size_t>(i)];
      if (!n.active || !n.back || !g.has(i)) continue;
      n.back(*this, i, g);
    }
    return g;
  }

  int push(Tensor value, std::vector<int> parents, BackFn back, bool force_active = false) {
    bool active = force_active;
    for (int p : parents) active = active || nodes_[static_cast<std::size_t>(p)].active;
    Node n;
    n.value = std::move(value);
    n.parents = std::move(parents);
    n.back = active ? std::move(back) : nullptr;
    n.active = active;
    nodes_.push_back(std::move(n));
    return static_cast<int>(nodes_.size()) - 1;
  }

  Var wrap(int id) { return Var{this, id}; }

 private:
  friend class Gradients;
  // Deque keeps references from value() valid while the graph grows.
  std::deque<Node> nodes_;
};

inline const Tensor& Var::val() const { return tape->value(id); }

inline Gradients::Gradients(const Tape& tape) : tape_(&tape), grads_(tape.size()) {}

inline Tensor Gradients::at(int id) const {
  const Tensor& t = grads_[static_cast<std::size_t>(id)];
  if (!t.data.empty()) return t;
  return Tensor(tape_->value(id).shape);
}

namespace detail {

inline Tape& same_tape(const Var& a, const Var& b) {
  if (a.tape != b.tape) throw ContractError("operands live on different tapes");
  return *a.tape;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise binary ops
// ---------------------------------------------------------------------------

inline Var add(Var a, Var b) {
  Tape& t = detail::same_tape(a, b);
  const Tensor &ta = a.val(), &tb = b.val();
  require_same_shape(ta, tb, "add");
  Tensor out(ta.shape);
  for (std::size_t i = 0; i < out.size(); ++i) out.data[i] = ta.data[i] + tb.data[i];
  int pa = a.id, pb = b.id;
  return t.wrap(t.push(std::move(out), {pa, pb}, [pa, pb](const Tape& tp, int self, Gradients& g) {
    const Tensor& go = g.at(self);
    Tensor& ga = g.buf(pa, tp.value(pa).shape);
    Tensor& gb = g.buf(pb, tp.value(pb).shape);
    for (std::size_t i = 0; i < go.size(); ++i) {
      ga.data[i] += go.data[i];
      gb.data[i] += go.data[i];
    }
  }));
}

inline Var sub(Var a, Var b) {
  Tape& t = detail::same_tape(a, b);
  const Tensor &ta = a.val(), &tb = b.val();
  require_same_shape(ta, tb, "sub");
  Tensor out(ta.shape);
  for (std::size_t i = 0; i < out.size(); ++i) out.data[i] = ta.data[i] - tb.data[i];
  int pa = a.id, pb = b.id;
  return t.wrap(t.push(std::move(out), {pa, pb}, [pa, pb](const Tape& tp, int self, Gradients& g) {
    const Tensor& go = g.at(self);
    Tensor& ga = g.buf(pa, tp.value(pa).shape);
    Tensor& gb = g.buf(pb, tp.value(pb).shape);
    for (std::size_t i = 0; i < go.size(); ++i) {
      ga.data[i] += go.data[i];
      gb.data[i] -= go.data[i];
    }
  }));
}

inline Var mul(Var a, Var b) {
  Tape& t = detail::same_tape(a, b);
  const Tensor &ta = a.val(), &tb = b.val();
  require_same_shape(ta, tb, "mul");
  Tensor out(ta.shape);
  for (std::size_t i = 0; i < out.size(); ++i) out.data[i] = ta.data[i] * tb.data[i];
  int pa = a.id, pb = b.id;
  return t.wrap(t.push(std::move(out), {pa, pb}, [pa, pb](const Tape& tp, int self, Gradients& g) {
    const Tensor& go = g.at(self);
    const Tensor &va = tp.value(pa), &vb = tp.value(pb);
    Tensor& ga = g.buf(pa, va.shape);
    Tensor& gb = g.buf(pb, vb.shape);
    for (std::size_t i = 0; i < go.size(); ++i) {
      ga.data[i] += go.data[i] * vb.data[i];
      gb.data[i] += go.data[i] * va.data[i];
    }
  }));
}

inline Var div(Var a, Var b) {
  Tape& t = detail::same_tape(a, b);
  const Tensor &ta = a.val(), &tb = b.val();
  require_same_shape(ta, tb, "div");
  Tensor out(ta.shape);
  for (std::size_t i = 0; i < out.size(); ++i) out.data[i] = ta.data[i] / tb.data[i];
  int pa = a.id, pb = b.id;
  return t.wrap(t.push(std::move(out), {pa, pb}, [pa, pb](const Tape& tp, int self, Gradients& g) {
    const Tensor& go = g.at(self);
    const Tensor &va = tp.value(pa), &vb = tp.value(pb);
    Tensor& ga = g.buf(pa, va.shape);
    Tensor& gb = g.buf(pb, vb.shape);
    for (std::size_t i = 0; i < go.size(); ++i) {
      double inv = 1.0 / vb.data[i];
      ga.data[i] += go.data[i] * inv;
      gb.data[i] -= go.data[i] * va.data[i] * inv * inv;
    }
  }));
}

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }
inline Var operator/(Var a, Var b) { return div(a, b); }

// ---------------------------------------------------------------------------
// Elementwise ops with a compile-time rule
// ---------------------------------------------------------------------------

namespace detail {

// fwd(x) -> y ; bwd(x, y) -> dy/dx
template <typename F, typename D>
Var unary(Var a, F fwd, D bwd) {
  Tape& t = *a.tape;
  const Tensor& ta = a.val();
  Tensor out(ta.shape);
  for (std::size_t i = 0; i < out.size(); ++i) out.data[i] = fwd(ta.data[i]);
  int pa = a.id;
  return t.wrap(t.push(std::move(out), {pa}, [pa, bwd](const Tape& tp, int self, Gradients& g) {
    const Tensor& go = g.at(self);
    const Tensor& vx = tp.value(pa);
    const Tensor& vy = tp.value(self);
    Tensor& ga = g.buf(pa, vx.shape);
    for (std::size_t i = 0; i < go.size(); ++i)
      ga.data[i] += go.data[i] * bwd(vx.data[i], vy.data[i]);
  }));
}

}  // namespace detail

inline Var relu(Var a) {
  return detail::unary(
      a, [](double x) { return x > 0.0 ? x : 0.0; },
      [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

inline Var gelu(Var a) {
  constexpr double kInvSqrt2 = 0.70710678118654752440;
  constexpr double kInvSqrt2Pi = 0.39894228040143267794;
  return detail::unary(
      a, [=](double x) { return 0.5 * x * (1.0 + std::erf(x * kInvSqrt2)); },
      [=](double x, double) {
        return 0.5 * (1.0 + std::erf(x * kInvSqrt2)) + x * kInvSqrt2Pi * std::exp(-0.5 * x * x);
      });
}

inline Var sigmoid(Var a) {
  return detail::unary(
      a,
      [](double x) {
        if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
        double e = std::exp(x);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

inline Var softplus(Var a) {
  return detail::unary(
      a, [](double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); },
      [](double x, double) {
        if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
        double e = std::exp(x);
        return e / (1.0 + e);
      });
}

inline Var exp_op(Var a) {
  return detail::unary(
      a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

inline Var sqrt_op(Var a) {
  return detail::unary(
      a, [](double x) { return std::sqrt(x); }, [](double, double y) { return 0.5 / y; });
}

inline Var abs_op(Var a) {
  return detail::unary(
      a, [](double x) { return std::abs(x); },
      [](double x, double) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); });
}

inline Var recip(Var a) {
  return detail::unary(
      a, [](double x) { return 1.0 / x; }, [](double, double y) { return -y * y; });
}

inline Var clamp01(Var a) {
  return detail::unary(
      a, [](double x) { return std::min(1.0, std::max(0.0, x)); },
      [](double x, double) { return (x > 0.0 && x < 1.0) ? 1.0 : 0.0; });
}

inline Var add_const(Var a, double c) {
  return detail::unary(
      a, [c](double x) { return x + c; }, [](double, double) { return 1.0; });
}

inline Var mul_const(Var a, double c) {
  return detail::unary(
      a, [c](double x) { return x * c; }, [c](double, double) { return c; });
}

inline Var max_const(Var a, double c) {
  return detail::unary(
      a, [c](double x) { return std::max(x, c); },
      [c](double x, double) { return x > c ? 1.0 : 0.0; });
}

inline Var neg(Var a) { return mul_const(a, -1.0); }

// y = s * x where s is a scalar node (per-head attention temperature, norms).
inline Var scale_by_scalar(Var x, Var s) {
  Tape& t = detail::same_tape(x, s);
  const Tensor& tx = x.val();
  const Tensor& ts = s.val();
  if (!ts.is_scalar()) throw ShapeError("scale_by_scalar: scale must be scalar");
  double sv = ts.data[0];
  Tensor out(tx.shape);
  for (std::size_t i = 0; i < out.size(); ++i) out.data[i] = tx.data[i] * sv;
  int px = x.id, ps = s.id;
  return t.wrap(t.push(std::move(out), {px, ps}, [px, ps](const Tape& tp, int self, Gradients& g) {
    const Tensor& go = g.at(self);
    const Tensor& vx = tp.value(px);
    double sv = tp.value(ps).data[0];
    Tensor& gx = g.buf(px, vx.shape);
    Tensor& gs = g.buf(ps, tp.value(ps).shape);
    double acc = 0.0;
    for (std::size_t i = 0; i < go.size(); ++i) {
      gx.data[i] += go.data[i] * sv;
      acc += go.data[i] * vx.data[i];
    }
    gs.data[0] += acc;
  }));
}

// ---------------------------------------------------------------------------
// Shape ops
// ---------------------------------------------------------------------------

inline Var reshape(Var a, Shape target) {
  Tape& t = *a.tape;
  const Tensor& ta = a.val();
  if (numel(target) != ta.size())
    throw ShapeError("reshape: " + shape_str(ta.shape) + " to " + shape_str(target) +
                     " changes element count");
  Tensor out(std::move(target), ta.data);
  int pa = a.id;
  return t.wrap(t.push(std::move(out), {pa}, [pa](const Tape& tp, int self, Gradients& g) {
    const Tensor& go = g.at(self);
    Tensor& ga = g.buf(pa, tp.value(pa).shape);
    for (std::size_t i = 0; i < go.size(); ++i) ga.data[i] += go.data[i];
  }));
}

inline Var transpose(Var a) {
  Tape& t = *a.tape;
  const Tensor& ta = a.val();
  if (ta.rank() != 2) throw ShapeError("transpose expects rank 2, got " + shape_str(ta.shape));
  std::size_t m = ta.shape[0], n = ta.shape[1];
  Tensor out({n, m});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out.data[j * m + i] = ta.data[i * n + j];
  int pa = a.id;
  return t.wrap(t.push(std::move(out), {pa}, [pa, m, n](const Tape& tp, int self, Gradients& g) {
    const Tensor& go = g.at(self);
    Tensor& ga = g.buf(pa, tp.value(pa).shape);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) ga.data[i * n + j] += go.data[j * m + i];
  }));
}

namespace detail {

struct DimSplit {
  std::size_t outer = 1, len = 1, inner = 1;
};

inline DimSplit split_at(const Shape& s, std::size_t dim) {
  if (dim >= s.size()) throw ShapeError("axis " + std::to_string(dim) + " out of range for " + shape_str(s));
  DimSplit d;
  for (std::size_t i = 0; i < dim; ++i) d.outer *= s[i];
  d.len = s[dim];
  for (std::size_t i = dim + 1; i < s.size(); ++i) d.inner *= s[i];
  return d;
}

}  // namespace detail

inline Var narrow(Var a, std::size_t dim, std::size_t start, std::size_t len) {
  Tape& t = *a.tape;
  const Tensor& ta = a.val();
  auto d = detail::split_at(ta.shape, dim);
  if (start + len > d.len)
    throw ShapeError("narrow: range [" + std::to_string(start) + "," + std::to_string(start + len) +
                     ") exceeds extent " + std::to_string(d.len));
  Shape os = ta.shape;
  os[dim] = len;
  Tensor out(os);
  for (std::size_t o = 0; o < d.outer; ++o)
    for (std::size_t j = 0; j < len; ++j)
      std::copy_n(ta.data.begin() + ((o * d.len + start + j) * d.inner), d.inner,
                  out.data.begin() + ((o * len + j) * d.inner));
  int pa = a.id;
  return t.wrap(
      t.push(std::move(out), {pa}, [pa, d, start, len](const Tape& tp, int self, Gradients& g) {
        const Tensor& go = g.at(self);
        Tensor& ga = g.buf(pa, tp.value(pa).shape);
        for (std::size_t o = 0; o < d.outer; ++o)
          for (std::size_t j = 0; j < len; ++j) {
            const double* src = go.data.data() + (o * len + j) * d.inner;
            double* dst = ga.data.data() + (o * d.len + start + j) * d.inner;
            for (std::size_t i = 0; i < d.inner; ++i) dst[i] += src[i];
          }
      }));
}

inline Var concat(const std::vector<Var>& parts, std::size_t dim) {
  if (parts.empty()) throw ShapeError("concat of zero tensors");
  Tape& t = *parts[0].tape;
  const Shape& s0 = parts[0].val().shape;
  std::size_t total = 0;
  for (const Var& p : parts) {
    if (p.tape != &t) throw ContractError("concat operands live on different tapes");
    const Shape& s = p.val().shape;
    if (s.size() != s0.size()) throw ShapeError("concat: rank mismatch");
    for (std::size_t i = 0; i < s.size(); ++i)
      if (i != dim && s[i] != s0[i])
        throw ShapeError("concat: shapes " + shape_str(s0) + " and " + shape_str(s) +
                         " differ off axis " + std::to_string(dim));
    total += s[dim];
  }
  Shape os = s0;
  os[dim] = total;
  Tensor out(os);
  auto od = detail::split_at(os, dim);
  std::vector<int> pids;
  std::vector<std::size_t> lens;
  std::size_t at = 0;
  for (const Var& p : parts) {
    const Tensor& tp = p.val();
    std::size_t len = tp.shape[dim];
    for (std::size_t o = 0; o < od.outer; ++o)
      for (std::size_t j = 0; j < len; ++j)
        std::copy_n(tp.data.begin() + ((o * len + j) * od.inner), od.inner,
                    out.data.begin() + ((o * od.len + at + j) * od.inner));
    pids.push_back(p.id);
    lens.push_back(len);
    at += len;
  }
  return t.wrap(
      t.push(std::move(out), pids, [pids, lens, od](const Tape& tp, int self, Gradients& g) {
        const Tensor& go = g.at(self);
        std::size_t at = 0;
        for (std::size_t k = 0; k < pids.size(); ++k) {
          Tensor& gp = g.buf(pids[k], tp.value(pids[k]).shape);
          std::size_t len = lens[k];
          for (std::size_t o = 0; o < od.outer; ++o)
            for (std::size_t j = 0; j < len; ++j) {
              const double* src = go.data.data() + (o * od.len + at + j) * od.inner;
              double* dst = gp.data.data() + (o * len + j) * od.inner;
              for (std::size_t i = 0; i < od.inner; ++i) dst[i] += src[i];
            }
          at += len;
        }
      }));
}

// ---------------------------------------------------------------------------
// Matrix ops
// ---------------------------------------------------------------------------

inline Var matmul(Var a, Var b) {
  Tape& t = detail::same_tape(a, b);
  const Tensor &ta = a.val(), &tb = b.val();
  if (ta.rank() != 2 || tb.rank() != 2)
    throw ShapeError("matmul expects rank-2 operands, got " + shape_str(ta.shape) + " and " +
                     shape_str(tb.shape));
  if (ta.shape[1] != tb.shape[0])
    throw ShapeError("matmul: inner extents differ, " + shape_str(ta.shape) + " vs " +
                     shape_str(tb.shape));
  std::size_t m = ta.shape[0], k = ta.shape[1], n = tb.shape[1];
  Tensor out({m, n});
  matmul_acc_nn(ta.data.data(), tb.data.data(), out.data.data(), m, k, n);
  int pa = a.id, pb = b.id;
  return t.wrap(
      t.push(std::move(out), {pa, pb}, [pa, pb, m, k, n](const Tape& tp, int self, Gradients& g) {
        const Tensor& go = g.at(self);
        const Tensor &va = tp.value(pa), &vb = tp.value(pb);
        Tensor& ga = g.buf(pa, va.shape);
        Tensor& gb = g.buf(pb, vb.shape);
        matmul_acc_nt(go.data.data(), vb.data.data(), ga.data.data(), m, n, k);
        matmul_acc_tn(va.data.data(), go.data.data(), gb.data.data(), k, m, n);
      }));
}

inline Var matvec(Var w, Var x) {
  Tape& t = detail::same_tape(w, x);
  const Tensor &tw = w.val(), &tx = x.val();
  if (tw.rank() != 2 || tx.rank() != 1)
    throw ShapeError("matvec expects matrix and vector, got " + shape_str(tw.shape) + " and " +
                     shape_str(tx.shape));
  if (tw.shape[1] != tx.shape[0])
    throw ShapeError("matvec: inner extents differ, " + shape_str(tw.shape) + " vs " +
                     shape_str(tx.shape));
  std::size_t m = tw.shape[0], n = tw.shape[1];
  Tensor out({m});
  for (std::size_t i = 0; i < m; ++i) {
    const double* wi = tw.data.data() + i * n;
    double acc = 0.0;
    for (std::size_t j = 0; j < n; ++j) acc += wi[j] * tx.data[j];
    out.data[i] = acc;
  }
  int pw = w.id, px = x.id;
  return t.wrap(
      t.push(std::move(out), {pw, px}, [pw, px, m, n](const Tape& tp, int self, Gradients& g) {
        const Tensor& go = g.at(self);
        const Tensor &vw = tp.value(pw), &vx = tp.value(px);
        Tensor& gw = g.buf(pw, vw.shape);
        Tensor& gx = g.buf(px, vx.shape);
        for (std::size_t i = 0; i < m; ++i) {
          double gi = go.data[i];
          const double* wi = vw.data.data() + i * n;
          double* gwi = gw.data.data() + i * n;
          for (std::size_t j = 0; j < n; ++j) {
            gwi[j] += gi * vx.data[j];
            gx.data[j] += gi * wi[j];
          }
        }
      }));
}

// ---------------------------------------------------------------------------
// Reductions and channel broadcasts
// ---------------------------------------------------------------------------

inline Var sum(Var a) {
  Tape& t = *a.tape;
  const Tensor& ta = a.val();
  double acc = 0.0;
  for (double v : ta.data) acc += v;
  int pa = a.id;
  return t.wrap(t.push(Tensor::scalar(acc), {pa}, [pa](const Tape& tp, int self, Gradients& g) {
    double go = g.at(self).data[0];
    Tensor& ga = g.buf(pa, tp.value(pa).shape);
    for (double& v : ga.data) v += go;
  }));
}

inline Var mean(Var a) {
  Tape& t = *a.tape;
  const Tensor& ta = a.val();
  double acc = 0.0;
  for (double v : ta.data) acc += v;
  double inv = 1.0 / static_cast<double>(ta.size());
  int pa = a.id;
  return t.wrap(
      t.push(Tensor::scalar(acc * inv), {pa}, [pa, inv](const Tape& tp, int self, Gradients& g) {
        double go = g.at(self).data[0] * inv;
        Tensor& ga = g.buf(pa, tp.value(pa).shape);
        for (double& v : ga.data) v += go;
      }));
}

// Population variance of all elements, as a composition of recorded ops.
inline Var variance(Var a) {
  Var m = mean(a);
  Var m2 = mean(mul(a, a));
  return sub(m2, mul(m, m));
}

namespace detail {

inline void require_chw(const Tensor& t, const char* op) {
  if (t.rank() != 3) throw ShapeError(std::string(op) + " expects C x H x W, got " + shape_str(t.shape));
}

}  // namespace detail

// Per-channel spatial mean: C x H x W -> C.
inline Var channel_mean(Var a) {
  Tape& t = *a.tape;
  const Tensor& ta = a.val();
  detail::require_chw(ta, "channel_mean");
  std::size_t c = ta.shape[0], hw = ta.shape[1] * ta.shape[2];
  double inv = 1.0 / static_cast<double>(hw);
  Tensor out({c});
  for (std::size_t ch = 0; ch < c; ++ch) {
    const double* p = ta.data.data() + ch * hw;
    double acc = 0.0;
    for (std::size_t i = 0; i < hw; ++i) acc += p[i];
    out.data[ch] = acc * inv;
  }
  int pa = a.id;
  return t.wrap(
      t.push(std::move(out), {pa}, [pa, c, hw, inv](const Tape& tp, int self, Gradients& g) {
        const Tensor& go = g.at(self);
        Tensor& ga = g.buf(pa, tp.value(pa).shape);
        for (std::size_t ch = 0; ch < c; ++ch) {
          double gch = go.data[ch] * inv;
          double* p = ga.data.data() + ch * hw;
          for (std::size_t i = 0; i < hw; ++i) p[i] += gch;
        }
      }));
}

// x[c,h,w] + b[c]
inline Var add_channels(Var x, Var b) {
  Tape& t = detail::same_tape(x, b);
  const Tensor &tx = x.val(), &tb = b.val();
  detail::require_chw(tx, "add_channels");
  if (tb.rank() != 1 || tb.shape[0] != tx.shape[0])
    throw ShapeError("add_channels: bias " + shape_str(tb.shape) + " does not match channels of " +
                     shape_str(tx.shape));
  std::size_t c = tx.shape[0], hw = tx.shape[1] * tx.shape[2];
  Tensor out(tx.shape);
  for (std::size_t ch = 0; ch < c; ++ch) {
    double bv = tb.data[ch];
    const double* p = tx.data.data() + ch * hw;
    double* q = out.data.data() + ch * hw;
    for (std::size_t i = 0; i < hw; ++i) q[i] = p[i] + bv;
  }
  int px = x.id, pb = b.id;
  return t.wrap(
      t.push(std::move(out), {px, pb}, [px, pb, c, hw](const Tape& tp, int self, Gradients& g) {
        const Tensor& go = g.at(self);
        Tensor& gx = g.buf(px, tp.value(px).shape);
        Tensor& gb = g.buf(pb, tp.value(pb).shape);
        for (std::size_t ch = 0; ch < c; ++ch) {
          const double* p = go.data.data() + ch * hw;
          double* q = gx.data.data() + ch * hw;
          double acc = 0.0;
          for (std::size_t i = 0; i < hw; ++i) {
            q[i] += p[i];
            acc += p[i];
          }
          gb.data[ch] += acc;
        }
      }));
}

// x[c,h,w] * s[c]
inline Var mul_channels(Var x, Var s) {
  Tape& t = detail::same_tape(x, s);
  const Tensor &tx = x.val(), &ts = s.val();
  detail::require_chw(tx, "mul_channels");
  if (ts.rank() != 1 || ts.shape[0] != tx.shape[0])
    throw ShapeError("mul_channels: scale " + shape_str(ts.shape) + " does not match channels of " +
                     shape_str(tx.shape));
  std::size_t c = tx.shape[0], hw = tx.shape[1] * tx.shape[2];
  Tensor out(tx.shape);
  for (std::size_t ch = 0; ch < c; ++ch) {
    double sv = ts.data[ch];
    const double* p = tx.data.data() + ch * hw;
    double* q = out.data.data() + ch * hw;
    for (std::size_t i = 0; i < hw; ++i) q[i] = p[i] * sv;
  }
  int px = x.id, ps = s.id;
  return t.wrap(
      t.push(std::move(out), {px, ps}, [px, ps, c, hw](const Tape& tp, int self, Gradients& g) {
        const Tensor& go = g.at(self);
        const Tensor &vx = tp.value(px), &vs = tp.value(ps);
        Tensor& gx = g.buf(px, vx.shape);
        Tensor& gs = g.buf(ps, vs.shape);
        for (std::size_t ch = 0; ch < c; ++ch) {
          double sv = vs.data[ch];
          const double* p = go.data.data() + ch * hw;
          const double* xv = vx.data.data() + ch * hw;
          double* q = gx.data.data() + ch * hw;
          double acc = 0.0;
          for (std::size_t i = 0; i < hw; ++i) {
            q[i] += p[i] * sv;
            acc += p[i] * xv[i];
          }
          gs.data[ch] += acc;
        }
      }));
}

// ---------------------------------------------------------------------------
// Softmax and cross-entropy
// ---------------------------------------------------------------------------

inline Var softmax(Var a, std::size_t axis) {
  Tape& t = *a.tape;
  const Tensor& ta = a.val();
  auto d = detail::split_at(ta.shape, axis);
  Tensor out(ta.shape);
  for (std::size_t o = 0; o < d.outer; ++o)
    for (std::size_t i = 0; i < d.inner; ++i) {
      const std::size_t base = o * d.len * d.inner + i;
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < d.len; ++j) mx = std::max(mx, ta.data[base + j * d.inner]);
      double z = 0.0;
      for (std::size_t j = 0; j < d.len; ++j) {
        double e = std::exp(ta.data[base + j * d.inner] - mx);
        out.data[base + j * d.inner] = e;
        z += e;
      }
      double inv = 1.0 / z;
      for (std::size_t j = 0; j < d.len; ++j) out.data[base + j * d.inner] *= inv;
      // Pin the axis sum to exactly 1: the last entry is the complement of the
      // others (<= 1 ulp nudge), so downstream sums of a row are bit-stable.
      double partial = 0.0;
      for (std::size_t j = 0; j + 1 < d.len; ++j) partial += out.data[base + j * d.inner];
      out.data[base + (d.len - 1) * d.inner] = std::max(0.0, 1.0 - partial);
    }
  int pa = a.id;
  return t.wrap(t.push(std::move(out), {pa}, [pa, d](const Tape& tp, int self, Gradients& g) {
    const Tensor& go = g.at(self);
    const Tensor& y = tp.value(self);
    Tensor& ga = g.buf(pa, tp.value(pa).shape);
    for (std::size_t o = 0; o < d.outer; ++o)
      for (std::size_t i = 0; i < d.inner; ++i) {
        const std::size_t base = o * d.len * d.inner + i;
        double dot = 0.0;
        for (std::size_t j = 0; j < d.len; ++j) {
          std::size_t idx = base + j * d.inner;
          dot += go.data[idx] * y.data[idx];
        }
        for (std::size_t j = 0; j < d.len; ++j) {
          std::size_t idx = base + j * d.inner;
          ga.data[idx] += y.data[idx] * (go.data[idx] - dot);
        }
      }
  }));
}

// Softmax cross-entropy of a logit vector against a class index.
inline Var softmax_ce(Var logits, std::size_t target) {
  Tape& t = *logits.tape;
  const Tensor& tl = logits.val();
  if (tl.rank() != 1) throw ShapeError("softmax_ce expects a logit vector, got " + shape_str(tl.shape));
  std::size_t k = tl.shape[0];
  if (target >= k)
    throw LabelError("class index " + std::to_string(target) + " out of [0," + std::to_string(k) + ")");
  double mx = *std::max_element(tl.data.begin(), tl.data.end());
  double z = 0.0;
  for (double v : tl.data) z += std::exp(v - mx);
  double loss = mx + std::log(z) - tl.data[target];
  int pl = logits.id;
  return t.wrap(
      t.push(Tensor::scalar(loss), {pl}, [pl, target](const Tape& tp, int self, Gradients& g) {
        double go = g.at(self).data[0];
        const Tensor& vl = tp.value(pl);
        Tensor& gl = g.buf(pl, vl.shape);
        double mx = *std::max_element(vl.data.begin(), vl.data.end());
        double z = 0.0;
        for (double v : vl.data) z += std::exp(v - mx);
        for (std::size_t j = 0; j < vl.shape[0]; ++j) {
          double p = std::exp(vl.data[j] - mx) / z;
          gl.data[j] += go * (p - (j == target ? 1.0 : 0.0));
        }
      }));
}

// ---------------------------------------------------------------------------
// Convolution and resampling
// ---------------------------------------------------------------------------

namespace detail {

struct ConvGeom {
  std::size_t cin, h, w, cout, kh, kw, stride, pad, groups, ho, wo;
};

inline ConvGeom conv_geom(const Tensor& x, const Tensor& k, std::size_t stride, std::size_t pad,
                          std::size_t groups) {
  require_chw(x, "conv2d input");
  if (k.rank() != 4) throw ShapeError("conv2d kernel must be Cout x Cin/g x kh x kw, got " + shape_str(k.shape));
  if (stride == 0) throw ShapeError("conv2d: stride must be positive");
  ConvGeom geo;
  geo.cin = x.shape[0];
  geo.h = x.shape[1];
  geo.w = x.shape[2];
  geo.cout = k.shape[0];
  geo.kh = k.shape[2];
  geo.kw = k.shape[3];
  geo.stride = stride;
  geo.pad = pad;
  geo.groups = groups;
  if (groups == 0 || geo.cin % groups != 0 || geo.cout % groups != 0)
    throw ShapeError("conv2d: groups " + std::to_string(groups) + " must divide Cin " +
                     std::to_string(geo.cin) + " and Cout " + std::to_string(geo.cout));
  if (k.shape[1] != geo.cin / groups)
    throw ShapeError("conv2d: kernel expects " + std::to_string(k.shape[1]) +
                     " input channels per group, input has " + std::to_string(geo.cin / groups));
  auto out_extent = [&](std::size_t in, std::size_t kk, const char* name) {
    if (in + 2 * pad < kk)
      throw ShapeError(std::string("conv2d: ") + name + " extent " + std::to_string(in) +
                       " too small for kernel " + std::to_string(kk));
    std::size_t span = in + 2 * pad - kk;
    if (span % stride != 0)
      throw ShapeError(std::string("conv2d: ") + name + " extent " + std::to_string(in) +
                       " with pad " + std::to_string(pad) + ", kernel " + std::to_string(kk) +
                       " is not divisible by stride " + std::to_string(stride) +
                       " (output extent must be integral)");
    return span / stride + 1;
  };
  geo.ho = out_extent(geo.h, geo.kh, "height");
  geo.wo = out_extent(geo.w, geo.kw, "width");
  return geo;
}

// col is (cg*kh*kw) x (ho*wo) for the group's channel slice starting at c0.
inline void im2col(const double* x, const ConvGeom& g, std::size_t c0, std::size_t cg,
                   double* col) {
  const std::size_t n = g.ho * g.wo;
  for (std::size_t c = 0; c < cg; ++c) {
    const double* xc = x + (c0 + c) * g.h * g.w;
    for (std::size_t ki = 0; ki < g.kh; ++ki)
      for (std::size_t kj = 0; kj < g.kw; ++kj) {
        double* row = col + ((c * g.kh + ki) * g.kw + kj) * n;
        for (std::size_t yo = 0; yo < g.ho; ++yo) {
          const long yi = static_cast<long>(yo * g.stride + ki) - static_cast<long>(g.pad);
          double* dst = row + yo * g.wo;
          if (yi < 0 || yi >= static_cast<long>(g.h)) {
            for (std::size_t xo = 0; xo < g.wo; ++xo) dst[xo] = 0.0;
            continue;
          }
          const double* src = xc + static_cast<std::size_t>(yi) * g.w;
          for (std::size_t xo = 0; xo < g.wo; ++xo) {
            const long xi = static_cast<long>(xo * g.stride + kj) - static_cast<long>(g.pad);
            dst[xo] = (xi < 0 || xi >= static_cast<long>(g.w)) ? 0.0 : src[xi];
          }
        }
      }
  }
}

inline void col2im_acc(const double* col, const ConvGeom& g, std::size_t c0, std::size_t cg,
                       double* gx) {
  const std::size_t n = g.ho * g.wo;
  for (std::size_t c = 0; c < cg; ++c) {
    double* xc = gx + (c0 + c) * g.h * g.w;
    for (std::size_t ki = 0; ki < g.kh; ++ki)
      for (std::size_t kj = 0; kj < g.kw; ++kj) {
        const double* row = col + ((c * g.kh + ki) * g.kw + kj) * n;
        for (std::size_t yo = 0; yo < g.ho; ++yo) {
          const long yi = static_cast<long>(yo * g.stride + ki) - static_cast<long>(g.pad);
          if (yi < 0 || yi >= static_cast<long>(g.h)) continue;
          double* dst = xc + static_cast<std::size_t>(yi) * g.w;
          const double* src = row + yo * g.wo;
          for (std::size_t xo = 0; xo < g.wo; ++xo) {
            const long xi = static_cast<long>(xo * g.stride + kj) - static_cast<long>(g.pad);
            if (xi >= 0 && xi < static_cast<long>(g.w)) dst[xi] += src[xo];
          }
        }
      }
  }
}

inline Tensor conv2d_forward(const Tensor& x, const Tensor& k, const ConvGeom& g) {
  const std::size_t cg = g.cin / g.groups, og = g.cout / g.groups;
  const std::size_t q = cg * g.kh * g.kw, n = g.ho * g.wo;
  Tensor out({g.cout, g.ho, g.wo});
  std::vector<double> col(q * n);
  for (std::size_t gi = 0; gi < g.groups; ++gi) {
    im2col(x.data.data(), g, gi * cg, cg, col.data());
    matmul_acc_nn(k.data.data() + gi * og * q, col.data(), out.data.data() + gi * og * n, og, q, n);
  }
  return out;
}

}  // namespace detail

// Cross-correlation with zero padding. Kernel is Cout x Cin/groups x kh x kw.
inline Var conv2d(Var x, Var k, std::size_t stride, std::size_t pad, std::size_t groups = 1) {
  Tape& t = detail::same_tape(x, k);
  auto geo = detail::conv_geom(x.val(), k.val(), stride, pad, groups);
  Tensor out = detail::conv2d_forward(x.val(), k.val(), geo);
  int px = x.id, pk = k.id;
  return t.wrap(t.push(std::move(out), {px, pk}, [px, pk, geo](const Tape& tp, int self, Gradients& g) {
    const Tensor& go = g.at(self);
    const Tensor &vx = tp.value(px), &vk = tp.value(pk);
    Tensor& gx = g.buf(px, vx.shape);
    Tensor& gk = g.buf(pk, vk.shape);
    const std::size_t cg = geo.cin / geo.groups, og = geo.cout / geo.groups;
    const std::size_t q = cg * geo.kh * geo.kw, n = geo.ho * geo.wo;
    std::vector<double> col(q * n), gcol(q * n);
    for (std::size_t gi = 0; gi < geo.groups; ++gi) {
      detail::im2col(vx.data.data(), geo, gi * cg, cg, col.data());
      // dK = dY . col^T
      matmul_acc_nt(go.data.data() + gi * og * n, col.data(), gk.data.data() + gi * og * q, og, n, q);
      // dcol = K^T . dY, scattered back through the padding pattern
      std::fill(gcol.begin(), gcol.end(), 0.0);
      matmul_acc_tn(vk.data.data() + gi * og * q, go.data.data() + gi * og * n, gcol.data(), q, og, n);
      detail::col2im_acc(gcol.data(), geo, gi * cg, cg, gx.data.data());
    }
  }));
}

// Nearest-neighbour 2x upsampling of C x H x W.
inline Var nearest_upsample2(Var x) {
  Tape& t = *x.tape;
  const Tensor& tx = x.val();
  detail::require_chw(tx, "nearest_upsample2");
  std::size_t c = tx.shape[0], h = tx.shape[1], w = tx.shape[2];
  Tensor out({c, 2 * h, 2 * w});
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t y = 0; y < 2 * h; ++y) {
      const double* src = tx.data.data() + (ch * h + y / 2) * w;
      double* dst = out.data.data() + (ch * 2 * h + y) * 2 * w;
      for (std::size_t xx = 0; xx < 2 * w; ++xx) dst[xx] = src[xx / 2];
    }
  int px = x.id;
  return t.wrap(t.push(std::move(out), {px}, [px, c, h, w](const Tape& tp, int self, Gradients& g) {
    const Tensor& go = g.at(self);
    Tensor& gx = g.buf(px, tp.value(px).shape);
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t y = 0; y < 2 * h; ++y) {
        double* dst = gx.data.data() + (ch * h + y / 2) * w;
        const double* src = go.data.data() + (ch * 2 * h + y) * 2 * w;
        for (std::size_t xx = 0; xx < 2 * w; ++xx) dst[xx / 2] += src[xx];
      }
  }));
}

}  // namespace hsid
