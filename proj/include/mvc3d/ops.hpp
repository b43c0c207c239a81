#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <random>

#include "mvc3d/tape.hpp"

namespace mvc3d {

namespace detail {

template <class S>
using MatMap = Eigen::Map<Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
template <class S>
using ConstMatMap =
    Eigen::Map<const Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

template <class S>
void require_same_shape(const char* op, const TensorT<S>& a, const TensorT<S>& b) {
  if (a.shape() != b.shape())
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                                " vs " + shape_str(b.shape()));
}

template <class S>
bool wants_grad(const TapeT<S>& tape, std::initializer_list<const TensorT<S>*> inputs) {
  if (!tape.enabled()) return false;
  for (const auto* t : inputs)
    if (t->requires_grad()) return true;
  return false;
}

// Read-only view of an output's gradient; empty if backward has not reached it.
template <class S>
std::span<const S> out_grad(const TensorT<S>& t) {
  return t.has_grad() ? t.grad() : std::span<const S>{};
}

}  // namespace detail

template <class S>
TensorT<S> add(TapeT<S>& tape, const TensorT<S>& a, const TensorT<S>& b) {
  detail::require_same_shape("add", a, b);
  TensorT<S> out(a.shape());
  const Index n = out.size();
  for (Index i = 0; i < n; ++i) out[i] = a[i] + b[i];
  if (detail::wants_grad(tape, {&a, &b}))
    tape.record({a.id(), b.id()}, out, [a = a, b = b, out]() mutable {
      auto g = detail::out_grad(out);
      if (g.empty()) return;
      const Index n = out.size();
      if (a.requires_grad()) {
        auto ga = a.grad();
        for (Index i = 0; i < n; ++i) ga[i] += g[i];
      }
      if (b.requires_grad()) {
        auto gb = b.grad();
        for (Index i = 0; i < n; ++i) gb[i] += g[i];
      }
    });
  return out;
}

template <class S>
TensorT<S> sub(TapeT<S>& tape, const TensorT<S>& a, const TensorT<S>& b) {
  detail::require_same_shape("sub", a, b);
  TensorT<S> out(a.shape());
  const Index n = out.size();
  for (Index i = 0; i < n; ++i) out[i] = a[i] - b[i];
  if (detail::wants_grad(tape, {&a, &b}))
    tape.record({a.id(), b.id()}, out, [a = a, b = b, out]() mutable {
      auto g = detail::out_grad(out);
      if (g.empty()) return;
      const Index n = out.size();
      if (a.requires_grad()) {
        auto ga = a.grad();
        for (Index i = 0; i < n; ++i) ga[i] += g[i];
      }
      if (b.requires_grad()) {
        auto gb = b.grad();
        for (Index i = 0; i < n; ++i) gb[i] -= g[i];
      }
    });
  return out;
}

template <class S>
TensorT<S> mul(TapeT<S>& tape, const TensorT<S>& a, const TensorT<S>& b) {
  detail::require_same_shape("mul", a, b);
  TensorT<S> out(a.shape());
  const Index n = out.size();
  for (Index i = 0; i < n; ++i) out[i] = a[i] * b[i];
  if (detail::wants_grad(tape, {&a, &b}))
    tape.record({a.id(), b.id()}, out, [a = a, b = b, out]() mutable {
      auto g = detail::out_grad(out);
      if (g.empty()) return;
      const Index n = out.size();
      if (a.requires_grad()) {
        auto ga = a.grad();
        for (Index i = 0; i < n; ++i) ga[i] += g[i] * b[i];
      }
      if (b.requires_grad()) {
        auto gb = b.grad();
        for (Index i = 0; i < n; ++i) gb[i] += g[i] * a[i];
      }
    });
  return out;
}

template <class S>
TensorT<S> scale(TapeT<S>& tape, const TensorT<S>& a, S c) {
  TensorT<S> out(a.shape());
  const Index n = out.size();
  for (Index i = 0; i < n; ++i) out[i] = a[i] * c;
  if (detail::wants_grad(tape, {&a}))
    tape.record({a.id()}, out, [a = a, out, c]() mutable {
      auto g = detail::out_grad(out);
      if (g.empty()) return;
      auto ga = a.grad();
      const Index n = out.size();
      for (Index i = 0; i < n; ++i) ga[i] += g[i] * c;
    });
  return out;
}

// relu'(0) is taken as 0 (strict positive-part mask).
template <class S>
TensorT<S> relu(TapeT<S>& tape, const TensorT<S>& a) {
  TensorT<S> out(a.shape());
  const Index n = out.size();
  for (Index i = 0; i < n; ++i) out[i] = a[i] > S(0) ? a[i] : S(0);
  if (detail::wants_grad(tape, {&a}))
    tape.record({a.id()}, out, [a = a, out]() mutable {
      auto g = detail::out_grad(out);
      if (g.empty()) return;
      auto ga = a.grad();
      const Index n = out.size();
      for (Index i = 0; i < n; ++i)
        if (a[i] > S(0)) ga[i] += g[i];
    });
  return out;
}

enum class OpKind { add, sub, mul, scale, relu };

// Dispatcher form; `b` must be a size-1 tensor for scale and is ignored for relu.
template <class S>
TensorT<S> elementwise(TapeT<S>& tape, OpKind kind, const TensorT<S>& a, const TensorT<S>& b) {
  switch (kind) {
    case OpKind::add: return add(tape, a, b);
    case OpKind::sub: return sub(tape, a, b);
    case OpKind::mul: return mul(tape, a, b);
    case OpKind::scale:
      if (b.size() != 1)
        throw std::invalid_argument("elementwise scale: multiplier shape " + shape_str(b.shape()) +
                                    " is not a scalar");
      return scale(tape, a, b[0]);
    case OpKind::relu: return relu(tape, a);
  }
  throw std::invalid_argument("elementwise: unknown op kind");
}

template <class S>
TensorT<S> matmul(TapeT<S>& tape, const TensorT<S>& a, const TensorT<S>& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0))
    throw std::invalid_argument("matmul: incompatible shapes " + shape_str(a.shape()) + " vs " +
                                shape_str(b.shape()));
  const Index m = a.dim(0), k = a.dim(1), n = b.dim(1);
  TensorT<S> out(Shape{m, n});
  detail::MatMap<S>(out.data(), m, n).noalias() =
      detail::ConstMatMap<S>(a.data(), m, k) * detail::ConstMatMap<S>(b.data(), k, n);
  if (detail::wants_grad(tape, {&a, &b}))
    tape.record({a.id(), b.id()}, out, [a = a, b = b, out, m, k, n]() mutable {
      auto g = detail::out_grad(out);
      if (g.empty()) return;
      detail::ConstMatMap<S> gm(g.data(), m, n);
      if (a.requires_grad())
        detail::MatMap<S>(a.grad().data(), m, k).noalias() +=
            gm * detail::ConstMatMap<S>(b.data(), k, n).transpose();
      if (b.requires_grad())
        detail::MatMap<S>(b.grad().data(), k, n).noalias() +=
            detail::ConstMatMap<S>(a.data(), m, k).transpose() * gm;
    });
  return out;
}

template <class S>
TensorT<S> transpose2(TapeT<S>& tape, const TensorT<S>& a) {
  if (a.rank() != 2)
    throw std::invalid_argument("transpose2: rank " + std::to_string(a.rank()) +
                                " tensor, expected 2");
  const Index r = a.dim(0), c = a.dim(1);
  TensorT<S> out(Shape{c, r});
  for (Index i = 0; i < r; ++i)
    for (Index j = 0; j < c; ++j) out[j * r + i] = a[i * c + j];
  if (detail::wants_grad(tape, {&a}))
    tape.record({a.id()}, out, [a = a, out, r, c]() mutable {
      auto g = detail::out_grad(out);
      if (g.empty()) return;
      auto ga = a.grad();
      for (Index i = 0; i < r; ++i)
        for (Index j = 0; j < c; ++j) ga[i * c + j] += g[j * r + i];
    });
  return out;
}

template <class S>
TensorT<S> reshape(TapeT<S>& tape, const TensorT<S>& a, Shape shape) {
  check_shape(shape, "reshape");
  if (numel(shape) != a.size())
    throw std::invalid_argument("reshape: " + shape_str(a.shape()) + " to " + shape_str(shape) +
                                " changes element count");
  TensorT<S> out(std::move(shape), std::vector<S>(a.values().begin(), a.values().end()));
  if (detail::wants_grad(tape, {&a}))
    tape.record({a.id()}, out, [a = a, out]() mutable {
      auto g = detail::out_grad(out);
      if (g.empty()) return;
      auto ga = a.grad();
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    });
  return out;
}

// Sum over the given axes (all axes when empty), dropping the reduced axes.
template <class S>
TensorT<S> reduce_sum(TapeT<S>& tape, const TensorT<S>& a, std::vector<int> axes = {}) {
  const int r = a.rank();
  std::vector<bool> reduce(static_cast<std::size_t>(r), axes.empty());
  for (int ax : axes) {
    if (ax < 0 || ax >= r)
      throw std::invalid_argument("reduce_sum: axis " + std::to_string(ax) +
                                  " out of range for shape " + shape_str(a.shape()));
    reduce[static_cast<std::size_t>(ax)] = true;
  }
  Shape out_shape;
  for (int i = 0; i < r; ++i)
    if (!reduce[static_cast<std::size_t>(i)]) out_shape.push_back(a.dim(i));

  const Index n = a.size();
  TensorT<S> out(out_shape);
  const bool all = out.size() == 1 && out.rank() == 0;
  std::vector<Index> map;
  if (all) {
    S acc = 0;
    for (Index i = 0; i < n; ++i) acc += a[i];
    out[0] = acc;
  } else {
    const Shape in_strides = a.strides();
    const Shape out_strides = row_major_strides(out_shape);
    map.resize(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i) {
      Index rem = i, flat = 0;
      std::size_t k = 0;
      for (int ax = 0; ax < r; ++ax) {
        const Index coord = rem / in_strides[static_cast<std::size_t>(ax)];
        rem %= in_strides[static_cast<std::size_t>(ax)];
        if (!reduce[static_cast<std::size_t>(ax)]) flat += coord * out_strides[k++];
      }
      map[static_cast<std::size_t>(i)] = flat;
      out[flat] += a[i];
    }
  }
  if (detail::wants_grad(tape, {&a}))
    tape.record({a.id()}, out, [a = a, out, map = std::move(map), all]() mutable {
      auto g = detail::out_grad(out);
      if (g.empty()) return;
      auto ga = a.grad();
      const Index n = a.size();
      if (all) {
        for (Index i = 0; i < n; ++i) ga[i] += g[0];
      } else {
        for (Index i = 0; i < n; ++i) ga[i] += g[map[static_cast<std::size_t>(i)]];
      }
    });
  return out;
}

// out = x[i, ...] for a leading-axis index.
template <class S>
TensorT<S> slice0(TapeT<S>& tape, const TensorT<S>& x, Index i) {
  if (x.rank() < 1 || i < 0 || i >= x.dim(0))
    throw std::invalid_argument("slice0: index " + std::to_string(i) + " for shape " +
                                shape_str(x.shape()));
  Shape out_shape(x.shape().begin() + 1, x.shape().end());
  const Index chunk = numel(out_shape);
  TensorT<S> out(out_shape,
                 std::vector<S>(x.data() + i * chunk, x.data() + (i + 1) * chunk));
  if (detail::wants_grad(tape, {&x}))
    tape.record({x.id()}, out, [x = x, out, i, chunk]() mutable {
      auto g = detail::out_grad(out);
      if (g.empty()) return;
      auto gx = x.grad();
      for (Index j = 0; j < chunk; ++j) gx[i * chunk + j] += g[j];
    });
  return out;
}

// Stack equally shaped tensors along a new leading axis.
template <class S>
TensorT<S> stack0(TapeT<S>& tape, const std::vector<TensorT<S>>& parts) {
  if (parts.empty()) throw std::invalid_argument("stack0: empty input list");
  for (const auto& p : parts) detail::require_same_shape("stack0", parts.front(), p);
  Shape out_shape{static_cast<Index>(parts.size())};
  out_shape.insert(out_shape.end(), parts.front().shape().begin(), parts.front().shape().end());
  const Index chunk = parts.front().size();
  TensorT<S> out(out_shape);
  for (std::size_t p = 0; p < parts.size(); ++p)
    std::copy(parts[p].data(), parts[p].data() + chunk, out.data() + Index(p) * chunk);
  bool any = false;
  for (const auto& p : parts) any = any || p.requires_grad();
  if (tape.enabled() && any) {
    std::vector<std::uint64_t> ids;
    for (const auto& p : parts) ids.push_back(p.id());
    tape.record(std::move(ids), out, [parts = parts, out, chunk]() mutable {
      auto g = detail::out_grad(out);
      if (g.empty()) return;
      for (std::size_t p = 0; p < parts.size(); ++p) {
        if (!parts[p].requires_grad()) continue;
        auto gp = parts[p].grad();
        const S* src = g.data() + Index(p) * chunk;
        for (Index j = 0; j < chunk; ++j) gp[j] += src[j];
      }
    });
  }
  return out;
}

// out = x * w + b, x: [B, D_in], w: [D_in, D_out], b: [D_out].
template <class S>
TensorT<S> fully_connected(TapeT<S>& tape, const TensorT<S>& x, const TensorT<S>& w,
                           const TensorT<S>& b) {
  if (x.rank() != 2 || w.rank() != 2 || b.rank() != 1 || x.dim(1) != w.dim(0) ||
      w.dim(1) != b.dim(0))
    throw std::invalid_argument("fully_connected: shapes " + shape_str(x.shape()) + ", " +
                                shape_str(w.shape()) + ", " + shape_str(b.shape()));
  const Index B = x.dim(0), din = x.dim(1), dout = w.dim(1);
  TensorT<S> out(Shape{B, dout});
  detail::MatMap<S> om(out.data(), B, dout);
  om.noalias() = detail::ConstMatMap<S>(x.data(), B, din) * detail::ConstMatMap<S>(w.data(), din, dout);
  om.rowwise() += Eigen::Map<const Eigen::Matrix<S, 1, Eigen::Dynamic>>(b.data(), dout);
  if (detail::wants_grad(tape, {&x, &w, &b}))
    tape.record({x.id(), w.id(), b.id()}, out, [x = x, w = w, b = b, out, B, din, dout]() mutable {
      auto g = detail::out_grad(out);
      if (g.empty()) return;
      detail::ConstMatMap<S> gm(g.data(), B, dout);
      if (x.requires_grad())
        detail::MatMap<S>(x.grad().data(), B, din).noalias() +=
            gm * detail::ConstMatMap<S>(w.data(), din, dout).transpose();
      if (w.requires_grad())
        detail::MatMap<S>(w.grad().data(), din, dout).noalias() +=
            detail::ConstMatMap<S>(x.data(), B, din).transpose() * gm;
      if (b.requires_grad()) {
        auto gb = b.grad();
        for (Index r = 0; r < B; ++r)
          for (Index c = 0; c < dout; ++c) gb[c] += g[r * dout + c];
      }
    });
  return out;
}

// Row-wise softmax with max-shift stabilization, x: [B, k].
template <class S>
TensorT<S> softmax(TapeT<S>& tape, const TensorT<S>& x) {
  if (x.rank() != 2)
    throw std::invalid_argument("softmax: shape " + shape_str(x.shape()) + ", expected [B,k]");
  const Index B = x.dim(0), k = x.dim(1);
  TensorT<S> out(x.shape());
  for (Index r = 0; r < B; ++r) {
    const S* row = x.data() + r * k;
    S* po = out.data() + r * k;
    S mx = row[0];
    for (Index j = 1; j < k; ++j) mx = std::max(mx, row[j]);
    S denom = 0;
    for (Index j = 0; j < k; ++j) {
      po[j] = std::exp(row[j] - mx);
      denom += po[j];
    }
    for (Index j = 0; j < k; ++j) po[j] /= denom;
  }
  if (detail::wants_grad(tape, {&x}))
    tape.record({x.id()}, out, [x = x, out, B, k]() mutable {
      auto g = detail::out_grad(out);
      if (g.empty()) return;
      auto gx = x.grad();
      for (Index r = 0; r < B; ++r) {
        const S* p = out.data() + r * k;
        const S* gr = g.data() + r * k;
        S dot = 0;
        for (Index j = 0; j < k; ++j) dot += gr[j] * p[j];
        for (Index j = 0; j < k; ++j) gx[r * k + j] += p[j] * (gr[j] - dot);
      }
    });
  return out;
}

// Mean negative log-likelihood of the labeled class; probabilities are clamped
// at 1e-12 before the log. Backward is the analytic (softmax - onehot) / B.
template <class S>
TensorT<S> cross_entropy_mean(TapeT<S>& tape, const TensorT<S>& logits,
                              const std::vector<int>& labels) {
  if (logits.rank() != 2)
    throw std::invalid_argument("cross_entropy: logits shape " + shape_str(logits.shape()));
  const Index B = logits.dim(0), k = logits.dim(1);
  if (static_cast<Index>(labels.size()) != B)
    throw std::invalid_argument("cross_entropy: " + std::to_string(labels.size()) +
                                " labels for batch " + std::to_string(B));
  for (int y : labels)
    if (y < 0 || y >= k)
      throw std::invalid_argument("cross_entropy: label " + std::to_string(y) +
                                  " outside [0," + std::to_string(k) + ")");
  std::vector<S> probs(static_cast<std::size_t>(B * k));
  const S min_log = std::log(S(1e-12));
  S loss = 0;
  for (Index r = 0; r < B; ++r) {
    const S* row = logits.data() + r * k;
    S* p = probs.data() + r * k;
    S mx = row[0];
    for (Index j = 1; j < k; ++j) mx = std::max(mx, row[j]);
    S denom = 0;
    for (Index j = 0; j < k; ++j) {
      p[j] = std::exp(row[j] - mx);
      denom += p[j];
    }
    for (Index j = 0; j < k; ++j) p[j] /= denom;
    const S logp = row[labels[static_cast<std::size_t>(r)]] - mx - std::log(denom);
    loss -= std::max(logp, min_log);
  }
  TensorT<S> out = TensorT<S>::scalar(loss / S(B));
  if (detail::wants_grad(tape, {&logits}))
    tape.record({logits.id()}, out,
                [logits = logits, out, labels, probs = std::move(probs), B, k]() mutable {
      auto g = detail::out_grad(out);
      if (g.empty()) return;
      auto gx = logits.grad();
      const S inv = g[0] / S(B);
      for (Index r = 0; r < B; ++r)
        for (Index j = 0; j < k; ++j) {
          S d = probs[static_cast<std::size_t>(r * k + j)];
          if (j == labels[static_cast<std::size_t>(r)]) d -= S(1);
          gx[r * k + j] += inv * d;
        }
    });
  return out;
}

// Inverted dropout: kept activations are scaled by 1/(1-rate) so the expected
// value is preserved; identity when not training.
template <class S>
TensorT<S> dropout(TapeT<S>& tape, const TensorT<S>& x, double rate, bool training,
                   std::mt19937_64& rng) {
  if (rate < 0.0 || rate >= 1.0)
    throw std::invalid_argument("dropout: rate " + std::to_string(rate) + " outside [0,1)");
  if (!training || rate == 0.0) return x;
  const Index n = x.size();
  std::vector<std::uint8_t> keep(static_cast<std::size_t>(n));
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (auto& m : keep) m = u(rng) >= rate ? 1 : 0;
  const S inv = S(1.0 / (1.0 - rate));
  TensorT<S> out(x.shape());
  for (Index i = 0; i < n; ++i) out[i] = keep[static_cast<std::size_t>(i)] ? x[i] * inv : S(0);
  if (detail::wants_grad(tape, {&x}))
    tape.record({x.id()}, out, [x = x, out, keep = std::move(keep), inv]() mutable {
      auto g = detail::out_grad(out);
      if (g.empty()) return;
      auto gx = x.grad();
      const Index n = x.size();
      for (Index i = 0; i < n; ++i)
        if (keep[static_cast<std::size_t>(i)]) gx[i] += g[i] * inv;
    });
  return out;
}

}  // namespace mvc3d
