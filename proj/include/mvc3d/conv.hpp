#pragma once

#include "mvc3d/ops.hpp"
#include "mvc3d/parallel.hpp"

namespace mvc3d {

// Kernel for joint convolution over (views, height, width); spatial extent is
// fixed at 3x3, the view extent v is odd so same-padding stays symmetric.
template <class S>
struct Conv3dKernel {
  TensorT<S> weight;  // [C_out, C_in, v, 3, 3]
  TensorT<S> bias;    // [C_out]

  static Conv3dKernel zeros(Index c_out, Index c_in, Index v) {
    validate_extents(c_out, c_in, v);
    return {TensorT<S>(Shape{c_out, c_in, v, 3, 3}), TensorT<S>(Shape{c_out})};
  }

  static Conv3dKernel gaussian(Index c_out, Index c_in, Index v, std::mt19937_64& rng,
                               S stddev) {
    validate_extents(c_out, c_in, v);
    return {TensorT<S>::randn(Shape{c_out, c_in, v, 3, 3}, rng, stddev), TensorT<S>(Shape{c_out})};
  }

  Index c_out() const { return weight.dim(0); }
  Index c_in() const { return weight.dim(1); }
  Index view_extent() const { return weight.dim(2); }

  static void validate_extents(Index c_out, Index c_in, Index v) {
    if (c_out < 1 || c_in < 1)
      throw std::invalid_argument("conv3d kernel: channels " + std::to_string(c_out) + "x" +
                                  std::to_string(c_in));
    if (v < 1 || v % 2 == 0)
      throw std::invalid_argument("conv3d kernel: view extent " + std::to_string(v) +
                                  " must be odd and positive");
  }
};

namespace detail {

// Copies [C,V,H,W] into a zero-padded buffer with the given margins.
template <class S>
std::vector<S> pad4(const S* src, Index C, Index V, Index H, Index W, Index pv, Index py,
                    Index px) {
  const Index Vp = V + 2 * pv, Hp = H + 2 * py, Wp = W + 2 * px;
  std::vector<S> out(static_cast<std::size_t>(C * Vp * Hp * Wp), S(0));
  for (Index c = 0; c < C; ++c)
    for (Index v = 0; v < V; ++v)
      for (Index y = 0; y < H; ++y) {
        const S* s = src + ((c * V + v) * H + y) * W;
        S* d = out.data() + ((c * Vp + v + pv) * Hp + y + py) * Wp + px;
        std::copy(s, s + W, d);
      }
  return out;
}

// Correlation core shared by forward and the input-gradient pass:
// out[n] = sum_m ker(n,m,:,:,:) . padded(m), accumulated in a fixed order.
// Parallel over the output-channel axis; each thread owns disjoint rows.
template <class S>
void correlate4(const std::vector<S>& P, Index Cin, Index Vp, Index Hp, Index Wp, const S* ker,
                Index Cout, Index kv, const S* bias, S* out, Index Vo, Index Ho, Index Wo,
                bool accumulate) {
  parallel_for(Cout, [&](Index n) {
    for (Index vo = 0; vo < Vo; ++vo)
      for (Index yo = 0; yo < Ho; ++yo) {
        S* orow = out + ((n * Vo + vo) * Ho + yo) * Wo;
        if (!accumulate) {
          const S b = bias ? bias[n] : S(0);
          for (Index x = 0; x < Wo; ++x) orow[x] = b;
        }
        for (Index m = 0; m < Cin; ++m)
          for (Index dv = 0; dv < kv; ++dv)
            for (Index dy = 0; dy < 3; ++dy) {
              const S* prow = P.data() + ((m * Vp + vo + dv) * Hp + yo + dy) * Wp;
              const S* wk = ker + (((n * Cin + m) * kv + dv) * 3 + dy) * 3;
              for (Index dx = 0; dx < 3; ++dx) {
                const S wv = wk[dx];
                const S* pr = prow + dx;
                for (Index x = 0; x < Wo; ++x) orow[x] += wv * pr[x];
              }
            }
      }
  });
}

template <class S>
void require_conv_input(const char* op, const TensorT<S>& input, Index c_in) {
  if (input.rank() != 4)
    throw std::invalid_argument(std::string(op) + ": input shape " + shape_str(input.shape()) +
                                ", expected [C,V,H,W]");
  if (input.dim(0) != c_in)
    throw std::invalid_argument(std::string(op) + ": input has " + std::to_string(input.dim(0)) +
                                " channels, kernel expects " + std::to_string(c_in));
  if (input.dim(1) < 1)
    throw std::invalid_argument(std::string(op) + ": empty viewpoint axis");
}

}  // namespace detail

// Joint 3D convolution of [C_in, V, H, W] with a v x 3 x 3 kernel. With
// same_padding the output keeps (V, H, W): the input is zero-padded by
// (v-1)/2 views and 1 pixel; without it the output shrinks to
// (V-v+1, H-2, W-2).
template <class S>
TensorT<S> conv3d(TapeT<S>& tape, const TensorT<S>& input, const Conv3dKernel<S>& k,
                  bool same_padding = true) {
  detail::require_conv_input("conv3d", input, k.c_in());
  const Index Ci = k.c_in(), Co = k.c_out(), kv = k.view_extent();
  const Index V = input.dim(1), H = input.dim(2), W = input.dim(3);
  const Index pv = same_padding ? (kv - 1) / 2 : 0;
  const Index py = same_padding ? 1 : 0, px = py;
  const Index Vo = V + 2 * pv - kv + 1, Ho = H + 2 * py - 2, Wo = W + 2 * px - 2;
  if (Vo < 1 || Ho < 1 || Wo < 1)
    throw std::invalid_argument("conv3d: input " + shape_str(input.shape()) +
                                " too small for unpadded " + std::to_string(kv) + "x3x3 kernel");

  const Index Vp = V + 2 * pv, Hp = H + 2 * py, Wp = W + 2 * px;
  std::vector<S> P = detail::pad4(input.data(), Ci, V, H, W, pv, py, px);
  TensorT<S> out(Shape{Co, Vo, Ho, Wo});
  detail::correlate4(P, Ci, Vp, Hp, Wp, k.weight.data(), Co, kv, k.bias.data(), out.data(), Vo,
                     Ho, Wo, false);

  const TensorT<S>&w = k.weight, &b = k.bias;
  if (detail::wants_grad(tape, {&input, &w, &b}))
    tape.record({input.id(), w.id(), b.id()}, out,
                [input = input, w = w, b = b, out, Ci, Co, kv, V, H, W, pv, py, px, Vo, Ho, Wo]() mutable {
      auto g = detail::out_grad(out);
      if (g.empty()) return;
      const Index Vp = V + 2 * pv, Hp = H + 2 * py, Wp = W + 2 * px;

      if (b.requires_grad()) {
        auto gb = b.grad();
        for (Index n = 0; n < Co; ++n) {
          S acc = 0;
          const S* gr = g.data() + n * Vo * Ho * Wo;
          for (Index i = 0; i < Vo * Ho * Wo; ++i) acc += gr[i];
          gb[n] += acc;
        }
      }

      if (w.requires_grad()) {
        std::vector<S> P = detail::pad4(input.data(), Ci, V, H, W, pv, py, px);
        auto gw = w.grad();
        parallel_for(Co, [&](Index n) {
          for (Index m = 0; m < Ci; ++m)
            for (Index dv = 0; dv < kv; ++dv)
              for (Index dy = 0; dy < 3; ++dy)
                for (Index dx = 0; dx < 3; ++dx) {
                  S acc = 0;
                  for (Index vo = 0; vo < Vo; ++vo)
                    for (Index yo = 0; yo < Ho; ++yo) {
                      const S* gr = g.data() + ((n * Vo + vo) * Ho + yo) * Wo;
                      const S* pr =
                          P.data() + ((m * Vp + vo + dv) * Hp + yo + dy) * Wp + dx;
                      for (Index x = 0; x < Wo; ++x) acc += gr[x] * pr[x];
                    }
                  gw[(((n * Ci + m) * kv + dv) * 3 + dy) * 3 + dx] += acc;
                }
        });
      }

      if (input.requires_grad()) {
        // d(input) is the correlation of the padded output gradient with the
        // kernel flipped on all three axes, evaluated over the padded extent
        // and then cropped back to the interior.
        std::vector<S> Gp =
            detail::pad4(g.data(), Co, Vo, Ho, Wo, kv - 1, Index(2), Index(2));
        std::vector<S> wf(static_cast<std::size_t>(w.size()));
        for (Index n = 0; n < Co; ++n)
          for (Index m = 0; m < Ci; ++m)
            for (Index dv = 0; dv < kv; ++dv)
              for (Index dy = 0; dy < 3; ++dy)
                for (Index dx = 0; dx < 3; ++dx)
                  wf[(((m * Co + n) * kv + dv) * 3 + dy) * 3 + dx] =
                      w.data()[(((n * Ci + m) * kv + (kv - 1 - dv)) * 3 + (2 - dy)) * 3 +
                               (2 - dx)];
        std::vector<S> dP(static_cast<std::size_t>(Ci * Vp * Hp * Wp));
        detail::correlate4(Gp, Co, Vo + 2 * (kv - 1), Ho + 4, Wo + 4, wf.data(), Ci, kv,
                           static_cast<const S*>(nullptr), dP.data(), Vp, Hp, Wp, false);
        auto gx = input.grad();
        for (Index m = 0; m < Ci; ++m)
          for (Index vi = 0; vi < V; ++vi)
            for (Index yi = 0; yi < H; ++yi) {
              const S* src = dP.data() + ((m * Vp + vi + pv) * Hp + yi + py) * Wp + px;
              S* dst = gx.data() + ((m * V + vi) * H + yi) * W;
              for (Index xi = 0; xi < W; ++xi) dst[xi] += src[xi];
            }
      }
    });
  return out;
}

// Ablation path: each view gets its own 2D 3x3 kernel set; views never mix.
// per_view holds V weight tensors [C_out, C_in, 3, 3]; the bias is shared.
template <class S>
TensorT<S> conv2d_independent(TapeT<S>& tape, const TensorT<S>& input,
                              const std::vector<TensorT<S>>& per_view, const TensorT<S>& bias,
                              bool same_padding = true) {
  if (input.rank() != 4)
    throw std::invalid_argument("conv2d_independent: input shape " + shape_str(input.shape()) +
                                ", expected [C,V,H,W]");
  const Index V = input.dim(1);
  if (static_cast<Index>(per_view.size()) != V)
    throw std::invalid_argument("conv2d_independent: " + std::to_string(per_view.size()) +
                                " kernel sets for " + std::to_string(V) + " views");
  const auto& w0 = per_view.front();
  if (w0.rank() != 4 || w0.dim(2) != 3 || w0.dim(3) != 3)
    throw std::invalid_argument("conv2d_independent: kernel shape " + shape_str(w0.shape()) +
                                ", expected [C_out,C_in,3,3]");
  for (const auto& w : per_view) detail::require_same_shape("conv2d_independent", w0, w);
  const Index Co = w0.dim(0), Ci = w0.dim(1);
  detail::require_conv_input("conv2d_independent", input, Ci);
  if (bias.rank() != 1 || bias.dim(0) != Co)
    throw std::invalid_argument("conv2d_independent: bias shape " + shape_str(bias.shape()) +
                                " for " + std::to_string(Co) + " output channels");
  const Index H = input.dim(2), W = input.dim(3);
  const Index p = same_padding ? 1 : 0;
  const Index Ho = H + 2 * p - 2, Wo = W + 2 * p - 2;
  if (Ho < 1 || Wo < 1)
    throw std::invalid_argument("conv2d_independent: input " + shape_str(input.shape()) +
                                " too small for unpadded 3x3 kernel");
  const Index Hp = H + 2 * p, Wp = W + 2 * p;

  std::vector<S> P = detail::pad4(input.data(), Ci, V, H, W, Index(0), p, p);
  TensorT<S> out(Shape{Co, V, Ho, Wo});
  parallel_for(Co, [&](Index n) {
    for (Index v = 0; v < V; ++v) {
      const S* ker = per_view[static_cast<std::size_t>(v)].data();
      for (Index yo = 0; yo < Ho; ++yo) {
        S* orow = out.data() + ((n * V + v) * Ho + yo) * Wo;
        for (Index x = 0; x < Wo; ++x) orow[x] = bias[n];
        for (Index m = 0; m < Ci; ++m)
          for (Index dy = 0; dy < 3; ++dy) {
            const S* prow = P.data() + ((m * V + v) * Hp + yo + dy) * Wp;
            const S* wk = ker + ((n * Ci + m) * 3 + dy) * 3;
            for (Index dx = 0; dx < 3; ++dx) {
              const S wv = wk[dx];
              const S* pr = prow + dx;
              for (Index x = 0; x < Wo; ++x) orow[x] += wv * pr[x];
            }
          }
      }
    }
  });

  bool any = input.requires_grad() || bias.requires_grad();
  for (const auto& w : per_view) any = any || w.requires_grad();
  if (tape.enabled() && any) {
    std::vector<std::uint64_t> ids{input.id(), bias.id()};
    for (const auto& w : per_view) ids.push_back(w.id());
    tape.record(std::move(ids), out,
                [input = input, per_view = per_view, bias = bias, out, Ci, Co, V, H, W, p, Ho, Wo]() mutable {
      auto g = detail::out_grad(out);
      if (g.empty()) return;
      const Index Hp = H + 2 * p, Wp = W + 2 * p;
      std::vector<S> P = detail::pad4(input.data(), Ci, V, H, W, Index(0), p, p);

      if (bias.requires_grad()) {
        auto gb = bias.grad();
        for (Index n = 0; n < Co; ++n) {
          S acc = 0;
          const S* gr = g.data() + n * V * Ho * Wo;
          for (Index i = 0; i < V * Ho * Wo; ++i) acc += gr[i];
          gb[n] += acc;
        }
      }

      for (Index v = 0; v < V; ++v) {
        auto& w = per_view[static_cast<std::size_t>(v)];
        if (!w.requires_grad()) continue;
        auto gw = w.grad();
        parallel_for(Co, [&](Index n) {
          for (Index m = 0; m < Ci; ++m)
            for (Index dy = 0; dy < 3; ++dy)
              for (Index dx = 0; dx < 3; ++dx) {
                S acc = 0;
                for (Index yo = 0; yo < Ho; ++yo) {
                  const S* gr = g.data() + ((n * V + v) * Ho + yo) * Wo;
                  const S* pr = P.data() + ((m * V + v) * Hp + yo + dy) * Wp + dx;
                  for (Index x = 0; x < Wo; ++x) acc += gr[x] * pr[x];
                }
                gw[((n * Ci + m) * 3 + dy) * 3 + dx] += acc;
              }
        });
      }

      if (input.requires_grad()) {
        auto gx = input.grad();
        parallel_for(Ci, [&](Index m) {
          for (Index v = 0; v < V; ++v) {
            const S* ker = per_view[static_cast<std::size_t>(v)].data();
            for (Index yi = 0; yi < H; ++yi)
              for (Index xi = 0; xi < W; ++xi) {
                S acc = 0;
                for (Index n = 0; n < Co; ++n)
                  for (Index dy = 0; dy < 3; ++dy) {
                    const Index yo = yi + p - dy;
                    if (yo < 0 || yo >= Ho) continue;
                    for (Index dx = 0; dx < 3; ++dx) {
                      const Index xo = xi + p - dx;
                      if (xo < 0 || xo >= Wo) continue;
                      acc += ker[((n * Ci + m) * 3 + dy) * 3 + dx] *
                             g[((n * V + v) * Ho + yo) * Wo + xo];
                    }
                  }
                gx[((m * V + v) * H + yi) * W + xi] += acc;
              }
          }
        });
      }
    });
  }
  return out;
}

}  // namespace mvc3d
