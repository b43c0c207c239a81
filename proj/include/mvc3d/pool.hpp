#pragma once

#include "mvc3d/tape.hpp"

namespace mvc3d {

struct PoolSpec {
  Index kv = 1, kh = 2, kw = 2;  // window (views, height, width)
  Index sv = 1, sh = 2, sw = 2;  // stride
};

inline constexpr PoolSpec kPoolSpatial{1, 2, 2, 1, 2, 2};
inline constexpr PoolSpec kPoolCube{2, 2, 2, 2, 2, 2};

// Spatial axes pool in ceil mode: a ragged tail window is clipped to the edge
// rather than dropped, so 7 -> 4 under 2x2/2.
inline Index pooled_spatial(Index len, Index k, Index s) {
  if (len < 1) throw std::invalid_argument("pooled_spatial: empty axis");
  const Index out = (len <= k) ? 1 : (len - k + s - 1) / s + 1;
  return out;
}

// The viewpoint axis pools in floor mode clamped to at least 1: overhang views
// are dropped (12 -> 6 -> 3 -> 1 -> 1), and once V < k the window truncates.
inline Index pooled_views(Index v, Index s) {
  if (v < 1) throw std::invalid_argument("pooled_views: empty axis");
  return std::max<Index>(1, v / s);
}

// Max pooling over [C, V, H, W]. Returns the pooled tensor and the flat input
// index of each selected maximum; ties keep the first element in (v, y, x)
// scan order. Backward routes each output gradient to its recorded argmax.
template <class S>
std::pair<TensorT<S>, std::vector<Index>> maxpool3d(TapeT<S>& tape, const TensorT<S>& input,
                                                    const PoolSpec& spec) {
  if (input.rank() != 4)
    throw std::invalid_argument("maxpool3d: input shape " + shape_str(input.shape()) +
                                ", expected [C,V,H,W]");
  if (spec.kv < 1 || spec.kh < 1 || spec.kw < 1 || spec.sv < 1 || spec.sh < 1 || spec.sw < 1)
    throw std::invalid_argument("maxpool3d: nonpositive window or stride");
  const Index C = input.dim(0), V = input.dim(1), H = input.dim(2), W = input.dim(3);
  const Index Vo = pooled_views(V, spec.sv);
  const Index Ho = pooled_spatial(H, spec.kh, spec.sh);
  const Index Wo = pooled_spatial(W, spec.kw, spec.sw);

  TensorT<S> out(Shape{C, Vo, Ho, Wo});
  std::vector<Index> argmax(static_cast<std::size_t>(out.size()));
  for (Index c = 0; c < C; ++c)
    for (Index vo = 0; vo < Vo; ++vo) {
      const Index v0 = vo * spec.sv, v1 = std::min(V, v0 + spec.kv);
      for (Index yo = 0; yo < Ho; ++yo) {
        const Index y0 = yo * spec.sh, y1 = std::min(H, y0 + spec.kh);
        for (Index xo = 0; xo < Wo; ++xo) {
          const Index x0 = xo * spec.sw, x1 = std::min(W, x0 + spec.kw);
          S best = input[((c * V + v0) * H + y0) * W + x0];
          Index best_at = ((c * V + v0) * H + y0) * W + x0;
          for (Index v = v0; v < v1; ++v)
            for (Index y = y0; y < y1; ++y)
              for (Index x = x0; x < x1; ++x) {
                const Index at = ((c * V + v) * H + y) * W + x;
                if (input[at] > best) {
                  best = input[at];
                  best_at = at;
                }
              }
          const Index o = ((c * Vo + vo) * Ho + yo) * Wo + xo;
          out[o] = best;
          argmax[static_cast<std::size_t>(o)] = best_at;
        }
      }
    }

  if (detail::wants_grad(tape, {&input}))
    tape.record({input.id()}, out, [input = input, out, argmax]() mutable {
      auto g = detail::out_grad(out);
      if (g.empty()) return;
      auto gx = input.grad();
      for (std::size_t i = 0; i < argmax.size(); ++i)
        gx[argmax[i]] += g[i];
    });
  return {out, std::move(argmax)};
}

}  // namespace mvc3d
