#pragma once

#include <functional>

#include "mvc3d/tensor.hpp"

namespace mvc3d {

struct FiniteDiffOptions {
  double eps = 1e-5;
  // A coordinate is excluded when its one-sided differences disagree by more
  // than kink_tau relatively: the objective has a kink there (relu at 0, a
  // max-pool tie) and the central difference is meaningless.
  double kink_tau = 1e-3;
};

struct FiniteDiffReport {
  double max_rel_error = 0.0;
  Index worst_index = -1;
  Index checked = 0;
  Index excluded = 0;
};

// Central-difference check of `analytic` against the scalar objective `f`,
// which must re-evaluate the loss at the current contents of `x`. All
// difference arithmetic is carried out in double. Relative error per
// coordinate is |analytic - central| / max(1e-12, |central|, |analytic|).
template <class S, class F>
FiniteDiffReport finite_diff_check(F&& f, TensorT<S>& x, std::span<const S> analytic,
                                   FiniteDiffOptions opt = {}) {
  if (static_cast<Index>(analytic.size()) != x.size())
    throw std::invalid_argument("finite_diff_check: " + std::to_string(analytic.size()) +
                                " analytic entries for " + std::to_string(x.size()) +
                                " coordinates");
  FiniteDiffReport rep;
  const double f0 = static_cast<double>(f());
  const double eps = opt.eps;
  for (Index i = 0; i < x.size(); ++i) {
    const S saved = x[i];
    x[i] = saved + static_cast<S>(eps);
    const double fp = static_cast<double>(f());
    x[i] = saved - static_cast<S>(eps);
    const double fm = static_cast<double>(f());
    x[i] = saved;
    const double dp = (fp - f0) / eps;
    const double dm = (f0 - fm) / eps;
    if (std::abs(dp - dm) > opt.kink_tau * std::max({1.0, std::abs(dp), std::abs(dm)})) {
      ++rep.excluded;
      continue;
    }
    const double central = (fp - fm) / (2.0 * eps);
    const double a = static_cast<double>(analytic[i]);
    const double rel = std::abs(a - central) / std::max({1e-12, std::abs(central), std::abs(a)});
    ++rep.checked;
    if (rel > rep.max_rel_error) {
      rep.max_rel_error = rel;
      rep.worst_index = i;
    }
  }
  return rep;
}

}  // namespace mvc3d
