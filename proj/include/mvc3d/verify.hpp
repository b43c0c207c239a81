#pragma once

#include <functional>
#include <string>
#include <vector>

#include "mvc3d/model.hpp"

namespace mvc3d {

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;  // failure names the first offending case
  double ms = 0.0;
};

using PlanProvider = std::function<std::vector<ShapeRow>(const ModelConfig&)>;

// Compares the model's layer plan for N in {8, 12, 16, 20, 36} at full
// resolution against an independently tabulated layer table. The provider
// defaults to the production shape_plan; substituting a corrupted plan (say,
// ceil rounding on the viewpoint pool) must fail naming the first bad row.
CheckResult check_layer_table(const PlanProvider& provider = {});

// conv3d against a direct six-loop summation on seeded random cases.
CheckResult check_conv_oracle(int cases = 100, double tol = 1e-10);

// Finite differences over a toy two-view model's first conv kernel and the
// classifier weights.
CheckResult check_gradients(double tol = 1e-4);

// View-extent 1 convolution equals per-view 2D convolution with tied weights.
CheckResult check_single_view_equivalence(double tol = 1e-12);

// Learning-rate decade boundaries, exactly.
CheckResult check_lr_decades();

// Early-stop worked examples plus threshold monotonicity on random sequences.
CheckResult check_early_stop(int sequences = 200);

// Oversampling reaches max(count, target) per class and keeps every original.
CheckResult check_oversample();

// Uniform logits cost ln(k) under the plain cross entropy.
CheckResult check_uniform_loss();

// Runs every check in a fixed order.
std::vector<CheckResult> run_verification();

// Report lines as printed by the verify command.
std::string format_report(const std::vector<CheckResult>& results);

}  // namespace mvc3d
