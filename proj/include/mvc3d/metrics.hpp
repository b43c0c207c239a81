#pragma once

#include <span>
#include <string>
#include <vector>

#include "mvc3d/model.hpp"

namespace mvc3d {

// One training or evaluation sample: a stacked view cube [3, N, H, W] in [0, 1]
// plus its class label.
struct LabeledCube {
  Tensor cube;
  Index label = 0;
};

struct EvalResult {
  double accuracy = 0.0;
  std::vector<Index> per_class_correct;
  std::vector<Index> per_class_total;
  std::vector<Index> predictions;  // argmax class per sample, in input order
};

// Runs the model in inference mode over the samples in fixed order.
// Argmax ties resolve to the lowest class index.
EvalResult evaluate(Model& model, std::span<const LabeledCube> data, Index batch_size);

// Mean cross entropy of the model's predictions, inference mode, no weight penalty.
double evaluate_loss(Model& model, std::span<const LabeledCube> data, Index batch_size);

// Average precision of a ranked relevance list: mean of precision-at-k over the
// relevant ranks. Zero when nothing is relevant.
double average_precision(std::span<const char> relevant);

// Leave-one-out retrieval over feature rows: each sample queries all others,
// ranked by cosine similarity (descending, ties by index). Returns the mean
// average precision over queries whose class has at least one other member.
double retrieval_map(const Tensor& features, std::span<const Index> labels);

// Plain-text accuracy table, one row per class plus a macro-average row.
std::string format_per_class_table(std::span<const std::string> class_names,
                                   const EvalResult& result);

}  // namespace mvc3d
