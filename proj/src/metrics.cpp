#include "mvc3d/metrics.hpp"

#include <algorithm>
#include <iomanip>
#include <numeric>
#include <sstream>

namespace mvc3d {

namespace {

Tensor assemble_batch(std::span<const LabeledCube> data, Index begin, Index end) {
  const Shape& cube_shape = data[static_cast<std::size_t>(begin)].cube.shape();
  Shape batch_shape;
  batch_shape.push_back(end - begin);
  batch_shape.insert(batch_shape.end(), cube_shape.begin(), cube_shape.end());
  Tensor batch(batch_shape);
  const Index per = numel(cube_shape);
  for (Index i = begin; i < end; ++i) {
    const Tensor& cube = data[static_cast<std::size_t>(i)].cube;
    if (cube.shape() != cube_shape)
      throw std::invalid_argument("evaluate batch: cube shape " + shape_str(cube.shape()) +
                                  " differs from " + shape_str(cube_shape));
    std::copy(cube.values().begin(), cube.values().end(), batch.data() + (i - begin) * per);
  }
  return batch;
}

Index argmax_row(const Tensor& logits, Index row, Index k) {
  const Real* p = logits.values().data() + row * k;
  Index best = 0;
  for (Index j = 1; j < k; ++j)
    if (p[j] > p[best]) best = j;
  return best;
}

}  // namespace

EvalResult evaluate(Model& model, std::span<const LabeledCube> data, Index batch_size) {
  if (batch_size < 1) throw std::invalid_argument("evaluate: nonpositive batch size");
  const Index k = model.config.n_classes;
  EvalResult r;
  r.per_class_correct.assign(static_cast<std::size_t>(k), 0);
  r.per_class_total.assign(static_cast<std::size_t>(k), 0);
  const Index n = static_cast<Index>(data.size());
  Index correct = 0;
  Tape off(false);
  for (Index begin = 0; begin < n; begin += batch_size) {
    const Index end = std::min(n, begin + batch_size);
    Tensor batch = assemble_batch(data, begin, end);
    Tensor logits = forward(off, model, batch, false);
    for (Index i = begin; i < end; ++i) {
      const Index label = data[static_cast<std::size_t>(i)].label;
      if (label < 0 || label >= k)
        throw std::invalid_argument("evaluate: label " + std::to_string(label) +
                                    " outside [0," + std::to_string(k) + ")");
      const Index pred = argmax_row(logits, i - begin, k);
      r.predictions.push_back(pred);
      ++r.per_class_total[static_cast<std::size_t>(label)];
      if (pred == label) {
        ++correct;
        ++r.per_class_correct[static_cast<std::size_t>(label)];
      }
    }
  }
  r.accuracy = n == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(n);
  return r;
}

double evaluate_loss(Model& model, std::span<const LabeledCube> data, Index batch_size) {
  if (batch_size < 1) throw std::invalid_argument("evaluate: nonpositive batch size");
  const Index n = static_cast<Index>(data.size());
  if (n == 0) return 0.0;
  Tape off(false);
  double total = 0.0;
  for (Index begin = 0; begin < n; begin += batch_size) {
    const Index end = std::min(n, begin + batch_size);
    Tensor batch = assemble_batch(data, begin, end);
    Tensor logits = forward(off, model, batch, false);
    std::vector<int> labels;
    for (Index i = begin; i < end; ++i)
      labels.push_back(static_cast<int>(data[static_cast<std::size_t>(i)].label));
    Tensor loss = cross_entropy_mean(off, logits, labels);
    total += static_cast<double>(loss[0]) * static_cast<double>(end - begin);
  }
  return total / static_cast<double>(n);
}

double average_precision(std::span<const char> relevant) {
  Index hits = 0;
  double sum = 0.0;
  for (std::size_t i = 0; i < relevant.size(); ++i) {
    if (relevant[i]) {
      ++hits;
      sum += static_cast<double>(hits) / static_cast<double>(i + 1);
    }
  }
  return hits == 0 ? 0.0 : sum / static_cast<double>(hits);
}

double retrieval_map(const Tensor& features, std::span<const Index> labels) {
  if (features.rank() != 2)
    throw std::invalid_argument("retrieval: feature shape " + shape_str(features.shape()) +
                                ", expected [N,D]");
  const Index n = features.dim(0), d = features.dim(1);
  if (static_cast<Index>(labels.size()) != n)
    throw std::invalid_argument("retrieval: " + std::to_string(labels.size()) + " labels for " +
                                std::to_string(n) + " feature rows");
  const Real* f = features.values().data();
  double ap_sum = 0.0;
  Index queries = 0;
  std::vector<Index> order;
  for (Index q = 0; q < n; ++q) {
    bool has_relevant = false;
    for (Index j = 0; j < n; ++j)
      if (j != q && labels[static_cast<std::size_t>(j)] == labels[static_cast<std::size_t>(q)])
        has_relevant = true;
    if (!has_relevant) continue;

    order.clear();
    for (Index j = 0; j < n; ++j)
      if (j != q) order.push_back(j);
    std::vector<double> sim(static_cast<std::size_t>(n), 0.0);
    for (Index j : order) {
      double s = 0.0;
      for (Index c = 0; c < d; ++c)
        s += static_cast<double>(f[q * d + c]) * static_cast<double>(f[j * d + c]);
      sim[static_cast<std::size_t>(j)] = s;
    }
    std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) {
      return sim[static_cast<std::size_t>(a)] > sim[static_cast<std::size_t>(b)];
    });
    std::vector<char> relevant;
    for (Index j : order)
      relevant.push_back(labels[static_cast<std::size_t>(j)] ==
                                 labels[static_cast<std::size_t>(q)]
                             ? 1
                             : 0);
    ap_sum += average_precision(relevant);
    ++queries;
  }
  return queries == 0 ? 0.0 : ap_sum / static_cast<double>(queries);
}

std::string format_per_class_table(std::span<const std::string> class_names,
                                   const EvalResult& result) {
  if (class_names.size() != result.per_class_total.size())
    throw std::invalid_argument("per-class table: " + std::to_string(class_names.size()) +
                                " names for " + std::to_string(result.per_class_total.size()) +
                                " classes");
  std::size_t width = 5;
  for (const auto& n : class_names) width = std::max(width, n.size());
  std::ostringstream os;
  os << std::left << std::setw(static_cast<int>(width + 2)) << "class" << std::right
     << std::setw(8) << "total" << std::setw(10) << "correct" << std::setw(10) << "acc" << '\n';
  double acc_sum = 0.0;
  Index classes_seen = 0;
  for (std::size_t i = 0; i < class_names.size(); ++i) {
    const Index total = result.per_class_total[i], correct = result.per_class_correct[i];
    const double acc = total == 0 ? 0.0 : static_cast<double>(correct) / total;
    if (total > 0) {
      acc_sum += acc;
      ++classes_seen;
    }
    os << std::left << std::setw(static_cast<int>(width + 2)) << class_names[i] << std::right
       << std::setw(8) << total << std::setw(10) << correct << std::setw(10) << std::fixed
       << std::setprecision(4) << acc << '\n';
  }
  const double mean = classes_seen == 0 ? 0.0 : acc_sum / static_cast<double>(classes_seen);
  os << std::left << std::setw(static_cast<int>(width + 2)) << "mean" << std::right << std::setw(8)
     << "" << std::setw(10) << "" << std::setw(10) << std::fixed << std::setprecision(4) << mean
     << '\n';
  return os.str();
}

}  // namespace mvc3d
