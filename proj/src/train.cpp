#include "mvc3d/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <ostream>
#include <random>
#include <utility>

namespace mvc3d {

void validate(const TrainConfig& c) {
  if (c.initial_lr <= 0.0) throw std::invalid_argument("train config: nonpositive learning rate");
  if (c.lr_decay_every < 1) throw std::invalid_argument("train config: lr_decay_every < 1");
  if (c.lr_decay_factor < 1.0) throw std::invalid_argument("train config: lr_decay_factor < 1");
  if (c.lambda < 0.0) throw std::invalid_argument("train config: negative lambda");
  if (c.batch_size < 1) throw std::invalid_argument("train config: batch_size < 1");
  if (c.max_epochs < 1) throw std::invalid_argument("train config: max_epochs < 1");
  if (c.early_stop_window < 1) throw std::invalid_argument("train config: early_stop_window < 1");
  if (c.split_train_parts < 1 || c.split_val_parts < 1)
    throw std::invalid_argument("train config: split parts must be positive");
  if (!(c.adam_beta1 >= 0.0 && c.adam_beta1 < 1.0) ||
      !(c.adam_beta2 >= 0.0 && c.adam_beta2 < 1.0))
    throw std::invalid_argument("train config: adam betas must lie in [0,1)");
  if (c.adam_eps <= 0.0) throw std::invalid_argument("train config: nonpositive adam epsilon");
}

double lr_at(const TrainConfig& c, Index epoch) {
  if (epoch < 0) throw std::invalid_argument("lr_at: negative epoch");
  const Index decades = epoch / c.lr_decay_every;
  return c.initial_lr / std::pow(c.lr_decay_factor, static_cast<double>(decades));
}

bool early_stop(std::span<const double> losses, double threshold, Index window) {
  if (window < 1) throw std::invalid_argument("early_stop: window < 1");
  if (static_cast<Index>(losses.size()) < window + 1) return false;
  const std::size_t n = losses.size();
  for (std::size_t i = n - static_cast<std::size_t>(window); i < n; ++i) {
    const double prev = losses[i - 1], cur = losses[i];
    if (cur <= 0.0) return false;  // ratio undefined; keep training
    const double delta = (prev - cur) / cur;
    if (delta >= threshold) return false;
  }
  return true;
}

AdamState make_adam_state(std::span<const Tensor> params) {
  AdamState s;
  for (const Tensor& p : params) {
    s.m.emplace_back(static_cast<std::size_t>(p.size()), Real(0));
    s.v.emplace_back(static_cast<std::size_t>(p.size()), Real(0));
  }
  return s;
}

void adam_step(AdamState& state, std::span<Tensor> params, double lr, const TrainConfig& c) {
  if (state.m.size() != params.size())
    throw std::invalid_argument("adam: state holds " + std::to_string(state.m.size()) +
                                " slots for " + std::to_string(params.size()) + " parameters");
  ++state.t;
  const double b1 = c.adam_beta1, b2 = c.adam_beta2;
  const double bc1 = 1.0 - std::pow(b1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(b2, static_cast<double>(state.t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& p = params[i];
    if (static_cast<Index>(state.m[i].size()) != p.size())
      throw std::invalid_argument("adam: slot " + std::to_string(i) + " size mismatch");
    Real* value = p.data();
    const bool has = p.has_grad();
    std::span<const Real> g = has ? std::as_const(p).grad() : std::span<const Real>{};
    Real* m = state.m[i].data();
    Real* v = state.v[i].data();
    for (Index e = 0; e < p.size(); ++e) {
      const double ge = has ? static_cast<double>(g[static_cast<std::size_t>(e)]) : 0.0;
      const double me = b1 * static_cast<double>(m[e]) + (1.0 - b1) * ge;
      const double ve = b2 * static_cast<double>(v[e]) + (1.0 - b2) * ge * ge;
      m[e] = static_cast<Real>(me);
      v[e] = static_cast<Real>(ve);
      const double mhat = me / bc1;
      const double vhat = ve / bc2;
      value[e] -= static_cast<Real>(lr * mhat / (std::sqrt(vhat) + c.adam_eps));
    }
  }
}

Index regularized_element_count(const Model& model) {
  Index m = 0;
  for (const Tensor& w : model.weight_parameters()) m += w.size();
  return m;
}

Tensor loss_total(Tape& tape, Model& model, const Tensor& logits, const std::vector<int>& labels,
                  double lambda) {
  Tensor ce = cross_entropy_mean(tape, logits, labels);
  if (lambda == 0.0) return ce;
  const Index m = regularized_element_count(model);
  Tensor penalty;
  bool first = true;
  for (Tensor& w : model.weight_parameters()) {
    Tensor sq = reduce_sum(tape, mul(tape, w, w));
    penalty = first ? sq : add(tape, penalty, sq);
    first = false;
  }
  const Real coeff = static_cast<Real>(lambda / (2.0 * static_cast<double>(m)));
  return add(tape, ce, scale(tape, penalty, coeff));
}

std::pair<std::vector<Index>, std::vector<Index>> split_train_val(std::span<const Index> labels,
                                                                  Index train_parts,
                                                                  Index val_parts,
                                                                  std::uint64_t seed) {
  if (train_parts < 1 || val_parts < 1)
    throw std::invalid_argument("split: parts must be positive");
  Index max_label = -1;
  for (Index l : labels) {
    if (l < 0) throw std::invalid_argument("split: negative label");
    max_label = std::max(max_label, l);
  }
  std::vector<std::vector<Index>> groups(static_cast<std::size_t>(max_label + 1));
  for (std::size_t i = 0; i < labels.size(); ++i)
    groups[static_cast<std::size_t>(labels[i])].push_back(static_cast<Index>(i));

  const double val_frac =
      static_cast<double>(val_parts) / static_cast<double>(train_parts + val_parts);
  std::mt19937_64 rng(mix_seed(seed, 0));
  std::vector<Index> train, val;
  for (auto& g : groups) {
    if (g.empty()) continue;
    std::shuffle(g.begin(), g.end(), rng);
    const Index c = static_cast<Index>(g.size());
    Index n_val = std::max<Index>(1, static_cast<Index>(std::lround(val_frac * c)));
    if (n_val >= c) n_val = c - 1;  // a singleton class trains only
    val.insert(val.end(), g.begin(), g.begin() + n_val);
    train.insert(train.end(), g.begin() + n_val, g.end());
  }
  std::sort(train.begin(), train.end());
  std::sort(val.begin(), val.end());
  return {std::move(train), std::move(val)};
}

std::vector<Index> oversample(const std::vector<std::vector<Index>>& class_to_items, Index target,
                              std::uint64_t seed) {
  if (target < 0) throw std::invalid_argument("oversample: negative target");
  std::vector<Index> out;
  for (std::size_t cls = 0; cls < class_to_items.size(); ++cls) {
    const auto& items = class_to_items[cls];
    if (items.empty())
      throw std::invalid_argument("oversample: class " + std::to_string(cls) + " has no items");
    out.insert(out.end(), items.begin(), items.end());
    std::mt19937_64 rng(mix_seed(seed, static_cast<std::uint64_t>(cls)));
    std::uniform_int_distribution<std::size_t> pick(0, items.size() - 1);
    for (Index extra = static_cast<Index>(items.size()); extra < target; ++extra)
      out.push_back(items[pick(rng)]);
  }
  return out;
}

namespace {

std::vector<LabeledCube> subset(std::span<const LabeledCube> data,
                                std::span<const Index> indices) {
  std::vector<LabeledCube> out;
  out.reserve(indices.size());
  for (Index i : indices) out.push_back(data[static_cast<std::size_t>(i)]);
  return out;
}

Tensor assemble_batch(std::span<const LabeledCube* const> lookup, std::span<const Index> indices,
                      Index begin, Index end, std::vector<int>& labels_out) {
  const Shape& cube_shape =
      lookup[static_cast<std::size_t>(indices[static_cast<std::size_t>(begin)])]->cube.shape();
  Shape batch_shape;
  batch_shape.push_back(end - begin);
  batch_shape.insert(batch_shape.end(), cube_shape.begin(), cube_shape.end());
  Tensor batch(batch_shape);
  const Index per = numel(cube_shape);
  labels_out.clear();
  for (Index i = begin; i < end; ++i) {
    const LabeledCube& s = *lookup[static_cast<std::size_t>(indices[static_cast<std::size_t>(i)])];
    if (s.cube.shape() != cube_shape)
      throw std::invalid_argument("train batch: cube shape " + shape_str(s.cube.shape()) +
                                  " differs from " + shape_str(cube_shape));
    std::copy(s.cube.values().begin(), s.cube.values().end(), batch.data() + (i - begin) * per);
    labels_out.push_back(static_cast<int>(s.label));
  }
  return batch;
}

void write_csv_row(std::ostream& os, const EpochLog& e) {
  os << e.epoch << ',' << std::setprecision(17) << e.lr << ',' << e.train_loss << ','
     << e.val_loss << ',' << e.val_acc << ',' << e.wall_ms << '\n';
}

}  // namespace

TrainResult train_model(Model& model, std::span<const LabeledCube> data, const TrainConfig& config,
                        std::ostream* csv, const std::function<void(const EpochLog&)>& on_epoch,
                        const EpochResampler& resample) {
  validate(config);
  if (data.empty()) throw std::invalid_argument("train: empty dataset");
  const Index k = model.config.n_classes;
  std::vector<Index> labels;
  for (const LabeledCube& s : data) {
    if (s.label < 0 || s.label >= k)
      throw std::invalid_argument("train: label " + std::to_string(s.label) + " outside [0," +
                                  std::to_string(k) + ")");
    labels.push_back(s.label);
  }

  auto [train_idx, val_idx] =
      split_train_val(labels, config.split_train_parts, config.split_val_parts,
                      mix_seed(config.seed, 1));
  if (train_idx.empty()) throw std::invalid_argument("train: split left no training items");
  if (val_idx.empty()) throw std::invalid_argument("train: split left no validation items");

  if (config.oversample_target > 0) {
    std::vector<std::vector<Index>> by_class(static_cast<std::size_t>(k));
    for (Index i : train_idx)
      by_class[static_cast<std::size_t>(labels[static_cast<std::size_t>(i)])].push_back(i);
    std::erase_if(by_class, [](const auto& v) { return v.empty(); });
    train_idx = oversample(by_class, config.oversample_target, mix_seed(config.seed, 2));
  }

  const std::vector<LabeledCube> val_set = subset(data, val_idx);

  // Batches read through this indirection so a resampler can swap in fresh
  // training cubes while validation keeps pointing at the originals.
  std::vector<const LabeledCube*> lookup;
  lookup.reserve(data.size());
  for (const LabeledCube& s : data) lookup.push_back(&s);
  std::vector<Index> resample_targets = train_idx;
  std::sort(resample_targets.begin(), resample_targets.end());
  resample_targets.erase(std::unique(resample_targets.begin(), resample_targets.end()),
                         resample_targets.end());

  auto params = model.parameters();
  AdamState adam = make_adam_state(params);
  std::mt19937_64 dropout_rng(mix_seed(config.seed, 4));

  TrainResult result;
  std::vector<double> val_history;
  if (csv) *csv << "epoch,lr,train_loss,val_loss,val_acc,wall_ms\n";

  for (Index epoch = 0; epoch < config.max_epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    const double lr = lr_at(config, epoch);
    std::vector<Index> order = train_idx;
    std::mt19937_64 shuffle_rng(mix_seed(config.seed, 3 + static_cast<std::uint64_t>(epoch)));
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    std::vector<LabeledCube> fresh;
    if (resample) {
      fresh = resample(epoch, resample_targets);
      if (fresh.size() != resample_targets.size())
        throw std::invalid_argument("train resample: got " + std::to_string(fresh.size()) +
                                    " cubes for " + std::to_string(resample_targets.size()) +
                                    " indices");
      for (std::size_t j = 0; j < fresh.size(); ++j) {
        const std::size_t di = static_cast<std::size_t>(resample_targets[j]);
        if (fresh[j].label != data[di].label)
          throw std::invalid_argument("train resample: label changed at index " +
                                      std::to_string(resample_targets[j]));
        lookup[di] = &fresh[j];
      }
    }

    double train_loss_sum = 0.0;
    const Index n_train = static_cast<Index>(order.size());
    std::vector<int> batch_labels;
    for (Index begin = 0; begin < n_train; begin += config.batch_size) {
      const Index end = std::min(n_train, begin + config.batch_size);
      Tensor batch = assemble_batch(lookup, order, begin, end, batch_labels);
      Tape tape;
      Tensor logits = forward(tape, model, batch, true, &dropout_rng);
      Tensor loss = loss_total(tape, model, logits, batch_labels, config.lambda);
      for (Tensor& p : params) p.zero_grad();
      tape.backward(loss);
      adam_step(adam, params, lr, config);
      train_loss_sum += static_cast<double>(loss[0]) * static_cast<double>(end - begin);
    }

    EpochLog log;
    log.epoch = epoch;
    log.lr = lr;
    log.train_loss = train_loss_sum / static_cast<double>(n_train);
    log.val_loss = evaluate_loss(model, val_set, config.batch_size);
    log.val_acc = evaluate(model, val_set, config.batch_size).accuracy;
    log.wall_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                      std::chrono::steady_clock::now() - t0)
                      .count();
    if (csv) write_csv_row(*csv, log);
    if (on_epoch) on_epoch(log);
    result.epochs.push_back(log);
    val_history.push_back(log.val_loss);

    if (early_stop(val_history, config.early_stop_threshold, config.early_stop_window)) {
      result.early_stopped = true;
      break;
    }
  }

  result.final_val_loss = result.epochs.back().val_loss;
  result.final_val_acc = result.epochs.back().val_acc;
  return result;
}

}  // namespace mvc3d
