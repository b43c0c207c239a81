#pragma once

#include <functional>
#include <iosfwd>
#include <utility>

#include "mvc3d/metrics.hpp"

namespace mvc3d {

struct TrainConfig {
  double initial_lr = 1e-4;
  Index lr_decay_every = 20;       // epochs between tenfold learning-rate cuts
  double lr_decay_factor = 10.0;
  double lambda = 5e-4;            // weight penalty; scaled by 1/(2m) over weight elements
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  Index batch_size = 8;
  Index max_epochs = 100;
  double early_stop_threshold = 1e-3;
  Index early_stop_window = 5;     // consecutive small relative drops required to stop
  Index oversample_target = 0;     // minimum samples per class after duplication; 0 disables
  Index split_train_parts = 4;     // stratified split ratio train:val
  Index split_val_parts = 1;
  std::uint64_t seed = 0;
};

void validate(const TrainConfig& c);

// Learning rate for a zero-based epoch: the initial rate divided by
// decay_factor^(epoch / decay_every). Exact at the decade boundaries.
double lr_at(const TrainConfig& c, Index epoch);

// True when each of the last `window` relative improvements
// (previous - current) / current stays below the threshold.
// Needs window + 1 recorded losses.
bool early_stop(std::span<const double> losses, double threshold, Index window);

struct AdamState {
  std::vector<std::vector<Real>> m;  // first-moment estimate per parameter
  std::vector<std::vector<Real>> v;  // second-moment estimate per parameter
  Index t = 0;                       // completed steps
};

AdamState make_adam_state(std::span<const Tensor> params);

// One bias-corrected update over all parameters; missing gradients act as zero.
void adam_step(AdamState& state, std::span<Tensor> params, double lr, const TrainConfig& c);

// Element count of the regularized (bias-free) parameter set.
Index regularized_element_count(const Model& model);

// Training objective: mean cross entropy plus lambda / (2m) times the squared
// weight norm, built on the tape so backward covers both terms.
Tensor loss_total(Tape& tape, Model& model, const Tensor& logits, const std::vector<int>& labels,
                  double lambda);

// Stratified index split: per class, about val_parts/(train+val) of the items go
// to validation (at least one when the class has two or more items).
std::pair<std::vector<Index>, std::vector<Index>> split_train_val(std::span<const Index> labels,
                                                                  Index train_parts,
                                                                  Index val_parts,
                                                                  std::uint64_t seed);

// Duplicates items of small classes until every class reaches `target`.
// Input maps class -> item indices; output is the flat oversampled index list.
std::vector<Index> oversample(const std::vector<std::vector<Index>>& class_to_items, Index target,
                              std::uint64_t seed);

struct EpochLog {
  Index epoch = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_acc = 0.0;
  std::int64_t wall_ms = 0;
};

struct TrainResult {
  std::vector<EpochLog> epochs;
  bool early_stopped = false;
  double final_val_loss = 0.0;
  double final_val_acc = 0.0;
};

// Rebuilds the cubes at the given dataset indices at the start of an epoch,
// e.g. with fresh random view starts. Must return one cube per index, in
// order, with unchanged labels. Validation items are never resampled.
using EpochResampler =
    std::function<std::vector<LabeledCube>(Index epoch, std::span<const Index> indices)>;

// Full training loop: stratified split, optional oversampling, per-epoch
// shuffling, Adam updates, validation, early stopping. All randomness derives
// from config.seed, so identical inputs give identical runs. Per-epoch rows go
// to `csv` when provided (header `epoch,lr,train_loss,val_loss,val_acc,wall_ms`).
TrainResult train_model(Model& model, std::span<const LabeledCube> data, const TrainConfig& config,
                        std::ostream* csv = nullptr,
                        const std::function<void(const EpochLog&)>& on_epoch = {},
                        const EpochResampler& resample = {});

}  // namespace mvc3d
