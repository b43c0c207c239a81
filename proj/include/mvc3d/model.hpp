#pragma once

#include <array>
#include <optional>
#include <string>

#include <json.hpp>

#include "mvc3d/conv.hpp"
#include "mvc3d/pool.hpp"

namespace mvc3d {

using Tensor = TensorT<Real>;
using Tape = TapeT<Real>;

// joint3d convolves across neighboring views with v x 3 x 3 kernels;
// independent2d is the ablation where every view keeps its own 2D kernels and
// views never mix before the flatten.
enum class ConvPattern { joint3d, independent2d };

ConvPattern conv_pattern_from_string(const std::string& s);
std::string to_string(ConvPattern p);

inline constexpr int kConvLayers = 8;

struct ModelConfig {
  Index n_views = 12;
  Index n_classes = 40;
  Index image_size = 112;  // square input; 32 is the fast-test scale
  std::array<Index, kConvLayers> viewpoint_schedule{3, 3, 3, 3, 3, 3, 3, 3};
  std::array<Index, kConvLayers> channels{64, 128, 256, 256, 512, 512, 512, 512};
  Index fc2_dim = 4096;  // width of the first fully connected layer
  Index fc3_dim = 4096;  // width of the second (feature) layer
  ConvPattern conv_pattern = ConvPattern::joint3d;
  double dropout_rate = 0.5;
  std::uint64_t seed = 0;
};

void validate(const ModelConfig& config);

// Named view-extent schedules: "fixed-1/3/5/7", "increasing" (1-1-3-3-5-5-7-7),
// "decreasing" (7-5-5-5-3-3-1-1).
std::array<Index, kConvLayers> schedule_preset(const std::string& name);

void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);

struct ConvLayer {
  Index view_extent = 3;
  Tensor weight;                  // joint3d: [C_out, C_in, v, 3, 3]
  std::vector<Tensor> per_view;   // independent2d: V x [C_out, C_in, 3, 3]
  Tensor bias;                    // [C_out]
};

struct Model {
  ModelConfig config;
  std::vector<ConvLayer> conv;  // 8 layers; pools sit after layers 0, 1, 3, 5, 7
  Tensor fc1_w, fc1_b;
  Tensor fc2_w, fc2_b;
  Tensor fc3_w, fc3_b;
  Index flatten_dim = 0;

  // Fixed registry order: conv1..conv8 (weights then bias), fc1..fc3.
  std::vector<Tensor> parameters() const;
  std::vector<std::string> parameter_names() const;
  std::vector<Tensor> weight_parameters() const;  // regularized set: no biases
};

Model build_model(const ModelConfig& config);

// batch: [B, 3, N, H, W] with values in [0, 1]. Returns logits [B, n_classes].
// Dropout draws from dropout_rng when training.
Tensor forward(Tape& tape, Model& model, const Tensor& batch, bool training,
               std::mt19937_64* dropout_rng = nullptr);

// Post-ReLU activations of the second fully connected layer, one unit-norm row
// per sample: [B, fc3_dim]. Runs in inference mode.
Tensor extract_features(Model& model, const Tensor& batch);

struct ShapeRow {
  std::string name;
  Shape extents;  // conv/pool rows as (views, H, W, channels); Input as (3, N, H, W)
};

std::vector<ShapeRow> shape_plan(const ModelConfig& config);

struct ParamCount {
  Index total = 0;
  Index fc = 0;  // d1*d2 + d2*d3 + d3*k
};

ParamCount param_count(const ModelConfig& config);

}  // namespace mvc3d
