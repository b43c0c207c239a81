#include "mvc3d/model.hpp"

namespace mvc3d {

namespace {

constexpr Real kInitStddev = Real(0.05);

// Pools follow conv layers 0, 1, 3, 5, 7; only the first keeps the view axis.
const PoolSpec* pool_after(int layer) {
  switch (layer) {
    case 0: return &kPoolSpatial;
    case 1:
    case 3:
    case 5:
    case 7: return &kPoolCube;
    default: return nullptr;
  }
}

const char* conv_name(int layer) {
  static const char* names[kConvLayers] = {"Conv1",  "Conv2",  "Conv3a", "Conv3b",
                                           "Conv4a", "Conv4b", "Conv5a", "Conv5b"};
  return names[layer];
}

int pool_number(int layer) {
  switch (layer) {
    case 0: return 1;
    case 1: return 2;
    case 3: return 3;
    case 5: return 4;
    default: return 5;
  }
}

struct StageDims {
  Index views, h, w;
};

Index layer_c_in(const ModelConfig& c, int layer) { return layer == 0 ? 3 : c.channels[layer - 1]; }

}  // namespace

ConvPattern conv_pattern_from_string(const std::string& s) {
  if (s == "joint3d") return ConvPattern::joint3d;
  if (s == "independent2d") return ConvPattern::independent2d;
  throw std::invalid_argument("conv pattern '" + s + "' (want joint3d or independent2d)");
}

std::string to_string(ConvPattern p) {
  return p == ConvPattern::joint3d ? "joint3d" : "independent2d";
}

void validate(const ModelConfig& c) {
  if (c.n_views < 1)
    throw std::invalid_argument("model config: n_views " + std::to_string(c.n_views));
  if (c.n_classes < 2)
    throw std::invalid_argument("model config: n_classes " + std::to_string(c.n_classes) +
                                " (need at least 2)");
  if (c.image_size < 4)
    throw std::invalid_argument("model config: image_size " + std::to_string(c.image_size));
  for (Index v : c.viewpoint_schedule)
    if (v < 1 || v % 2 == 0)
      throw std::invalid_argument("model config: view extent " + std::to_string(v) +
                                  " must be odd and positive");
  for (Index ch : c.channels)
    if (ch < 1) throw std::invalid_argument("model config: nonpositive channel width");
  if (c.fc2_dim < 1 || c.fc3_dim < 1)
    throw std::invalid_argument("model config: nonpositive fully connected width");
  if (c.dropout_rate < 0.0 || c.dropout_rate >= 1.0)
    throw std::invalid_argument("model config: dropout rate " + std::to_string(c.dropout_rate));
}

std::array<Index, kConvLayers> schedule_preset(const std::string& name) {
  if (name == "fixed-1") return {1, 1, 1, 1, 1, 1, 1, 1};
  if (name == "fixed-3") return {3, 3, 3, 3, 3, 3, 3, 3};
  if (name == "fixed-5") return {5, 5, 5, 5, 5, 5, 5, 5};
  if (name == "fixed-7") return {7, 7, 7, 7, 7, 7, 7, 7};
  if (name == "increasing") return {1, 1, 3, 3, 5, 5, 7, 7};
  if (name == "decreasing") return {7, 5, 5, 5, 3, 3, 1, 1};
  throw std::invalid_argument("schedule '" + name +
                              "' (want fixed-1/3/5/7, increasing, decreasing)");
}

void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = nlohmann::json{{"n_views", c.n_views},
                     {"n_classes", c.n_classes},
                     {"image_size", c.image_size},
                     {"viewpoint_schedule", c.viewpoint_schedule},
                     {"channels", c.channels},
                     {"fc2_dim", c.fc2_dim},
                     {"fc3_dim", c.fc3_dim},
                     {"conv_pattern", to_string(c.conv_pattern)},
                     {"dropout_rate", c.dropout_rate},
                     {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, ModelConfig& c) {
  j.at("n_views").get_to(c.n_views);
  j.at("n_classes").get_to(c.n_classes);
  j.at("image_size").get_to(c.image_size);
  j.at("viewpoint_schedule").get_to(c.viewpoint_schedule);
  j.at("channels").get_to(c.channels);
  j.at("fc2_dim").get_to(c.fc2_dim);
  j.at("fc3_dim").get_to(c.fc3_dim);
  c.conv_pattern = conv_pattern_from_string(j.at("conv_pattern").get<std::string>());
  j.at("dropout_rate").get_to(c.dropout_rate);
  j.at("seed").get_to(c.seed);
}

std::vector<Tensor> Model::parameters() const {
  std::vector<Tensor> out;
  for (const auto& layer : conv) {
    if (config.conv_pattern == ConvPattern::joint3d) {
      out.push_back(layer.weight);
    } else {
      out.insert(out.end(), layer.per_view.begin(), layer.per_view.end());
    }
    out.push_back(layer.bias);
  }
  for (const Tensor& t : {fc1_w, fc1_b, fc2_w, fc2_b, fc3_w, fc3_b}) out.push_back(t);
  return out;
}

std::vector<std::string> Model::parameter_names() const {
  std::vector<std::string> out;
  for (int l = 0; l < kConvLayers; ++l) {
    const std::string base = "conv" + std::to_string(l + 1);
    if (config.conv_pattern == ConvPattern::joint3d) {
      out.push_back(base + ".weight");
    } else {
      for (std::size_t v = 0; v < conv[l].per_view.size(); ++v)
        out.push_back(base + ".view" + std::to_string(v) + ".weight");
    }
    out.push_back(base + ".bias");
  }
  for (const char* n : {"fc1.weight", "fc1.bias", "fc2.weight", "fc2.bias", "fc3.weight",
                        "fc3.bias"})
    out.push_back(n);
  return out;
}

std::vector<Tensor> Model::weight_parameters() const {
  std::vector<Tensor> out;
  for (const auto& layer : conv) {
    if (config.conv_pattern == ConvPattern::joint3d) {
      out.push_back(layer.weight);
    } else {
      out.insert(out.end(), layer.per_view.begin(), layer.per_view.end());
    }
  }
  for (const Tensor& t : {fc1_w, fc2_w, fc3_w}) out.push_back(t);
  return out;
}

namespace {

// View/spatial extents seen by each conv layer, walking the pool ladder.
std::array<StageDims, kConvLayers> stage_dims(const ModelConfig& c) {
  std::array<StageDims, kConvLayers> dims;
  StageDims cur{c.n_views, c.image_size, c.image_size};
  for (int l = 0; l < kConvLayers; ++l) {
    dims[l] = cur;
    if (const PoolSpec* p = pool_after(l)) {
      cur.views = pooled_views(cur.views, p->sv);
      cur.h = pooled_spatial(cur.h, p->kh, p->sh);
      cur.w = pooled_spatial(cur.w, p->kw, p->sw);
    }
  }
  return dims;
}

Index flatten_dim_of(const ModelConfig& c) {
  const auto dims = stage_dims(c);
  const PoolSpec& p = kPoolCube;
  const Index v5 = pooled_views(dims[7].views, p.sv);
  const Index h5 = pooled_spatial(dims[7].h, p.kh, p.sh);
  const Index w5 = pooled_spatial(dims[7].w, p.kw, p.sw);
  return c.channels[7] * v5 * h5 * w5;
}

}  // namespace

Model build_model(const ModelConfig& config) {
  validate(config);
  Model m;
  m.config = config;
  std::mt19937_64 rng(mix_seed(config.seed, 0));
  const auto dims = stage_dims(config);

  for (int l = 0; l < kConvLayers; ++l) {
    ConvLayer layer;
    layer.view_extent = config.viewpoint_schedule[l];
    const Index ci = layer_c_in(config, l), co = config.channels[l];
    if (config.conv_pattern == ConvPattern::joint3d) {
      auto k = Conv3dKernel<Real>::gaussian(co, ci, layer.view_extent, rng, kInitStddev);
      layer.weight = k.weight;
      layer.bias = k.bias;
    } else {
      for (Index v = 0; v < dims[l].views; ++v)
        layer.per_view.push_back(Tensor::randn(Shape{co, ci, 3, 3}, rng, kInitStddev));
      layer.bias = Tensor(Shape{co});
    }
    m.conv.push_back(std::move(layer));
  }

  m.flatten_dim = flatten_dim_of(config);
  m.fc1_w = Tensor::randn(Shape{m.flatten_dim, config.fc2_dim}, rng, kInitStddev);
  m.fc1_b = Tensor(Shape{config.fc2_dim});
  m.fc2_w = Tensor::randn(Shape{config.fc2_dim, config.fc3_dim}, rng, kInitStddev);
  m.fc2_b = Tensor(Shape{config.fc3_dim});
  m.fc3_w = Tensor::randn(Shape{config.fc3_dim, config.n_classes}, rng, kInitStddev);
  m.fc3_b = Tensor(Shape{config.n_classes});

  for (Tensor& p : m.parameters()) p.set_requires_grad(true);
  return m;
}

namespace {

Tensor forward_trunk(Tape& tape, Model& model, const Tensor& batch, bool training,
                     std::mt19937_64* dropout_rng, bool features_only) {
  const ModelConfig& c = model.config;
  if (batch.rank() != 5)
    throw std::invalid_argument("forward: batch shape " + shape_str(batch.shape()) +
                                ", expected [B,3,N,H,W]");
  if (batch.dim(1) != 3 || batch.dim(2) != c.n_views)
    throw std::invalid_argument("forward: batch views " + std::to_string(batch.dim(2)) +
                                " do not match model n_views " + std::to_string(c.n_views));
  if (training && c.dropout_rate > 0.0 && dropout_rng == nullptr)
    throw std::invalid_argument("forward: training with dropout needs an rng");

  const Index B = batch.dim(0);
  std::vector<Tensor> rows;
  rows.reserve(static_cast<std::size_t>(B));
  for (Index b = 0; b < B; ++b) {
    Tensor x = slice0(tape, batch, b);
    for (int l = 0; l < kConvLayers; ++l) {
      ConvLayer& layer = model.conv[l];
      if (c.conv_pattern == ConvPattern::joint3d) {
        Conv3dKernel<Real> k{layer.weight, layer.bias};
        x = conv3d(tape, x, k);
      } else {
        x = conv2d_independent(tape, x, layer.per_view, layer.bias);
      }
      x = relu(tape, x);
      if (const PoolSpec* p = pool_after(l)) x = maxpool3d(tape, x, *p).first;
    }
    rows.push_back(reshape(tape, x, Shape{model.flatten_dim}));
  }
  Tensor flat = stack0(tape, rows);

  Tensor h1 = relu(tape, fully_connected(tape, flat, model.fc1_w, model.fc1_b));
  if (training && c.dropout_rate > 0.0)
    h1 = dropout(tape, h1, c.dropout_rate, true, *dropout_rng);
  Tensor h2 = relu(tape, fully_connected(tape, h1, model.fc2_w, model.fc2_b));
  if (features_only) return h2;
  if (training && c.dropout_rate > 0.0)
    h2 = dropout(tape, h2, c.dropout_rate, true, *dropout_rng);
  return fully_connected(tape, h2, model.fc3_w, model.fc3_b);
}

}  // namespace

Tensor forward(Tape& tape, Model& model, const Tensor& batch, bool training,
               std::mt19937_64* dropout_rng) {
  return forward_trunk(tape, model, batch, training, dropout_rng, false);
}

Tensor extract_features(Model& model, const Tensor& batch) {
  Tape off(false);
  Tensor f = forward_trunk(off, model, batch, false, nullptr, true);
  const Index B = f.dim(0), d = f.dim(1);
  for (Index r = 0; r < B; ++r) {
    Real* row = f.data() + r * d;
    Real norm2 = 0;
    for (Index j = 0; j < d; ++j) norm2 += row[j] * row[j];
    const Real norm = std::sqrt(norm2);
    if (norm > Real(1e-30))
      for (Index j = 0; j < d; ++j) row[j] /= norm;
  }
  return f;
}

std::vector<ShapeRow> shape_plan(const ModelConfig& c) {
  validate(c);
  std::vector<ShapeRow> rows;
  rows.push_back({"Input", {3, c.n_views, c.image_size, c.image_size}});
  StageDims cur{c.n_views, c.image_size, c.image_size};
  for (int l = 0; l < kConvLayers; ++l) {
    rows.push_back({conv_name(l), {cur.views, cur.h, cur.w, c.channels[l]}});
    if (const PoolSpec* p = pool_after(l)) {
      cur.views = pooled_views(cur.views, p->sv);
      cur.h = pooled_spatial(cur.h, p->kh, p->sh);
      cur.w = pooled_spatial(cur.w, p->kw, p->sw);
      rows.push_back({"Pool" + std::to_string(pool_number(l)),
                      {cur.views, cur.h, cur.w, c.channels[l]}});
    }
  }
  rows.push_back({"Fc1", {c.fc2_dim}});
  rows.push_back({"Fc2", {c.fc3_dim}});
  rows.push_back({"Fc3", {c.n_classes}});
  rows.push_back({"Softmax", {c.n_classes}});
  return rows;
}

ParamCount param_count(const ModelConfig& c) {
  validate(c);
  ParamCount pc;
  const auto dims = stage_dims(c);
  for (int l = 0; l < kConvLayers; ++l) {
    const Index ci = layer_c_in(c, l), co = c.channels[l];
    if (c.conv_pattern == ConvPattern::joint3d) {
      pc.total += co * ci * c.viewpoint_schedule[l] * 9 + co;
    } else {
      pc.total += dims[l].views * co * ci * 9 + co;
    }
  }
  const Index d1 = flatten_dim_of(c), d2 = c.fc2_dim, d3 = c.fc3_dim, k = c.n_classes;
  pc.fc = d1 * d2 + d2 * d3 + d3 * k;
  pc.total += pc.fc + d2 + d3 + k;
  return pc;
}

}  // namespace mvc3d
