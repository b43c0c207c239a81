#include "mvc3d/verify.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iomanip>
#include <random>
#include <sstream>

#include "mvc3d/conv.hpp"
#include "mvc3d/gradcheck.hpp"
#include "mvc3d/ops.hpp"
#include "mvc3d/train.hpp"

namespace mvc3d {

namespace {

using Clock = std::chrono::steady_clock;

CheckResult timed(const std::string& name, const std::function<std::string()>& body) {
  CheckResult r;
  r.name = name;
  const auto t0 = Clock::now();
  try {
    r.detail = body();
    r.passed = r.detail.empty();
  } catch (const std::exception& e) {
    r.passed = false;
    r.detail = std::string("exception: ") + e.what();
  }
  r.ms = std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
  return r;
}

// Independently tabulated layer rows for the full-resolution network. The
// view column after each pool stage is written out per input count rather
// than recomputed with the production rounding helpers.
std::vector<ShapeRow> expected_rows(Index n_views, const std::array<Index, 5>& pooled) {
  const Index k = 40;
  std::vector<ShapeRow> rows;
  rows.push_back({"Input", {3, n_views, 112, 112}});
  rows.push_back({"Conv1", {n_views, 112, 112, 64}});
  rows.push_back({"Pool1", {pooled[0], 56, 56, 64}});
  rows.push_back({"Conv2", {pooled[0], 56, 56, 128}});
  rows.push_back({"Pool2", {pooled[1], 28, 28, 128}});
  rows.push_back({"Conv3a", {pooled[1], 28, 28, 256}});
  rows.push_back({"Conv3b", {pooled[1], 28, 28, 256}});
  rows.push_back({"Pool3", {pooled[2], 14, 14, 256}});
  rows.push_back({"Conv4a", {pooled[2], 14, 14, 512}});
  rows.push_back({"Conv4b", {pooled[2], 14, 14, 512}});
  rows.push_back({"Pool4", {pooled[3], 7, 7, 512}});
  rows.push_back({"Conv5a", {pooled[3], 7, 7, 512}});
  rows.push_back({"Conv5b", {pooled[3], 7, 7, 512}});
  rows.push_back({"Pool5", {pooled[4], 4, 4, 512}});
  rows.push_back({"Fc1", {4096}});
  rows.push_back({"Fc2", {4096}});
  rows.push_back({"Fc3", {k}});
  rows.push_back({"Softmax", {k}});
  return rows;
}

// Reference convolution: literal six-loop summation with zero padding.
std::vector<Real> direct_conv3d(const Tensor& in, const Conv3dKernel<Real>& k) {
  const Index Ci = k.c_in(), Co = k.c_out(), kv = k.view_extent();
  const Index V = in.dim(1), H = in.dim(2), W = in.dim(3);
  const Index pv = (kv - 1) / 2;
  std::vector<Real> out(static_cast<std::size_t>(Co * V * H * W), Real(0));
  auto in_at = [&](Index c, Index v, Index y, Index x) -> Real {
    if (v < 0 || v >= V || y < 0 || y >= H || x < 0 || x >= W) return Real(0);
    return in[((c * V + v) * H + y) * W + x];
  };
  for (Index co = 0; co < Co; ++co)
    for (Index v = 0; v < V; ++v)
      for (Index y = 0; y < H; ++y)
        for (Index x = 0; x < W; ++x) {
          double acc = static_cast<double>(k.bias[co]);
          for (Index ci = 0; ci < Ci; ++ci)
            for (Index dv = 0; dv < kv; ++dv)
              for (Index dy = 0; dy < 3; ++dy)
                for (Index dx = 0; dx < 3; ++dx)
                  acc += static_cast<double>(
                             k.weight[(((co * Ci + ci) * kv + dv) * 3 + dy) * 3 + dx]) *
                         static_cast<double>(in_at(ci, v + dv - pv, y + dy - 1, x + dx - 1));
          out[static_cast<std::size_t>(((co * V + v) * H + y) * W + x)] = static_cast<Real>(acc);
        }
  return out;
}

ModelConfig toy_config() {
  ModelConfig c;
  c.n_views = 2;
  c.n_classes = 3;
  c.image_size = 8;
  c.channels = {2, 2, 2, 2, 3, 3, 3, 3};
  c.fc2_dim = 8;
  c.fc3_dim = 8;
  c.dropout_rate = 0.0;
  c.seed = 5;
  return c;
}

std::string shape_mismatch(Index n, const ShapeRow& got, const ShapeRow& want) {
  std::ostringstream os;
  os << "N=" << n << " row '" << want.name << "': got ";
  if (got.name != want.name) os << "row '" << got.name << "' ";
  os << shape_str(got.extents) << ", want " << shape_str(want.extents);
  return os.str();
}

}  // namespace

CheckResult check_layer_table(const PlanProvider& provider) {
  const PlanProvider plan = provider ? provider : [](const ModelConfig& c) { return shape_plan(c); };
  return timed("layer-table", [&]() -> std::string {
    struct Ladder {
      Index n;
      std::array<Index, 5> pooled;
    };
    const Ladder ladders[] = {{8, {8, 4, 2, 1, 1}},
                              {12, {12, 6, 3, 1, 1}},
                              {16, {16, 8, 4, 2, 1}},
                              {20, {20, 10, 5, 2, 1}},
                              {36, {36, 18, 9, 4, 2}}};
    for (const Ladder& lad : ladders) {
      ModelConfig c;
      c.n_views = lad.n;
      const auto want = expected_rows(lad.n, lad.pooled);
      const auto got = plan(c);
      if (got.size() != want.size())
        return "N=" + std::to_string(lad.n) + ": " + std::to_string(got.size()) + " rows, want " +
               std::to_string(want.size());
      for (std::size_t i = 0; i < want.size(); ++i)
        if (got[i].name != want[i].name || got[i].extents != want[i].extents)
          return shape_mismatch(lad.n, got[i], want[i]);
    }
    return "";
  });
}

CheckResult check_conv_oracle(int cases, double tol) {
  return timed("conv-oracle", [&]() -> std::string {
    std::mt19937_64 rng(12345);
    auto draw = [&](Index lo, Index hi) {
      return std::uniform_int_distribution<Index>(lo, hi)(rng);
    };
    for (int i = 0; i < cases; ++i) {
      const Index ci = draw(1, 4), co = draw(1, 4);
      const Index v = 2 * draw(0, 2) + 1;
      const Index V = draw(1, 6), H = draw(3, 6), W = draw(3, 6);
      Tensor in = Tensor::randn(Shape{ci, V, H, W}, rng, Real(1));
      Conv3dKernel<Real> k{Tensor::randn(Shape{co, ci, v, 3, 3}, rng, Real(1)),
                           Tensor::randn(Shape{co}, rng, Real(1))};
      Tape tape = Tape::disabled();
      Tensor got = conv3d(tape, in, k);
      const std::vector<Real> want = direct_conv3d(in, k);
      for (Index j = 0; j < got.size(); ++j) {
        const double err = std::abs(static_cast<double>(got[j]) -
                                    static_cast<double>(want[static_cast<std::size_t>(j)]));
        if (err > tol)
          return "case " + std::to_string(i) + " element " + std::to_string(j) + ": |diff| " +
                 std::to_string(err);
      }
    }
    return "";
  });
}

CheckResult check_gradients(double tol) {
  return timed("gradient-spot", [&]() -> std::string {
    ModelConfig mc = toy_config();
    Model model = build_model(mc);
    // The production 0.05-sigma init contracts this deep stack's activations
    // to ~1e-5, pushing true early-layer gradients below the central
    // difference noise floor (~|f| * 2^-52 / eps). The wiring check therefore
    // runs at an amplified weight point where derivatives are O(1).
    for (Tensor& p : model.parameters())
      for (Index i = 0; i < p.size(); ++i) p[i] *= Real(8);
    std::mt19937_64 rng(31);
    const Tensor batch =
        Tensor::randn(Shape{1, 3, mc.n_views, mc.image_size, mc.image_size}, rng, Real(0.5));
    const std::vector<int> labels = {1};

    auto objective = [&]() {
      Tape t = Tape::disabled();
      Tensor logits = forward(t, model, batch, false, nullptr);
      Tensor loss = cross_entropy_mean(t, logits, labels);
      return loss[0];
    };

    Tape tape;
    Tensor logits = forward(tape, model, batch, false, nullptr);
    Tensor loss = cross_entropy_mean(tape, logits, labels);
    for (Tensor& p : model.parameters()) p.zero_grad();
    tape.backward(loss);

    for (Tensor* p : {&model.conv[0].weight, &model.fc3_w, &model.fc3_b}) {
      const std::vector<Real> analytic(p->grad().begin(), p->grad().end());
      const FiniteDiffReport rep =
          finite_diff_check(objective, *p, std::span<const Real>(analytic));
      if (rep.checked == 0) return "all coordinates excluded as kinks";
      if (rep.max_rel_error >= tol)
        return "max rel error " + std::to_string(rep.max_rel_error) + " at flat index " +
               std::to_string(rep.worst_index);
    }
    return "";
  });
}

CheckResult check_single_view_equivalence(double tol) {
  return timed("single-view-2d", [&]() -> std::string {
    std::mt19937_64 rng(77);
    const Index Ci = 2, Co = 3, V = 3, HW = 5;
    Tensor in = Tensor::randn(Shape{Ci, V, HW, HW}, rng, Real(1));
    Conv3dKernel<Real> k{Tensor::randn(Shape{Co, Ci, 1, 3, 3}, rng, Real(1)),
                         Tensor::randn(Shape{Co}, rng, Real(1))};
    Tensor tied(Shape{Co, Ci, 3, 3});
    std::copy(k.weight.values().begin(), k.weight.values().end(), tied.data());
    std::vector<Tensor> per_view(static_cast<std::size_t>(V), tied);

    Tape tape = Tape::disabled();
    Tensor joint = conv3d(tape, in, k);
    Tensor split = conv2d_independent(tape, in, per_view, k.bias);
    for (Index i = 0; i < joint.size(); ++i)
      if (std::abs(static_cast<double>(joint[i]) - static_cast<double>(split[i])) > tol)
        return "element " + std::to_string(i) + " differs by " +
               std::to_string(std::abs(static_cast<double>(joint[i] - split[i])));
    return "";
  });
}

CheckResult check_lr_decades() {
  return timed("lr-decades", [&]() -> std::string {
    TrainConfig c;
    const std::pair<Index, double> want[] = {
        {0, 1e-4}, {19, 1e-4}, {20, 1e-5}, {39, 1e-5}, {40, 1e-6}, {59, 1e-6}};
    for (const auto& [epoch, lr] : want)
      if (lr_at(c, epoch) != lr)
        return "epoch " + std::to_string(epoch) + ": lr " + std::to_string(lr_at(c, epoch)) +
               ", want exactly " + std::to_string(lr);
    return "";
  });
}

CheckResult check_early_stop(int sequences) {
  return timed("early-stop", [&]() -> std::string {
    const std::vector<double> settles = {1.0, 0.999, 0.9985, 0.998, 0.9978, 0.9976, 0.9975};
    if (!early_stop(settles, 1e-3, 5)) return "settled sequence did not stop";
    const std::vector<double> improving = {1.0, 0.9, 0.8, 0.7, 0.6, 0.5, 0.4};
    if (early_stop(improving, 1e-3, 5)) return "improving sequence stopped";
    const std::vector<double> rising = {1.0, 1.01, 1.02, 1.03, 1.04, 1.05, 1.06};
    if (!early_stop(rising, 1e-3, 5)) return "rising sequence did not stop";

    std::mt19937_64 rng(99);
    std::uniform_real_distribution<double> loss_d(0.1, 2.0);
    std::uniform_int_distribution<int> len_d(6, 12);
    for (int s = 0; s < sequences; ++s) {
      std::vector<double> losses(static_cast<std::size_t>(len_d(rng)));
      for (double& l : losses) l = loss_d(rng);
      if (early_stop(losses, 1e-3, 5) && !early_stop(losses, 1e-2, 5))
        return "sequence " + std::to_string(s) + " stopped at 1e-3 but not at 1e-2";
      if (early_stop(losses, 1e-3, 5) && !early_stop(losses, 1e-3, 3))
        return "sequence " + std::to_string(s) + " stopped at window 5 but not 3";
    }
    return "";
  });
}

CheckResult check_oversample() {
  return timed("oversample", [&]() -> std::string {
    std::vector<std::vector<Index>> classes = {{0, 1, 2}, {3, 4, 5, 6, 7, 8, 9, 10}, {11}};
    const auto out = oversample(classes, 6, 77);
    const auto again = oversample(classes, 6, 77);
    if (out != again) return "same seed gave different draws";
    std::vector<Index> counts(3, 0);
    for (Index i : out) {
      for (std::size_t c = 0; c < classes.size(); ++c)
        if (std::find(classes[c].begin(), classes[c].end(), i) != classes[c].end())
          ++counts[static_cast<Index>(c)];
    }
    const Index want[] = {6, 8, 6};
    for (std::size_t c = 0; c < 3; ++c)
      if (counts[static_cast<Index>(c)] != want[c])
        return "class " + std::to_string(c) + " count " +
               std::to_string(counts[static_cast<Index>(c)]) + ", want " + std::to_string(want[c]);
    for (const auto& cls : classes)
      for (Index i : cls)
        if (std::find(out.begin(), out.end(), i) == out.end())
          return "original item " + std::to_string(i) + " was dropped";
    return "";
  });
}

CheckResult check_uniform_loss() {
  return timed("uniform-loss", [&]() -> std::string {
    for (Index k : {2, 5, 40}) {
      Tape tape;
      Tensor logits(Shape{4, k});
      Tensor loss = cross_entropy_mean(tape, logits, {0, 1, 0, static_cast<int>(k - 1)});
      const double want = std::log(static_cast<double>(k));
      if (std::abs(static_cast<double>(loss[0]) - want) > 1e-12)
        return "k=" + std::to_string(k) + ": loss " + std::to_string(loss[0]) + ", want ln k";
    }
    return "";
  });
}

std::vector<CheckResult> run_verification() {
  return {check_layer_table(),  check_conv_oracle(),     check_gradients(),
          check_single_view_equivalence(), check_lr_decades(), check_early_stop(),
          check_oversample(),   check_uniform_loss()};
}

std::string format_report(const std::vector<CheckResult>& results) {
  std::ostringstream os;
  for (const CheckResult& r : results) {
    os << (r.passed ? "[PASS] " : "[FAIL] ") << r.name << " (" << std::fixed
       << std::setprecision(1) << r.ms << " ms)";
    if (!r.passed) os << ": " << r.detail;
    os << '\n';
  }
  return os.str();
}

}  // namespace mvc3d
