#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "mvc3d/checkpoint.hpp"
#include "mvc3d/train.hpp"

using namespace mvc3d;

namespace {

ModelConfig tiny_model_config() {
  ModelConfig c;
  c.n_views = 2;
  c.n_classes = 3;
  c.image_size = 16;
  c.channels = {2, 2, 2, 2, 4, 4, 4, 4};
  c.fc2_dim = 8;
  c.fc3_dim = 8;
  c.dropout_rate = 0.0;
  c.seed = 21;
  return c;
}

// Separable toy data: class fills one color channel with a class-specific level.
std::vector<LabeledCube> tiny_dataset(const ModelConfig& mc, Index per_class,
                                      std::uint64_t seed) {
  std::vector<LabeledCube> out;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, 0.05);
  const Index plane = mc.n_views * mc.image_size * mc.image_size;
  for (Index cls = 0; cls < mc.n_classes; ++cls) {
    for (Index i = 0; i < per_class; ++i) {
      Tensor cube(Shape{3, mc.n_views, mc.image_size, mc.image_size});
      for (Index c = 0; c < 3; ++c) {
        const Real level = c == cls % 3 ? Real(0.8) : Real(0.1);
        for (Index j = 0; j < plane; ++j)
          cube.data()[c * plane + j] =
              std::clamp(level + static_cast<Real>(noise(rng)), Real(0), Real(1));
      }
      out.push_back({cube, cls});
    }
  }
  return out;
}

}  // namespace

TEST_CASE("learning rate decays tenfold every decay interval, exactly") {
  TrainConfig c;
  CHECK(lr_at(c, 0) == 1e-4);
  CHECK(lr_at(c, 19) == 1e-4);
  CHECK(lr_at(c, 20) == 1e-5);
  CHECK(lr_at(c, 39) == 1e-5);
  CHECK(lr_at(c, 40) == 1e-6);
  CHECK(lr_at(c, 59) == 1e-6);
  CHECK_THROWS_AS(lr_at(c, -1), std::invalid_argument);

  TrainConfig fast;
  fast.initial_lr = 0.5;
  fast.lr_decay_every = 2;
  fast.lr_decay_factor = 4.0;
  CHECK(lr_at(fast, 1) == 0.5);
  CHECK(lr_at(fast, 2) == 0.125);
  CHECK(lr_at(fast, 4) == 0.03125);
}

TEST_CASE("early stopping fires after a window of small relative improvements") {
  // deltas: 1.001e-3, 5.008e-4, 5.010e-4, 2.004e-4, 2.005e-4, 1.003e-4;
  // the last five sit below 1e-3 even though the first does not
  const std::vector<double> seq = {1.0, 0.999, 0.9985, 0.998, 0.9978, 0.9976, 0.9975};
  CHECK(early_stop(seq, 1e-3, 5));
  CHECK_FALSE(early_stop(std::span(seq).first(6), 1e-3, 5));
  CHECK_FALSE(early_stop(seq, 1e-4, 5));
  CHECK(early_stop(seq, 1e-3, 3));

  // one large drop inside the window blocks the stop
  const std::vector<double> active = {1.0, 0.9, 0.8, 0.7, 0.6, 0.5, 0.4};
  CHECK_FALSE(early_stop(active, 1e-3, 5));

  // too little history never stops
  const std::vector<double> shorty = {1.0, 1.0, 1.0};
  CHECK_FALSE(early_stop(shorty, 1e-3, 5));
  CHECK(early_stop(std::vector<double>{1.0, 1.0, 1.0, 1.0}, 1e-3, 3));

  // a loss increase counts as lack of improvement, not as activity
  const std::vector<double> rising = {1.0, 1.0001, 1.0002, 1.0003, 1.0004, 1.0005};
  CHECK(early_stop(rising, 1e-3, 5));
}

TEST_CASE("early stopping is monotone in the threshold") {
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> level(0.1, 2.0);
  std::uniform_real_distribution<double> wiggle(-0.01, 0.01);
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<double> seq;
    double cur = level(rng);
    const int n = 6 + static_cast<int>(rng() % 6);
    for (int i = 0; i < n; ++i) {
      seq.push_back(cur);
      cur = std::max(0.01, cur + wiggle(rng) * cur);
    }
    const bool tight = early_stop(seq, 1e-3, 5);
    const bool loose = early_stop(seq, 1e-2, 5);
    if (tight) CHECK(loose);
    // a longer required window can only make stopping harder
    const bool wide = early_stop(seq, 1e-3, 5);
    const bool narrow = early_stop(seq, 1e-3, 2);
    if (wide) CHECK(narrow);
  }
}

TEST_CASE("adam first step matches the closed form") {
  TrainConfig c;
  Tensor p(Shape{4}, {Real(1), Real(-2), Real(0.5), Real(3)});
  p.set_requires_grad(true);
  const std::vector<Real> g = {Real(0.3), Real(-0.7), Real(0), Real(1.5)};
  p.accumulate_grad(g);
  std::vector<Tensor> params = {p};
  AdamState s = make_adam_state(params);
  adam_step(s, params, 1e-2, c);
  CHECK(s.t == 1);
  for (Index i = 0; i < 4; ++i) {
    // with bias correction, step one reduces to lr * g / (|g| + eps)
    const double gi = g[static_cast<std::size_t>(i)];
    const double want =
        static_cast<double>(Tensor(Shape{4}, {Real(1), Real(-2), Real(0.5), Real(3)})[i]) -
        1e-2 * gi / (std::abs(gi) + c.adam_eps);
    CHECK(p[i] == doctest::Approx(want).epsilon(1e-9));
  }
  CHECK(p[2] == Real(0.5));  // zero gradient leaves the element untouched at step one
}

TEST_CASE("adam second step follows the moment recursions") {
  TrainConfig c;
  Tensor p(Shape{1}, {Real(2)});
  p.set_requires_grad(true);
  std::vector<Tensor> params = {p};
  AdamState s = make_adam_state(params);

  double m = 0, v = 0, x = 2;
  const double g1 = 0.4, g2 = -0.1;
  for (int step = 1; step <= 2; ++step) {
    const double g = step == 1 ? g1 : g2;
    p.zero_grad();
    p.accumulate_grad(std::vector<Real>{static_cast<Real>(g)});
    adam_step(s, params, 1e-2, c);
    m = c.adam_beta1 * m + (1 - c.adam_beta1) * g;
    v = c.adam_beta2 * v + (1 - c.adam_beta2) * g * g;
    const double mhat = m / (1 - std::pow(c.adam_beta1, step));
    const double vhat = v / (1 - std::pow(c.adam_beta2, step));
    x -= 1e-2 * mhat / (std::sqrt(vhat) + c.adam_eps);
    CHECK(p[0] == doctest::Approx(x).epsilon(1e-12));
  }
}

TEST_CASE("total loss equals cross entropy plus the scaled squared weight norm") {
  ModelConfig mc = tiny_model_config();
  Model model = build_model(mc);
  Tape tape;
  std::mt19937_64 rng(2);
  Tensor batch = Tensor::randn(Shape{2, 3, 2, 16, 16}, rng);
  Tensor logits = forward(tape, model, batch, false);
  const std::vector<int> labels = {0, 2};

  Tensor ce = cross_entropy_mean(tape, logits, labels);
  double w2 = 0;
  for (const Tensor& w : model.weight_parameters())
    for (Real x : w.values()) w2 += static_cast<double>(x) * x;
  const Index m = regularized_element_count(model);
  const double lambda = 5e-4;
  const double want = static_cast<double>(ce[0]) + lambda / (2.0 * m) * w2;

  Tape tape2;
  Tensor logits2 = forward(tape2, model, batch, false);
  Tensor total = loss_total(tape2, model, logits2, labels, lambda);
  CHECK(total[0] == doctest::Approx(want).epsilon(1e-12));

  Tensor plain = loss_total(tape2, model, logits2, labels, 0.0);
  CHECK(plain[0] == doctest::Approx(static_cast<double>(ce[0])).epsilon(1e-12));

  // m counts only weight elements, so biases stay out of the denominator
  Index weight_elems = 0, all_elems = 0;
  for (const Tensor& t : model.parameters()) all_elems += t.size();
  for (const Tensor& t : model.weight_parameters()) weight_elems += t.size();
  CHECK(m == weight_elems);
  CHECK(m < all_elems);
}

TEST_CASE("uniform logits give log(k) cross entropy and the penalty shifts it exactly") {
  for (int k : {2, 5, 40}) {
    CAPTURE(k);
    Tape tape;
    Tensor logits(Shape{1, k});
    Tensor loss = cross_entropy_mean(tape, logits, std::vector<int>{0});
    CHECK(std::abs(static_cast<double>(loss[0]) - std::log(double(k))) < 1e-12);
  }
}

TEST_CASE("the weight penalty feeds gradient into weights but not biases") {
  ModelConfig mc = tiny_model_config();
  Model model = build_model(mc);
  Tape tape;
  std::mt19937_64 rng(5);
  Tensor batch = Tensor::randn(Shape{1, 3, 2, 16, 16}, rng);

  // freeze the data term by comparing gradients with and without the penalty
  Tensor logits = forward(tape, model, batch, false);
  Tensor total = loss_total(tape, model, logits, {1}, 1.0);
  for (Tensor& p : model.parameters()) p.zero_grad();
  tape.backward(total);

  const Index m = regularized_element_count(model);
  Tensor fc3_w = model.fc3_w;
  // gradient of the penalty alone is lambda/m * w; check one weight element
  Tape tape2;
  Tensor logits2 = forward(tape2, model, batch, false);
  Tensor plain = loss_total(tape2, model, logits2, {1}, 0.0);
  std::vector<Real> with_pen(std::as_const(fc3_w).grad().begin(),
                             std::as_const(fc3_w).grad().end());
  for (Tensor& p : model.parameters()) p.zero_grad();
  tape2.backward(plain);
  auto without = std::as_const(fc3_w).grad();
  for (Index i = 0; i < 5; ++i) {
    const double diff = static_cast<double>(with_pen[static_cast<std::size_t>(i)]) -
                        static_cast<double>(without[i]);
    const double want = 1.0 / static_cast<double>(m) * static_cast<double>(fc3_w[i]);
    CHECK(diff == doctest::Approx(want).epsilon(1e-9));
  }
}

TEST_CASE("stratified split keeps the class ratio and the two sides disjoint") {
  std::vector<Index> labels;
  for (Index cls = 0; cls < 4; ++cls)
    for (int i = 0; i < 20; ++i) labels.push_back(cls);
  auto [train, val] = split_train_val(labels, 4, 1, 7);
  CHECK(train.size() == 64);
  CHECK(val.size() == 16);
  std::set<Index> seen(train.begin(), train.end());
  for (Index i : val) CHECK(seen.insert(i).second);
  CHECK(seen.size() == labels.size());
  std::map<Index, int> val_per_class;
  for (Index i : val) ++val_per_class[labels[static_cast<std::size_t>(i)]];
  for (auto [cls, n] : val_per_class) CHECK(n == 4);

  // tiny classes keep at least one item on each side when possible
  std::vector<Index> small = {0, 0, 1};
  auto [t2, v2] = split_train_val(small, 4, 1, 7);
  CHECK(t2.size() + v2.size() == 3);
  std::map<Index, int> val_cls;
  for (Index i : v2) ++val_cls[small[static_cast<std::size_t>(i)]];
  CHECK(val_cls[0] == 1);   // two-item class contributes one
  CHECK(val_cls[1] == 0);   // singleton class trains only

  auto [t3, v3] = split_train_val(labels, 4, 1, 7);
  CHECK(t3 == train);
  CHECK(v3 == val);
  auto [t4, v4] = split_train_val(labels, 4, 1, 8);
  CHECK(t4 != train);
}

TEST_CASE("oversampling lifts every class to the target and keeps all originals") {
  std::vector<std::vector<Index>> by_class = {{0, 1, 2}, {3, 4, 5, 6, 7, 8, 9, 10}, {11}};
  auto out = oversample(by_class, 6, 42);
  std::map<Index, int> count;
  for (Index i : out) ++count[i];
  for (Index orig = 0; orig < 12; ++orig) CHECK(count[orig] >= 1);
  int c0 = 0, c1 = 0, c2 = 0;
  for (Index i : out) {
    if (i <= 2) ++c0;
    else if (i <= 10) ++c1;
    else ++c2;
  }
  CHECK(c0 == 6);   // 3 originals + 3 duplicates
  CHECK(c1 == 8);   // already above target, untouched
  CHECK(c2 == 6);   // singleton duplicated five times
  CHECK(out == oversample(by_class, 6, 42));
  CHECK_THROWS_AS(oversample({{0}, {}}, 4, 1), std::invalid_argument);
}

TEST_CASE("average precision matches hand-ranked cases") {
  CHECK(average_precision(std::vector<char>{1, 0, 1}) == doctest::Approx(5.0 / 6.0).epsilon(1e-15));
  CHECK(average_precision(std::vector<char>{1, 1, 1}) == 1.0);
  CHECK(average_precision(std::vector<char>{0, 0, 1}) == doctest::Approx(1.0 / 3.0));
  CHECK(average_precision(std::vector<char>{0, 0, 0}) == 0.0);
  CHECK(average_precision(std::vector<char>{0, 1, 0, 1}) ==
        doctest::Approx((0.5 + 0.5) / 2.0).epsilon(1e-15));
}

TEST_CASE("retrieval map on a hand-built feature matrix") {
  // two classes on orthogonal axes; the cross-class distractor sits between them
  Tensor f(Shape{4, 2}, {Real(1), Real(0),                      // class 0
                         Real(0.96), Real(0.28),                // class 0, slightly rotated
                         Real(0), Real(1),                      // class 1
                         Real(0.28), Real(0.96)});              // class 1, slightly rotated
  const std::vector<Index> labels = {0, 0, 1, 1};
  // every query ranks its classmate first: perfect retrieval
  CHECK(retrieval_map(f, labels) == doctest::Approx(1.0).epsilon(1e-12));

  // push one sample of class 0 onto class 1's axis: its classmate now ranks last
  Tensor g(Shape{4, 2}, {Real(1), Real(0),
                         Real(0), Real(1),                      // class 0 imposter
                         Real(0.96), Real(0.28),                // class 1 near axis 0
                         Real(0.28), Real(0.96)});
  const std::vector<Index> labels2 = {0, 0, 1, 1};
  const double got = retrieval_map(g, labels2);
  CHECK(got > 0.0);
  CHECK(got < 1.0);

  CHECK_THROWS_AS(retrieval_map(f, std::vector<Index>{0, 1}), std::invalid_argument);
}

TEST_CASE("per-class table lists every class and the macro mean") {
  EvalResult r;
  r.per_class_total = {4, 4};
  r.per_class_correct = {4, 2};
  r.accuracy = 0.75;
  const std::vector<std::string> names = {"box", "sphere"};
  const std::string table = format_per_class_table(names, r);
  CHECK(table.find("box") != std::string::npos);
  CHECK(table.find("sphere") != std::string::npos);
  CHECK(table.find("1.0000") != std::string::npos);
  CHECK(table.find("0.5000") != std::string::npos);
  CHECK(table.find("0.7500") != std::string::npos);  // macro mean of 1.0 and 0.5
  CHECK_THROWS_AS(format_per_class_table(std::vector<std::string>{"one"}, r),
                  std::invalid_argument);
}

TEST_CASE("evaluate ties resolve to the lowest class and counts are consistent") {
  ModelConfig mc = tiny_model_config();
  Model model = build_model(mc);
  // zero every parameter: logits are identically zero, argmax is class 0
  for (Tensor& p : model.parameters()) std::fill(p.data(), p.data() + p.size(), Real(0));
  auto data = tiny_dataset(mc, 4, 3);
  EvalResult r = evaluate(model, data, 5);
  CHECK(r.predictions.size() == data.size());
  for (Index p : r.predictions) CHECK(p == 0);
  CHECK(r.per_class_total == std::vector<Index>{4, 4, 4});
  CHECK(r.per_class_correct == std::vector<Index>{4, 0, 0});
  CHECK(r.accuracy == doctest::Approx(1.0 / 3.0));
  const double want_loss = std::log(static_cast<double>(mc.n_classes));
  CHECK(evaluate_loss(model, data, 5) == doctest::Approx(want_loss).epsilon(1e-12));
}

TEST_CASE("a short training run is bit-deterministic and reduces the loss") {
  ModelConfig mc = tiny_model_config();
  auto data = tiny_dataset(mc, 10, 17);

  TrainConfig tc;
  tc.initial_lr = 1e-3;
  tc.batch_size = 6;
  tc.max_epochs = 5;
  tc.lambda = 5e-4;
  tc.early_stop_threshold = 0.0;  // never stops: every delta must be below zero
  tc.seed = 31;

  Model a = build_model(mc);
  std::ostringstream csv_a;
  TrainResult ra = train_model(a, data, tc, &csv_a);
  Model b = build_model(mc);
  TrainResult rb = train_model(b, data, tc);

  REQUIRE(ra.epochs.size() == 5);
  REQUIRE(rb.epochs.size() == 5);
  for (std::size_t e = 0; e < 5; ++e) {
    CHECK(ra.epochs[e].train_loss == rb.epochs[e].train_loss);
    CHECK(ra.epochs[e].val_loss == rb.epochs[e].val_loss);
  }
  auto pa = a.parameters();
  auto pb = b.parameters();
  for (std::size_t i = 0; i < pa.size(); ++i)
    for (Index j = 0; j < pa[i].size(); ++j) CHECK(pa[i][j] == pb[i][j]);

  CHECK(ra.epochs.back().train_loss < ra.epochs.front().train_loss);

  const std::string csv = csv_a.str();
  CHECK(csv.rfind("epoch,lr,train_loss,val_loss,val_acc,wall_ms\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 6);
}

TEST_CASE("training honors the oversample target") {
  ModelConfig mc = tiny_model_config();
  auto data = tiny_dataset(mc, 5, 23);
  data.resize(data.size() - 3);  // unbalance the last class: 5/5/2

  TrainConfig tc;
  tc.max_epochs = 1;
  tc.batch_size = 4;
  tc.oversample_target = 8;
  tc.early_stop_threshold = 0.0;
  tc.seed = 9;

  Model m = build_model(mc);
  std::size_t seen = 0;
  TrainResult r = train_model(m, data, tc, nullptr, [&](const EpochLog& e) { ++seen; });
  CHECK(seen == 1);
  CHECK(r.epochs.size() == 1);
}

TEST_CASE("dropout training consumes the rng yet stays deterministic per seed") {
  ModelConfig mc = tiny_model_config();
  mc.dropout_rate = 0.5;
  auto data = tiny_dataset(mc, 6, 29);
  TrainConfig tc;
  tc.max_epochs = 2;
  tc.batch_size = 6;
  tc.early_stop_threshold = 0.0;
  tc.seed = 12;

  Model a = build_model(mc);
  TrainResult ra = train_model(a, data, tc);
  Model b = build_model(mc);
  TrainResult rb = train_model(b, data, tc);
  CHECK(ra.epochs.back().train_loss == rb.epochs.back().train_loss);

  TrainConfig other = tc;
  other.seed = 13;
  Model c = build_model(mc);
  TrainResult rc = train_model(c, data, other);
  CHECK(ra.epochs.back().train_loss != rc.epochs.back().train_loss);
}

TEST_CASE("checkpoints round trip the model bit for bit") {
  ModelConfig mc = tiny_model_config();
  mc.conv_pattern = ConvPattern::independent2d;
  Model m = build_model(mc);
  const auto path = std::filesystem::temp_directory_path() / "mvc3d_ckpt_test.bin";
  save_checkpoint(m, path);
  Model back = load_checkpoint(path);

  CHECK(back.config.n_views == mc.n_views);
  CHECK(back.config.conv_pattern == mc.conv_pattern);
  auto pa = m.parameters();
  auto pb = back.parameters();
  REQUIRE(pa.size() == pb.size());
  for (std::size_t i = 0; i < pa.size(); ++i) {
    REQUIRE(pa[i].shape() == pb[i].shape());
    for (Index j = 0; j < pa[i].size(); ++j) CHECK(pa[i][j] == pb[i][j]);
  }

  // same parameters, same file bytes, same checksum
  const auto path2 = std::filesystem::temp_directory_path() / "mvc3d_ckpt_test2.bin";
  save_checkpoint(back, path2);
  CHECK(checkpoint_checksum(path) == checkpoint_checksum(path2));

  std::filesystem::remove(path);
  std::filesystem::remove(path2);
}

TEST_CASE("corrupt checkpoints are rejected") {
  Model m = build_model(tiny_model_config());
  const auto path = std::filesystem::temp_directory_path() / "mvc3d_ckpt_corrupt.bin";
  save_checkpoint(m, path);

  // flip one byte in the middle
  std::fstream f(path, std::ios::binary | std::ios::in | std::ios::out);
  f.seekp(100);
  char b;
  f.seekg(100);
  f.read(&b, 1);
  b = static_cast<char>(b ^ 0x40);
  f.seekp(100);
  f.write(&b, 1);
  f.close();
  CHECK_THROWS_WITH_AS(static_cast<void>(load_checkpoint(path)),
                       doctest::Contains("checksum"), std::runtime_error);

  // truncation
  save_checkpoint(m, path);
  const auto size = std::filesystem::file_size(path);
  std::filesystem::resize_file(path, size - 8);
  CHECK_THROWS_AS(static_cast<void>(load_checkpoint(path)), std::runtime_error);
  std::filesystem::remove(path);
}

TEST_CASE("an epoch resampler feeds training only and keeps runs deterministic") {
  ModelConfig mc = tiny_model_config();
  auto data = tiny_dataset(mc, 10, 31);
  TrainConfig tc;
  tc.max_epochs = 3;
  tc.batch_size = 4;
  tc.seed = 9;
  tc.lambda = 0.0;

  std::vector<Index> epochs_seen;
  std::vector<Index> indices_seen;
  auto resampler = [&](Index epoch, std::span<const Index> indices) {
    epochs_seen.push_back(epoch);
    indices_seen.assign(indices.begin(), indices.end());
    std::vector<LabeledCube> out;
    std::mt19937_64 rng(mix_seed(101, static_cast<std::uint64_t>(epoch)));
    std::normal_distribution<double> noise(0.0, 0.05);
    for (Index i : indices) {
      LabeledCube fresh = data[static_cast<std::size_t>(i)];
      fresh.cube = Tensor(fresh.cube.shape());
      for (Index j = 0; j < fresh.cube.size(); ++j)
        fresh.cube[j] = std::clamp(
            data[static_cast<std::size_t>(i)].cube[j] + static_cast<Real>(noise(rng)),
            Real(0), Real(1));
      out.push_back(std::move(fresh));
    }
    return out;
  };

  Model a = build_model(mc);
  TrainResult ra = train_model(a, data, tc, nullptr, {}, resampler);

  // hook ran once per epoch over the unique training indices
  CHECK(epochs_seen == std::vector<Index>{0, 1, 2});
  CHECK(indices_seen.size() == 24);  // 10 per class * 3 classes, 4:1 split
  for (Index i : indices_seen) {
    CHECK(i >= 0);
    CHECK(i < static_cast<Index>(data.size()));
  }

  // same seed and hook reproduce the run bit for bit
  Model b = build_model(mc);
  TrainResult rb = train_model(b, data, tc, nullptr, {}, resampler);
  CHECK(ra.final_val_loss == rb.final_val_loss);
  auto pa = a.parameters(), pb = b.parameters();
  for (std::size_t p = 0; p < pa.size(); ++p)
    for (Index j = 0; j < pa[p].size(); ++j) CHECK(pa[p][j] == pb[p][j]);

  // the hook changes training, so parameters differ from the unhooked run
  Model c = build_model(mc);
  train_model(c, data, tc);
  bool any_diff = false;
  auto pc = c.parameters();
  for (std::size_t p = 0; !any_diff && p < pa.size(); ++p)
    for (Index j = 0; !any_diff && j < pa[p].size(); ++j) any_diff = pa[p][j] != pc[p][j];
  CHECK(any_diff);

  // wrong cube count and altered labels are rejected
  auto short_hook = [&](Index, std::span<const Index>) { return std::vector<LabeledCube>{}; };
  Model d = build_model(mc);
  CHECK_THROWS_AS(static_cast<void>(train_model(d, data, tc, nullptr, {}, short_hook)),
                  std::invalid_argument);
  auto relabel_hook = [&](Index, std::span<const Index> indices) {
    std::vector<LabeledCube> out;
    for (Index i : indices) {
      LabeledCube s = data[static_cast<std::size_t>(i)];
      s.label = (s.label + 1) % mc.n_classes;
      out.push_back(std::move(s));
    }
    return out;
  };
  CHECK_THROWS_AS(static_cast<void>(train_model(d, data, tc, nullptr, {}, relabel_hook)),
                  std::invalid_argument);
}
