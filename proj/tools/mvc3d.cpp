#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>

#include "mvc3d/checkpoint.hpp"
#include "mvc3d/dataset.hpp"
#include "mvc3d/image.hpp"
#include "mvc3d/mesh.hpp"
#include "mvc3d/metrics.hpp"
#include "mvc3d/model.hpp"
#include "mvc3d/render.hpp"
#include "mvc3d/runconfig.hpp"
#include "mvc3d/synth.hpp"
#include "mvc3d/train.hpp"
#include "mvc3d/verify.hpp"

namespace fs = std::filesystem;
using namespace mvc3d;

namespace {

void require_exists(const fs::path& p, const char* what) {
  if (!fs::exists(p))
    throw std::invalid_argument(std::string(what) + " path does not exist: " + p.string());
}

// Shared config resolution for training commands. Precedence, lowest to
// highest: built-in defaults, --config file, --set pairs in order, then the
// dedicated flags.
struct ConfigFlags {
  std::string config_path;
  std::vector<std::string> sets;
  std::vector<std::pair<CLI::Option*, std::function<void(RunConfig&)>>> appliers;

  void attach(CLI::App* sub) {
    sub->add_option("--config", config_path, "runconfig JSON file of flat dotted keys");
    sub->add_option("--set", sets, "override one key, e.g. --set train.lr=0.001")
        ->take_all()
        ->expected(-1);
  }

  template <class T>
  void bind(CLI::App* sub, const std::string& flag, T& value, const std::string& key,
            const std::string& help) {
    CLI::Option* opt = sub->add_option(flag, value, help);
    appliers.emplace_back(opt, [&value, key](RunConfig& cfg) {
      apply_key(cfg, key, nlohmann::json(value));
    });
  }

  void bind_text(CLI::App* sub, const std::string& flag, std::string& value,
                 const std::string& key, const std::string& help) {
    CLI::Option* opt = sub->add_option(flag, value, help);
    appliers.emplace_back(opt, [&value, key](RunConfig& cfg) {
      apply_override(cfg, key + "=" + value);
    });
  }

  void bind_flag(CLI::App* sub, const std::string& flag, bool& value, const std::string& key,
                 const std::string& help) {
    CLI::Option* opt = sub->add_flag(flag, value, help);
    appliers.emplace_back(opt, [&value, key](RunConfig& cfg) {
      apply_key(cfg, key, nlohmann::json(value));
    });
  }

  RunConfig resolve() const {
    RunConfig cfg;
    if (!config_path.empty()) {
      require_exists(config_path, "config");
      cfg = load_runconfig(config_path);
    }
    for (const std::string& s : sets) apply_override(cfg, s);
    for (const auto& [opt, apply] : appliers)
      if (opt->count() > 0) apply(cfg);
    return cfg;
  }
};

struct TrainView {
  const ViewSet* set = nullptr;
  Index label = 0;
};

// Train-split objects in manifest order, mirroring assemble_cubes.
std::vector<TrainView> train_split_views(const Manifest& manifest) {
  std::vector<TrainView> out;
  for (const ViewSet& vs : manifest.objects)
    if (vs.split == "train") out.push_back({&vs, manifest.class_index(vs.category)});
  return out;
}

AssembleOptions assemble_options(const RunConfig& cfg) {
  AssembleOptions a;
  a.n_views = cfg.model.n_views;
  a.interval_deg = cfg.interval_deg;
  a.start_index = cfg.start_index;
  a.target_hw = cfg.model.image_size;
  a.strict_size = cfg.strict_size;
  return a;
}

EpochResampler make_random_start_resampler(const Manifest& manifest, const RunConfig& cfg,
                                           std::mt19937_64& rng) {
  const auto views = train_split_views(manifest);
  return [&manifest, &cfg, &rng, views](Index, std::span<const Index> indices) {
    std::vector<LabeledCube> out;
    out.reserve(indices.size());
    for (Index i : indices) {
      const TrainView& tv = views.at(static_cast<std::size_t>(i));
      const Index ring = static_cast<Index>(tv.set->views.size());
      std::uniform_int_distribution<Index> start_d(0, ring - 1);
      const auto picked = select_contiguous_views(*tv.set, cfg.model.n_views, cfg.interval_deg,
                                                  start_d(rng));
      out.push_back({stack_to_cube(manifest.root, picked, cfg.model.image_size, cfg.strict_size),
                     tv.label});
    }
    return out;
  };
}

nlohmann::json eval_json(const Manifest& manifest, const EvalResult& r, double loss) {
  nlohmann::json per_class = nlohmann::json::object();
  double macro = 0.0;
  for (std::size_t c = 0; c < manifest.classes.size(); ++c) {
    const double acc = r.per_class_total[c] > 0 ? static_cast<double>(r.per_class_correct[c]) /
                                                      static_cast<double>(r.per_class_total[c])
                                                : 0.0;
    per_class[manifest.classes[c]] = acc;
    macro += acc;
  }
  return {{"accuracy", r.accuracy},
          {"mean_per_class_accuracy", macro / static_cast<double>(manifest.classes.size())},
          {"per_class_accuracy", per_class},
          {"loss", loss},
          {"samples", r.predictions.size()}};
}

Tensor feature_matrix(Model& model, std::span<const LabeledCube> data, Index batch_size) {
  const Index n = static_cast<Index>(data.size());
  Tensor features;
  bool allocated = false;
  Index row = 0;
  for (Index begin = 0; begin < n; begin += batch_size) {
    const Index end = std::min(n, begin + batch_size);
    const Shape& cs = data[static_cast<std::size_t>(begin)].cube.shape();
    Shape bs{end - begin};
    bs.insert(bs.end(), cs.begin(), cs.end());
    Tensor batch(bs);
    const Index per = numel(cs);
    for (Index i = begin; i < end; ++i)
      std::copy(data[static_cast<std::size_t>(i)].cube.values().begin(),
                data[static_cast<std::size_t>(i)].cube.values().end(),
                batch.data() + (i - begin) * per);
    Tensor f = extract_features(model, batch);
    if (!allocated) {
      features = Tensor(Shape{n, f.dim(1)});
      allocated = true;
    }
    std::copy(f.values().begin(), f.values().end(), features.data() + row * f.dim(1));
    row += end - begin;
  }
  return features;
}

int cmd_render(const fs::path& mesh, const fs::path& mesh_dir, const fs::path& out, Index views,
               double theta_step, double elevation, Index size, const std::string& class_name,
               const std::string& split) {
  if (views < 1 || std::abs(static_cast<double>(views) * theta_step - 360.0) > 1e-9)
    throw std::invalid_argument("ring does not close: " + std::to_string(views) + " views x " +
                                std::to_string(theta_step) + " degrees must equal 360");
  std::vector<fs::path> files;
  if (!mesh.empty()) {
    require_exists(mesh, "mesh");
    files.push_back(mesh);
  } else {
    require_exists(mesh_dir, "mesh directory");
    for (const auto& e : fs::directory_iterator(mesh_dir))
      if (e.path().extension() == ".off") files.push_back(e.path());
    std::sort(files.begin(), files.end());
    if (files.empty())
      throw std::invalid_argument("no .off files under " + mesh_dir.string());
  }

  Manifest manifest;
  manifest.name = "rendered";
  manifest.root = out;
  manifest.classes = {class_name};
  RenderOptions ropt;
  ropt.image_size = size;
  const auto angles = turntable_angles(static_cast<int>(views), elevation);

  for (const fs::path& file : files) {
    const TriMesh m = load_off(file);
    ViewSet vs;
    vs.object_id = file.stem().string();
    vs.category = class_name;
    vs.split = split;
    vs.source = ViewSource::rendered;
    const fs::path rel_dir = fs::path(class_name) / split / vs.object_id;
    fs::create_directories(out / rel_dir);
    for (const ViewAngles& a : angles) {
      const ImageU8 img = render_view(m, a, ropt);
      const std::string fname = view_filename(a);
      write_ppm(out / rel_dir / fname, img, true);
      vs.views.push_back({a.azimuth_deg, a.elevation_deg, rel_dir / fname});
    }
    manifest.objects.push_back(std::move(vs));
  }
  write_manifest(manifest, out / "manifest.json");
  const nlohmann::json resolved = {
      {"mesh", mesh.string()},           {"mesh_dir", mesh_dir.string()},
      {"views", views},                  {"theta_step", theta_step},
      {"elevation", elevation},          {"size", size},
      {"class_name", class_name},        {"split", split}};
  std::ofstream(out / "render_config.json") << resolved.dump(2) << '\n';
  std::printf("rendered %zu object(s) x %lld views into %s\n", files.size(),
              static_cast<long long>(views), out.string().c_str());
  return 0;
}

int cmd_synth(const SynthOptions& opt, const fs::path& out) {
  const Manifest m = synth_generate(opt, out);
  const nlohmann::json resolved = {
      {"classes", opt.n_classes},        {"instances", opt.instances},
      {"views", opt.ring_views},         {"elevation", opt.elevation_deg},
      {"size", opt.image_size},          {"train_fraction", opt.train_fraction},
      {"seed", opt.seed}};
  std::ofstream(out / "synth_config.json") << resolved.dump(2) << '\n';
  std::printf("synthesized %zu objects over %zu classes into %s\n", m.objects.size(),
              m.classes.size(), out.string().c_str());
  return 0;
}

int cmd_train(RunConfig cfg) {
  require_exists(cfg.data_dir, "data");
  require_exists(cfg.data_dir / "manifest.json", "manifest");
  const Manifest manifest = load_manifest(cfg.data_dir / "manifest.json");
  cfg.model.n_classes = static_cast<Index>(manifest.classes.size());
  validate(cfg);

  fs::create_directories(cfg.out_dir);
  write_runconfig(cfg, cfg.out_dir / "runconfig.json");

  const auto data = assemble_cubes(manifest, "train", assemble_options(cfg));
  Model model = build_model(cfg.model);

  std::mt19937_64 start_rng(mix_seed(cfg.train.seed, 1009));
  EpochResampler resampler;
  if (cfg.random_start) resampler = make_random_start_resampler(manifest, cfg, start_rng);

  std::ofstream csv(cfg.out_dir / "train_log.csv");
  const TrainResult res = train_model(
      model, data, cfg.train, &csv,
      [](const EpochLog& e) {
        std::printf("epoch %3lld  lr %.2e  train %.6f  val %.6f  acc %.4f  (%lld ms)\n",
                    static_cast<long long>(e.epoch), e.lr, e.train_loss, e.val_loss, e.val_acc,
                    static_cast<long long>(e.wall_ms));
      },
      resampler);

  const fs::path ckpt = cfg.out_dir / "model.ckpt";
  save_checkpoint(model, ckpt);
  const std::uint32_t crc = checkpoint_checksum(ckpt);

  nlohmann::json metrics = {{"final_val_loss", res.final_val_loss},
                            {"final_val_acc", res.final_val_acc},
                            {"epochs", res.epochs.size()},
                            {"early_stopped", res.early_stopped},
                            {"checkpoint_crc32", crc}};
  std::ofstream(cfg.out_dir / "metrics.json") << metrics.dump(2) << '\n';

  std::printf("done: %zu epoch(s)%s, final val loss %.17g, val acc %.4f\n", res.epochs.size(),
              res.early_stopped ? " (early stop)" : "", res.final_val_loss, res.final_val_acc);
  std::printf("checkpoint %s crc32 %08x\n", ckpt.string().c_str(), crc);
  return 0;
}

int cmd_eval(const fs::path& checkpoint, const fs::path& data_dir, const std::string& split,
             Index views_flag, double interval, Index start, bool strict, bool retrieval,
             Index batch_size, const fs::path& out) {
  require_exists(checkpoint, "checkpoint");
  require_exists(data_dir / "manifest.json", "manifest");
  Model model = load_checkpoint(checkpoint);
  if (views_flag > 0 && views_flag != model.config.n_views)
    throw std::invalid_argument("checkpoint was trained with " +
                                std::to_string(model.config.n_views) + " views, --views asked " +
                                std::to_string(views_flag));
  const Manifest manifest = load_manifest(data_dir / "manifest.json");
  if (static_cast<Index>(manifest.classes.size()) != model.config.n_classes)
    throw std::invalid_argument("checkpoint has " + std::to_string(model.config.n_classes) +
                                " classes, manifest has " +
                                std::to_string(manifest.classes.size()));

  AssembleOptions aopt;
  aopt.n_views = model.config.n_views;
  aopt.interval_deg = interval;
  aopt.start_index = start;
  aopt.target_hw = model.config.image_size;
  aopt.strict_size = strict;
  const auto cubes = assemble_cubes(manifest, split, aopt);

  const EvalResult r = evaluate(model, cubes, batch_size);
  const double loss = evaluate_loss(model, cubes, batch_size);
  std::printf("%s split: %zu samples, accuracy %.4f, loss %.6f\n", split.c_str(), cubes.size(),
              r.accuracy, loss);
  std::fputs(format_per_class_table(manifest.classes, r).c_str(), stdout);

  nlohmann::json metrics = eval_json(manifest, r, loss);
  if (retrieval) {
    std::vector<Index> labels;
    for (const auto& s : cubes) labels.push_back(s.label);
    const Tensor features = feature_matrix(model, cubes, batch_size);
    const double map = retrieval_map(features, labels);
    std::printf("retrieval mAP %.4f\n", map);
    metrics["retrieval_map"] = map;
  }
  if (!out.empty()) {
    fs::create_directories(out);
    std::ofstream(out / "metrics.json") << metrics.dump(2) << '\n';
    const nlohmann::json resolved = {
        {"checkpoint", checkpoint.string()}, {"data", data_dir.string()},
        {"split", split},                    {"views", model.config.n_views},
        {"interval", interval},              {"start", start},
        {"strict_size", strict},             {"retrieval", retrieval},
        {"batch", batch_size}};
    std::ofstream(out / "eval_config.json") << resolved.dump(2) << '\n';
  }
  return 0;
}

int cmd_sweep(RunConfig base, const std::vector<Index>& views_list, Index repeats) {
  require_exists(base.data_dir, "data");
  require_exists(base.data_dir / "manifest.json", "manifest");
  if (views_list.empty()) throw std::invalid_argument("sweep needs --views-list");
  if (repeats < 1) throw std::invalid_argument("sweep needs at least one repeat");
  const Manifest manifest = load_manifest(base.data_dir / "manifest.json");
  base.model.n_classes = static_cast<Index>(manifest.classes.size());

  fs::create_directories(base.out_dir);
  write_runconfig(base, base.out_dir / "runconfig.json");
  std::ofstream csv(base.out_dir / "sweep.csv");
  csv << "n_views,interval,mean_acc,std_acc,runs\n";

  for (Index n : views_list) {
    std::vector<double> accs;
    for (Index rep = 0; rep < repeats; ++rep) {
      RunConfig cfg = base;
      cfg.model.n_views = n;
      cfg.model.seed = base.model.seed + static_cast<std::uint64_t>(rep);
      cfg.train.seed = base.train.seed + static_cast<std::uint64_t>(rep);
      validate(cfg);
      const auto train_cubes = assemble_cubes(manifest, "train", assemble_options(cfg));
      const auto test_cubes = assemble_cubes(manifest, "test", assemble_options(cfg));
      Model model = build_model(cfg.model);
      train_model(model, train_cubes, cfg.train);
      const EvalResult r = evaluate(model, test_cubes, cfg.train.batch_size);
      accs.push_back(r.accuracy);
      std::printf("views %2lld repeat %lld: test acc %.4f\n", static_cast<long long>(n),
                  static_cast<long long>(rep), r.accuracy);
    }
    double mean = 0.0;
    for (double a : accs) mean += a;
    mean /= static_cast<double>(accs.size());
    double var = 0.0;
    for (double a : accs) var += (a - mean) * (a - mean);
    const double stddev = std::sqrt(var / static_cast<double>(accs.size()));
    csv << n << ',' << base.interval_deg << ',' << mean << ',' << stddev << ',' << repeats
        << '\n';
    std::printf("views %2lld: mean acc %.4f, std %.4f over %lld run(s)\n",
                static_cast<long long>(n), mean, stddev, static_cast<long long>(repeats));
  }
  std::printf("wrote %s\n", (base.out_dir / "sweep.csv").string().c_str());
  return 0;
}

int cmd_verify() {
  const auto results = run_verification();
  std::fputs(format_report(results).c_str(), stdout);
  const bool ok = std::all_of(results.begin(), results.end(),
                              [](const CheckResult& r) { return r.passed; });
  std::printf("%zu check(s), %s\n", results.size(), ok ? "all passed" : "FAILURES");
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"multi-view 3D CNN toolkit: render view rings, synthesize corpora, train and "
               "evaluate classifiers, sweep view counts, verify the build"};
  app.require_subcommand(1);

  // render
  auto* render = app.add_subcommand("render", "render a turntable view ring for OFF meshes");
  fs::path r_mesh, r_mesh_dir, r_out;
  Index r_views = 36, r_size = 112;
  double r_theta = 10.0, r_elev = 30.0;
  std::string r_class = "object", r_split = "train";
  auto* r_mesh_opt = render->add_option("--mesh", r_mesh, "one OFF mesh file");
  render->add_option("--mesh-dir", r_mesh_dir, "directory of OFF mesh files")
      ->excludes(r_mesh_opt);
  render->add_option("--out", r_out, "output corpus directory")->required();
  render->add_option("--views", r_views, "views on the ring (default 36)");
  render->add_option("--theta-step", r_theta, "azimuth step in degrees (default 10)");
  render->add_option("--elevation", r_elev, "camera elevation in degrees (default 30)");
  render->add_option("--size", r_size, "square image size (default 112)");
  render->add_option("--class-name", r_class, "category recorded in the manifest");
  render->add_option("--split", r_split, "split recorded in the manifest (train/test)");

  // synth
  auto* synth = app.add_subcommand("synth", "generate the synthetic shape corpus");
  SynthOptions s_opt;
  fs::path s_out;
  synth->add_option("--out", s_out, "output corpus directory")->required();
  synth->add_option("--classes", s_opt.n_classes, "shape families, 2 to 5 (default 4)");
  synth->add_option("--instances", s_opt.instances, "objects per class (default 20)");
  synth->add_option("--views", s_opt.ring_views, "views per object ring (default 36)");
  synth->add_option("--elevation", s_opt.elevation_deg, "camera elevation (default 30)");
  synth->add_option("--size", s_opt.image_size, "square image size (default 112)");
  synth->add_option("--train-fraction", s_opt.train_fraction,
                    "train share per class (default 0.8)");
  synth->add_option("--seed", s_opt.seed, "corpus seed (default 0)");

  auto bind_training_flags = [](CLI::App* sub, ConfigFlags& cf, fs::path& data, fs::path& out,
                                auto& holder) {
    cf.attach(sub);
    sub->add_option("--data", data, "corpus directory holding manifest.json")->required();
    sub->add_option("--out", out, "output directory for logs and artifacts")->required();
    cf.bind(sub, "--views", holder.views, "model.n_views", "views per input cube");
    cf.bind(sub, "--interval", holder.interval, "data.interval_deg",
            "degrees between chosen views");
    cf.bind(sub, "--start", holder.start, "data.start_index", "first ring view of the arc");
    cf.bind_flag(sub, "--random-start", holder.random_start, "data.random_start",
                 "redraw each object's arc start every epoch");
    cf.bind_text(sub, "--schedule", holder.schedule, "model.schedule",
                 "view extents: fixed-1/3/5/7, increasing, decreasing, or an 8-entry list");
    cf.bind_text(sub, "--pattern", holder.pattern, "model.pattern",
                 "conv pattern: joint3d or independent2d");
    cf.bind(sub, "--image-size", holder.image_size, "model.image_size", "square input size");
    cf.bind(sub, "--fc2", holder.fc2, "model.fc2_dim", "first fully connected width");
    cf.bind(sub, "--fc3", holder.fc3, "model.fc3_dim", "feature layer width");
    cf.bind(sub, "--dropout", holder.dropout, "model.dropout", "dropout rate");
    cf.bind(sub, "--lr", holder.lr, "train.lr", "initial learning rate");
    cf.bind(sub, "--epochs", holder.epochs, "train.max_epochs", "epoch budget");
    cf.bind(sub, "--batch", holder.batch, "train.batch_size", "batch size");
    cf.bind(sub, "--lambda", holder.lambda, "train.lambda", "weight penalty coefficient");
    cf.bind(sub, "--oversample", holder.oversample, "train.oversample_target",
            "per-class training floor, 0 disables");
    cf.bind(sub, "--seed", holder.seed, "train.seed", "training seed");
  };

  struct SugarFlags {
    Index views = 12, start = 0, image_size = 112, fc2 = 4096, fc3 = 4096;
    Index epochs = 100, batch = 8, oversample = 0;
    double interval = 10.0, dropout = 0.5, lr = 1e-4, lambda = 5e-4;
    bool random_start = false;
    std::string schedule, pattern;
    std::uint64_t seed = 0;
  };

  auto* train = app.add_subcommand("train", "train a classifier on a corpus train split");
  ConfigFlags train_cf;
  SugarFlags train_sugar;
  fs::path t_data, t_out;
  bind_training_flags(train, train_cf, t_data, t_out, train_sugar);

  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on a corpus split");
  fs::path e_ckpt, e_data, e_out;
  std::string e_split = "test";
  Index e_views = 0, e_start = 0, e_batch = 8;
  double e_interval = 10.0;
  bool e_retrieval = false, e_lenient = false;
  eval->add_option("--checkpoint", e_ckpt, "checkpoint file from train")->required();
  eval->add_option("--data", e_data, "corpus directory holding manifest.json")->required();
  eval->add_option("--split", e_split, "split to evaluate (default test)");
  eval->add_option("--views", e_views, "expected view count; must match the checkpoint");
  eval->add_option("--interval", e_interval, "degrees between chosen views (default 10)");
  eval->add_option("--start", e_start, "first ring view of the arc");
  eval->add_option("--batch", e_batch, "evaluation batch size (default 8)");
  eval->add_flag("--retrieval", e_retrieval, "also compute leave-one-out retrieval mAP");
  eval->add_flag("--resize", e_lenient, "resize images instead of requiring exact size");
  eval->add_option("--out", e_out, "directory for metrics.json (optional)");

  auto* sweep = app.add_subcommand("sweep-views", "train and test across several view counts");
  ConfigFlags sweep_cf;
  SugarFlags sweep_sugar;
  fs::path w_data, w_out;
  std::vector<Index> w_list;
  Index w_repeats = 3;
  bind_training_flags(sweep, sweep_cf, w_data, w_out, sweep_sugar);
  sweep->add_option("--views-list", w_list, "view counts to sweep, e.g. 2 4 6")
      ->delimiter(',')
      ->required();
  sweep->add_option("--repeats", w_repeats, "seeded repeats per view count (default 3)");

  auto* verify = app.add_subcommand("verify", "run the built-in consistency checks");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*render)
      return cmd_render(r_mesh, r_mesh_dir, r_out, r_views, r_theta, r_elev, r_size, r_class,
                        r_split);
    if (*synth) return cmd_synth(s_opt, s_out);
    if (*train) {
      RunConfig cfg = train_cf.resolve();
      cfg.data_dir = t_data;
      cfg.out_dir = t_out;
      return cmd_train(std::move(cfg));
    }
    if (*eval)
      return cmd_eval(e_ckpt, e_data, e_split, e_views, e_interval, e_start, !e_lenient,
                      e_retrieval, e_batch, e_out);
    if (*sweep) {
      RunConfig cfg = sweep_cf.resolve();
      cfg.data_dir = w_data;
      cfg.out_dir = w_out;
      return cmd_sweep(std::move(cfg), w_list, w_repeats);
    }
    if (*verify) return cmd_verify();
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
