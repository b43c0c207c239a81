#include "mvc3d/runconfig.hpp"

#include <fstream>
#include <map>

namespace mvc3d {

namespace {

using nlohmann::json;

struct KeyBinding {
  json (*get)(const RunConfig&);
  void (*set)(RunConfig&, const json&);
};

std::array<Index, kConvLayers> schedule_from_json(const json& v) {
  if (v.is_string()) return schedule_preset(v.get<std::string>());
  const auto vals = v.get<std::vector<Index>>();
  if (vals.size() != kConvLayers)
    throw std::invalid_argument("schedule needs " + std::to_string(kConvLayers) + " entries, got " +
                                std::to_string(vals.size()));
  std::array<Index, kConvLayers> out{};
  std::copy(vals.begin(), vals.end(), out.begin());
  return out;
}

const std::map<std::string, KeyBinding>& bindings() {
  static const std::map<std::string, KeyBinding> table = {
      {"model.n_views",
       {[](const RunConfig& c) { return json(c.model.n_views); },
        [](RunConfig& c, const json& v) { c.model.n_views = v.get<Index>(); }}},
      {"model.n_classes",
       {[](const RunConfig& c) { return json(c.model.n_classes); },
        [](RunConfig& c, const json& v) { c.model.n_classes = v.get<Index>(); }}},
      {"model.image_size",
       {[](const RunConfig& c) { return json(c.model.image_size); },
        [](RunConfig& c, const json& v) { c.model.image_size = v.get<Index>(); }}},
      {"model.schedule",
       {[](const RunConfig& c) { return json(c.model.viewpoint_schedule); },
        [](RunConfig& c, const json& v) { c.model.viewpoint_schedule = schedule_from_json(v); }}},
      {"model.channels",
       {[](const RunConfig& c) { return json(c.model.channels); },
        [](RunConfig& c, const json& v) {
          const auto vals = v.get<std::vector<Index>>();
          if (vals.size() != kConvLayers)
            throw std::invalid_argument("channels needs " + std::to_string(kConvLayers) +
                                        " entries, got " + std::to_string(vals.size()));
          std::copy(vals.begin(), vals.end(), c.model.channels.begin());
        }}},
      {"model.fc2_dim",
       {[](const RunConfig& c) { return json(c.model.fc2_dim); },
        [](RunConfig& c, const json& v) { c.model.fc2_dim = v.get<Index>(); }}},
      {"model.fc3_dim",
       {[](const RunConfig& c) { return json(c.model.fc3_dim); },
        [](RunConfig& c, const json& v) { c.model.fc3_dim = v.get<Index>(); }}},
      {"model.pattern",
       {[](const RunConfig& c) { return json(to_string(c.model.conv_pattern)); },
        [](RunConfig& c, const json& v) {
          c.model.conv_pattern = conv_pattern_from_string(v.get<std::string>());
        }}},
      {"model.dropout",
       {[](const RunConfig& c) { return json(c.model.dropout_rate); },
        [](RunConfig& c, const json& v) { c.model.dropout_rate = v.get<double>(); }}},
      {"model.seed",
       {[](const RunConfig& c) { return json(c.model.seed); },
        [](RunConfig& c, const json& v) { c.model.seed = v.get<std::uint64_t>(); }}},
      {"train.lr",
       {[](const RunConfig& c) { return json(c.train.initial_lr); },
        [](RunConfig& c, const json& v) { c.train.initial_lr = v.get<double>(); }}},
      {"train.lr_decay_every",
       {[](const RunConfig& c) { return json(c.train.lr_decay_every); },
        [](RunConfig& c, const json& v) { c.train.lr_decay_every = v.get<Index>(); }}},
      {"train.lr_decay_factor",
       {[](const RunConfig& c) { return json(c.train.lr_decay_factor); },
        [](RunConfig& c, const json& v) { c.train.lr_decay_factor = v.get<double>(); }}},
      {"train.lambda",
       {[](const RunConfig& c) { return json(c.train.lambda); },
        [](RunConfig& c, const json& v) { c.train.lambda = v.get<double>(); }}},
      {"train.beta1",
       {[](const RunConfig& c) { return json(c.train.adam_beta1); },
        [](RunConfig& c, const json& v) { c.train.adam_beta1 = v.get<double>(); }}},
      {"train.beta2",
       {[](const RunConfig& c) { return json(c.train.adam_beta2); },
        [](RunConfig& c, const json& v) { c.train.adam_beta2 = v.get<double>(); }}},
      {"train.eps",
       {[](const RunConfig& c) { return json(c.train.adam_eps); },
        [](RunConfig& c, const json& v) { c.train.adam_eps = v.get<double>(); }}},
      {"train.batch_size",
       {[](const RunConfig& c) { return json(c.train.batch_size); },
        [](RunConfig& c, const json& v) { c.train.batch_size = v.get<Index>(); }}},
      {"train.max_epochs",
       {[](const RunConfig& c) { return json(c.train.max_epochs); },
        [](RunConfig& c, const json& v) { c.train.max_epochs = v.get<Index>(); }}},
      {"train.early_stop_threshold",
       {[](const RunConfig& c) { return json(c.train.early_stop_threshold); },
        [](RunConfig& c, const json& v) { c.train.early_stop_threshold = v.get<double>(); }}},
      {"train.early_stop_window",
       {[](const RunConfig& c) { return json(c.train.early_stop_window); },
        [](RunConfig& c, const json& v) { c.train.early_stop_window = v.get<Index>(); }}},
      {"train.oversample_target",
       {[](const RunConfig& c) { return json(c.train.oversample_target); },
        [](RunConfig& c, const json& v) { c.train.oversample_target = v.get<Index>(); }}},
      {"train.split_train_parts",
       {[](const RunConfig& c) { return json(c.train.split_train_parts); },
        [](RunConfig& c, const json& v) { c.train.split_train_parts = v.get<Index>(); }}},
      {"train.split_val_parts",
       {[](const RunConfig& c) { return json(c.train.split_val_parts); },
        [](RunConfig& c, const json& v) { c.train.split_val_parts = v.get<Index>(); }}},
      {"train.seed",
       {[](const RunConfig& c) { return json(c.train.seed); },
        [](RunConfig& c, const json& v) { c.train.seed = v.get<std::uint64_t>(); }}},
      {"data.dir",
       {[](const RunConfig& c) { return json(c.data_dir.generic_string()); },
        [](RunConfig& c, const json& v) { c.data_dir = v.get<std::string>(); }}},
      {"data.interval_deg",
       {[](const RunConfig& c) { return json(c.interval_deg); },
        [](RunConfig& c, const json& v) { c.interval_deg = v.get<double>(); }}},
      {"data.start_index",
       {[](const RunConfig& c) { return json(c.start_index); },
        [](RunConfig& c, const json& v) { c.start_index = v.get<Index>(); }}},
      {"data.random_start",
       {[](const RunConfig& c) { return json(c.random_start); },
        [](RunConfig& c, const json& v) { c.random_start = v.get<bool>(); }}},
      {"data.strict_size",
       {[](const RunConfig& c) { return json(c.strict_size); },
        [](RunConfig& c, const json& v) { c.strict_size = v.get<bool>(); }}},
      {"out.dir",
       {[](const RunConfig& c) { return json(c.out_dir.generic_string()); },
        [](RunConfig& c, const json& v) { c.out_dir = v.get<std::string>(); }}},
  };
  return table;
}

}  // namespace

void validate(const RunConfig& c) {
  validate(c.model);
  validate(c.train);
  if (!(c.interval_deg > 0.0))
    throw std::invalid_argument("runconfig: data.interval_deg must be positive");
  if (c.start_index < 0)
    throw std::invalid_argument("runconfig: data.start_index must be nonnegative");
}

std::vector<std::string> runconfig_keys() {
  std::vector<std::string> keys;
  for (const auto& [k, b] : bindings()) keys.push_back(k);
  return keys;
}

void apply_key(RunConfig& c, const std::string& key, const nlohmann::json& value) {
  const auto it = bindings().find(key);
  if (it == bindings().end())
    throw std::invalid_argument("runconfig: unknown key '" + key + "'");
  try {
    it->second.set(c, value);
  } catch (const std::invalid_argument& e) {
    throw std::invalid_argument("runconfig: key '" + key + "': " + e.what());
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument("runconfig: key '" + key + "': " + e.what());
  }
}

void apply_override(RunConfig& c, const std::string& key_equals_value) {
  const auto eq = key_equals_value.find('=');
  if (eq == std::string::npos || eq == 0)
    throw std::invalid_argument("runconfig: override '" + key_equals_value +
                                "' is not key=value");
  const std::string key = key_equals_value.substr(0, eq);
  const std::string text = key_equals_value.substr(eq + 1);
  nlohmann::json value = nlohmann::json::parse(text, nullptr, false);
  if (value.is_discarded() || value.is_object()) value = text;  // plain string value
  apply_key(c, key, value);
}

nlohmann::json runconfig_json(const RunConfig& c) {
  nlohmann::json flat = nlohmann::json::object();
  for (const auto& [key, binding] : bindings()) flat[key] = binding.get(c);
  return flat;
}

void merge_runconfig(RunConfig& c, const nlohmann::json& flat) {
  if (!flat.is_object())
    throw std::invalid_argument("runconfig: expected a flat JSON object of dotted keys");
  for (const auto& [key, value] : flat.items()) {
    if (value.is_object())
      throw std::invalid_argument("runconfig: key '" + key +
                                  "' holds a nested object; the format is flat dotted keys");
    apply_key(c, key, value);
  }
}

RunConfig load_runconfig(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("runconfig: cannot open " + path.string());
  nlohmann::json flat = nlohmann::json::parse(in, nullptr, false);
  if (flat.is_discarded())
    throw std::runtime_error("runconfig: " + path.string() + " is not valid JSON");
  RunConfig c;
  merge_runconfig(c, flat);
  return c;
}

void write_runconfig(const RunConfig& c, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("runconfig: cannot write " + path.string());
  out << runconfig_json(c).dump(2) << '\n';
}

}  // namespace mvc3d
