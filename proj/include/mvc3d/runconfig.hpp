#pragma once

#include <filesystem>
#include <string>

#include <json.hpp>

#include "mvc3d/model.hpp"
#include "mvc3d/train.hpp"

namespace mvc3d {

// Fully resolved settings for one command run: model and trainer parameters
// plus dataset wiring and the output directory. Serialized as a flat JSON
// object with dotted keys ("model.n_views", "train.lr", ...) so a config file
// and command-line overrides address the same namespace. Precedence: defaults,
// then the config file, then explicit overrides, in that order.
struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  std::filesystem::path data_dir;  // corpus root containing manifest.json
  std::filesystem::path out_dir;   // every artifact of the run lands here
  double interval_deg = 10.0;      // angular gap between assembled views
  Index start_index = 0;           // first ring view of the arc
  bool random_start = false;       // redraw each object's start per epoch
  bool strict_size = true;         // reject images that need resizing
};

void validate(const RunConfig& c);

// Every recognized dotted key, sorted.
std::vector<std::string> runconfig_keys();

// Sets one dotted key from a JSON value; unknown keys and wrong types throw
// std::invalid_argument naming the key.
void apply_key(RunConfig& c, const std::string& key, const nlohmann::json& value);

// Sets one dotted key from "key=value" flag text. The value is parsed as JSON
// when possible and falls back to a plain string ("model.schedule=fixed-3").
void apply_override(RunConfig& c, const std::string& key_equals_value);

// Flat JSON object holding every key; load(write(c)) reproduces c exactly.
nlohmann::json runconfig_json(const RunConfig& c);

// Merges a flat JSON object into c. Nested objects are rejected: the file
// format is one level of dotted keys.
void merge_runconfig(RunConfig& c, const nlohmann::json& flat);

RunConfig load_runconfig(const std::filesystem::path& path);
void write_runconfig(const RunConfig& c, const std::filesystem::path& path);

}  // namespace mvc3d
