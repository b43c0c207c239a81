#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "mvc3d/model.hpp"

namespace mvc3d {

// Checkpoint layout: magic, format version, config json, named tensors, crc32 trailer.
// The trailing checksum covers every preceding byte, so load detects truncation and
// bit corruption before any tensor is trusted.

void save_checkpoint(const Model& model, const std::filesystem::path& path);

// Rebuilds the model from the stored config, then loads parameters by name.
Model load_checkpoint(const std::filesystem::path& path);

// Stored crc32 of the file body; stable across identical training runs.
std::uint32_t checkpoint_checksum(const std::filesystem::path& path);

}  // namespace mvc3d
