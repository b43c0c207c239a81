#pragma once

#include "mvc3d/dataset.hpp"
#include "mvc3d/mesh.hpp"

namespace mvc3d {

// Parametric shape families available to the synthetic corpus, in the order
// class counts draw from.
std::vector<std::string> synth_class_names(Index n_classes);

struct SynthOptions {
  Index n_classes = 4;       // drawn from box, sphere, cylinder, cone, torus
  Index instances = 20;      // objects per class
  Index ring_views = 36;     // views per object
  double elevation_deg = 30.0;
  Index image_size = 112;
  double train_fraction = 0.8;
  std::uint64_t seed = 0;
};

// Instance mesh with seeded jitter in scale, per-axis aspect, and heading.
TriMesh synth_mesh(const std::string& family, std::uint64_t seed);

// Renders the corpus under out_dir (class/split/object/view files plus
// manifest.json) and returns the manifest. Deterministic in the seed.
Manifest synth_generate(const SynthOptions& options, const std::filesystem::path& out_dir);

}  // namespace mvc3d
