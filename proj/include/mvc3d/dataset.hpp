#pragma once

#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "mvc3d/image.hpp"
#include "mvc3d/metrics.hpp"

namespace mvc3d {

enum class ViewSource { rendered, external, synthetic };
ViewSource view_source_from_string(const std::string& s);
std::string to_string(ViewSource s);

// One stored view image with its camera angles; the path is relative to the
// dataset root.
struct ViewRef {
  double azimuth_deg = 0.0;
  double elevation_deg = 0.0;
  std::filesystem::path path;
};

// All views of one object, sorted by azimuth into a ring.
struct ViewSet {
  std::string object_id;
  std::string category;
  std::string split;  // "train" or "test"
  ViewSource source = ViewSource::rendered;
  std::vector<ViewRef> views;
};

struct Manifest {
  std::string name;
  std::filesystem::path root;  // directory the view paths resolve against; not serialized
  std::vector<std::string> classes;
  std::vector<ViewSet> objects;  // sorted by object_id

  // Position of a category in the class list; throws when absent.
  Index class_index(const std::string& category) const;
};

// Parses and validates manifest JSON. Objects come back sorted by object_id.
// With verify_files, every referenced image must exist under the root.
Manifest load_manifest(const std::filesystem::path& path, bool verify_files = true);

// Canonical JSON, relative paths, stable ordering: load(write(m)) == m.
void write_manifest(const Manifest& manifest, const std::filesystem::path& path);

// Angular gap of the uniform view ring; throws when the ring is irregular.
double ring_stride_deg(const ViewSet& vs);

// Picks n views starting at start_index, stepping interval_deg around the
// ring (direction +1 or -1), wrapping past 0/360. The interval must be a
// multiple of the ring stride and the arc must fit in one lap.
std::vector<ViewRef> select_contiguous_views(const ViewSet& vs, Index n, double interval_deg,
                                             Index start_index, int direction = 1);

// Nearest-neighbor resample to a square target.
ImageU8 resize_nearest(const ImageU8& img, Index target_hw);

// Loads the given views and stacks them into a [3, N, H, W] tensor in [0, 1].
// In strict mode every image must already measure target_hw on both sides;
// otherwise images are resized nearest-neighbor.
Tensor stack_to_cube(const std::filesystem::path& root, const std::vector<ViewRef>& views,
                     Index target_hw = 112, bool strict_size = true);

struct AssembleOptions {
  Index n_views = 12;
  double interval_deg = 10.0;
  Index start_index = 0;
  Index target_hw = 112;
  bool strict_size = true;
  std::mt19937_64* start_rng = nullptr;  // when set, draws each object's start
};

// Builds labeled cubes for every object of the split, in manifest order.
std::vector<LabeledCube> assemble_cubes(const Manifest& manifest, const std::string& split,
                                        const AssembleOptions& options);

}  // namespace mvc3d
