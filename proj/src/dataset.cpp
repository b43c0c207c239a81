#include "mvc3d/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

namespace mvc3d {

namespace {

constexpr int kSchemaVersion = 1;
constexpr double kAngleTol = 1e-6;

}  // namespace

ViewSource view_source_from_string(const std::string& s) {
  if (s == "rendered") return ViewSource::rendered;
  if (s == "external") return ViewSource::external;
  if (s == "synthetic") return ViewSource::synthetic;
  throw std::invalid_argument("view source '" + s +
                              "' (want rendered, external, or synthetic)");
}

std::string to_string(ViewSource s) {
  switch (s) {
    case ViewSource::rendered: return "rendered";
    case ViewSource::external: return "external";
    default: return "synthetic";
  }
}

Index Manifest::class_index(const std::string& category) const {
  const auto it = std::find(classes.begin(), classes.end(), category);
  if (it == classes.end())
    throw std::invalid_argument("manifest: category '" + category +
                                "' is not in the class list");
  return static_cast<Index>(it - classes.begin());
}

namespace {

void validate_manifest(const Manifest& m, bool verify_files) {
  if (m.classes.empty()) throw std::runtime_error("manifest: empty class list");
  for (const ViewSet& vs : m.objects) {
    if (vs.views.empty())
      throw std::runtime_error("manifest: object '" + vs.object_id + "' has no views");
    if (std::find(m.classes.begin(), m.classes.end(), vs.category) == m.classes.end())
      throw std::runtime_error("manifest: object '" + vs.object_id + "' has category '" +
                               vs.category + "' outside the class list");
    for (std::size_t i = 0; i < vs.views.size(); ++i) {
      const ViewRef& v = vs.views[i];
      if (v.azimuth_deg < 0.0 || v.azimuth_deg >= 360.0)
        throw std::runtime_error("manifest: object '" + vs.object_id + "' azimuth " +
                                 std::to_string(v.azimuth_deg) + " outside [0,360)");
      if (i > 0 && v.azimuth_deg <= vs.views[i - 1].azimuth_deg - kAngleTol)
        throw std::runtime_error("manifest: object '" + vs.object_id +
                                 "' views are not sorted by azimuth");
      if (verify_files && !std::filesystem::exists(m.root / v.path))
        throw std::runtime_error("manifest: missing image file " + (m.root / v.path).string());
    }
  }
}

}  // namespace

Manifest load_manifest(const std::filesystem::path& path, bool verify_files) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("manifest: cannot open " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("manifest: " + path.string() + " is not valid JSON: " + e.what());
  }
  Manifest m;
  m.root = path.has_parent_path() ? path.parent_path() : std::filesystem::path(".");
  try {
    if (j.at("schema_version").get<int>() != kSchemaVersion)
      throw std::runtime_error("manifest: unsupported schema version " +
                               j.at("schema_version").dump());
    m.name = j.at("name").get<std::string>();
    m.classes = j.at("classes").get<std::vector<std::string>>();
    for (const auto& jo : j.at("objects")) {
      ViewSet vs;
      vs.object_id = jo.at("object_id").get<std::string>();
      vs.category = jo.at("category").get<std::string>();
      vs.split = jo.at("split").get<std::string>();
      vs.source = view_source_from_string(jo.at("source").get<std::string>());
      for (const auto& jv : jo.at("views")) {
        ViewRef v;
        v.azimuth_deg = jv.at("azimuth").get<double>();
        v.elevation_deg = jv.at("elevation").get<double>();
        v.path = jv.at("path").get<std::string>();
        vs.views.push_back(std::move(v));
      }
      m.objects.push_back(std::move(vs));
    }
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("manifest: " + path.string() + " violates the schema: " + e.what());
  }
  std::sort(m.objects.begin(), m.objects.end(),
            [](const ViewSet& a, const ViewSet& b) { return a.object_id < b.object_id; });
  validate_manifest(m, verify_files);
  return m;
}

void write_manifest(const Manifest& manifest, const std::filesystem::path& path) {
  nlohmann::json j;
  j["schema_version"] = kSchemaVersion;
  j["name"] = manifest.name;
  j["classes"] = manifest.classes;
  auto objects = nlohmann::json::array();
  std::vector<const ViewSet*> sorted;
  for (const ViewSet& vs : manifest.objects) sorted.push_back(&vs);
  std::sort(sorted.begin(), sorted.end(),
            [](const ViewSet* a, const ViewSet* b) { return a->object_id < b->object_id; });
  for (const ViewSet* vs : sorted) {
    nlohmann::json jo;
    jo["object_id"] = vs->object_id;
    jo["category"] = vs->category;
    jo["split"] = vs->split;
    jo["source"] = to_string(vs->source);
    auto views = nlohmann::json::array();
    for (const ViewRef& v : vs->views) {
      nlohmann::json jv;
      jv["azimuth"] = v.azimuth_deg;
      jv["elevation"] = v.elevation_deg;
      jv["path"] = v.path.generic_string();
      views.push_back(std::move(jv));
    }
    jo["views"] = std::move(views);
    objects.push_back(std::move(jo));
  }
  j["objects"] = std::move(objects);
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("manifest: cannot open " + path.string() + " for writing");
  out << j.dump(2) << '\n';
  if (!out) throw std::runtime_error("manifest: write failed for " + path.string());
}

double ring_stride_deg(const ViewSet& vs) {
  const std::size_t V = vs.views.size();
  if (V < 2)
    throw std::invalid_argument("view ring: object '" + vs.object_id + "' has " +
                                std::to_string(V) + " views, need at least 2");
  const double stride = 360.0 / static_cast<double>(V);
  for (std::size_t i = 0; i < V; ++i) {
    const double want = vs.views[0].azimuth_deg + stride * static_cast<double>(i);
    if (std::abs(vs.views[i].azimuth_deg - want) > kAngleTol)
      throw std::invalid_argument("view ring: object '" + vs.object_id +
                                  "' is not a uniform ring (view " + std::to_string(i) +
                                  " at " + std::to_string(vs.views[i].azimuth_deg) +
                                  ", expected " + std::to_string(want) + ")");
  }
  return stride;
}

std::vector<ViewRef> select_contiguous_views(const ViewSet& vs, Index n, double interval_deg,
                                             Index start_index, int direction) {
  if (n < 1) throw std::invalid_argument("view selection: need at least one view");
  if (direction != 1 && direction != -1)
    throw std::invalid_argument("view selection: direction must be +1 or -1");
  const double stride = ring_stride_deg(vs);
  const double ratio = interval_deg / stride;
  const Index step = static_cast<Index>(std::llround(ratio));
  if (step < 1 || std::abs(ratio - static_cast<double>(step)) > kAngleTol)
    throw std::invalid_argument("view selection: interval " + std::to_string(interval_deg) +
                                " is not a positive multiple of the ring stride " +
                                std::to_string(stride));
  const Index V = static_cast<Index>(vs.views.size());
  if (n * step > V)
    throw std::invalid_argument("view selection: " + std::to_string(n) + " views at interval " +
                                std::to_string(interval_deg) + " span more than one lap of the " +
                                std::to_string(V) + "-view ring");
  std::vector<ViewRef> out;
  Index idx = ((start_index % V) + V) % V;
  for (Index i = 0; i < n; ++i) {
    out.push_back(vs.views[static_cast<std::size_t>(idx)]);
    idx = ((idx + direction * step) % V + V) % V;
  }
  return out;
}

ImageU8 resize_nearest(const ImageU8& img, Index target_hw) {
  if (target_hw < 1) throw std::invalid_argument("resize: nonpositive target size");
  if (img.width == target_hw && img.height == target_hw) return img;
  ImageU8 out(target_hw, target_hw, img.channels);
  for (Index y = 0; y < target_hw; ++y) {
    const Index sy = std::min(img.height - 1, y * img.height / target_hw);
    for (Index x = 0; x < target_hw; ++x) {
      const Index sx = std::min(img.width - 1, x * img.width / target_hw);
      for (Index c = 0; c < img.channels; ++c) out.at(x, y, c) = img.at(sx, sy, c);
    }
  }
  return out;
}

Tensor stack_to_cube(const std::filesystem::path& root, const std::vector<ViewRef>& views,
                     Index target_hw, bool strict_size) {
  if (views.empty()) throw std::invalid_argument("stack_to_cube: no views");
  const Index N = static_cast<Index>(views.size());
  Tensor cube(Shape{3, N, target_hw, target_hw});
  const Index plane = target_hw * target_hw;
  for (Index v = 0; v < N; ++v) {
    const auto full = root / views[static_cast<std::size_t>(v)].path;
    ImageU8 img = read_image(full);
    if (img.width != target_hw || img.height != target_hw) {
      if (strict_size)
        throw std::runtime_error("stack_to_cube: " + full.string() + " measures " +
                                 std::to_string(img.width) + "x" + std::to_string(img.height) +
                                 ", expected " + std::to_string(target_hw) + "x" +
                                 std::to_string(target_hw));
      img = resize_nearest(img, target_hw);
    }
    for (Index y = 0; y < target_hw; ++y)
      for (Index x = 0; x < target_hw; ++x)
        for (Index c = 0; c < 3; ++c) {
          const std::uint8_t px =
              img.channels == 3 ? img.at(x, y, c) : img.at(x, y, 0);  // gray replicates
          cube[(c * N + v) * plane + y * target_hw + x] =
              static_cast<Real>(px) / Real(255);
        }
  }
  return cube;
}

std::vector<LabeledCube> assemble_cubes(const Manifest& manifest, const std::string& split,
                                        const AssembleOptions& options) {
  std::vector<LabeledCube> out;
  for (const ViewSet& vs : manifest.objects) {
    if (vs.split != split) continue;
    Index start = options.start_index;
    if (options.start_rng) {
      std::uniform_int_distribution<Index> pick(0, static_cast<Index>(vs.views.size()) - 1);
      start = pick(*options.start_rng);
    }
    const auto views = select_contiguous_views(vs, options.n_views, options.interval_deg, start);
    LabeledCube item;
    item.cube = stack_to_cube(manifest.root, views, options.target_hw, options.strict_size);
    item.label = manifest.class_index(vs.category);
    out.push_back(std::move(item));
  }
  if (out.empty())
    throw std::invalid_argument("assemble_cubes: no objects in split '" + split + "'");
  return out;
}

}  // namespace mvc3d
