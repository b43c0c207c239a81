#include "mvc3d/synth.hpp"

#include <random>

#include "mvc3d/render.hpp"

namespace mvc3d {

namespace {

const std::vector<std::string> kFamilies = {"box", "sphere", "cylinder", "cone", "torus"};

void scale_axes(TriMesh& m, double sx, double sy, double sz) {
  for (Vec3& v : m.vertices) {
    v[0] *= sx;
    v[1] *= sy;
    v[2] *= sz;
  }
}

}  // namespace

std::vector<std::string> synth_class_names(Index n_classes) {
  if (n_classes < 2 || n_classes > static_cast<Index>(kFamilies.size()))
    throw std::invalid_argument("synth: class count " + std::to_string(n_classes) +
                                " outside [2," + std::to_string(kFamilies.size()) + "]");
  return {kFamilies.begin(), kFamilies.begin() + n_classes};
}

TriMesh synth_mesh(const std::string& family, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> scale_d(0.7, 1.3);
  std::uniform_real_distribution<double> aspect_d(0.8, 1.25);
  std::uniform_real_distribution<double> heading_d(0.0, 360.0);
  const double scale = scale_d(rng);
  const double ax = aspect_d(rng), ay = aspect_d(rng), az = aspect_d(rng);
  const double heading = heading_d(rng);

  TriMesh m;
  if (family == "box") {
    m = make_box(1.2, 0.9, 0.7);
  } else if (family == "sphere") {
    m = make_sphere(0.6, 36, 18);
  } else if (family == "cylinder") {
    m = make_cylinder(0.45, 1.3, 36);
  } else if (family == "cone") {
    m = make_cone(0.55, 1.2, 36);
  } else if (family == "torus") {
    m = make_torus(0.6, 0.22, 36, 18);
  } else {
    throw std::invalid_argument("synth: unknown shape family '" + family + "'");
  }
  scale_axes(m, scale * ax, scale * ay, scale * az);
  rotate_z(m, heading);
  return m;
}

Manifest synth_generate(const SynthOptions& opt, const std::filesystem::path& out_dir) {
  if (opt.instances < 1) throw std::invalid_argument("synth: need at least one instance");
  if (opt.ring_views < 1) throw std::invalid_argument("synth: need at least one ring view");
  if (!(opt.train_fraction > 0.0 && opt.train_fraction < 1.0))
    throw std::invalid_argument("synth: train fraction must lie in (0,1)");
  if (opt.image_size < 4) throw std::invalid_argument("synth: image size too small");

  Manifest manifest;
  manifest.name = "synthetic-shapes";
  manifest.root = out_dir;
  manifest.classes = synth_class_names(opt.n_classes);

  RenderOptions render_opt;
  render_opt.image_size = opt.image_size;
  const auto angles = turntable_angles(static_cast<int>(opt.ring_views), opt.elevation_deg);

  Index n_train = static_cast<Index>(std::lround(opt.train_fraction *
                                                 static_cast<double>(opt.instances)));
  n_train = std::clamp<Index>(n_train, 1, std::max<Index>(1, opt.instances - 1));

  std::uint64_t instance_stream = 0;
  for (Index cls = 0; cls < opt.n_classes; ++cls) {
    const std::string& family = manifest.classes[static_cast<std::size_t>(cls)];
    for (Index inst = 0; inst < opt.instances; ++inst, ++instance_stream) {
      const TriMesh mesh = synth_mesh(family, mix_seed(opt.seed, instance_stream));
      ViewSet vs;
      char id[64];
      std::snprintf(id, sizeof id, "%s_%04lld", family.c_str(),
                    static_cast<long long>(inst));
      vs.object_id = id;
      vs.category = family;
      vs.split = (opt.instances == 1 || inst < n_train) ? "train" : "test";
      vs.source = ViewSource::synthetic;

      const std::filesystem::path rel_dir =
          std::filesystem::path(family) / vs.split / vs.object_id;
      std::filesystem::create_directories(out_dir / rel_dir);
      for (const ViewAngles& view : angles) {
        const ImageU8 img = render_view(mesh, view, render_opt);
        const std::string fname = view_filename(view);
        write_ppm(out_dir / rel_dir / fname, img, true);
        vs.views.push_back({view.azimuth_deg, view.elevation_deg, rel_dir / fname});
      }
      manifest.objects.push_back(std::move(vs));
    }
  }
  write_manifest(manifest, out_dir / "manifest.json");
  return load_manifest(out_dir / "manifest.json");
}

}  // namespace mvc3d
