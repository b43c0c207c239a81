#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "mvc3d/dataset.hpp"

using namespace mvc3d;
namespace fs = std::filesystem;

namespace {

// Six-view ring of 4x4 images whose pixels encode the view index.
Manifest tiny_corpus(const fs::path& root) {
  fs::create_directories(root);
  Manifest m;
  m.name = "tiny";
  m.root = root;
  m.classes = {"a", "b"};
  for (int obj = 0; obj < 2; ++obj) {
    ViewSet vs;
    vs.object_id = obj == 0 ? "a_0" : "b_0";
    vs.category = obj == 0 ? "a" : "b";
    vs.split = obj == 0 ? "train" : "test";
    vs.source = ViewSource::synthetic;
    const fs::path dir = fs::path(vs.category) / vs.split / vs.object_id;
    fs::create_directories(root / dir);
    for (int v = 0; v < 6; ++v) {
      ImageU8 img(4, 4, 3);
      for (std::size_t i = 0; i < img.pixels.size(); ++i)
        img.pixels[i] = static_cast<std::uint8_t>(40 * v + (i % 3));
      const fs::path rel = dir / ("view_" + std::to_string(v) + ".ppm");
      write_ppm(root / rel, img);
      vs.views.push_back({60.0 * v, 30.0, rel});
    }
    m.objects.push_back(std::move(vs));
  }
  return m;
}

// Ring with fake paths for selection logic; no files are touched.
ViewSet fake_ring(int count) {
  ViewSet vs;
  vs.object_id = "ring";
  vs.category = "a";
  vs.split = "train";
  for (int i = 0; i < count; ++i)
    vs.views.push_back({360.0 * i / count, 30.0, "unused.ppm"});
  return vs;
}

std::vector<double> azimuths(const std::vector<ViewRef>& views) {
  std::vector<double> out;
  for (const auto& v : views) out.push_back(v.azimuth_deg);
  return out;
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

}  // namespace

TEST_CASE("manifest write then load is a fixed point") {
  TempDir tmp("mvc3d_ds_roundtrip");
  Manifest m = tiny_corpus(tmp.path);
  write_manifest(m, tmp.path / "manifest.json");
  Manifest back = load_manifest(tmp.path / "manifest.json");
  CHECK(back.name == m.name);
  CHECK(back.classes == m.classes);
  REQUIRE(back.objects.size() == 2);
  CHECK(back.objects[0].object_id == "a_0");
  CHECK(back.objects[1].object_id == "b_0");
  CHECK(back.objects[0].views.size() == 6);
  CHECK(back.objects[0].views[3].azimuth_deg == 180.0);
  CHECK(back.objects[0].views[3].elevation_deg == 30.0);
  CHECK(back.objects[1].source == ViewSource::synthetic);

  // second round trip produces byte-identical json
  write_manifest(back, tmp.path / "manifest2.json");
  std::ifstream f1(tmp.path / "manifest.json"), f2(tmp.path / "manifest2.json");
  const std::string s1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
  const std::string s2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
  CHECK(s1 == s2);

  CHECK(back.class_index("a") == 0);
  CHECK(back.class_index("b") == 1);
  CHECK_THROWS_AS(back.class_index("zz"), std::invalid_argument);
}

TEST_CASE("manifest validation names the precise failure") {
  TempDir tmp("mvc3d_ds_validate");
  Manifest m = tiny_corpus(tmp.path);
  write_manifest(m, tmp.path / "manifest.json");

  // dangling image path
  const fs::path victim = tmp.path / m.objects[0].views[2].path;
  fs::remove(victim);
  CHECK_THROWS_WITH_AS(static_cast<void>(load_manifest(tmp.path / "manifest.json")),
                       doctest::Contains(victim.filename().string().c_str()),
                       std::runtime_error);
  CHECK_NOTHROW(static_cast<void>(load_manifest(tmp.path / "manifest.json", false)));

  // schema violation: drop a required key
  std::ofstream bad(tmp.path / "bad.json");
  bad << R"({"schema_version": 1, "name": "x", "objects": []})";
  bad.close();
  CHECK_THROWS_WITH_AS(static_cast<void>(load_manifest(tmp.path / "bad.json")),
                       doctest::Contains("schema"), std::runtime_error);

  // not json at all
  std::ofstream garbage(tmp.path / "garbage.json");
  garbage << "not json {";
  garbage.close();
  CHECK_THROWS_WITH_AS(static_cast<void>(load_manifest(tmp.path / "garbage.json")),
                       doctest::Contains("JSON"), std::runtime_error);

  CHECK_THROWS_AS(static_cast<void>(load_manifest(tmp.path / "absent.json")),
                  std::runtime_error);

  // category outside the class list
  Manifest rogue = tiny_corpus(tmp.path);
  rogue.objects[1].category = "mystery";
  write_manifest(rogue, tmp.path / "rogue.json");
  CHECK_THROWS_WITH_AS(static_cast<void>(load_manifest(tmp.path / "rogue.json")),
                       doctest::Contains("mystery"), std::runtime_error);
}

TEST_CASE("ring stride detection") {
  CHECK(ring_stride_deg(fake_ring(36)) == doctest::Approx(10.0));
  CHECK(ring_stride_deg(fake_ring(12)) == doctest::Approx(30.0));
  ViewSet crooked = fake_ring(6);
  crooked.views[3].azimuth_deg += 7.0;
  CHECK_THROWS_AS(static_cast<void>(ring_stride_deg(crooked)), std::invalid_argument);
  ViewSet lone = fake_ring(1);
  CHECK_THROWS_AS(static_cast<void>(ring_stride_deg(lone)), std::invalid_argument);
}

TEST_CASE("contiguous view selection walks the ring as specified") {
  const ViewSet ring = fake_ring(36);

  // twelve views at a 30 degree interval cover the full circle
  auto wide = select_contiguous_views(ring, 12, 30.0, 0);
  std::vector<double> want_wide;
  for (int i = 0; i < 12; ++i) want_wide.push_back(30.0 * i);
  CHECK(azimuths(wide) == want_wide);

  // twelve views at 10 degrees form a 110 degree arc
  auto narrow = select_contiguous_views(ring, 12, 10.0, 0);
  std::vector<double> want_narrow;
  for (int i = 0; i < 12; ++i) want_narrow.push_back(10.0 * i);
  CHECK(azimuths(narrow) == want_narrow);

  // the full ring from any start is a rotation of the same set
  auto full = select_contiguous_views(ring, 36, 10.0, 5);
  CHECK(full.size() == 36);
  CHECK(full.front().azimuth_deg == 50.0);
  std::vector<double> sorted_az = azimuths(full);
  std::sort(sorted_az.begin(), sorted_az.end());
  CHECK(sorted_az == azimuths(select_contiguous_views(ring, 36, 10.0, 0)));

  // arcs wrap across zero
  auto wrapped = select_contiguous_views(ring, 4, 10.0, 34);
  CHECK(azimuths(wrapped) == std::vector<double>{340.0, 350.0, 0.0, 10.0});

  // reversing direction mirrors the arc
  auto fwd = select_contiguous_views(ring, 4, 10.0, 0, 1);
  auto bwd = select_contiguous_views(ring, 4, 10.0, 3, -1);
  std::vector<double> rev = azimuths(fwd);
  std::reverse(rev.begin(), rev.end());
  CHECK(azimuths(bwd) == rev);

  CHECK_THROWS_AS(select_contiguous_views(ring, 4, 15.0, 0), std::invalid_argument);
  CHECK_THROWS_AS(select_contiguous_views(ring, 13, 30.0, 0), std::invalid_argument);
  CHECK_THROWS_AS(select_contiguous_views(ring, 4, 10.0, 0, 2), std::invalid_argument);
  CHECK_NOTHROW(select_contiguous_views(ring, 4, 10.0, 40));  // start wraps modulo the ring
}

TEST_CASE("stacking views builds a unit-range cube and slicing recovers each image") {
  TempDir tmp("mvc3d_ds_stack");
  Manifest m = tiny_corpus(tmp.path);
  const ViewSet& vs = m.objects[0];
  auto picked = select_contiguous_views(vs, 3, 60.0, 1);
  Tensor cube = stack_to_cube(tmp.path, picked, 4);
  REQUIRE(cube.shape() == Shape{3, 3, 4, 4});

  // view v pixels were 40*(v) + channel; picked views are ring indices 1,2,3
  for (Index v = 0; v < 3; ++v)
    for (Index c = 0; c < 3; ++c)
      for (Index y = 0; y < 4; ++y)
        for (Index x = 0; x < 4; ++x) {
          const double want = (40.0 * static_cast<double>(v + 1) + static_cast<double>(c)) / 255.0;
          CHECK(cube.at({c, v, y, x}) == doctest::Approx(want).epsilon(1e-12));
        }
  for (Real val : cube.values()) {
    CHECK(val >= 0.0);
    CHECK(val <= 1.0);
  }

  // single view stays a rank-4 cube
  Tensor one = stack_to_cube(tmp.path, {picked[0]}, 4);
  CHECK(one.shape() == Shape{3, 1, 4, 4});

  // strict mode rejects a size mismatch; lenient mode resizes
  CHECK_THROWS_WITH_AS(static_cast<void>(stack_to_cube(tmp.path, picked, 8)),
                       doctest::Contains("4x4"), std::runtime_error);
  Tensor up = stack_to_cube(tmp.path, picked, 8, false);
  CHECK(up.shape() == Shape{3, 3, 8, 8});
  CHECK(up.at({0, 0, 7, 7}) == cube.at({0, 0, 3, 3}));
}

TEST_CASE("nearest neighbor resize repeats source pixels blockwise") {
  ImageU8 img(2, 2, 1);
  img.at(0, 0) = 10;
  img.at(1, 0) = 20;
  img.at(0, 1) = 30;
  img.at(1, 1) = 40;
  ImageU8 up = resize_nearest(img, 4);
  CHECK(up.at(0, 0) == 10);
  CHECK(up.at(1, 0) == 10);
  CHECK(up.at(2, 0) == 20);
  CHECK(up.at(3, 1) == 20);
  CHECK(up.at(0, 2) == 30);
  CHECK(up.at(3, 3) == 40);
  ImageU8 down = resize_nearest(up, 2);
  CHECK(down.pixels == img.pixels);
}

TEST_CASE("assembling cubes labels objects by their class position") {
  TempDir tmp("mvc3d_ds_assemble");
  Manifest m = tiny_corpus(tmp.path);
  AssembleOptions opt;
  opt.n_views = 3;
  opt.interval_deg = 60.0;
  opt.target_hw = 4;

  auto train = assemble_cubes(m, "train", opt);
  REQUIRE(train.size() == 1);
  CHECK(train[0].label == 0);
  CHECK(train[0].cube.shape() == Shape{3, 3, 4, 4});

  auto test = assemble_cubes(m, "test", opt);
  REQUIRE(test.size() == 1);
  CHECK(test[0].label == 1);

  CHECK_THROWS_AS(static_cast<void>(assemble_cubes(m, "val", opt)), std::invalid_argument);

  // a seeded start rng shifts the arc deterministically
  std::mt19937_64 rng_a(7), rng_b(7);
  AssembleOptions rand_opt = opt;
  rand_opt.start_rng = &rng_a;
  auto ra = assemble_cubes(m, "train", rand_opt);
  rand_opt.start_rng = &rng_b;
  auto rb = assemble_cubes(m, "train", rand_opt);
  for (Index i = 0; i < ra[0].cube.size(); ++i) CHECK(ra[0].cube[i] == rb[0].cube[i]);
}
