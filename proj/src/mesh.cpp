#include "mvc3d/mesh.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>
#include <stdexcept>
#include <string>

namespace mvc3d {

namespace {

constexpr double kPi = std::numbers::pi;

void require_positive(double v, const char* what) {
  if (!(v > 0)) throw std::invalid_argument(std::string(what) + " must be positive");
}

void require_segments(int n, int least, const char* what) {
  if (n < least)
    throw std::invalid_argument(std::string(what) + ": need at least " + std::to_string(least) +
                                " segments, got " + std::to_string(n));
}

}  // namespace

TriMesh make_box(double sx, double sy, double sz) {
  require_positive(sx, "box extent");
  require_positive(sy, "box extent");
  require_positive(sz, "box extent");
  const double x = sx / 2, y = sy / 2, z = sz / 2;
  TriMesh m;
  m.vertices = {{-x, -y, -z}, {x, -y, -z}, {x, y, -z}, {-x, y, -z},
                {-x, -y, z},  {x, -y, z},  {x, y, z},  {-x, y, z}};
  m.faces = {{0, 2, 1}, {0, 3, 2},   // bottom, normal -z
             {4, 5, 6}, {4, 6, 7},   // top, normal +z
             {0, 1, 5}, {0, 5, 4},   // -y side
             {2, 3, 7}, {2, 7, 6},   // +y side
             {1, 2, 6}, {1, 6, 5},   // +x side
             {3, 0, 4}, {3, 4, 7}};  // -x side
  return m;
}

TriMesh make_sphere(double radius, int segments, int rings) {
  require_positive(radius, "sphere radius");
  require_segments(segments, 3, "sphere");
  require_segments(rings, 2, "sphere rings");
  TriMesh m;
  m.vertices.push_back({0, 0, radius});   // north pole
  for (int r = 1; r < rings; ++r) {
    const double phi = kPi * r / rings;   // polar angle from +z
    for (int s = 0; s < segments; ++s) {
      const double theta = 2 * kPi * s / segments;
      m.vertices.push_back({radius * std::sin(phi) * std::cos(theta),
                            radius * std::sin(phi) * std::sin(theta), radius * std::cos(phi)});
    }
  }
  m.vertices.push_back({0, 0, -radius});  // south pole
  const int south = static_cast<int>(m.vertices.size()) - 1;
  auto ring_vertex = [&](int r, int s) { return 1 + (r - 1) * segments + s % segments; };

  for (int s = 0; s < segments; ++s)
    m.faces.push_back({0, ring_vertex(1, s), ring_vertex(1, s + 1)});
  for (int r = 1; r < rings - 1; ++r)
    for (int s = 0; s < segments; ++s) {
      const int a = ring_vertex(r, s), b = ring_vertex(r, s + 1);
      const int c = ring_vertex(r + 1, s), d = ring_vertex(r + 1, s + 1);
      m.faces.push_back({a, c, d});
      m.faces.push_back({a, d, b});
    }
  for (int s = 0; s < segments; ++s)
    m.faces.push_back({south, ring_vertex(rings - 1, s + 1), ring_vertex(rings - 1, s)});
  return m;
}

TriMesh make_cylinder(double radius, double height, int segments) {
  require_positive(radius, "cylinder radius");
  require_positive(height, "cylinder height");
  require_segments(segments, 3, "cylinder");
  TriMesh m;
  const double z = height / 2;
  for (int s = 0; s < segments; ++s) {
    const double theta = 2 * kPi * s / segments;
    const double x = radius * std::cos(theta), y = radius * std::sin(theta);
    m.vertices.push_back({x, y, -z});
    m.vertices.push_back({x, y, z});
  }
  const int bot_center = static_cast<int>(m.vertices.size());
  m.vertices.push_back({0, 0, -z});
  const int top_center = bot_center + 1;
  m.vertices.push_back({0, 0, z});
  for (int s = 0; s < segments; ++s) {
    const int a = 2 * s, b = 2 * ((s + 1) % segments);
    m.faces.push_back({a, b, b + 1});      // side
    m.faces.push_back({a, b + 1, a + 1});
    m.faces.push_back({bot_center, b, a});         // bottom cap faces -z
    m.faces.push_back({top_center, a + 1, b + 1}); // top cap faces +z
  }
  return m;
}

TriMesh make_cone(double radius, double height, int segments) {
  require_positive(radius, "cone radius");
  require_positive(height, "cone height");
  require_segments(segments, 3, "cone");
  TriMesh m;
  const double z = height / 2;
  for (int s = 0; s < segments; ++s) {
    const double theta = 2 * kPi * s / segments;
    m.vertices.push_back({radius * std::cos(theta), radius * std::sin(theta), -z});
  }
  const int apex = static_cast<int>(m.vertices.size());
  m.vertices.push_back({0, 0, z});
  const int base_center = apex + 1;
  m.vertices.push_back({0, 0, -z});
  for (int s = 0; s < segments; ++s) {
    const int a = s, b = (s + 1) % segments;
    m.faces.push_back({a, b, apex});
    m.faces.push_back({base_center, b, a});
  }
  return m;
}

TriMesh make_torus(double major_radius, double minor_radius, int segments, int sides) {
  require_positive(major_radius, "torus major radius");
  require_positive(minor_radius, "torus minor radius");
  if (minor_radius >= major_radius)
    throw std::invalid_argument("torus: minor radius must be smaller than the major radius");
  require_segments(segments, 3, "torus");
  require_segments(sides, 3, "torus sides");
  TriMesh m;
  for (int s = 0; s < segments; ++s) {
    const double u = 2 * kPi * s / segments;
    for (int t = 0; t < sides; ++t) {
      const double v = 2 * kPi * t / sides;
      const double ring = major_radius + minor_radius * std::cos(v);
      m.vertices.push_back(
          {ring * std::cos(u), ring * std::sin(u), minor_radius * std::sin(v)});
    }
  }
  auto vid = [&](int s, int t) { return (s % segments) * sides + (t % sides); };
  for (int s = 0; s < segments; ++s)
    for (int t = 0; t < sides; ++t) {
      const int a = vid(s, t), b = vid(s + 1, t), c = vid(s + 1, t + 1), d = vid(s, t + 1);
      m.faces.push_back({a, b, c});
      m.faces.push_back({a, c, d});
    }
  return m;
}

void rotate_z(TriMesh& mesh, double degrees) {
  const double rad = degrees * kPi / 180.0;
  const double c = std::cos(rad), s = std::sin(rad);
  for (Vec3& v : mesh.vertices) {
    const double x = v[0], y = v[1];
    v[0] = c * x - s * y;
    v[1] = s * x + c * y;
  }
}

Bounds bounding_box(const TriMesh& mesh) {
  if (mesh.vertices.empty()) throw std::invalid_argument("bounding_box: empty mesh");
  Vec3 lo = mesh.vertices[0], hi = mesh.vertices[0];
  for (const Vec3& v : mesh.vertices)
    for (int i = 0; i < 3; ++i) {
      lo[i] = std::min(lo[i], v[i]);
      hi[i] = std::max(hi[i], v[i]);
    }
  Bounds b;
  for (int i = 0; i < 3; ++i) {
    b.center[i] = (lo[i] + hi[i]) / 2;
    b.half_extents[i] = (hi[i] - lo[i]) / 2;
  }
  return b;
}

Vec3 vertex_centroid(const TriMesh& mesh) {
  if (mesh.vertices.empty()) throw std::invalid_argument("vertex_centroid: empty mesh");
  Vec3 c{0, 0, 0};
  for (const Vec3& v : mesh.vertices)
    for (int i = 0; i < 3; ++i) c[i] += v[i];
  for (int i = 0; i < 3; ++i) c[i] /= static_cast<double>(mesh.vertices.size());
  return c;
}

double circumscribed_radius(const TriMesh& mesh) {
  const Vec3 c = vertex_centroid(mesh);
  double r2 = 0;
  for (const Vec3& v : mesh.vertices) {
    const double dx = v[0] - c[0], dy = v[1] - c[1], dz = v[2] - c[2];
    r2 = std::max(r2, dx * dx + dy * dy + dz * dz);
  }
  return std::sqrt(r2);
}

double bounding_radius(const TriMesh& mesh) {
  return std::sqrt(3.0) * circumscribed_radius(mesh);
}

double signed_volume(const TriMesh& mesh) {
  double v6 = 0;
  for (const auto& f : mesh.faces) {
    const Vec3& a = mesh.vertices[static_cast<std::size_t>(f[0])];
    const Vec3& b = mesh.vertices[static_cast<std::size_t>(f[1])];
    const Vec3& c = mesh.vertices[static_cast<std::size_t>(f[2])];
    v6 += a[0] * (b[1] * c[2] - b[2] * c[1]) - a[1] * (b[0] * c[2] - b[2] * c[0]) +
          a[2] * (b[0] * c[1] - b[1] * c[0]);
  }
  return v6 / 6.0;
}

namespace {

// Splits one content line into tokens, dropping anything after '#'.
std::vector<std::string> off_tokens(const std::string& line) {
  std::string clean = line.substr(0, line.find('#'));
  std::vector<std::string> toks;
  std::istringstream is(clean);
  std::string t;
  while (is >> t) toks.push_back(t);
  return toks;
}

}  // namespace

TriMesh load_off(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("off: cannot open " + path.string());
  const std::string where = "off: " + path.string();

  long long line_no = 0;
  auto next_line = [&]() -> std::vector<std::string> {
    std::string line;
    while (std::getline(in, line)) {
      ++line_no;
      auto toks = off_tokens(line);
      if (!toks.empty()) return toks;
    }
    throw std::runtime_error(where + " ends prematurely at line " + std::to_string(line_no));
  };
  auto parse_ll = [&](const std::string& t) {
    std::size_t pos = 0;
    long long v = 0;
    try {
      v = std::stoll(t, &pos);
    } catch (const std::exception&) {
      pos = 0;
    }
    if (pos != t.size())
      throw std::runtime_error(where + " line " + std::to_string(line_no) + ": bad integer '" +
                               t + "'");
    return v;
  };
  auto parse_d = [&](const std::string& t) {
    std::size_t pos = 0;
    double v = 0.0;
    try {
      v = std::stod(t, &pos);
    } catch (const std::exception&) {
      pos = 0;
    }
    if (pos != t.size())
      throw std::runtime_error(where + " line " + std::to_string(line_no) + ": bad number '" +
                               t + "'");
    return v;
  };

  std::vector<std::string> head = next_line();
  std::vector<std::string> counts;
  if (head[0] == "OFF") {
    counts.assign(head.begin() + 1, head.end());
    if (counts.empty()) counts = next_line();
  } else if (head[0].rfind("OFF", 0) == 0) {
    // header glued to the vertex count, as in some ModelNet files
    counts.push_back(head[0].substr(3));
    counts.insert(counts.end(), head.begin() + 1, head.end());
  } else {
    throw std::runtime_error(where + ": missing OFF header");
  }
  if (counts.size() < 2)
    throw std::runtime_error(where + ": header needs vertex and face counts");
  const long long nv = parse_ll(counts[0]);
  const long long nf = parse_ll(counts[1]);
  if (nv < 3 || nf < 1)
    throw std::runtime_error(where + ": " + std::to_string(nv) + " vertices / " +
                             std::to_string(nf) + " faces");

  TriMesh mesh;
  mesh.vertices.reserve(static_cast<std::size_t>(nv));
  for (long long i = 0; i < nv; ++i) {
    const auto toks = next_line();
    if (toks.size() < 3)
      throw std::runtime_error(where + " line " + std::to_string(line_no) +
                               ": vertex needs three coordinates");
    mesh.vertices.push_back({parse_d(toks[0]), parse_d(toks[1]), parse_d(toks[2])});
  }
  for (long long i = 0; i < nf; ++i) {
    const auto toks = next_line();
    const long long k = parse_ll(toks[0]);
    if (k < 3 || toks.size() < static_cast<std::size_t>(k) + 1)
      throw std::runtime_error(where + " line " + std::to_string(line_no) + ": face lists " +
                               std::to_string(k) + " vertices but has " +
                               std::to_string(toks.size() - 1));
    std::vector<int> poly;
    for (long long j = 1; j <= k; ++j) {
      const long long idx = parse_ll(toks[static_cast<std::size_t>(j)]);
      if (idx < 0 || idx >= nv)
        throw std::runtime_error(where + " line " + std::to_string(line_no) +
                                 ": vertex index " + std::to_string(idx) + " outside [0," +
                                 std::to_string(nv) + ")");
      poly.push_back(static_cast<int>(idx));
    }
    for (std::size_t j = 1; j + 1 < poly.size(); ++j)
      mesh.faces.push_back({poly[0], poly[j], poly[j + 1]});
  }
  return mesh;
}

}  // namespace mvc3d

