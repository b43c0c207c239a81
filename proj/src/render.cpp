#include "mvc3d/render.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace mvc3d {

namespace {

constexpr double kPi = std::numbers::pi;

Vec3 sub(const Vec3& a, const Vec3& b) { return {a[0] - b[0], a[1] - b[1], a[2] - b[2]}; }
double dot(const Vec3& a, const Vec3& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }
Vec3 cross(const Vec3& a, const Vec3& b) {
  return {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]};
}
double norm(const Vec3& a) { return std::sqrt(dot(a, a)); }
Vec3 normalized(const Vec3& a) {
  const double n = norm(a);
  return n > 0 ? Vec3{a[0] / n, a[1] / n, a[2] / n} : Vec3{0, 0, 0};
}

struct ScreenVertex {
  double x, y;      // pixel coordinates
  double inv_z;     // reciprocal camera depth, affine across the screen triangle
};

double edge(const ScreenVertex& a, const ScreenVertex& b, double px, double py) {
  return (b.x - a.x) * (py - a.y) - (b.y - a.y) * (px - a.x);
}

}  // namespace

ImageU8 render_view(const TriMesh& mesh, const ViewAngles& view, const RenderOptions& opt) {
  if (opt.image_size < 1) throw std::invalid_argument("render: nonpositive image size");
  if (!(opt.fov_deg > 0 && opt.fov_deg < 180))
    throw std::invalid_argument("render: field of view must lie in (0,180)");
  if (mesh.faces.empty()) throw std::invalid_argument("render: mesh has no faces");

  const Vec3 center = vertex_centroid(mesh);
  const double radius = bounding_radius(mesh);
  if (!(radius > 0)) throw std::invalid_argument("render: degenerate mesh bounds");

  const double az = view.azimuth_deg * kPi / 180.0;
  const double el = view.elevation_deg * kPi / 180.0;
  const Vec3 dir = {std::cos(el) * std::cos(az), std::cos(el) * std::sin(az), std::sin(el)};
  const double dist = opt.distance_factor * radius;
  const Vec3 eye = {center[0] + dist * dir[0], center[1] + dist * dir[1],
                    center[2] + dist * dir[2]};
  const Vec3 forward = {-dir[0], -dir[1], -dir[2]};  // unit, eye toward center
  Vec3 up0 = {0, 0, 1};
  if (std::abs(forward[2]) > 1.0 - 1e-9) up0 = {1, 0, 0};  // straight up or down
  const Vec3 right = normalized(cross(forward, up0));
  const Vec3 up = cross(right, forward);

  const Index W = opt.image_size, H = opt.image_size;
  ImageU8 img(W, H, 1, opt.background);
  std::vector<double> zbuf(static_cast<std::size_t>(W * H), 0.0);  // inverse depth, 0 = far

  const double half = std::tan(opt.fov_deg * kPi / 360.0);
  const double near = 1e-6 * dist;
  const Vec3 light = dir;  // headlight: from the object toward the camera

  std::vector<ScreenVertex> screen(mesh.vertices.size());
  std::vector<char> in_front(mesh.vertices.size());
  for (std::size_t i = 0; i < mesh.vertices.size(); ++i) {
    const Vec3 q = sub(mesh.vertices[i], eye);
    const double zc = dot(q, forward);
    in_front[i] = zc > near;
    if (!in_front[i]) continue;
    const double ndc_x = dot(q, right) / zc / half;
    const double ndc_y = dot(q, up) / zc / half;
    screen[i] = {(ndc_x + 1.0) / 2.0 * static_cast<double>(W),
                 (1.0 - ndc_y) / 2.0 * static_cast<double>(H), 1.0 / zc};
  }

  for (const auto& f : mesh.faces) {
    const Vec3& v0 = mesh.vertices[static_cast<std::size_t>(f[0])];
    const Vec3& v1 = mesh.vertices[static_cast<std::size_t>(f[1])];
    const Vec3& v2 = mesh.vertices[static_cast<std::size_t>(f[2])];
    if (!in_front[static_cast<std::size_t>(f[0])] || !in_front[static_cast<std::size_t>(f[1])] ||
        !in_front[static_cast<std::size_t>(f[2])])
      continue;
    const Vec3 n = normalized(cross(sub(v1, v0), sub(v2, v0)));
    if (dot(n, sub(eye, v0)) <= 0) continue;  // back face

    const double ndl = std::max(0.0, dot(n, light));
    double spec = 0.0;
    if (ndl > 0 && opt.specular > 0) {
      const Vec3 refl = {2 * ndl * n[0] - light[0], 2 * ndl * n[1] - light[1],
                         2 * ndl * n[2] - light[2]};
      spec = std::pow(std::max(0.0, dot(refl, light)), opt.shininess);
    }
    const double intensity =
        std::clamp(opt.ambient + opt.diffuse * ndl + opt.specular * spec, 0.0, 1.0);
    const std::uint8_t shade = static_cast<std::uint8_t>(std::lround(intensity * 255.0));

    const ScreenVertex& a = screen[static_cast<std::size_t>(f[0])];
    const ScreenVertex& b = screen[static_cast<std::size_t>(f[1])];
    const ScreenVertex& c = screen[static_cast<std::size_t>(f[2])];
    const double area = edge(a, b, c.x, c.y);
    if (std::abs(area) < 1e-12) continue;

    const Index x0 = std::max<Index>(0, static_cast<Index>(std::floor(
                                            std::min({a.x, b.x, c.x}))));
    const Index x1 = std::min<Index>(W - 1, static_cast<Index>(std::ceil(
                                                std::max({a.x, b.x, c.x}))));
    const Index y0 = std::max<Index>(0, static_cast<Index>(std::floor(
                                            std::min({a.y, b.y, c.y}))));
    const Index y1 = std::min<Index>(H - 1, static_cast<Index>(std::ceil(
                                                std::max({a.y, b.y, c.y}))));
    if (x0 > x1 || y0 > y1) continue;

    for (Index py = y0; py <= y1; ++py) {
      for (Index px = x0; px <= x1; ++px) {
        const double cx = static_cast<double>(px) + 0.5, cy = static_cast<double>(py) + 0.5;
        double w0 = edge(b, c, cx, cy), w1 = edge(c, a, cx, cy), w2 = edge(a, b, cx, cy);
        if (area < 0) {
          w0 = -w0;
          w1 = -w1;
          w2 = -w2;
        }
        if (w0 < 0 || w1 < 0 || w2 < 0) continue;
        const double inv_area = 1.0 / std::abs(area);
        const double inv_z =
            (w0 * a.inv_z + w1 * b.inv_z + w2 * c.inv_z) * inv_area;
        double& zref = zbuf[static_cast<std::size_t>(py * W + px)];
        if (inv_z > zref) {
          zref = inv_z;
          img.at(px, py) = shade;
        }
      }
    }
  }
  return img;
}

std::vector<ViewAngles> turntable_angles(int count, double elevation_deg) {
  if (count < 1) throw std::invalid_argument("turntable: nonpositive view count");
  std::vector<ViewAngles> out;
  for (int i = 0; i < count; ++i)
    out.push_back({360.0 * i / count, elevation_deg});
  return out;
}

std::string view_filename(const ViewAngles& view) {
  long az = std::lround(view.azimuth_deg);
  az = ((az % 360) + 360) % 360;
  const long el = std::lround(view.elevation_deg);
  char buf[48];
  std::snprintf(buf, sizeof buf, "view_%03ld_%ld.ppm", az, el);
  return buf;
}

}  // namespace mvc3d
