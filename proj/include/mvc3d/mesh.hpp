#pragma once

#include <array>
#include <filesystem>
#include <vector>

#include "mvc3d/common.hpp"

namespace mvc3d {

using Vec3 = std::array<double, 3>;

// Indexed triangle mesh; faces wind counter-clockwise seen from outside.
struct TriMesh {
  std::vector<Vec3> vertices;
  std::vector<std::array<int, 3>> faces;
};

// Axis-aligned box centered at the origin with the given full extents.
TriMesh make_box(double sx, double sy, double sz);

// Latitude/longitude sphere; `segments` meridians, `rings` latitude bands.
// Rotating by a multiple of 360/segments degrees about z maps it onto itself.
TriMesh make_sphere(double radius, int segments, int rings);

// Closed cylinder along z, centered at the origin.
TriMesh make_cylinder(double radius, double height, int segments);

// Cone along z with its base at -height/2 and apex at +height/2.
TriMesh make_cone(double radius, double height, int segments);

// Torus in the xy plane around the z axis.
TriMesh make_torus(double major_radius, double minor_radius, int segments, int sides);

// In-place rotation about the z axis through the origin.
void rotate_z(TriMesh& mesh, double degrees);

struct Bounds {
  Vec3 center{0, 0, 0};
  Vec3 half_extents{0, 0, 0};
};
Bounds bounding_box(const TriMesh& mesh);

// Mean of the vertices; rotates along with the mesh, unlike the box center.
Vec3 vertex_centroid(const TriMesh& mesh);

// Largest vertex distance from the centroid: radius of the bounding sphere.
double circumscribed_radius(const TriMesh& mesh);

// Framing radius used by the camera: half diagonal of the axis cube that
// encloses the bounding sphere, i.e. sqrt(3) times the circumscribed radius.
// Invariant under any rotation of the mesh, so framing never drifts when an
// object turns.
double bounding_radius(const TriMesh& mesh);

// Signed volume via the divergence theorem; positive for consistently
// outward-wound closed meshes.
double signed_volume(const TriMesh& mesh);

// Reads an ASCII OFF mesh. Polygons with more than three sides are fan
// triangulated. Tolerates '#' comments, blank lines, and the common variant
// that glues the vertex count onto the OFF keyword line.
TriMesh load_off(const std::filesystem::path& path);

}  // namespace mvc3d
