#pragma once

#include <string>
#include <vector>

#include "mvc3d/image.hpp"
#include "mvc3d/mesh.hpp"

namespace mvc3d {

// Camera direction on the view sphere: azimuth spins about the vertical z axis,
// elevation lifts from the horizontal plane.
struct ViewAngles {
  double azimuth_deg = 0.0;
  double elevation_deg = 30.0;
};

struct RenderOptions {
  Index image_size = 112;
  double fov_deg = 40.0;
  double distance_factor = 2.5;  // camera distance in bounding radii
  double ambient = 0.12;
  double diffuse = 0.68;
  double specular = 0.15;        // sums with the others to 0.95, below background white
  double shininess = 16.0;
  std::uint8_t background = 255;
};

// Flat-shaded perspective rendering of the mesh, headlight at the camera,
// grayscale output. Deterministic: same mesh and angles, same pixels.
ImageU8 render_view(const TriMesh& mesh, const ViewAngles& view,
                    const RenderOptions& options = {});

// Evenly spaced azimuths at a fixed elevation, starting at zero.
std::vector<ViewAngles> turntable_angles(int count, double elevation_deg);

// Canonical per-view file name, e.g. "view_030_30.ppm"; angles are rounded
// to whole degrees and the azimuth wraps into [0, 360).
std::string view_filename(const ViewAngles& view);

}  // namespace mvc3d
