#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "mvc3d/common.hpp"

namespace mvc3d {

// 8-bit raster, row-major from the top-left; 1 (gray) or 3 (rgb) channels.
struct ImageU8 {
  Index width = 0;
  Index height = 0;
  Index channels = 1;
  std::vector<std::uint8_t> pixels;

  ImageU8() = default;
  ImageU8(Index w, Index h, Index c, std::uint8_t fill = 0)
      : width(w), height(h), channels(c),
        pixels(static_cast<std::size_t>(w * h * c), fill) {}

  std::uint8_t& at(Index x, Index y, Index c = 0) {
    return pixels[static_cast<std::size_t>((y * width + x) * channels + c)];
  }
  std::uint8_t at(Index x, Index y, Index c = 0) const {
    return pixels[static_cast<std::size_t>((y * width + x) * channels + c)];
  }
};

// Mean squared difference over [0,1]-scaled pixels; images must match in size.
double image_mse(const ImageU8& a, const ImageU8& b);

// Fraction of pixel positions whose values differ by more than `tol` levels.
double differing_fraction(const ImageU8& a, const ImageU8& b, int tol = 0);

// Binary netpbm: P6 for rgb, P5 for gray. Gray images can be written as P6
// with the value replicated across channels via `force_rgb`.
void write_ppm(const std::filesystem::path& path, const ImageU8& img, bool force_rgb = true);
ImageU8 read_ppm(const std::filesystem::path& path);

void write_png(const std::filesystem::path& path, const ImageU8& img);
ImageU8 read_png(const std::filesystem::path& path);

// Dispatches on the file extension (.ppm, .pgm, .png).
ImageU8 read_image(const std::filesystem::path& path);

}  // namespace mvc3d
