#include "mvc3d/image.hpp"

#include <png.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>
#include <string>

namespace mvc3d {

namespace {

void require_same_size(const ImageU8& a, const ImageU8& b, const char* what) {
  if (a.width != b.width || a.height != b.height || a.channels != b.channels)
    throw std::invalid_argument(std::string(what) + ": image sizes differ, " +
                                std::to_string(a.width) + "x" + std::to_string(a.height) + "x" +
                                std::to_string(a.channels) + " vs " + std::to_string(b.width) +
                                "x" + std::to_string(b.height) + "x" +
                                std::to_string(b.channels));
}

void require_valid(const ImageU8& img, const char* what) {
  if (img.width < 1 || img.height < 1 || (img.channels != 1 && img.channels != 3))
    throw std::invalid_argument(std::string(what) + ": empty image or unsupported channel count " +
                                std::to_string(img.channels));
  if (static_cast<Index>(img.pixels.size()) != img.width * img.height * img.channels)
    throw std::invalid_argument(std::string(what) + ": pixel buffer size mismatch");
}

}  // namespace

double image_mse(const ImageU8& a, const ImageU8& b) {
  require_same_size(a, b, "image_mse");
  double sum = 0.0;
  for (std::size_t i = 0; i < a.pixels.size(); ++i) {
    const double d = (static_cast<double>(a.pixels[i]) - static_cast<double>(b.pixels[i])) / 255.0;
    sum += d * d;
  }
  return a.pixels.empty() ? 0.0 : sum / static_cast<double>(a.pixels.size());
}

double differing_fraction(const ImageU8& a, const ImageU8& b, int tol) {
  require_same_size(a, b, "differing_fraction");
  std::size_t diff = 0;
  for (std::size_t i = 0; i < a.pixels.size(); ++i)
    if (std::abs(static_cast<int>(a.pixels[i]) - static_cast<int>(b.pixels[i])) > tol) ++diff;
  return a.pixels.empty() ? 0.0
                          : static_cast<double>(diff) / static_cast<double>(a.pixels.size());
}

void write_ppm(const std::filesystem::path& path, const ImageU8& img, bool force_rgb) {
  require_valid(img, "write_ppm");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("write_ppm: cannot open " + path.string());
  const bool rgb = img.channels == 3 || force_rgb;
  out << (rgb ? "P6" : "P5") << '\n' << img.width << ' ' << img.height << '\n' << "255\n";
  if (rgb && img.channels == 1) {
    for (std::uint8_t v : img.pixels) {
      const char c = static_cast<char>(v);
      out.write(&c, 1).write(&c, 1).write(&c, 1);
    }
  } else {
    out.write(reinterpret_cast<const char*>(img.pixels.data()),
              static_cast<std::streamsize>(img.pixels.size()));
  }
  if (!out) throw std::runtime_error("write_ppm: write failed for " + path.string());
}

namespace {

// Reads one whitespace-delimited token, skipping `#` comment lines.
std::string next_token(std::istream& is) {
  std::string tok;
  int c;
  while ((c = is.get()) != EOF) {
    if (c == '#') {
      while ((c = is.get()) != EOF && c != '\n') {
      }
      continue;
    }
    if (std::isspace(c)) {
      if (!tok.empty()) return tok;
      continue;
    }
    tok.push_back(static_cast<char>(c));
  }
  return tok;
}

}  // namespace

ImageU8 read_ppm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("read_ppm: cannot open " + path.string());
  const std::string magic = next_token(in);
  if (magic != "P6" && magic != "P5")
    throw std::runtime_error("read_ppm: " + path.string() + " is not binary netpbm (got '" +
                             magic + "')");
  ImageU8 img;
  img.channels = magic == "P6" ? 3 : 1;
  try {
    img.width = std::stoll(next_token(in));
    img.height = std::stoll(next_token(in));
    const long maxval = std::stol(next_token(in));
    if (maxval != 255)
      throw std::runtime_error("read_ppm: unsupported max value " + std::to_string(maxval));
  } catch (const std::invalid_argument&) {
    throw std::runtime_error("read_ppm: malformed header in " + path.string());
  }
  if (img.width < 1 || img.height < 1)
    throw std::runtime_error("read_ppm: bad dimensions in " + path.string());
  img.pixels.resize(static_cast<std::size_t>(img.width * img.height * img.channels));
  // the single whitespace byte after maxval was already consumed by next_token
  in.read(reinterpret_cast<char*>(img.pixels.data()),
          static_cast<std::streamsize>(img.pixels.size()));
  if (in.gcount() != static_cast<std::streamsize>(img.pixels.size()))
    throw std::runtime_error("read_ppm: " + path.string() + " is truncated");
  return img;
}

void write_png(const std::filesystem::path& path, const ImageU8& img) {
  require_valid(img, "write_png");
  std::FILE* fp = std::fopen(path.string().c_str(), "wb");
  if (!fp) throw std::runtime_error("write_png: cannot open " + path.string());
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info || setjmp(png_jmpbuf(png))) {
    if (png) png_destroy_write_struct(&png, info ? &info : nullptr);
    std::fclose(fp);
    throw std::runtime_error("write_png: libpng failure for " + path.string());
  }
  png_init_io(png, fp);
  png_set_IHDR(png, info, static_cast<png_uint_32>(img.width),
               static_cast<png_uint_32>(img.height), 8,
               img.channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  std::vector<png_bytep> rows(static_cast<std::size_t>(img.height));
  const Index stride = img.width * img.channels;
  for (Index y = 0; y < img.height; ++y)
    rows[static_cast<std::size_t>(y)] =
        const_cast<png_bytep>(img.pixels.data() + y * stride);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  std::fclose(fp);
}

ImageU8 read_png(const std::filesystem::path& path) {
  std::FILE* fp = std::fopen(path.string().c_str(), "rb");
  if (!fp) throw std::runtime_error("read_png: cannot open " + path.string());
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info || setjmp(png_jmpbuf(png))) {
    if (png) png_destroy_read_struct(&png, info ? &info : nullptr, nullptr);
    std::fclose(fp);
    throw std::runtime_error("read_png: libpng failure for " + path.string());
  }
  png_init_io(png, fp);
  png_read_info(png, info);
  // normalize to 8-bit gray or rgb
  png_set_strip_16(png);
  png_set_packing(png);
  if (png_get_color_type(png, info) == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (png_get_color_type(png, info) == PNG_COLOR_TYPE_GRAY &&
      png_get_bit_depth(png, info) < 8)
    png_set_expand_gray_1_2_4_to_8(png);
  png_set_strip_alpha(png);
  png_read_update_info(png, info);

  ImageU8 img;
  img.width = static_cast<Index>(png_get_image_width(png, info));
  img.height = static_cast<Index>(png_get_image_height(png, info));
  const png_byte color = png_get_color_type(png, info);
  img.channels = color == PNG_COLOR_TYPE_GRAY ? 1 : 3;
  img.pixels.resize(static_cast<std::size_t>(img.width * img.height * img.channels));
  std::vector<png_bytep> rows(static_cast<std::size_t>(img.height));
  const Index stride = img.width * img.channels;
  for (Index y = 0; y < img.height; ++y)
    rows[static_cast<std::size_t>(y)] = img.pixels.data() + y * stride;
  png_read_image(png, rows.data());
  png_destroy_read_struct(&png, &info, nullptr);
  std::fclose(fp);
  return img;
}

ImageU8 read_image(const std::filesystem::path& path) {
  const std::string ext = path.extension().string();
  if (ext == ".ppm" || ext == ".pgm") return read_ppm(path);
  if (ext == ".png") return read_png(path);
  throw std::invalid_argument("read_image: unsupported extension '" + ext + "' in " +
                              path.string());
}

}  // namespace mvc3d
