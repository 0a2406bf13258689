#include "gradsurf/image.hpp"

#include <png.h>

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <algorithm>
#include <memory>

#include "gradsurf/error.hpp"

namespace gradsurf {

Image downsample_image(const Image& image, int target_width, int target_height) {
  if (target_width <= 0 || target_height <= 0 || image.width % target_width != 0 ||
      image.height % target_height != 0) {
    throw Error("camera_data", "downsample ratio must be an integer: " + std::to_string(image.width) +
                                   "x" + std::to_string(image.height) + " -> " +
                                   std::to_string(target_width) + "x" + std::to_string(target_height));
  }
  const int fx = image.width / target_width;
  const int fy = image.height / target_height;
  const double inv_area = 1.0 / (fx * fy);
  Image out(target_width, target_height, image.channels);
  for (int v = 0; v < target_height; ++v) {
    for (int u = 0; u < target_width; ++u) {
      for (int c = 0; c < image.channels; ++c) {
        double sum = 0.0;
        for (int dy = 0; dy < fy; ++dy)
          for (int dx = 0; dx < fx; ++dx) sum += image.at(u * fx + dx, v * fy + dy, c);
        out.at(u, v, c) = sum * inv_area;
      }
    }
  }
  return out;
}

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr open_file(const std::filesystem::path& path, const char* mode) {
  FilePtr f(std::fopen(path.c_str(), mode));
  if (!f) throw Error("camera_data", "cannot open image file: " + path.string());
  return f;
}

// Decoded PNG in its native layout after libpng normalisation (no palette, 8 or 16 bit).
struct RawPng {
  int width = 0;
  int height = 0;
  int channels = 0;
  int bit_depth = 0;
  std::vector<png_byte> bytes;
};

RawPng read_raw(const std::filesystem::path& path) {
  FilePtr f = open_file(path, "rb");
  png_byte sig[8];
  if (std::fread(sig, 1, 8, f.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0)
    throw Error("camera_data", "unreadable image (not a PNG): " + path.string());

  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  if (!png || !info) throw Error("camera_data", "libpng init failed for " + path.string());
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw Error("camera_data", "unreadable image: " + path.string());
  }
  png_init_io(png, f.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);

  const png_byte color_type = png_get_color_type(png, info);
  if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color_type == PNG_COLOR_TYPE_GRAY && png_get_bit_depth(png, info) < 8)
    png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_bit_depth(png, info) == 16) png_set_swap(png);  // little-endian host order
  png_read_update_info(png, info);

  RawPng raw;
  raw.width = static_cast<int>(png_get_image_width(png, info));
  raw.height = static_cast<int>(png_get_image_height(png, info));
  raw.channels = png_get_channels(png, info);
  raw.bit_depth = png_get_bit_depth(png, info);
  const std::size_t rowbytes = png_get_rowbytes(png, info);
  raw.bytes.resize(rowbytes * raw.height);
  std::vector<png_bytep> rows(raw.height);
  for (int y = 0; y < raw.height; ++y) rows[y] = raw.bytes.data() + y * rowbytes;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return raw;
}

void write_raw(const std::filesystem::path& path, const png_byte* bytes, int width, int height,
               int color_type, int bit_depth, std::size_t rowbytes) {
  FilePtr f = open_file(path, "wb");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  if (!png || !info) throw Error("camera_data", "libpng init failed for " + path.string());
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw Error("camera_data", "failed writing image: " + path.string());
  }
  png_init_io(png, f.get());
  png_set_IHDR(png, info, width, height, bit_depth, color_type, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  if (bit_depth == 16) png_set_swap(png);
  for (int y = 0; y < height; ++y) png_write_row(png, const_cast<png_bytep>(bytes + y * rowbytes));
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

}  // namespace

Image read_png_rgb(const std::filesystem::path& path) {
  RawPng raw = read_raw(path);
  if (raw.channels < 3 || raw.bit_depth != 8)
    throw Error("camera_data", "expected 8-bit RGB image: " + path.string());
  Image img(raw.width, raw.height, 3);
  for (int v = 0; v < raw.height; ++v)
    for (int u = 0; u < raw.width; ++u)
      for (int c = 0; c < 3; ++c)
        img.at(u, v, c) = raw.bytes[(static_cast<std::size_t>(v) * raw.width + u) * raw.channels + c] / 255.0;
  return img;
}

void write_png_rgb(const std::filesystem::path& path, const Image& image) {
  if (image.channels != 3) throw Error("camera_data", "write_png_rgb needs a 3-channel image");
  std::vector<png_byte> bytes(image.data.size());
  for (std::size_t i = 0; i < bytes.size(); ++i) {
    const double v = std::clamp(image.data[i], 0.0, 1.0);
    bytes[i] = static_cast<png_byte>(std::lround(v * 255.0));
  }
  write_raw(path, bytes.data(), image.width, image.height, PNG_COLOR_TYPE_RGB, 8,
            static_cast<std::size_t>(image.width) * 3);
}

std::vector<std::uint16_t> read_png_gray16(const std::filesystem::path& path, int& width, int& height) {
  RawPng raw = read_raw(path);
  if (raw.channels != 1 || raw.bit_depth != 16)
    throw Error("camera_data", "expected 16-bit single-channel image: " + path.string());
  width = raw.width;
  height = raw.height;
  std::vector<std::uint16_t> levels(static_cast<std::size_t>(width) * height);
  std::memcpy(levels.data(), raw.bytes.data(), levels.size() * sizeof(std::uint16_t));
  return levels;
}

void write_png_gray16(const std::filesystem::path& path, const std::vector<std::uint16_t>& levels,
                      int width, int height) {
  if (levels.size() != static_cast<std::size_t>(width) * height)
    throw Error("camera_data", "gray16 buffer size mismatch");
  write_raw(path, reinterpret_cast<const png_byte*>(levels.data()), width, height,
            PNG_COLOR_TYPE_GRAY, 16, static_cast<std::size_t>(width) * 2);
}

int png_channel_count(const std::filesystem::path& path) { return read_raw(path).channels; }

}  // namespace gradsurf
