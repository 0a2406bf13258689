#pragma once

#include <cstddef>
#include <filesystem>
#include <vector>

namespace gradsurf {

// Row-major interleaved raster. Values are doubles; RGB rasters live in [0,1].
struct Image {
  int width = 0;
  int height = 0;
  int channels = 0;
  std::vector<double> data;

  Image() = default;
  Image(int w, int h, int c, double fill = 0.0)
      : width(w), height(h), channels(c), data(static_cast<std::size_t>(w) * h * c, fill) {}

  double& at(int u, int v, int c = 0) {
    return data[(static_cast<std::size_t>(v) * width + u) * channels + c];
  }
  double at(int u, int v, int c = 0) const {
    return data[(static_cast<std::size_t>(v) * width + u) * channels + c];
  }
  bool empty() const { return data.empty(); }
  std::size_t pixel_count() const { return static_cast<std::size_t>(width) * height; }

  bool operator==(const Image&) const = default;
};

// Area-average pooling by an integer factor per axis.
Image downsample_image(const Image& image, int target_width, int target_height);

// 8-bit RGB PNG <-> [0,1] raster.
Image read_png_rgb(const std::filesystem::path& path);
void write_png_rgb(const std::filesystem::path& path, const Image& image);

// 16-bit single-channel PNG as raw integer levels (0..65535).
std::vector<std::uint16_t> read_png_gray16(const std::filesystem::path& path, int& width, int& height);
void write_png_gray16(const std::filesystem::path& path, const std::vector<std::uint16_t>& levels,
                      int width, int height);

// Channel count of a PNG on disk (1 gray, 2 gray+alpha, 3 rgb, 4 rgba).
int png_channel_count(const std::filesystem::path& path);

}  // namespace gradsurf
