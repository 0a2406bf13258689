#pragma once

#include <atomic>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "gradsurf/camera.hpp"
#include "gradsurf/image.hpp"
#include "gradsurf/protected_image.hpp"

namespace gradsurf {

enum class Sensitivity { neutral, protected_view };

std::string to_string(Sensitivity s);
Sensitivity sensitivity_from_string(const std::string& s);

// Counts raster reads made through Dataset accessors. Used to audit that a
// training stage never touches data it is not entitled to.
struct AccessLog {
  std::atomic<long> rgb_reads_neutral{0};
  std::atomic<long> rgb_reads_protected{0};
  std::atomic<long> magnitude_reads{0};
};

// One calibrated view. A protected-sensitivity view holds RGB only until the
// privacy operator has run on it; afterwards it holds a ProtectedImage and
// no color data.
class ViewRecord {
 public:
  static ViewRecord with_rgb(std::string name, Camera camera, Sensitivity s, Image rgb);
  static ViewRecord with_protected(std::string name, Camera camera, ProtectedImage image);

  const std::string& name() const { return name_; }
  const Camera& camera() const { return camera_; }
  Sensitivity sensitivity() const { return sensitivity_; }
  bool has_rgb() const { return rgb_.has_value(); }
  bool has_protected() const { return protected_.has_value(); }
  int channels() const { return has_rgb() ? 3 : 1; }
  // Protected view whose RGB has not yet been replaced.
  bool awaiting_protection() const { return sensitivity_ == Sensitivity::protected_view && has_rgb(); }

  void set_sensitivity(Sensitivity s) { sensitivity_ = s; }

 private:
  friend struct Dataset;
  std::string name_;
  Camera camera_;
  Sensitivity sensitivity_ = Sensitivity::neutral;
  std::optional<Image> rgb_;
  std::optional<ProtectedImage> protected_;
};

struct Dataset {
  std::vector<ViewRecord> views;
  double scene_bounds = 1.0;  // bounding-sphere radius after normalization
  double scale = 1.0;         // original units per normalized unit
  Eigen::Vector3d front_axis = Eigen::Vector3d::UnitZ();
  std::optional<OperatorConfig> operator_config;  // set once protected rasters exist

  // Audited raster access. Copies of a Dataset share the same log.
  const Image& rgb(std::size_t i) const;
  const ProtectedImage& protected_image(std::size_t i) const;
  AccessLog& access_log() const { return *log_; }
  void reset_access_log() { log_ = std::make_shared<AccessLog>(); }

  std::size_t count(Sensitivity s) const;
  std::vector<std::size_t> indices(Sensitivity s) const;
  // Replaces the raster of view i with its protected form (drops the RGB).
  void replace_with_protected(std::size_t i, ProtectedImage image);

 private:
  std::shared_ptr<AccessLog> log_ = std::make_shared<AccessLog>();
};

// On-disk layout:
//   images/<view>.png      8-bit RGB (neutral views, and protected views not yet processed)
//   protected/<view>.png   16-bit gray, level = round(|g| * 65535 / g_max)
//   protected/manifest.json  operator + per-view g_max
//   cameras.json           per view: 4x4 camera-to-world (row-major), fx, fy, cx, cy, width, height
//   split.json             view -> "neutral" | "protected"
Dataset load_dataset(const std::filesystem::path& dir);
void save_dataset(const Dataset& dataset, const std::filesystem::path& dir);

// 16-bit quantization used by the protected raster files.
std::uint16_t quantize_magnitude(double value, double g_max);
double dequantize_magnitude(std::uint16_t level, double g_max);

struct YawThresholdPolicy {
  double theta_degrees = 120.0;
};
using ExplicitSplit = std::map<std::string, Sensitivity>;
using SplitPolicy = std::variant<YawThresholdPolicy, ExplicitSplit>;

struct SplitResult {
  Dataset dataset;
  std::vector<std::string> warnings;
};

// Views whose viewing direction lies strictly within theta of the front axis
// become protected; an explicit manifest overrides per view.
SplitResult split_views(const Dataset& dataset, const SplitPolicy& policy);

// Angle in degrees between the reversed optical axis of a camera and the front axis.
double frontal_angle_degrees(const Camera& camera, const Eigen::Vector3d& front_axis);

}  // namespace gradsurf
