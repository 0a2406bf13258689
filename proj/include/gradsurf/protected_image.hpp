#pragma once

#include <string>

#include "gradsurf/image.hpp"

namespace gradsurf {

enum class KernelType { sobel, central_difference };

// Gradient operator settings. The normalization scales the raw kernel
// response so that a unit-slope ramp yields 1 (sobel 1/8, central-diff 1/2).
struct OperatorConfig {
  KernelType kernel = KernelType::sobel;
  double normalization = 0.125;
  // Borders are always replicate-padded.

  static OperatorConfig sobel() { return {KernelType::sobel, 0.125}; }
  static OperatorConfig central_difference() { return {KernelType::central_difference, 0.5}; }
  static OperatorConfig from_name(const std::string& name);  // "sobel" | "cdiff"

  std::string kernel_name() const;
  bool operator==(const OperatorConfig&) const = default;
};

// Single-channel gradient-magnitude raster; every value is >= 0 and no color
// information is retained.
struct ProtectedImage {
  Image magnitude;  // channels == 1
  int source_width = 0;
  int source_height = 0;
  OperatorConfig op;
};

}  // namespace gradsurf
