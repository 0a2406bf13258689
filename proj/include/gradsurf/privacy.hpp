#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <torch/torch.h>
#include <vector>

#include "gradsurf/dataset.hpp"
#include "gradsurf/image.hpp"
#include "gradsurf/protected_image.hpp"

namespace gradsurf {

// Magnitude map |dc/dx|_2 + |dc/dy|_2 where the norms run over the color
// channels. Borders are replicate-padded. Kernel sums are formed before the
// normalization is applied, so inputs on a dyadic lattice are processed
// without rounding.
ProtectedImage protect_image(const Image& image, const OperatorConfig& cfg);

// Differentiable version for rendered patches: input [H, W, C], output the
// valid interior [H-2, W-2]. The channel norm has a zero subgradient at 0.
torch::Tensor gradient_magnitude(const torch::Tensor& patch, const OperatorConfig& cfg);

struct MultiplicityReport {
  Image source;   // input snapped to the 2^-16 lattice
  Image negated;  // 1 - source
  Image shifted;  // source + k_c per channel, k_c the largest in-range offset
  bool degenerate = false;  // negated == source (image is 0.5 everywhere)
  bool negation_invariant = false;
  bool offset_invariant = false;
  double negated_distance = 0.0;  // L-infinity pixel distance to source
  double shifted_distance = 0.0;
  double quantization_error = 0.0;

  bool passed() const { return negation_invariant && offset_invariant; }
};

// Builds two images that collide with the input under the operator. The
// witnesses are protected with `witness_cfg` when given (used to check that a
// mismatched operator is caught).
MultiplicityReport verify_multiplicity(const Image& image, const OperatorConfig& cfg,
                                       const std::optional<OperatorConfig>& witness_cfg = std::nullopt);

// For an image whose left column and bottom row hold one constant value per
// channel, reflects every pixel about that value. The result shares both
// boundaries and the magnitude map with the input. nullopt if the boundary is
// not constant.
std::optional<Image> boundary_preserving_witness(const Image& image);

struct ProtectResult {
  Dataset dataset;
  std::vector<std::string> notices;
};

// Replaces every protected-view RGB raster with its magnitude map. Views that
// are already protected are skipped with a notice.
ProtectResult protect_dataset(const Dataset& dataset, const OperatorConfig& cfg);

// Scans a dataset directory for color rasters of protected views. Returns the
// offending file names (empty when clean).
std::vector<std::string> audit_protected_output(const std::filesystem::path& dir);

}  // namespace gradsurf
