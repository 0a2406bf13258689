#pragma once

#include <functional>
#include <optional>
#include <torch/torch.h>

#include "gradsurf/fields.hpp"
#include "gradsurf/protected_image.hpp"

namespace gradsurf {

struct StageWeights {
  double rgb = 0.0;        // lambda1
  double eikonal = 0.0;    // lambda2
  double lipschitz = 0.0;  // lambda3
  double grad = 0.0;       // lambda4

  static StageWeights stage1() { return {1.0, 0.1, 0.0, 0.0}; }
  static StageWeights stage2() { return {0.0, 0.1, 3e-10, 1.0}; }
  void validate() const;
};

// Mean over pixels of the per-pixel channel L1 distance. Inputs [..., C].
torch::Tensor rgb_loss(const torch::Tensor& rendered, const torch::Tensor& reference);
// Mean of (|g| - 1)^2 over [N, 3] gradients.
torch::Tensor eikonal_loss(const torch::Tensor& gradients);
// Applies the operator to a rendered [P+2, P+2, 3] patch and returns the mean
// absolute difference to the [P, P] reference magnitudes. `expected` is the
// operator recorded with the protected data; a different `cfg` is rejected.
torch::Tensor grad_loss(const torch::Tensor& rendered_patch, const torch::Tensor& reference, const OperatorConfig& cfg,
                        const std::optional<OperatorConfig>& expected = std::nullopt);
torch::Tensor lip_loss(const FieldParams& params);

// Each term is produced on demand; a term whose weight is zero is never called.
struct LossTerms {
  std::function<torch::Tensor()> rgb;
  std::function<torch::Tensor()> eikonal;
  std::function<torch::Tensor()> lipschitz;
  std::function<torch::Tensor()> grad;
};

struct LossValues {
  torch::Tensor total;
  std::optional<double> rgb, eikonal, lipschitz, grad;  // unset when not evaluated
};

LossValues total_loss(const LossTerms& terms, const StageWeights& weights);

}  // namespace gradsurf
