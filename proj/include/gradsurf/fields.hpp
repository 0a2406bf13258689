#pragma once

#include <cstdint>
#include <json.hpp>
#include <string>
#include <torch/torch.h>
#include <utility>
#include <vector>

namespace gradsurf {

struct FieldConfig {
  std::vector<int> sdf_layers = std::vector<int>(8, 256);
  int skip_layer = 4;  // hidden layer that re-reads the encoded input; -1 disables
  std::vector<int> radiance_layers = std::vector<int>(4, 256);
  int pos_freqs = 6;
  int dir_freqs = 4;
  bool geometric_init = true;
  int feature_dim = 256;
  double init_radius = 0.5;
  double softplus_beta = 100.0;  // SDF-net activation sharpness
  double beta_init = 0.1;        // density sharpness
  double beta_min = 1e-4;

  // Small network used for CPU-scale runs.
  static FieldConfig desk();

  void validate() const;
  int encoded_position_dim() const { return 3 + 6 * pos_freqs; }
  int radiance_input_dim() const { return 3 + 3 + (3 + 6 * dir_freqs) + feature_dim; }
  int lipschitz_layer_count() const { return static_cast<int>(radiance_layers.size()) + 1; }

  nlohmann::json to_json() const;
  static FieldConfig from_json(const nlohmann::json& j);
  bool operator==(const FieldConfig&) const = default;
};

// All learnable state. Weight matrices are [out, in]. beta = |beta_raw| + beta_min.
struct FieldParams {
  FieldConfig config;
  std::vector<torch::Tensor> sdf_weights, sdf_biases;
  std::vector<torch::Tensor> rad_weights, rad_biases;
  torch::Tensor lipschitz_m;  // one bound parameter per radiance layer
  torch::Tensor beta_raw;     // scalar

  torch::Tensor beta() const;
  std::vector<std::pair<std::string, torch::Tensor>> named_parameters() const;
  std::vector<torch::Tensor> parameters() const;
  FieldParams clone() const;  // deep copy, detached
  torch::ScalarType dtype() const { return beta_raw.scalar_type(); }
  void set_requires_grad(bool on);
};

FieldParams init_fields(const FieldConfig& config, std::uint64_t seed, torch::ScalarType dtype = torch::kFloat32);

// [x, sin(2^0 pi x), cos(2^0 pi x), ..., sin(2^{L-1} pi x), cos(2^{L-1} pi x)], each block 3-wide.
torch::Tensor positional_encode(const torch::Tensor& x, int frequencies);

struct SdfOutput {
  torch::Tensor sdf;      // [N]
  torch::Tensor feature;  // [N, feature_dim]
  torch::Tensor gradient; // [N, 3], only filled by eval_sdf_with_gradient
};

torch::Tensor eval_sdf(const FieldParams& params, const torch::Tensor& x);
SdfOutput sdf_forward(const FieldParams& params, const torch::Tensor& x);
// Spatial gradient by automatic differentiation. With create_graph the result
// stays differentiable w.r.t. the parameters (needed by the eikonal term and
// by anything consuming normals).
SdfOutput eval_sdf_with_gradient(const FieldParams& params, const torch::Tensor& x, bool create_graph);
torch::Tensor eval_sdf_grad(const FieldParams& params, const torch::Tensor& x);

// W * min(1, softplus(m) / |W|_inf), |W|_inf the largest absolute row sum.
torch::Tensor lipschitz_normalize(const torch::Tensor& weight, const torch::Tensor& m);
// y = act(W_hat x + b) with ReLU, or the affine part alone when relu == false.
torch::Tensor lipschitz_forward(const torch::Tensor& weight, const torch::Tensor& bias, const torch::Tensor& m,
                                const torch::Tensor& x, bool relu = true);
// prod_i softplus(m_i)
torch::Tensor lipschitz_product(const FieldParams& params);

// Concatenates [x, n, enc(d), feature] as the radiance network sees it.
torch::Tensor radiance_input(const FieldParams& params, const torch::Tensor& x, const torch::Tensor& normal,
                             const torch::Tensor& dir, const torch::Tensor& feature);
// Radiance network output before the final sigmoid.
torch::Tensor radiance_preactivation(const FieldParams& params, const torch::Tensor& input);
torch::Tensor eval_radiance(const FieldParams& params, const torch::Tensor& x, const torch::Tensor& normal,
                            const torch::Tensor& dir, const torch::Tensor& feature);

double softplus_inverse(double y);

}  // namespace gradsurf
