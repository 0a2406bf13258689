#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <random>
#include <torch/torch.h>
#include <vector>

#include "gradsurf/camera.hpp"
#include "gradsurf/fields.hpp"
#include "gradsurf/image.hpp"

namespace gradsurf {

using Rng = std::mt19937_64;

// sigma = (1/beta) * Psi_beta(-f), Psi the zero-mean Laplace CDF with scale beta.
torch::Tensor sdf_to_density(const torch::Tensor& sdf, const torch::Tensor& beta);
double sdf_to_density(double sdf, double beta);

struct SampleSet {
  std::vector<double> t;      // strictly ascending
  std::vector<double> delta;  // t[i+1] - t[i]; the last is far - t.back()
  std::vector<Eigen::Vector3d> x;
};

// One uniform sample per stratum of [near, far].
std::vector<double> stratified_samples(double near, double far, int n, Rng& rng);
// Inverse-CDF samples from the piecewise-constant density that puts weight
// w[i] on [t[i], t[i+1]] (the last bin ends at far). Uniform over [near, far]
// when every weight is zero.
std::vector<double> importance_samples(const std::vector<double>& t, const std::vector<double>& weights, double near,
                                       double far, int n, Rng& rng);
// Sorts, forces strict ascent and fills deltas/points.
SampleSet make_sample_set(const Ray& ray, std::vector<double> t, double far);

// Given coarse distances, returns the per-sample compositing weights.
using CoarseWeightFn = std::function<std::vector<double>(const std::vector<double>& t)>;
SampleSet sample_ray(const Ray& ray, double near, double far, int n_coarse, int n_fine, std::uint64_t seed,
                     const CoarseWeightFn& coarse_weights = nullptr);

// Front-to-back alpha compositing over [R, S] samples.
struct RenderResult {
  torch::Tensor color;          // [R, 3] including the background term
  torch::Tensor weights;        // [R, S]  w_i = T_i * alpha_i
  torch::Tensor transmittance;  // [R, S]  T_1 = 1
  torch::Tensor alpha;          // [R, S]
  torch::Tensor opacity;        // [R]     sum_i w_i
};

RenderResult composite(const torch::Tensor& colors, const torch::Tensor& sigmas, const torch::Tensor& deltas,
                       const Eigen::Vector3d& background = Eigen::Vector3d::Zero());

struct RenderOptions {
  int n_coarse = 64;
  int n_fine = 64;
  double scene_bounds = 1.0;
  Eigen::Vector3d background = Eigen::Vector3d::Zero();
  int chunk_rays = 1024;  // image rendering batch size
};

struct RenderBatch {
  torch::Tensor color;          // [R, 3]
  torch::Tensor opacity;        // [R]
  torch::Tensor depth;          // [R] expected t over the weights; 0 on empty rays
  torch::Tensor normal;         // [R, 3] sum_i w_i n_i
  torch::Tensor hit;            // [R] bool, ray meets the bounding sphere
  RenderResult samples;         // hit rays only
  torch::Tensor t;              // [H, S]
  torch::Tensor sdf_gradients;  // [H*S, 3]
};

// Renders rays through the geometry of `geom` with colors from the radiance
// network of `radiance` (features from the radiance provider's own SDF net).
// With `differentiable` the result carries the parameter graph.
RenderBatch render_rays(const FieldParams& geom, const FieldParams& radiance, const std::vector<Ray>& rays,
                        const RenderOptions& opts, Rng& rng, bool differentiable);

inline RenderBatch render_rays(const FieldParams& params, const std::vector<Ray>& rays, const RenderOptions& opts,
                               Rng& rng, bool differentiable) {
  return render_rays(params, params, rays, opts, rng, differentiable);
}

RenderBatch render_pixels(const FieldParams& params, const Camera& camera, const std::vector<PixelCoord>& pixels,
                          const RenderOptions& opts, std::uint64_t seed);

// Renders a PxP block with top-left interior pixel (u0, v0) plus a one-pixel
// apron: returns [P+2, P+2, 3].
torch::Tensor render_patch(const FieldParams& params, const Camera& camera, int u0, int v0, int size,
                           const RenderOptions& opts, Rng& rng, bool differentiable);

enum class RenderMode { rgb, normal };

Image render_image(const FieldParams& params, const Camera& camera, const RenderOptions& opts, std::uint64_t seed,
                   RenderMode mode = RenderMode::rgb);
// Geometry, sampling and normals from `geom`; colors from `radiance`.
Image transfer_render(const FieldParams& geom, const FieldParams& radiance, const Camera& camera,
                      const RenderOptions& opts, std::uint64_t seed);

}  // namespace gradsurf
