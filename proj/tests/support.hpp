#pragma once

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "gradsurf/fields.hpp"
#include "gradsurf/image.hpp"

namespace testing_support {

// Fresh scratch directory under the build tree, removed on destruction.
struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& tag);
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  std::filesystem::path operator/(const std::string& s) const { return path / s; }
};

gradsurf::Image random_image(int w, int h, int c, std::uint64_t seed);

// Tiny network for gradient checks and fast training tests.
gradsurf::FieldConfig tiny_config();

// Per-pixel gradient magnitude computed straight from the kernel taps.
// `pad` selects replicate padding at borders (full output) or the valid
// interior only.
std::vector<double> kernel_magnitude_oracle(const gradsurf::Image& img, bool sobel, bool pad);

// Compositing as an explicit double loop over samples.
struct NaiveComposite {
  std::vector<double> color, weights, transmittance;
  double opacity;
};
NaiveComposite naive_composite(const std::vector<std::array<double, 3>>& colors, const std::vector<double>& sigma,
                               const std::vector<double>& delta, const std::array<double, 3>& background);

// O(n^2) nearest neighbour distances.
std::vector<double> brute_force_nearest(const std::vector<Eigen::Vector3d>& q, const std::vector<Eigen::Vector3d>& r);

// Small SDF net regressed onto a centred sphere, float64.
gradsurf::FieldParams fit_sphere(double radius);

// Central differences against autograd on a few entries of every parameter
// tensor. Returns the worst relative error.
double worst_fd_error(gradsurf::FieldParams& p, const std::function<torch::Tensor()>& loss, const std::string& label);

double pearson(const std::vector<double>& a, const std::vector<double>& b);

}  // namespace testing_support
