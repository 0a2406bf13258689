#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "gradsurf/mesh.hpp"

namespace gradsurf {

enum class CdMode { euclidean, squared };

std::string to_string(CdMode mode);
CdMode cd_mode_from_string(const std::string& s);

struct CdReport {
  double cd = 0.0;  // (mean_ab + mean_ba) / 2
  double mean_ab = 0.0;
  double mean_ba = 0.0;
  std::size_t n_samples = 0;
  CdMode mode = CdMode::euclidean;
};

// Area-weighted uniform samples on the surface; deterministic in seed.
std::vector<Eigen::Vector3d> sample_surface(const TriangleMesh& mesh, std::size_t n, std::uint64_t seed);

// Nearest-neighbour distance from every query point to the reference set
// (R-tree backed).
std::vector<double> nearest_distances(const std::vector<Eigen::Vector3d>& queries,
                                      const std::vector<Eigen::Vector3d>& reference);

CdReport chamfer_distance_points(const std::vector<Eigen::Vector3d>& a, const std::vector<Eigen::Vector3d>& b,
                                 CdMode mode = CdMode::euclidean);

// Both meshes are sampled with the same seed, so swapping the arguments
// yields the identical report with the directed means exchanged.
CdReport chamfer_distance(const TriangleMesh& a, const TriangleMesh& b, std::size_t n_samples = 100000,
                          std::uint64_t seed = 0, CdMode mode = CdMode::euclidean);

}  // namespace gradsurf
