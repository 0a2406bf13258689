#pragma once

#include <Eigen/Dense>
#include <array>
#include <filesystem>
#include <functional>
#include <vector>

namespace gradsurf {

struct TriangleMesh {
  std::vector<Eigen::Vector3d> vertices;
  std::vector<std::array<int, 3>> faces;

  bool empty() const { return faces.empty(); }
  double face_area(std::size_t f) const;
  double total_area() const;
};

// Scalar samples on a regular lattice of nx*ny*nz points spanning [lo, hi].
struct ScalarGrid {
  int nx = 0, ny = 0, nz = 0;
  Eigen::Vector3d lo = Eigen::Vector3d::Constant(-1.0);
  Eigen::Vector3d hi = Eigen::Vector3d::Constant(1.0);
  std::vector<double> values;  // x fastest

  double at(int i, int j, int k) const { return values[(static_cast<std::size_t>(k) * ny + j) * nx + i]; }
  Eigen::Vector3d point(int i, int j, int k) const;
  Eigen::Vector3d cell_size() const;
};

ScalarGrid sample_grid(const std::function<double(const Eigen::Vector3d&)>& field, int resolution,
                       const Eigen::Vector3d& lo, const Eigen::Vector3d& hi);

// Marching cubes at iso-level 0 (inside is f < 0). Triangles face toward
// increasing f. Vertices are shared between adjacent cells; zero-area faces
// (below 1e-12) are dropped. Throws "empty level set" when f has one sign.
TriangleMesh marching_cubes(const ScalarGrid& grid);

// Number of triangles the case table emits for a corner-sign mask; exposed for tests.
int marching_cubes_case_triangles(int mask);

// Keeps faces whose centroid lies inside [lo, hi]; vertices are reindexed compactly.
TriangleMesh crop_mesh(const TriangleMesh& mesh, const Eigen::Vector3d& lo, const Eigen::Vector3d& hi);

// x -> scale * R x + t
struct SimilarityTransform {
  double scale = 1.0;
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();
};

TriangleMesh align_mesh(const TriangleMesh& mesh, const SimilarityTransform& transform);

void write_obj(const std::filesystem::path& path, const TriangleMesh& mesh);
TriangleMesh read_obj(const std::filesystem::path& path);

}  // namespace gradsurf
