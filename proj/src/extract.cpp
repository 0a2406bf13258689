#include "gradsurf/extract.hpp"

#include "gradsurf/error.hpp"

namespace gradsurf {

TriangleMesh extract_mesh(const FieldParams& params, int grid_res, double bounds) {
  if (grid_res < 16) throw Error("mesh_eval", "grid_res must be >= 16");
  if (!(bounds >= 1.0)) throw Error("mesh_eval", "extraction bounds must enclose the unit sphere");
  ScalarGrid grid;
  grid.nx = grid.ny = grid.nz = grid_res;
  grid.lo = Eigen::Vector3d::Constant(-bounds);
  grid.hi = Eigen::Vector3d::Constant(bounds);
  const std::size_t n = static_cast<std::size_t>(grid_res) * grid_res * grid_res;
  grid.values.resize(n);

  torch::NoGradGuard no_grad;
  const std::size_t batch = 65536;
  std::vector<double> pts;
  for (std::size_t start = 0; start < n; start += batch) {
    const std::size_t end = std::min(n, start + batch);
    pts.resize((end - start) * 3);
    for (std::size_t idx = start; idx < end; ++idx) {
      const int i = static_cast<int>(idx % grid_res);
      const int j = static_cast<int>((idx / grid_res) % grid_res);
      const int k = static_cast<int>(idx / (static_cast<std::size_t>(grid_res) * grid_res));
      const Eigen::Vector3d p = grid.point(i, j, k);
      for (int c = 0; c < 3; ++c) pts[(idx - start) * 3 + c] = p[c];
    }
    const auto x = torch::from_blob(pts.data(), {static_cast<int64_t>(end - start), 3}, torch::kFloat64)
                       .to(params.dtype());
    const auto f = eval_sdf(params, x).to(torch::kFloat64).contiguous();
    const double* fp = f.data_ptr<double>();
    for (std::size_t idx = start; idx < end; ++idx) {
      const double* p = &pts[(idx - start) * 3];
      const double shell = std::sqrt(p[0] * p[0] + p[1] * p[1] + p[2] * p[2]) - 1.0;
      grid.values[idx] = std::max(fp[idx - start], shell);
    }
  }
  try {
    return marching_cubes(grid);
  } catch (const Error& e) {
    throw Error("mesh_eval", "empty level set: the field has one sign over the grid");
  }
}

}  // namespace gradsurf
