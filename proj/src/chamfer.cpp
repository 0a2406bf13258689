#include "gradsurf/chamfer.hpp"

#include <boost/geometry.hpp>
#include <boost/geometry/index/rtree.hpp>
#include <cmath>
#include <random>

#include "gradsurf/error.hpp"

namespace gradsurf {

namespace bg = boost::geometry;
namespace bgi = boost::geometry::index;

std::string to_string(CdMode mode) { return mode == CdMode::euclidean ? "euclidean" : "squared"; }

CdMode cd_mode_from_string(const std::string& s) {
  if (s == "euclidean") return CdMode::euclidean;
  if (s == "squared") return CdMode::squared;
  throw Error("mesh_eval", "unknown CD mode '" + s + "' (expected euclidean|squared)");
}

std::vector<Eigen::Vector3d> sample_surface(const TriangleMesh& mesh, std::size_t n, std::uint64_t seed) {
  if (mesh.faces.empty()) throw Error("mesh_eval", "cannot sample an empty mesh");
  std::vector<double> cdf(mesh.faces.size());
  double acc = 0.0;
  for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
    acc += mesh.face_area(f);
    cdf[f] = acc;
  }
  if (!(acc > 0.0)) throw Error("mesh_eval", "mesh has zero surface area");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  std::vector<Eigen::Vector3d> pts;
  pts.reserve(n);
  for (std::size_t s = 0; s < n; ++s) {
    const double r = uni(rng) * acc;
    std::size_t f = std::upper_bound(cdf.begin(), cdf.end(), r) - cdf.begin();
    f = std::min(f, cdf.size() - 1);
    const double r1 = std::sqrt(uni(rng));
    const double r2 = uni(rng);
    const auto& t = mesh.faces[f];
    pts.push_back((1.0 - r1) * mesh.vertices[t[0]] + r1 * (1.0 - r2) * mesh.vertices[t[1]] +
                  r1 * r2 * mesh.vertices[t[2]]);
  }
  return pts;
}

std::vector<double> nearest_distances(const std::vector<Eigen::Vector3d>& queries,
                                      const std::vector<Eigen::Vector3d>& reference) {
  if (reference.empty()) throw Error("mesh_eval", "nearest-neighbour reference set is empty");
  using Point = bg::model::point<double, 3, bg::cs::cartesian>;
  using Value = std::pair<Point, std::size_t>;
  std::vector<Value> values;
  values.reserve(reference.size());
  for (std::size_t i = 0; i < reference.size(); ++i)
    values.emplace_back(Point(reference[i].x(), reference[i].y(), reference[i].z()), i);
  const bgi::rtree<Value, bgi::quadratic<16>> tree(values.begin(), values.end());

  std::vector<double> out;
  out.reserve(queries.size());
  std::vector<Value> hit;
  for (const auto& q : queries) {
    hit.clear();
    tree.query(bgi::nearest(Point(q.x(), q.y(), q.z()), 1), std::back_inserter(hit));
    out.push_back((q - reference[hit.front().second]).norm());
  }
  return out;
}

CdReport chamfer_distance_points(const std::vector<Eigen::Vector3d>& a, const std::vector<Eigen::Vector3d>& b,
                                 CdMode mode) {
  if (a.empty() || b.empty()) throw Error("mesh_eval", "chamfer distance needs non-empty point sets");
  auto directed_mean = [mode](const std::vector<double>& d) {
    double s = 0.0;
    for (double x : d) s += mode == CdMode::squared ? x * x : x;
    return s / static_cast<double>(d.size());
  };
  CdReport r;
  r.mode = mode;
  r.n_samples = std::max(a.size(), b.size());
  r.mean_ab = directed_mean(nearest_distances(a, b));
  r.mean_ba = directed_mean(nearest_distances(b, a));
  r.cd = 0.5 * (r.mean_ab + r.mean_ba);
  return r;
}

CdReport chamfer_distance(const TriangleMesh& a, const TriangleMesh& b, std::size_t n_samples, std::uint64_t seed,
                          CdMode mode) {
  if (a.empty() || b.empty()) throw Error("mesh_eval", "chamfer distance on an empty mesh");
  if (n_samples == 0) throw Error("mesh_eval", "n_samples must be >= 1");
  CdReport r = chamfer_distance_points(sample_surface(a, n_samples, seed), sample_surface(b, n_samples, seed), mode);
  r.n_samples = n_samples;
  return r;
}

}  // namespace gradsurf
