#include "gradsurf/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "gradsurf/error.hpp"

namespace gradsurf {

std::string to_string(SynthShape s) {
  switch (s) {
    case SynthShape::sphere: return "sphere";
    case SynthShape::blob: return "blob";
    case SynthShape::capsule: return "capsule";
  }
  return "sphere";
}

SynthShape synth_shape_from_string(const std::string& s) {
  if (s == "sphere") return SynthShape::sphere;
  if (s == "blob") return SynthShape::blob;
  if (s == "capsule") return SynthShape::capsule;
  throw Error("camera_data", "unknown synthetic shape '" + s + "' (sphere, blob, capsule)");
}

namespace {

// Nearest point on the capsule axis segment.
Eigen::Vector3d capsule_axis_point(const Eigen::Vector3d& x, double half) {
  return Eigen::Vector3d(0.0, std::clamp(x.y(), -half, half), 0.0);
}

const Eigen::Vector3d kKeyLight = Eigen::Vector3d(0.4, 0.6, 0.7).normalized();
const Eigen::Vector3d kFillLight = Eigen::Vector3d(-0.6, 0.3, -0.75).normalized();
constexpr double kAmbient = 0.3;
constexpr double kKey = 0.55;
constexpr double kFill = 0.35;

}  // namespace

double AnalyticScene::sdf(const Eigen::Vector3d& x) const {
  switch (shape) {
    case SynthShape::sphere: return x.norm() - radius;
    case SynthShape::capsule: return (x - capsule_axis_point(x, capsule_half_length)).norm() - radius;
    case SynthShape::blob: {
      double f = x.norm() - radius;
      for (const Bump& b : bumps) f -= b.amplitude * std::exp(-(x - b.center).squaredNorm() / (2 * b.sigma * b.sigma));
      return f;
    }
  }
  return 0.0;
}

Eigen::Vector3d AnalyticScene::gradient(const Eigen::Vector3d& x) const {
  switch (shape) {
    case SynthShape::sphere: {
      const double n = x.norm();
      return n > 0 ? Eigen::Vector3d(x / n) : Eigen::Vector3d::UnitZ();
    }
    case SynthShape::capsule: {
      const Eigen::Vector3d r = x - capsule_axis_point(x, capsule_half_length);
      const double n = r.norm();
      return n > 0 ? Eigen::Vector3d(r / n) : Eigen::Vector3d::UnitX();
    }
    case SynthShape::blob: {
      const double n = x.norm();
      Eigen::Vector3d g = n > 0 ? Eigen::Vector3d(x / n) : Eigen::Vector3d::UnitZ();
      for (const Bump& b : bumps) {
        const Eigen::Vector3d r = x - b.center;
        const double e = b.amplitude * std::exp(-r.squaredNorm() / (2 * b.sigma * b.sigma));
        g += e * r / (b.sigma * b.sigma);
      }
      return g;
    }
  }
  return Eigen::Vector3d::UnitZ();
}

double AnalyticScene::lipschitz() const {
  double l = 1.0;
  // max of a*r/s^2*exp(-r^2/2s^2) over r is a/s*exp(-1/2)
  for (const Bump& b : bumps) l += b.amplitude / b.sigma * std::exp(-0.5);
  return l;
}

Eigen::Vector3d AnalyticScene::albedo(const Eigen::Vector3d& x) const {
  Eigen::Vector3d a;
  for (int c = 0; c < 3; ++c) {
    double v = 0.55;
    for (int k = 0; k < 2; ++k) {
      const std::size_t i = static_cast<std::size_t>(c) * 2 + k;
      v += 0.2 * std::sin(tex_freq[i].dot(x) + tex_phase[i]);
    }
    a[c] = std::clamp(v, 0.0, 1.0);
  }
  return a;
}

Eigen::Vector3d AnalyticScene::shade(const Eigen::Vector3d& x, const Eigen::Vector3d& normal) const {
  const double light =
      kAmbient + kKey * std::max(0.0, normal.dot(kKeyLight)) + kFill * std::max(0.0, normal.dot(kFillLight));
  return (albedo(x) * light).cwiseMax(0.0).cwiseMin(1.0);
}

AnalyticScene make_analytic_scene(SynthShape shape, std::uint64_t texture_seed) {
  AnalyticScene s;
  s.shape = shape;
  s.radius = shape == SynthShape::capsule ? 0.3 : 0.5;
  if (shape == SynthShape::blob) {
    // A face-like relief on the +z hemisphere: nose, brow, cheeks and chin.
    s.bumps = {
        {{0.0, 0.02, 0.5}, 0.16, 0.09},
        {{0.0, -0.2, 0.44}, 0.07, 0.09},
        {{0.0, 0.2, 0.45}, 0.06, 0.12},
        {{0.22, -0.06, 0.42}, 0.06, 0.1},
        {{-0.22, -0.06, 0.42}, 0.06, 0.1},
    };
  }
  std::mt19937_64 rng(texture_seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> phase(0.0, 2.0 * M_PI);
  std::uniform_real_distribution<double> freq(4.0, 9.0);
  for (int i = 0; i < 6; ++i) {
    Eigen::Vector3d d(gauss(rng), gauss(rng), gauss(rng));
    d.normalize();
    s.tex_freq.push_back(d * freq(rng));
    s.tex_phase.push_back(phase(rng));
  }
  return s;
}

std::optional<double> sphere_trace(const AnalyticScene& scene, const Ray& ray, double bounds) {
  // Entry into the bounding sphere, solved here so the oracle stands alone.
  const double b = ray.origin.dot(ray.direction);
  const double c = ray.origin.squaredNorm() - bounds * bounds;
  const double disc = b * b - c;
  if (disc < 0) return std::nullopt;
  const double sq = std::sqrt(disc);
  const double far = -b + sq;
  if (far <= 0) return std::nullopt;
  double t = std::max(0.0, -b - sq);
  const double step_scale = 1.0 / scene.lipschitz();
  for (int i = 0; i < 256; ++i) {
    const double d = scene.sdf(ray.origin + t * ray.direction);
    if (std::abs(d) < 1e-5) return t;
    t += d * step_scale;
    if (t > far) return std::nullopt;
  }
  return std::nullopt;
}

Image oracle_render(const AnalyticScene& scene, const Camera& camera, bool albedo_only) {
  Image img(camera.width, camera.height, 3, 0.0);
  for (int v = 0; v < camera.height; ++v) {
    for (int u = 0; u < camera.width; ++u) {
      const Ray ray = generate_ray(camera, {static_cast<double>(u), static_cast<double>(v)});
      const auto t = sphere_trace(scene, ray);
      if (!t) continue;
      const Eigen::Vector3d x = ray.origin + *t * ray.direction;
      const Eigen::Vector3d c = albedo_only ? scene.albedo(x) : scene.shade(x, scene.gradient(x).normalized());
      for (int k = 0; k < 3; ++k) img.at(u, v, k) = c[k];
    }
  }
  return img;
}

std::vector<Camera> ring_cameras(int n_views, int resolution, double distance) {
  static constexpr double kElevations[3] = {-20.0, 0.0, 20.0};
  // Frame the unit bounding sphere: tan(half fov) = 1 / sqrt(d^2 - 1).
  const double f = 0.5 * resolution * std::sqrt(distance * distance - 1.0);
  std::vector<Camera> cams;
  cams.reserve(n_views);
  for (int k = 0; k < n_views; ++k) {
    const double yaw = 2.0 * M_PI * (k + 0.5) / n_views;
    const double el = kElevations[k % 3] * M_PI / 180.0;
    const Eigen::Vector3d eye =
        distance * Eigen::Vector3d(std::cos(el) * std::sin(yaw), std::sin(el), std::cos(el) * std::cos(yaw));
    cams.push_back(Camera::look_at(eye, Eigen::Vector3d::Zero(), Eigen::Vector3d::UnitY(), f, f, resolution, resolution));
  }
  return cams;
}

TriangleMesh analytic_mesh(const AnalyticScene& scene, int resolution) {
  const ScalarGrid grid = sample_grid([&](const Eigen::Vector3d& x) { return scene.sdf(x); }, resolution,
                                      Eigen::Vector3d::Constant(-1.0), Eigen::Vector3d::Constant(1.0));
  TriangleMesh mesh = marching_cubes(grid);
  for (auto& v : mesh.vertices) {
    for (int it = 0; it < 20; ++it) {
      const double f = scene.sdf(v);
      if (std::abs(f) < 1e-9) break;
      const Eigen::Vector3d g = scene.gradient(v);
      v -= f * g / g.squaredNorm();
    }
    if (std::abs(scene.sdf(v)) > 1e-3) throw Error("camera_data", "ground-truth vertex projection did not converge");
  }
  // Projection can collapse slivers; drop faces that became degenerate.
  std::vector<std::array<int, 3>> kept;
  for (std::size_t f = 0; f < mesh.faces.size(); ++f)
    if (mesh.face_area(f) >= 1e-12) kept.push_back(mesh.faces[f]);
  mesh.faces = std::move(kept);
  return mesh;
}

SyntheticScene synth_scene(const SynthConfig& config) {
  if (config.n_views < 2) throw Error("camera_data", "synthetic scene needs at least 2 views");
  if (config.resolution < 8) throw Error("camera_data", "synthetic resolution must be >= 8");
  if (!(config.camera_distance > 1.0)) throw Error("camera_data", "cameras must lie outside the unit sphere");
  SyntheticScene out;
  out.config = config;
  out.scene = make_analytic_scene(config.shape, config.texture_seed);
  out.gt_mesh = analytic_mesh(out.scene, config.mesh_resolution);

  std::mt19937_64 noise_rng(config.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const auto cams = ring_cameras(config.n_views, config.resolution, config.camera_distance);
  for (std::size_t k = 0; k < cams.size(); ++k) {
    Image img = oracle_render(out.scene, cams[k]);
    for (double& p : img.data) {
      if (config.noise > 0) p += config.noise * gauss(noise_rng);
      // Stored as 8-bit on disk; quantize now so save/load is lossless.
      p = std::round(std::clamp(p, 0.0, 1.0) * 255.0) / 255.0;
    }
    char name[32];
    std::snprintf(name, sizeof(name), "view_%03zu", k);
    out.dataset.views.push_back(ViewRecord::with_rgb(name, cams[k], Sensitivity::neutral, std::move(img)));
  }
  out.dataset.scene_bounds = 1.0;
  out.dataset.front_axis = Eigen::Vector3d::UnitZ();
  return out;
}

}  // namespace gradsurf
