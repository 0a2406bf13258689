#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "gradsurf/camera.hpp"
#include "gradsurf/dataset.hpp"
#include "gradsurf/image.hpp"
#include "gradsurf/mesh.hpp"

namespace gradsurf {

enum class SynthShape { sphere, blob, capsule };
std::string to_string(SynthShape s);
SynthShape synth_shape_from_string(const std::string& s);

struct SynthConfig {
  SynthShape shape = SynthShape::sphere;
  std::uint64_t texture_seed = 0;
  std::uint64_t seed = 0;  // camera jitter-free; drives sensor noise only
  int n_views = 30;
  int resolution = 64;
  double noise = 0.0;  // std of additive Gaussian pixel noise
  double camera_distance = 2.6;
  int mesh_resolution = 128;
};

// Gaussian bump subtracted from the base sphere distance.
struct Bump {
  Eigen::Vector3d center;
  double amplitude;
  double sigma;
};

// Analytic implicit surface plus a procedural albedo and fixed lighting.
struct AnalyticScene {
  SynthShape shape = SynthShape::sphere;
  double radius = 0.5;
  double capsule_half_length = 0.3;
  std::vector<Bump> bumps;
  // albedo_c(x) = base + amp * sin(freq_c . x + phase_c), two terms per channel
  std::vector<Eigen::Vector3d> tex_freq;
  std::vector<double> tex_phase;

  double sdf(const Eigen::Vector3d& x) const;
  Eigen::Vector3d gradient(const Eigen::Vector3d& x) const;
  // Upper bound on |grad f|; sphere tracing steps are scaled by its inverse.
  double lipschitz() const;
  Eigen::Vector3d albedo(const Eigen::Vector3d& x) const;
  Eigen::Vector3d shade(const Eigen::Vector3d& x, const Eigen::Vector3d& normal) const;
};

AnalyticScene make_analytic_scene(SynthShape shape, std::uint64_t texture_seed);

// Distance to the first surface hit, 256 steps and 1e-5 tolerance.
std::optional<double> sphere_trace(const AnalyticScene& scene, const Ray& ray, double bounds = 1.0);
// One ray per pixel center; black background.
Image oracle_render(const AnalyticScene& scene, const Camera& camera, bool albedo_only = false);

// Cameras on a ring around the y axis looking at the origin, yaw measured from +z.
std::vector<Camera> ring_cameras(int n_views, int resolution, double distance);

// Zero level set of the analytic field, vertices Newton-projected onto it.
TriangleMesh analytic_mesh(const AnalyticScene& scene, int resolution);

struct SyntheticScene {
  SynthConfig config;
  AnalyticScene scene;
  TriangleMesh gt_mesh;
  Dataset dataset;  // all views neutral RGB; split later
};

SyntheticScene synth_scene(const SynthConfig& config);

}  // namespace gradsurf
