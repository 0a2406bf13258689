#pragma once

#include <Eigen/Dense>
#include <vector>

namespace gradsurf {

// Pinhole camera. Camera frame: +x right, +y down, +z forward. Pixel (u,v)
// names the cell [u,u+1)x[v,v+1); its center is at (u+0.5, v+0.5).
struct Camera {
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;
  int width = 1;
  int height = 1;
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();  // camera-to-world
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();   // camera center in world

  // Throws if the intrinsics or rotation violate the model.
  void validate() const;

  Eigen::Vector3d origin() const { return translation; }
  Eigen::Vector3d optical_axis() const { return rotation.col(2); }

  Eigen::Matrix4d camera_to_world() const;
  static Camera from_matrix(const Eigen::Matrix4d& c2w, double fx, double fy, double cx, double cy,
                            int width, int height);

  // Camera looking from `eye` at `target`; `up` is a world hint.
  static Camera look_at(const Eigen::Vector3d& eye, const Eigen::Vector3d& target,
                        const Eigen::Vector3d& up, double fx, double fy, int width, int height);

  // Pixel coordinates (u,v) of a world point, in the same convention as
  // generate_rays takes them (so the pixel center maps back to integer u,v).
  Eigen::Vector2d project(const Eigen::Vector3d& world_point) const;
};

struct Ray {
  Eigen::Vector3d origin;
  Eigen::Vector3d direction;  // unit norm, world frame
};

struct PixelCoord {
  double u = 0.0;
  double v = 0.0;
};

Ray generate_ray(const Camera& camera, PixelCoord pixel);
std::vector<Ray> generate_rays(const Camera& camera, const std::vector<PixelCoord>& pixels);

// Entry/exit distances of a ray through a sphere centred at the origin.
// Returns false when the ray misses or the sphere lies behind the origin.
bool intersect_sphere(const Ray& ray, double radius, double& t_near, double& t_far);

}  // namespace gradsurf
