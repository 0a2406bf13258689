#include "gradsurf/camera.hpp"

#include <cmath>
#include <string>

#include "gradsurf/error.hpp"

namespace gradsurf {

void Camera::validate() const {
  if (!(fx > 0.0) || !(fy > 0.0)) throw Error("camera_data", "focal lengths must be positive");
  if (width <= 0 || height <= 0) throw Error("camera_data", "camera resolution must be positive");
  if (!(cx >= 0.0 && cx < width && cy >= 0.0 && cy < height))
    throw Error("camera_data", "principal point outside the image");
  const double ortho = (rotation.transpose() * rotation - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff();
  if (ortho > 1e-6 || std::abs(rotation.determinant() - 1.0) > 1e-6)
    throw Error("camera_data", "camera rotation is not a proper rotation");
}

Eigen::Matrix4d Camera::camera_to_world() const {
  Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
  m.topLeftCorner<3, 3>() = rotation;
  m.topRightCorner<3, 1>() = translation;
  return m;
}

Camera Camera::from_matrix(const Eigen::Matrix4d& c2w, double fx, double fy, double cx, double cy,
                           int width, int height) {
  Camera cam;
  cam.fx = fx;
  cam.fy = fy;
  cam.cx = cx;
  cam.cy = cy;
  cam.width = width;
  cam.height = height;
  cam.rotation = c2w.topLeftCorner<3, 3>();
  cam.translation = c2w.topRightCorner<3, 1>();
  cam.validate();
  return cam;
}

Camera Camera::look_at(const Eigen::Vector3d& eye, const Eigen::Vector3d& target,
                       const Eigen::Vector3d& up, double fx, double fy, int width, int height) {
  const Eigen::Vector3d forward = (target - eye).normalized();
  Eigen::Vector3d right = forward.cross(up);
  if (right.norm() < 1e-9) right = forward.unitOrthogonal();
  right.normalize();
  const Eigen::Vector3d down = forward.cross(right);
  Camera cam;
  cam.fx = fx;
  cam.fy = fy;
  cam.cx = width / 2.0;
  cam.cy = height / 2.0;
  cam.width = width;
  cam.height = height;
  cam.rotation.col(0) = right;
  cam.rotation.col(1) = down;
  cam.rotation.col(2) = forward;
  cam.translation = eye;
  return cam;
}

Eigen::Vector2d Camera::project(const Eigen::Vector3d& world_point) const {
  const Eigen::Vector3d p = rotation.transpose() * (world_point - translation);
  return {fx * p.x() / p.z() + cx - 0.5, fy * p.y() / p.z() + cy - 0.5};
}

Ray generate_ray(const Camera& camera, PixelCoord pixel) {
  if (!(pixel.u >= 0.0 && pixel.u < camera.width && pixel.v >= 0.0 && pixel.v < camera.height)) {
    throw Error("camera_data", "pixel (" + std::to_string(pixel.u) + "," + std::to_string(pixel.v) +
                                   ") outside " + std::to_string(camera.width) + "x" +
                                   std::to_string(camera.height) + " image");
  }
  const Eigen::Vector3d dir_cam((pixel.u + 0.5 - camera.cx) / camera.fx,
                                (pixel.v + 0.5 - camera.cy) / camera.fy, 1.0);
  return {camera.translation, (camera.rotation * dir_cam).normalized()};
}

std::vector<Ray> generate_rays(const Camera& camera, const std::vector<PixelCoord>& pixels) {
  std::vector<Ray> rays;
  rays.reserve(pixels.size());
  for (const auto& p : pixels) rays.push_back(generate_ray(camera, p));
  return rays;
}

bool intersect_sphere(const Ray& ray, double radius, double& t_near, double& t_far) {
  const double b = ray.origin.dot(ray.direction);
  const double c = ray.origin.squaredNorm() - radius * radius;
  const double disc = b * b - c;
  if (disc <= 0.0) return false;
  const double s = std::sqrt(disc);
  t_near = std::max(0.0, -b - s);
  t_far = -b + s;
  return t_far > t_near;
}

}  // namespace gradsurf
