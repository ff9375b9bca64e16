#pragma once

#include <map>
#include <optional>
#include <string>

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace inpaint360 {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;

// Continuous pixel coordinates; integer pixel i has its center at i + 0.5.
struct PixelCoord {
  double u = 0.0;
  double v = 0.0;
};

struct Ray {
  Vec3 origin = Vec3::Zero();
  Vec3 direction = -Vec3::UnitZ();  // unit length
};

struct Projection {
  PixelCoord pixel;
  double depth = 0.0;  // z-depth along the camera view axis, > 0
};

// Pinhole camera. The camera looks down its local -z axis with +y up and
// +x right; image v grows downwards. Pose is stored camera-to-world.
class Camera {
 public:
  Camera() = default;
  Camera(int width, int height, double fx, double fy, double cx, double cy, const Mat4& cam_to_world);

  // Throws BadSpec when the rotation is not orthonormal, focal lengths are
  // non-positive or the principal point lies outside the image.
  void validate() const;

  int width() const { return width_; }
  int height() const { return height_; }
  double fx() const { return fx_; }
  double fy() const { return fy_; }
  double cx() const { return cx_; }
  double cy() const { return cy_; }
  const Mat4& cam_to_world() const { return cam_to_world_; }
  Mat3 rotation() const { return cam_to_world_.topLeftCorner<3, 3>(); }
  Vec3 center() const { return cam_to_world_.topRightCorner<3, 1>(); }
  // World-space unit vector of the viewing axis (local -z).
  Vec3 forward() const { return -rotation().col(2); }

  // z-depth conversion for a ray leaving this camera with unit direction d.
  double z_from_ray_depth(const Vec3& direction, double t) const { return t * direction.dot(forward()); }

  bool operator==(const Camera&) const = default;

 private:
  int width_ = 0;
  int height_ = 0;
  double fx_ = 1.0, fy_ = 1.0, cx_ = 0.0, cy_ = 0.0;
  Mat4 cam_to_world_ = Mat4::Identity();
};

// Builds a camera at `eye` looking at `target`, world `up` hint.
Camera look_at(int width, int height, double focal, const Vec3& eye, const Vec3& target,
               const Vec3& up = Vec3::UnitZ());

Ray pixel_to_ray(const Camera& cam, const PixelCoord& px);

inline Ray pixel_center_ray(const Camera& cam, int x, int y) {
  return pixel_to_ray(cam, {x + 0.5, y + 0.5});
}

inline Vec3 point_from_depth(const Ray& ray, double t) { return ray.origin + t * ray.direction; }

// nullopt means the point is behind the camera (depth <= 0).
std::optional<Projection> project(const Camera& cam, const Vec3& X);

using CameraSet = std::map<int, Camera>;

// Structured-text camera file (JSON), keyed by view index. Doubles are
// written in shortest round-trip form, so save/load is bit-exact.
std::string cameras_to_json(const CameraSet& cams);
CameraSet cameras_from_json(const std::string& text);
void save_cameras(const std::string& path, const CameraSet& cams);
CameraSet load_cameras(const std::string& path);

}  // namespace inpaint360
