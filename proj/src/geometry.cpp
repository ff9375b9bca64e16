#include "inpaint360/geometry.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "inpaint360/errors.hpp"

namespace inpaint360 {

Camera::Camera(int width, int height, double fx, double fy, double cx, double cy, const Mat4& cam_to_world)
    : width_(width), height_(height), fx_(fx), fy_(fy), cx_(cx), cy_(cy), cam_to_world_(cam_to_world) {}

void Camera::validate() const {
  if (width_ <= 0 || height_ <= 0) throw BadSpec("camera: non-positive image size");
  if (!(fx_ > 0.0) || !(fy_ > 0.0)) throw BadSpec("camera: focal lengths must be positive");
  if (!(cx_ >= 0.0 && cx_ <= width_ && cy_ >= 0.0 && cy_ <= height_))
    throw BadSpec("camera: principal point outside the image");
  const Mat3 R = rotation();
  if ((R.transpose() * R - Mat3::Identity()).cwiseAbs().maxCoeff() >= 1e-6)
    throw BadSpec("camera: rotation block is not orthonormal");
  if (cam_to_world_.row(3) != Eigen::RowVector4d(0, 0, 0, 1))
    throw BadSpec("camera: last row of cam_to_world must be [0 0 0 1]");
}

Camera look_at(int width, int height, double focal, const Vec3& eye, const Vec3& target, const Vec3& up) {
  const Vec3 back = (eye - target).normalized();  // local +z
  Vec3 right = up.cross(back);
  if (right.norm() < 1e-12) right = Vec3::UnitX().cross(back);
  right.normalize();
  const Vec3 cam_up = back.cross(right);
  Mat4 T = Mat4::Identity();
  T.block<3, 1>(0, 0) = right;
  T.block<3, 1>(0, 1) = cam_up;
  T.block<3, 1>(0, 2) = back;
  T.block<3, 1>(0, 3) = eye;
  return Camera(width, height, focal, focal, 0.5 * width, 0.5 * height, T);
}

Ray pixel_to_ray(const Camera& cam, const PixelCoord& px) {
  const Vec3 local((px.u - cam.cx()) / cam.fx(), -(px.v - cam.cy()) / cam.fy(), -1.0);
  Ray r;
  r.origin = cam.center();
  r.direction = (cam.rotation() * local).normalized();
  return r;
}

std::optional<Projection> project(const Camera& cam, const Vec3& X) {
  const Vec3 local = cam.rotation().transpose() * (X - cam.center());
  const double z = -local.z();
  if (!(z > 0.0)) return std::nullopt;
  Projection p;
  p.pixel.u = cam.cx() + cam.fx() * local.x() / z;
  p.pixel.v = cam.cy() - cam.fy() * local.y() / z;
  p.depth = z;
  return p;
}

std::string cameras_to_json(const CameraSet& cams) {
  nlohmann::ordered_json views = nlohmann::ordered_json::object();
  for (const auto& [idx, c] : cams) {
    nlohmann::ordered_json j;
    j["width"] = c.width();
    j["height"] = c.height();
    j["fx"] = c.fx();
    j["fy"] = c.fy();
    j["cx"] = c.cx();
    j["cy"] = c.cy();
    std::vector<double> m;
    for (int r = 0; r < 4; ++r)
      for (int k = 0; k < 4; ++k) m.push_back(c.cam_to_world()(r, k));
    j["cam_to_world"] = m;
    views[std::to_string(idx)] = j;
  }
  nlohmann::ordered_json doc;
  doc["format"] = "inpaint360-cameras";
  doc["version"] = 1;
  doc["views"] = views;
  return doc.dump(2) + "\n";
}

CameraSet cameras_from_json(const std::string& text) {
  CameraSet out;
  try {
    const auto doc = nlohmann::json::parse(text);
    for (const auto& [key, j] : doc.at("views").items()) {
      const auto m = j.at("cam_to_world").get<std::vector<double>>();
      if (m.size() != 16) throw BadSpec("camera file: cam_to_world needs 16 entries");
      Mat4 T;
      for (int r = 0; r < 4; ++r)
        for (int k = 0; k < 4; ++k) T(r, k) = m[r * 4 + k];
      Camera c(j.at("width").get<int>(), j.at("height").get<int>(), j.at("fx").get<double>(),
               j.at("fy").get<double>(), j.at("cx").get<double>(), j.at("cy").get<double>(), T);
      c.validate();
      out.emplace(std::stoi(key), c);
    }
  } catch (const nlohmann::json::exception& e) {
    throw BadSpec(std::string("camera file: ") + e.what());
  }
  return out;
}

void save_cameras(const std::string& path, const CameraSet& cams) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write " + path);
  f << cameras_to_json(cams);
}

CameraSet load_cameras(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw MissingInput("missing camera file " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return cameras_from_json(ss.str());
}

}  // namespace inpaint360
