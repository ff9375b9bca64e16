#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "inpaint360/errors.hpp"
#include "inpaint360/geometry.hpp"

using namespace inpaint360;

namespace {

Mat4 random_pose(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const Eigen::Quaterniond q(Eigen::Vector4d(u(rng), u(rng), u(rng), u(rng)).normalized());
  Mat4 T = Mat4::Identity();
  T.topLeftCorner<3, 3>() = q.toRotationMatrix();
  T.topRightCorner<3, 1>() = Vec3(u(rng), u(rng), u(rng)) * 3.0;
  return T;
}

Camera random_camera(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> f(40.0, 120.0);
  return Camera(64, 48, f(rng), f(rng), 31.3, 24.9, random_pose(rng));
}

// Independent route: world-to-camera via a full 4x4 inverse, an OpenCV-style
// axis flip and the intrinsic matrix.
Eigen::Vector3d oracle_project(const Camera& c, const Vec3& X) {
  Eigen::Matrix3d K;
  K << c.fx(), 0, c.cx(), 0, c.fy(), c.cy(), 0, 0, 1;
  const Eigen::Vector4d flip(1, -1, -1, 1);
  const Eigen::Vector4d Xc = flip.asDiagonal() * (c.cam_to_world().inverse() * X.homogeneous());
  const Eigen::Vector3d uvw = K * Xc.head<3>();
  return Eigen::Vector3d(uvw.x() / uvw.z(), uvw.y() / uvw.z(), Xc.z());
}

Vec3 oracle_direction(const Camera& c, const PixelCoord& px) {
  Eigen::Matrix3d K;
  K << c.fx(), 0, c.cx(), 0, c.fy(), c.cy(), 0, 0, 1;
  const Vec3 cv = K.inverse() * Vec3(px.u, px.v, 1.0);
  const Vec3 local = Eigen::Vector3d(1, -1, -1).asDiagonal() * cv;
  return (c.cam_to_world().topLeftCorner<3, 3>() * local).normalized();
}

}  // namespace

TEST(Geometry, PrincipalPointRayLooksDownMinusZ) {
  const Camera c(64, 64, 50, 50, 32, 32, Mat4::Identity());
  const Ray r = pixel_to_ray(c, {32, 32});
  EXPECT_NEAR((r.direction - Vec3(0, 0, -1)).norm(), 0.0, 1e-15);
  EXPECT_NEAR(r.origin.norm(), 0.0, 0.0);
}

TEST(Geometry, OneFocalRightIsFortyFiveDegrees) {
  const Camera c(64, 64, 50, 50, 32, 32, Mat4::Identity());
  const Ray r = pixel_to_ray(c, {82, 32});
  EXPECT_NEAR((r.direction - Vec3(1, 0, -1) / std::sqrt(2.0)).norm(), 0.0, 1e-15);
}

TEST(Geometry, RayMatchesHomogeneousOracle) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> px(-10.0, 70.0);
  for (int i = 0; i < 200; ++i) {
    const Camera c = random_camera(rng);
    const PixelCoord p{px(rng), px(rng)};
    const Ray r = pixel_to_ray(c, p);
    EXPECT_NEAR((r.direction - oracle_direction(c, p)).norm(), 0.0, 1e-12);
    EXPECT_NEAR(r.direction.norm(), 1.0, 1e-12);
    EXPECT_NEAR((r.origin - c.cam_to_world().topRightCorner<3, 1>()).norm(), 0.0, 0.0);
  }
}

TEST(Geometry, PointFromDepth) {
  Ray r;
  r.origin = Vec3(0, 0, 0);
  r.direction = Vec3(0, 0, -1);
  EXPECT_EQ(point_from_depth(r, 0.0), r.origin);
  EXPECT_NEAR((point_from_depth(r, 2.5) - Vec3(0, 0, -2.5)).norm(), 0.0, 0.0);

  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int i = 0; i < 100; ++i) {
    Ray q;
    q.origin = Vec3(u(rng), u(rng), u(rng)) * 5;
    q.direction = Vec3(u(rng), u(rng), u(rng)).normalized();
    const double t = 10.0 * (u(rng) + 1.0);
    EXPECT_NEAR((point_from_depth(q, t) - q.origin).dot(q.direction), t, 1e-12);
  }
}

TEST(Geometry, RoundTripPixelAndDepth) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> depth(0.1, 50.0);
  for (int i = 0; i < 500; ++i) {
    const Camera c = random_camera(rng);
    std::uniform_real_distribution<double> ux(0.0, c.width()), vy(0.0, c.height());
    const PixelCoord p{ux(rng), vy(rng)};
    const double t = depth(rng);
    const Ray r = pixel_to_ray(c, p);
    const Vec3 X = point_from_depth(r, t);
    const auto proj = project(c, X);
    ASSERT_TRUE(proj.has_value());
    EXPECT_NEAR(proj->pixel.u, p.u, 1e-6);
    EXPECT_NEAR(proj->pixel.v, p.v, 1e-6);
    const double z = c.z_from_ray_depth(r.direction, t);
    EXPECT_NEAR(proj->depth / z, 1.0, 1e-9);
  }
}

TEST(Geometry, BehindCameraIsReported) {
  const Camera c(64, 64, 50, 50, 32, 32, Mat4::Identity());
  EXPECT_FALSE(project(c, Vec3(0, 0, 1)).has_value());
  EXPECT_FALSE(project(c, Vec3(0.3, 0.1, 0)).has_value());
  EXPECT_TRUE(project(c, Vec3(0, 0, -1)).has_value());
}

TEST(Geometry, TwoCameraTransferMatchesOracle) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int i = 0; i < 100; ++i) {
    const Vec3 X(u(rng), u(rng), u(rng));
    const Camera a = look_at(64, 48, 60, Vec3(4 * u(rng), 4, 2 * u(rng)), Vec3::Zero());
    const Camera b = look_at(64, 48, 70, Vec3(-4, 4 * u(rng), 1 + u(rng)), Vec3::Zero());
    const auto pa = project(a, X);
    ASSERT_TRUE(pa.has_value());
    // Back-project from A with the z-depth, then transfer into B.
    const Ray r = pixel_to_ray(a, pa->pixel);
    const double t = pa->depth / r.direction.dot(a.forward());
    const auto pb = project(b, point_from_depth(r, t));
    const Eigen::Vector3d ob = oracle_project(b, X);
    ASSERT_TRUE(pb.has_value());
    EXPECT_NEAR(pb->pixel.u, ob.x(), 1e-8);
    EXPECT_NEAR(pb->pixel.v, ob.y(), 1e-8);
    EXPECT_NEAR(pb->depth, ob.z(), 1e-9);
  }
}

TEST(Geometry, LookAtProducesValidCamera) {
  const Camera c = look_at(80, 60, 70, Vec3(3, 2, 1), Vec3(0, 0, 0.2));
  EXPECT_NO_THROW(c.validate());
  EXPECT_NEAR((c.forward() - (Vec3(0, 0, 0.2) - Vec3(3, 2, 1)).normalized()).norm(), 0.0, 1e-12);
  const auto p = project(c, Vec3(0, 0, 0.2));
  ASSERT_TRUE(p);
  EXPECT_NEAR(p->pixel.u, 40.0, 1e-9);
  EXPECT_NEAR(p->pixel.v, 30.0, 1e-9);
}

TEST(Geometry, ValidateRejectsBadCameras) {
  Mat4 skew = Mat4::Identity();
  skew(0, 1) = 0.01;
  EXPECT_THROW(Camera(64, 64, 50, 50, 32, 32, skew).validate(), BadSpec);
  EXPECT_THROW(Camera(64, 64, -5, 50, 32, 32, Mat4::Identity()).validate(), BadSpec);
  EXPECT_THROW(Camera(64, 64, 50, 50, 80, 32, Mat4::Identity()).validate(), BadSpec);
}

TEST(Geometry, CameraFileRoundTripIsBitExact) {
  std::mt19937_64 rng(99);
  CameraSet cams;
  for (int i = 0; i < 12; ++i) cams.emplace(i * 3, random_camera(rng));
  const CameraSet back = cameras_from_json(cameras_to_json(cams));
  ASSERT_EQ(back.size(), cams.size());
  for (const auto& [k, c] : cams) {
    const Camera& d = back.at(k);
    EXPECT_EQ(c, d);  // exact equality of every double
  }
  EXPECT_EQ(cameras_to_json(back), cameras_to_json(cams));
}
