#include <cmath>
#include <cstdio>
#include <random>

#include <gtest/gtest.h>

#include "inpaint360/errors.hpp"
#include "inpaint360/field.hpp"

using namespace inpaint360;

namespace {

RadianceField random_field(int res, std::uint64_t seed) {
  RadianceField f(res, Aabb{Vec3(-1, -1, -1), Vec3(1, 1, 1)});
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> s(-2.0f, 2.5f), c(-2.0f, 2.0f);
  for (std::uint32_t n = 0; n < f.node_count(); ++n) {
    f.density_param(n) = s(rng);
    for (int k = 0; k < 3; ++k) f.color_param(n, k) = c(rng);
  }
  return f;
}

Ray random_ray_through_box(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Ray r;
  const Vec3 target = Vec3(u(rng), u(rng), u(rng)) * 0.6;
  r.origin = Vec3(u(rng), u(rng), u(rng)).normalized() * 3.0;
  r.direction = (target - r.origin).normalized();
  return r;
}

struct Heads {
  Vec3 a;
  double b, c;
};

double scalar_loss(const RadianceField& f, const Ray& ray, int K, const Heads& h) {
  auto batch = sample_ray(f, ray, K);
  const RenderResult r = composite(*batch);
  return h.a.dot(r.rgb) + h.b * r.depth + h.c * r.accumulation;
}

Sample manual_sample(double t, double delta, double sigma, const Vec3& color) {
  Sample s;
  s.t = t;
  s.delta = delta;
  s.q.sigma = sigma;
  s.q.color = color;
  return s;
}

}  // namespace

TEST(Field, CenterRayTwoSamplesInsideBox) {
  const RadianceField f(8, Aabb{});
  Ray r;
  r.origin = Vec3(0, 0, 5);
  r.direction = Vec3(0, 0, -1);
  const auto b = sample_ray(f, r, 2);
  ASSERT_TRUE(b);
  ASSERT_EQ(b->samples.size(), 2u);
  EXPECT_DOUBLE_EQ(b->t_near, 4.0);
  EXPECT_DOUBLE_EQ(b->t_far, 6.0);
  EXPECT_LT(b->samples[0].t, b->samples[1].t);
  for (const auto& s : b->samples) {
    EXPECT_GE(s.t, b->t_near);
    EXPECT_LE(s.t, b->t_far);
  }
}

TEST(Field, TangentAndMissingRaysHaveNoIntersection) {
  const RadianceField f(8, Aabb{});
  Ray miss;
  miss.origin = Vec3(0, 3, 0);
  miss.direction = Vec3(1, 0, 0);
  EXPECT_FALSE(sample_ray(f, miss, 4).has_value());
  // Touches the single point (1, 1, 1): zero-length overlap.
  Ray tangent;
  tangent.origin = Vec3(2, 0, 1);
  tangent.direction = Vec3(-1, 1, 0).normalized();
  EXPECT_FALSE(sample_ray(f, tangent, 4).has_value());
}

TEST(Field, StratifiedDepthsMatchScratchSampler) {
  Rng a(1234), b(1234);
  const auto t = stratified_depths(2.0, 5.0, 16, &a);
  for (int i = 0; i < 16; ++i) {
    const double u = static_cast<double>(b() >> 11) / 9007199254740992.0;
    const double expect = 2.0 + (i + u) * (3.0 / 16.0);
    EXPECT_DOUBLE_EQ(t[i], expect);
    if (i) {
      EXPECT_GT(t[i], t[i - 1]);
    }
  }
  const auto mid = stratified_depths(0.0, 1.0, 4, nullptr);
  EXPECT_DOUBLE_EQ(mid[0], 0.125);
  EXPECT_DOUBLE_EQ(mid[3], 0.875);
}

TEST(Field, TrilinearReproducesNodeValues) {
  const RadianceField f = random_field(8, 3);
  for (int k = 0; k < 8; ++k)
    for (int j = 0; j < 8; ++j)
      for (int i = 0; i < 8; ++i) {
        const auto q = f.query(f.node_position(i, j, k));
        const auto n = f.node_index(i, j, k);
        EXPECT_NEAR(q.s, f.density_param(n), 1e-7);
        EXPECT_NEAR(q.c_raw[1], f.color_param(n, 1), 1e-7);
      }
}

TEST(Field, EmptySpaceCompositesToZero) {
  RaySampleBatch b;
  for (int i = 0; i < 5; ++i) b.samples.push_back(manual_sample(1 + i, 1, 0.0, Vec3(1, 1, 1)));
  const auto r = composite(b);
  EXPECT_EQ(r.rgb, Vec3::Zero());
  EXPECT_EQ(r.depth, 0.0);
  EXPECT_EQ(r.accumulation, 0.0);
}

TEST(Field, SingleSegmentMatchesClosedForm) {
  RaySampleBatch b;
  b.samples.push_back(manual_sample(1.0, 1.0, 1.0, Vec3(1, 0, 0)));
  const auto r = composite(b);
  const double w = 1.0 - std::exp(-1.0);
  EXPECT_NEAR(r.rgb[0], w, 1e-12);
  EXPECT_NEAR(r.rgb[0], 0.63212, 1e-5);
  EXPECT_EQ(r.rgb[1], 0.0);
  EXPECT_NEAR(r.accumulation, w, 1e-12);
}

TEST(Field, OpaqueFirstSampleTakesItsColorAndDepth) {
  RaySampleBatch b;
  b.samples.push_back(manual_sample(2.0, 0.5, 80.0, Vec3(0.2, 0.4, 0.9)));
  b.samples.push_back(manual_sample(3.0, 1.0, 3.0, Vec3(1, 1, 1)));
  const auto r = composite(b);
  EXPECT_NEAR((r.rgb - Vec3(0.2, 0.4, 0.9)).norm(), 0.0, 1e-12);
  EXPECT_NEAR(r.depth, 2.0, 1e-12);
}

TEST(Field, SplittingASegmentPreservesRender) {
  for (double sigma : {0.1, 1.0, 4.0}) {
    RaySampleBatch one, two;
    const Vec3 c(0.3, 0.6, 0.9);
    one.samples.push_back(manual_sample(1.0, 1.0, sigma, c));
    two.samples.push_back(manual_sample(0.5, 0.5, sigma, c));
    two.samples.push_back(manual_sample(1.0, 0.5, sigma, c));
    EXPECT_NEAR((composite(one).rgb - composite(two).rgb).norm(), 0.0, 1e-6);
  }
}

TEST(Field, WeightsAreNonNegativeAndSumToAccumulation) {
  const RadianceField f = random_field(8, 17);
  std::mt19937_64 rng(1);
  for (int i = 0; i < 50; ++i) {
    auto b = sample_ray(f, random_ray_through_box(rng), 64);
    ASSERT_TRUE(b);
    const auto r = composite(*b);
    double sum = 0.0;
    double prev_trans = 1.0;
    for (const auto& s : b->samples) {
      const double w = s.transmittance * s.opacity;
      EXPECT_GE(w, 0.0);
      EXPECT_GE(s.opacity, 0.0);
      EXPECT_LT(s.opacity, 1.0);
      EXPECT_LE(s.transmittance, prev_trans);
      prev_trans = s.transmittance;
      sum += w;
    }
    EXPECT_DOUBLE_EQ(b->samples.front().transmittance, 1.0);
    EXPECT_NEAR(sum, r.accumulation, 1e-12);
    EXPECT_LE(r.accumulation, 1.0 + 1e-6);
    for (int c = 0; c < 3; ++c) EXPECT_LE(r.rgb[c], r.accumulation + 1e-12);
  }
}

TEST(Field, OpaqueWallDepthWithinOneVoxelDiagonal) {
  RadianceField f(32, Aabb{});
  for (int k = 0; k < 32; ++k)
    for (int j = 0; j < 32; ++j)
      for (int i = 0; i < 32; ++i) f.density_param(f.node_index(i, j, k)) = i <= 10 ? 200.0f : -10.0f;
  const double wall_x = f.node_position(10, 0, 0).x();
  for (double y : {-0.5, 0.0, 0.3}) {
    Ray r;
    r.origin = Vec3(3, y, 0.1);
    r.direction = Vec3(-1, 0, 0);
    auto b = sample_ray(f, r, 192);
    const auto res = composite(*b);
    EXPECT_NEAR(res.depth, 3.0 - wall_x, f.voxel_diagonal());
    EXPECT_NEAR(res.accumulation, 1.0, 1e-6);
  }
}

TEST(Field, ZeroUpstreamLeavesBuffersUntouched) {
  RadianceField f = random_field(8, 5);
  std::mt19937_64 rng(2);
  auto b = sample_ray(f, random_ray_through_box(rng), 32);
  composite(*b);
  backward(f, *b, Vec3::Zero(), 0.0, 0.0);
  for (double g : f.grads()) ASSERT_EQ(g, 0.0);
}

TEST(Field, OcclusionKillsGradientBehindOpaqueSample) {
  RadianceField f(8, Aabb{});
  // Opaque slab near x = +1 seen from +x; everything behind is hidden.
  for (int k = 0; k < 8; ++k)
    for (int j = 0; j < 8; ++j)
      for (int i = 0; i < 8; ++i) f.density_param(f.node_index(i, j, k)) = i >= 6 ? 400.0f : 0.5f;
  Ray r;
  r.origin = Vec3(3, 0.05, -0.1);
  r.direction = Vec3(-1, 0, 0);
  auto b = sample_ray(f, r, 64);
  composite(*b, 1e-4);
  backward(f, *b, Vec3::Zero(), 0.0, 1.0);
  for (int k = 0; k < 8; ++k)
    for (int j = 0; j < 8; ++j)
      for (int i = 0; i < 4; ++i) EXPECT_EQ(f.grads()[f.node_index(i, j, k) * 4], 0.0);
}

// Central differences with the realised float32 step as denominator.
TEST(Field, BackwardMatchesFiniteDifferences) {
  const int K = 24;
  int probes = 0;
  double worst = 0.0;
  for (int trial = 0; trial < 12; ++trial) {
    RadianceField f = random_field(8, 100 + trial);
    std::mt19937_64 rng(trial);
    const Ray ray = random_ray_through_box(rng);
    std::normal_distribution<double> n(0.0, 1.0);
    const Heads h{Vec3(n(rng), n(rng), n(rng)), 0.3 * n(rng), n(rng)};
    auto b = sample_ray(f, ray, K);
    composite(*b);
    backward(f, *b, h.a, h.b, h.c);
    const std::vector<double> analytic(f.grads().begin(), f.grads().end());
    for (std::size_t p = 0; p < analytic.size(); ++p) {
      if (analytic[p] == 0.0) continue;
      const float orig = f.params()[p];
      const float up = orig + 1e-3f, down = orig - 1e-3f;
      f.params()[p] = up;
      const double lp = scalar_loss(f, ray, K, h);
      f.params()[p] = down;
      const double lm = scalar_loss(f, ray, K, h);
      f.params()[p] = orig;
      const double fd = (lp - lm) / (static_cast<double>(up) - static_cast<double>(down));
      const double scale = std::max(std::abs(fd), std::abs(analytic[p]));
      if (scale < 1e-6) continue;
      const double rel = std::abs(fd - analytic[p]) / scale;
      worst = std::max(worst, rel);
      EXPECT_LT(rel, 1e-3) << "param " << p << " fd " << fd << " analytic " << analytic[p];
      ++probes;
    }
  }
  EXPECT_GE(probes, 100);
  std::printf("field gradient probes: %d, worst relative error %.3g\n", probes, worst);
}

TEST(Optimizer, ZeroGradientKeepsParameters) {
  std::vector<float> p{1.0f, -2.0f};
  std::vector<double> g{0.0, 0.0};
  OptimizerState st(2, {0.1});
  for (int i = 0; i < 5; ++i) adam_step(p, g, st);
  EXPECT_EQ(p[0], 1.0f);
  EXPECT_EQ(p[1], -2.0f);
}

TEST(Optimizer, MomentsAfterThreeConstantSteps) {
  std::vector<float> p{0.0f};
  std::vector<double> g{0.0};
  OptimizerState st(1, {1e-2});
  for (int i = 0; i < 3; ++i) {
    g[0] = 2.0;
    adam_step(p, g, st);
    EXPECT_EQ(g[0], 0.0);
  }
  // m_3 = (1 - b1^3) g, v_3 = (1 - b2^3) g^2; bias-corrected step is lr each time.
  EXPECT_NEAR(st.m[0], (1 - 0.9 * 0.9 * 0.9) * 2.0, 1e-15);
  EXPECT_NEAR(st.v[0], (1 - 0.99 * 0.99 * 0.99) * 4.0, 1e-15);
  EXPECT_NEAR(p[0], -3 * 1e-2 * 2.0 / (2.0 + 1e-8), 1e-7);
  EXPECT_EQ(st.step, 3);
}

TEST(Optimizer, ScalarQuadraticConverges) {
  std::vector<float> p{0.0f};
  std::vector<double> g{0.0};
  OptimizerState st(1, {1e-2});
  int steps = 0;
  for (; steps < 2000; ++steps) {
    g[0] = 2.0 * (p[0] - 3.0);
    adam_step(p, g, st);
  }
  EXPECT_NEAR(p[0], 3.0, 1e-4);
}

namespace {

struct ToyScene {
  std::vector<Camera> cams;
  std::vector<RgbImage> images;
};

ToyScene gray_scene() {
  ToyScene s;
  for (int v = 0; v < 6; ++v) {
    const double a = v * 2.0 * M_PI / 6.0;
    s.cams.push_back(look_at(12, 12, 40.0, Vec3(3 * std::cos(a), 3 * std::sin(a), 0.5), Vec3::Zero()));
    s.images.emplace_back(12, 12, 3, 0.5f);
  }
  return s;
}

std::vector<TrainingView> views_of(const ToyScene& s) {
  std::vector<TrainingView> v;
  for (std::size_t i = 0; i < s.cams.size(); ++i) v.push_back({&s.images[i], nullptr, s.cams[i]});
  return v;
}

}  // namespace

TEST(Training, ConstantGrayTargetRendersGray) {
  const ToyScene s = gray_scene();
  TrainConfig cfg;
  cfg.iterations = 300;
  cfg.batch_rays = 128;
  cfg.samples_per_ray = 32;
  cfg.lr_density = 0.5;
  const auto views = views_of(s);
  const RadianceField f = train_field(views, cfg, RadianceField(8, Aabb{}));
  // A novel pose between the training views.
  const Camera novel = look_at(12, 12, 40.0, Vec3(3 * std::cos(0.4), 3 * std::sin(0.4), 0.3), Vec3::Zero());
  const auto r = render_view(f, novel, {32, 0.0, 1});
  double se = 0.0;
  for (float x : r.rgb.data()) se += (x - 0.5) * (x - 0.5);
  const double mse = se / r.rgb.data().size();
  const double psnr = 10.0 * std::log10(1.0 / mse);
  EXPECT_GE(psnr, 45.0);
}

TEST(Training, SameSeedIsBitwiseDeterministic) {
  const ToyScene s = gray_scene();
  TrainConfig cfg;
  cfg.iterations = 20;
  cfg.batch_rays = 64;
  cfg.samples_per_ray = 16;
  cfg.seed = 42;
  const auto views = views_of(s);
  const auto a = train_field(views, cfg, RadianceField(8, Aabb{}));
  const auto b = train_field(views, cfg, RadianceField(8, Aabb{}));
  EXPECT_EQ(a.checksum(), b.checksum());
  cfg.grad_shards = 3;
  cfg.workers = 1;
  const auto c = train_field(views, cfg, RadianceField(8, Aabb{}));
  cfg.workers = 3;
  const auto d = train_field(views, cfg, RadianceField(8, Aabb{}));
  EXPECT_EQ(c.checksum(), d.checksum());
}

TEST(Training, ImageCameraSizeMismatchThrows) {
  ToyScene s = gray_scene();
  s.images[2] = RgbImage(10, 12, 3, 0.5f);
  EXPECT_THROW(train_field(views_of(s), TrainConfig{}, RadianceField(8, Aabb{})), DimensionMismatch);
}

TEST(Checkpoint, FieldRoundTripIsExact) {
  const RadianceField f = random_field(8, 77);
  const auto bytes = field_to_bytes(f);
  const RadianceField g = field_from_bytes(bytes);
  EXPECT_EQ(g.resolution(), f.resolution());
  EXPECT_EQ(g.aabb().min, f.aabb().min);
  EXPECT_EQ(g.checksum(), f.checksum());
  EXPECT_EQ(field_to_bytes(g), bytes);
  auto truncated = bytes;
  truncated.pop_back();
  EXPECT_THROW(field_from_bytes(truncated), IoError);
}
