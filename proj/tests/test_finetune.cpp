#include <gtest/gtest.h>

#include "inpaint360/errors.hpp"
#include "inpaint360/finetune.hpp"

using namespace inpaint360;

namespace {

class ConstantPredictor : public OccupancyPredictor {
 public:
  explicit ConstantPredictor(float value) : value_(value) {}
  std::vector<float> predict_x0(const OccupancyCube& cube, Rng&) const override {
    return std::vector<float>(cube.size(), value_);
  }

 private:
  float value_;
};

// A grey ball in a 17^3 field seen from above; the target image is a flat
// colour with a masked square in the middle.
struct Toy {
  RadianceField field{17, Aabb{}};
  Camera camera = look_at(24, 24, 40.0, Vec3(0, 0, 4), Vec3::Zero(), Vec3(0, 1, 0));
  RgbImage target{24, 24, 3, 0.2f};
  Mask mask{24, 24, 1, 0};
  VisibleRegion region;
  PriorConfig prior;

  Toy() {
    const int G = field.resolution();
    for (int k = 0; k < G; ++k)
      for (int j = 0; j < G; ++j)
        for (int i = 0; i < G; ++i)
          if (field.node_position(i, j, k).norm() <= 0.4) field.density_param(field.node_index(i, j, k)) = 2.0f;
    for (int y = 8; y < 16; ++y)
      for (int x = 8; x < 16; ++x) mask.at(x, y) = 1;
    DepthImage depth(24, 24, 1, 0.0);
    for (int y = 8; y < 16; ++y)
      for (int x = 8; x < 16; ++x) depth.at(x, y) = 4.0 / -pixel_center_ray(camera, x, y).direction.z();
    prior.cube_edge = 0.5;
    prior.m = 8;
    prior.cubes_per_step = 4;
    region = build_visible_region(field.aabb(), {mask}, {depth}, {camera}, prior);
  }

  std::vector<FinetuneView> views() const { return {{camera, &target, &mask}}; }
};

FinetuneConfig small_config() {
  FinetuneConfig cfg;
  cfg.iterations = 20;
  cfg.patches_per_step = 1;
  cfg.pixel_rays = 64;
  cfg.samples_per_ray = 48;
  cfg.lr_density = 0.1;  // the toy needs to move within a few dozen steps
  cfg.loss.patch = 8;
  cfg.loss.levels = 2;
  cfg.loss.lambda_geom = 0.0;
  cfg.seed = 4;
  return cfg;
}

}  // namespace

TEST(Finetune, GeometricTermNeedsPredictor) {
  Toy t;
  FinetuneConfig cfg = small_config();
  cfg.loss.lambda_geom = 1.0;
  const auto v = t.views();
  EXPECT_THROW(finetune_field(t.field, v, t.region, nullptr, t.prior, cfg), ConfigError);
  cfg.loss.lambda_geom = -1.0;
  const ConstantPredictor p(-1.0f);
  EXPECT_THROW(finetune_field(t.field, v, t.region, &p, t.prior, cfg), ConfigError);
}

TEST(Finetune, NoViewsIsMissingInput) {
  Toy t;
  EXPECT_THROW(finetune_field(t.field, {}, t.region, nullptr, t.prior, small_config()), MissingInput);
}

TEST(Finetune, ZeroIterationsLeavesFieldUnchanged) {
  Toy t;
  FinetuneConfig cfg = small_config();
  cfg.iterations = 0;
  const auto v = t.views();
  const RadianceField out = finetune_field(t.field, v, t.region, nullptr, t.prior, cfg);
  EXPECT_TRUE(std::equal(out.params().begin(), out.params().end(), t.field.params().begin()));
}

TEST(Finetune, PixelLossDecreases) {
  Toy t;
  FinetuneConfig cfg = small_config();
  cfg.iterations = 60;
  cfg.log_every = 1;
  cfg.loss.lambda_in = 0.0;
  FinetuneLog log;
  const auto v = t.views();
  finetune_field(t.field, v, t.region, nullptr, t.prior, cfg, &log);
  ASSERT_EQ(log.terms.size(), 60u);
  double first = 0, last = 0;
  for (int i = 0; i < 10; ++i) first += log.terms[i].second.pix, last += log.terms[50 + i].second.pix;
  EXPECT_LT(last, 0.5 * first);
}

TEST(Finetune, EmptyPriorRemovesMassInVisibleCubes) {
  Toy t;
  FinetuneConfig cfg = small_config();
  cfg.iterations = 30;
  cfg.pixel_rays = 0;
  cfg.loss.lambda_geom = 1.0;
  cfg.loss.lambda_in = 0.0;
  const ConstantPredictor empty(-1.0f);
  const auto v = t.views();
  const RadianceField out = finetune_field(t.field, v, t.region, &empty, t.prior, cfg);
  auto ball = [&](std::uint32_t n) {
    const int G = t.field.resolution(), i = n % G, j = n / G % G, k = n / (G * G);
    return t.field.node_position(i, j, k).norm() <= 0.4;
  };
  EXPECT_LT(out.sigma_mass(ball), 0.8 * t.field.sigma_mass(ball));
}

TEST(Finetune, WorkerCountDoesNotChangeResult) {
  Toy t;
  FinetuneConfig cfg = small_config();
  cfg.loss.lambda_geom = 0.5;
  cfg.loss.lambda_in = 0.1;
  const ConstantPredictor empty(-1.0f);
  const auto v = t.views();
  cfg.workers = 1;
  const RadianceField a = finetune_field(t.field, v, t.region, &empty, t.prior, cfg);
  cfg.workers = 3;
  const RadianceField b = finetune_field(t.field, v, t.region, &empty, t.prior, cfg);
  EXPECT_TRUE(std::equal(a.params().begin(), a.params().end(), b.params().begin()));
}
