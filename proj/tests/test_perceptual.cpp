#include <cmath>
#include <limits>
#include <random>

#include <gtest/gtest.h>

#include "inpaint360/errors.hpp"
#include "inpaint360/perceptual.hpp"

using namespace inpaint360;

namespace {

std::vector<double> random_patch(int size, std::mt19937_64& rng, double lo = 0.2, double hi = 0.8) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> p(static_cast<std::size_t>(size) * size * 3);
  for (auto& v : p) v = u(rng);
  return p;
}

// Smooth patch: a color ramp with a soft edge.
std::vector<double> smooth_patch(int size, double phase) {
  std::vector<double> p(static_cast<std::size_t>(size) * size * 3);
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x)
      for (int c = 0; c < 3; ++c)
        p[(y * size + x) * 3 + c] = 0.5 + 0.3 * std::tanh((x - size / 2.0 + phase) / 2.0) * (c + 1) / 3.0 + 0.01 * y;
  return p;
}

RgbImage random_image(int w, int h, std::mt19937_64& rng) {
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  RgbImage im(w, h, 3);
  for (auto& v : im.storage()) v = u(rng);
  return im;
}

}  // namespace

TEST(Patches, PartitionCases) {
  Mask zero(32, 32, 1, 0), one(32, 32, 1, 1);
  const auto a = partition_patches(zero, 16);
  EXPECT_TRUE(a.with_mask.empty());
  EXPECT_EQ(a.without_mask.size(), 4u);
  const auto b = partition_patches(one, 16);
  EXPECT_TRUE(b.without_mask.empty());
  EXPECT_EQ(b.with_mask.size(), 4u);

  Mask tiny(4, 4, 1, 0);
  tiny.at(0, 0) = 1;
  const auto c = partition_patches(tiny, 2);
  ASSERT_EQ(c.with_mask.size(), 1u);
  EXPECT_EQ(c.with_mask[0], (PatchAnchor{0, 0}));
  EXPECT_EQ(c.without_mask.size(), 3u);

  // 20x20 with 16-pixel tiles: only one tile fits.
  EXPECT_EQ(partition_patches(Mask(20, 20, 1, 0), 16).without_mask.size(), 1u);
  EXPECT_THROW(partition_patches(Mask(8, 20, 1, 0), 16), PatchTooLarge);
  EXPECT_THROW(partition_patches(tiny, 0), PatchTooLarge);
}

TEST(PixelLoss, ArithmeticAndNormalization) {
  RgbImage r(2, 2, 3, 0.75f), t(2, 2, 3, 0.25f);
  const auto one = partition_patches(Mask(2, 2, 1, 0), 2);
  EXPECT_DOUBLE_EQ(pixel_loss(r, t, one), 1.5);
  EXPECT_EQ(pixel_loss(t, t, one), 0.0);
  PatchSet twice = one;
  twice.without_mask.push_back(twice.without_mask[0]);
  EXPECT_DOUBLE_EQ(pixel_loss(r, t, twice), 1.5);
  PatchSet none = one;
  none.without_mask.clear();
  EXPECT_EQ(pixel_loss(r, t, none), 0.0);
}

TEST(PixelLoss, NeverReadsMaskedPixels) {
  std::mt19937_64 rng(3);
  RgbImage r = random_image(32, 32, rng), t = random_image(32, 32, rng);
  Mask mask(32, 32, 1, 0);
  for (int y = 18; y < 24; ++y)
    for (int x = 3; x < 9; ++x) mask.at(x, y) = 1;
  const auto set = partition_patches(mask, 8);
  const double clean = pixel_loss(r, t, set);
  // Poison every pixel of every masked patch.
  for (const auto& a : set.with_mask)
    for (int y = a.y; y < a.y + 8; ++y)
      for (int x = a.x; x < a.x + 8; ++x)
        for (int c = 0; c < 3; ++c) r.at(x, y, c) = t.at(x, y, c) = std::numeric_limits<float>::quiet_NaN();
  RgbImage g;
  const double poisoned = pixel_loss(r, t, set, &g);
  EXPECT_TRUE(std::isfinite(poisoned));
  EXPECT_EQ(poisoned, clean);
  for (float v : g.storage()) EXPECT_TRUE(std::isfinite(v));
}

TEST(PixelLoss, GradientIsNormalizedSign) {
  RgbImage r(4, 4, 3, 0.5f), t(4, 4, 3, 0.5f);
  r.at(1, 1, 0) = 0.9f;
  r.at(2, 3, 2) = 0.1f;
  const auto set = partition_patches(Mask(4, 4, 1, 0), 2);
  RgbImage g;
  pixel_loss(r, t, set, &g);
  EXPECT_FLOAT_EQ(g.at(1, 1, 0), 1.0f / 16);
  EXPECT_FLOAT_EQ(g.at(2, 3, 2), -1.0f / 16);
  EXPECT_EQ(g.at(0, 0, 0), 0.0f);  // exact tie
}

TEST(Perceptual, IdentitySymmetryAndOffset) {
  const PerceptualMetric metric(16);
  EXPECT_EQ(metric.levels(), 3);
  std::mt19937_64 rng(5);
  for (int n = 0; n < 20; ++n) {
    const auto a = random_patch(16, rng), b = random_patch(16, rng);
    EXPECT_EQ(metric.distance(a, a), 0.0);
    EXPECT_NEAR(metric.distance(a, b), metric.distance(b, a), 1e-12);
    EXPECT_GT(metric.distance(a, b), 0.0);
    auto a2 = a, b2 = b;
    for (auto& v : a2) v += 0.13;
    for (auto& v : b2) v += 0.13;
    EXPECT_NEAR(metric.distance(a2, b2), metric.distance(a, b), 1e-6);
  }
}

TEST(Perceptual, ConstantShiftCheaperThanNoiseOfEqualEnergy) {
  const PerceptualMetric metric(16);
  std::mt19937_64 rng(7);
  std::normal_distribution<double> nd(0.0, 1.0);
  for (int n = 0; n < 10; ++n) {
    const auto a = smooth_patch(16, n * 0.7);
    auto shifted = a, noisy = a;
    for (auto& v : shifted) v += 0.1;
    std::vector<double> noise(a.size());
    double e = 0.0;
    for (auto& v : noise) {
      v = nd(rng);
      e += v * v;
    }
    const double scale = 0.1 * std::sqrt(a.size() / e);
    for (std::size_t i = 0; i < a.size(); ++i) noisy[i] += scale * noise[i];
    EXPECT_LT(metric.distance(a, shifted), metric.distance(a, noisy));
  }
}

TEST(Perceptual, GradientMatchesFiniteDifferences) {
  const PerceptualMetric metric(8);
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<std::size_t> pick(0, 8 * 8 * 3 - 1);
  int probes = 0;
  for (int trial = 0; trial < 5; ++trial) {
    const auto a = random_patch(8, rng), b = random_patch(8, rng);
    std::vector<double> g(a.size());
    metric.distance(a, b, g);
    for (int k = 0; k < 30; ++k) {
      const std::size_t i = pick(rng);
      auto ap = a, am = a;
      const double h = 1e-6;
      ap[i] += h;
      am[i] -= h;
      const double fd = (metric.distance(ap, b) - metric.distance(am, b)) / (2 * h);
      const double scale = std::max({std::abs(fd), std::abs(g[i]), 1e-8});
      EXPECT_LT(std::abs(fd - g[i]) / scale, 1e-3) << "trial " << trial << " index " << i;
      ++probes;
    }
  }
  EXPECT_GE(probes, 100);
}

TEST(InpaintLoss, ZeroAtTargetAndMonotoneLineScan) {
  std::mt19937_64 rng(13);
  const RgbImage target = random_image(32, 32, rng), start = random_image(32, 32, rng);
  Mask mask(32, 32, 1, 0);
  mask.at(20, 5) = 1;
  mask.at(3, 30) = 1;
  const auto set = partition_patches(mask, 16);
  ASSERT_EQ(set.with_mask.size(), 2u);
  const PerceptualMetric metric(16);
  EXPECT_EQ(inpaint_loss(target, target, set, metric), 0.0);
  double prev = std::numeric_limits<double>::infinity();
  for (int k = 0; k <= 10; ++k) {
    const double s = k / 10.0;
    RgbImage mix(32, 32, 3);
    for (std::size_t i = 0; i < mix.storage().size(); ++i)
      mix.storage()[i] = static_cast<float>((1 - s) * start.storage()[i] + s * target.storage()[i]);
    const double l = inpaint_loss(mix, target, set, metric);
    EXPECT_LT(l, prev + 1e-12);
    prev = l;
  }
  EXPECT_EQ(prev, 0.0);
}

TEST(InpaintLoss, ImageGradientMatchesPatchGradient) {
  std::mt19937_64 rng(17);
  const RgbImage r = random_image(32, 16, rng), t = random_image(32, 16, rng);
  Mask mask(32, 16, 1, 0);
  mask.at(20, 5) = 1;
  const auto set = partition_patches(mask, 16);
  const PerceptualMetric metric(16);
  RgbImage g;
  const double l = inpaint_loss(r, t, set, metric, &g);
  const auto pr = extract_patch(r, {16, 0}, 16), pt = extract_patch(t, {16, 0}, 16);
  std::vector<double> gp(pr.size());
  EXPECT_DOUBLE_EQ(l, metric.distance(pr, pt, gp));
  EXPECT_FLOAT_EQ(g.at(21, 7, 1), static_cast<float>(gp[(7 * 16 + 5) * 3 + 1]));
  EXPECT_EQ(g.at(3, 3, 0), 0.0f);  // unmasked patch
}

TEST(TotalLoss, Weights) {
  LossConfig cfg;
  EXPECT_NEAR(total_loss({2, 3, 1}, cfg), 1.32, 1e-15);
  EXPECT_EQ(total_loss({0, 0, 0}, cfg), 0.0);
  cfg.lambda_geom = cfg.lambda_in = 0;
  EXPECT_EQ(total_loss({7, 9, 0.25}, cfg), 0.25);
  cfg.lambda_in = -1;
  EXPECT_THROW(total_loss({}, cfg), ConfigError);
}
