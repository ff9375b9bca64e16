#pragma once

#include <span>
#include <vector>

#include <Eigen/Core>

#include "inpaint360/image.hpp"

namespace inpaint360 {

struct PatchAnchor {
  int x = 0, y = 0;  // top-left pixel
  bool operator==(const PatchAnchor&) const = default;
};

// Square patches on a stride grid, split by whether they touch the mask.
struct PatchSet {
  int size = 16;
  std::vector<PatchAnchor> with_mask;     // at least one masked pixel
  std::vector<PatchAnchor> without_mask;  // no masked pixel
};

// Anchors at multiples of `stride` (default: size, a non-overlapping tiling)
// whose patch lies fully inside the image. Throws PatchTooLarge when the
// patch does not fit or size < 1.
PatchSet partition_patches(const Mask& mask, int size, int stride = 0);

// Mean L1 (summed over channels) over every pixel of the unmasked patches.
// With grad, writes dL/d(rendered) into it (same shape; zero elsewhere).
double pixel_loss(const RgbImage& rendered, const RgbImage& target, const PatchSet& patches, RgbImage* grad = nullptr);

// Fixed multi-scale oriented-filter distance between two RGB patches:
// binomial pyramid, six zero-DC derivative-of-Gaussian filters per channel,
// per-pixel normalization f / sqrt(|f|^2 + eps^2), mean squared difference
// averaged over levels. Patches are size*size*3 values, channel fastest.
class PerceptualMetric {
 public:
  explicit PerceptualMetric(int size = 16, int levels = 3, double eps = 1e-2);

  int size() const { return size_; }
  int levels() const { return static_cast<int>(ops_.size()); }

  // With a non-empty grad_a (size*size*3), writes d(distance)/d(a) into it.
  double distance(std::span<const double> a, std::span<const double> b, std::span<double> grad_a = {}) const;

 private:
  struct Level {
    int pixels = 0;
    Eigen::MatrixXd op;  // (6 * pixels) x (size * size): filter bank after pyramid reduction
  };
  void features(std::span<const double> patch, const Level& level, Eigen::MatrixXd& raw) const;

  int size_;
  double eps_;
  std::vector<Level> ops_;
};

std::vector<double> extract_patch(const RgbImage& image, const PatchAnchor& anchor, int size);

// Mean perceptual distance over the masked patches. With grad, writes
// dL/d(rendered) into it.
double inpaint_loss(const RgbImage& rendered, const RgbImage& target, const PatchSet& patches,
                    const PerceptualMetric& metric, RgbImage* grad = nullptr);

struct LossConfig {
  double lambda_geom = 0.01;
  double lambda_in = 0.1;
  int patch = 16;
  int levels = 3;
};

struct LossTerms {
  double geom = 0.0;
  double in = 0.0;
  double pix = 0.0;
};

// lambda_geom * geom + lambda_in * in + pix. Throws ConfigError on a
// negative weight.
double total_loss(const LossTerms& terms, const LossConfig& cfg);

}  // namespace inpaint360
