#include "inpaint360/perceptual.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "inpaint360/errors.hpp"

namespace inpaint360 {

PatchSet partition_patches(const Mask& mask, int size, int stride) {
  if (stride <= 0) stride = size;
  if (size < 1 || size > mask.width() || size > mask.height())
    throw PatchTooLarge("patch size " + std::to_string(size) + " does not fit a " + std::to_string(mask.width()) +
                        "x" + std::to_string(mask.height()) + " image");
  PatchSet set;
  set.size = size;
  for (int y = 0; y + size <= mask.height(); y += stride)
    for (int x = 0; x + size <= mask.width(); x += stride) {
      bool touched = false;
      for (int v = y; v < y + size && !touched; ++v)
        for (int u = x; u < x + size; ++u)
          if (mask.at(u, v)) {
            touched = true;
            break;
          }
      (touched ? set.with_mask : set.without_mask).push_back({x, y});
    }
  return set;
}

double pixel_loss(const RgbImage& rendered, const RgbImage& target, const PatchSet& patches, RgbImage* grad) {
  if (!rendered.same_shape(target)) throw DimensionMismatch("pixel_loss: rendered and target differ in shape");
  if (grad) *grad = RgbImage(rendered.width(), rendered.height(), 3, 0.0f);
  if (patches.without_mask.empty()) return 0.0;
  const double norm = 1.0 / (static_cast<double>(patches.size) * patches.size * patches.without_mask.size());
  double loss = 0.0;
  for (const auto& a : patches.without_mask)
    for (int y = a.y; y < a.y + patches.size; ++y)
      for (int x = a.x; x < a.x + patches.size; ++x)
        for (int c = 0; c < 3; ++c) {
          const double r = static_cast<double>(rendered.at(x, y, c)) - target.at(x, y, c);
          loss += std::abs(r);
          if (grad) grad->at(x, y, c) += static_cast<float>(norm * ((r > 0) - (r < 0)));
        }
  return loss * norm;
}

namespace {

using Eigen::MatrixXd;

// 1D binomial blur then decimation by two, replicated borders.
MatrixXd reduce_1d(int n) {
  static constexpr double w[5] = {1 / 16.0, 4 / 16.0, 6 / 16.0, 4 / 16.0, 1 / 16.0};
  const int half = (n + 1) / 2;
  MatrixXd R = MatrixXd::Zero(half, n);
  for (int i = 0; i < half; ++i)
    for (int k = -2; k <= 2; ++k) R(i, std::clamp(2 * i + k, 0, n - 1)) += w[k + 2];
  return R;
}

MatrixXd reduce_2d(int n) {
  const MatrixXd r = reduce_1d(n);
  const int h = static_cast<int>(r.rows());
  MatrixXd R(h * h, n * n);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < h; ++x)
      for (int v = 0; v < n; ++v)
        for (int u = 0; u < n; ++u) R(y * h + x, v * n + u) = r(y, v) * r(x, u);
  return R;
}

using Kernel = std::array<std::array<double, 5>, 5>;

// First and second directional derivatives of a unit Gaussian at 0, 60 and
// 120 degrees; each has zero sum and unit L1 norm.
std::array<Kernel, 6> filter_bank() {
  std::array<Kernel, 6> bank{};
  for (int f = 0; f < 6; ++f) {
    const double theta = (f % 3) * M_PI / 3.0;
    const double c = std::cos(theta), s = std::sin(theta);
    Kernel& k = bank[f];
    double sum = 0.0;
    for (int dy = -2; dy <= 2; ++dy)
      for (int dx = -2; dx <= 2; ++dx) {
        const double g = std::exp(-(dx * dx + dy * dy) / 2.0);
        const double along = dx * c + dy * s;
        k[dy + 2][dx + 2] = f < 3 ? -along * g : (along * along - 1.0) * g;
        sum += k[dy + 2][dx + 2];
      }
    double l1 = 0.0;
    for (auto& row : k)
      for (double& v : row) {
        v -= sum / 25.0;
        l1 += std::abs(v);
      }
    for (auto& row : k)
      for (double& v : row) v /= l1;
  }
  return bank;
}

}  // namespace

PerceptualMetric::PerceptualMetric(int size, int levels, double eps) : size_(size), eps_(eps) {
  if (size < 1 || levels < 1 || !(eps > 0)) throw ConfigError("perceptual metric: size, levels and eps must be positive");
  const auto bank = filter_bank();
  MatrixXd to_level = MatrixXd::Identity(size * size, size * size);
  int n = size;
  for (int l = 0; l < levels; ++l) {
    if (l > 0) {
      to_level = reduce_2d(n) * to_level;
      n = (n + 1) / 2;
    }
    const int P = n * n;
    MatrixXd conv = MatrixXd::Zero(6 * P, P);
    for (int f = 0; f < 6; ++f)
      for (int y = 0; y < n; ++y)
        for (int x = 0; x < n; ++x)
          for (int dy = -2; dy <= 2; ++dy)
            for (int dx = -2; dx <= 2; ++dx)
              conv(f * P + y * n + x, std::clamp(y + dy, 0, n - 1) * n + std::clamp(x + dx, 0, n - 1)) +=
                  bank[f][dy + 2][dx + 2];
    Level level;
    level.pixels = P;
    level.op = conv * to_level;
    ops_.push_back(std::move(level));
  }
}

void PerceptualMetric::features(std::span<const double> patch, const Level& level, MatrixXd& raw) const {
  const int N = size_ * size_;
  Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor>> px(patch.data(), N, 3);
  raw.noalias() = level.op * px;
}

double PerceptualMetric::distance(std::span<const double> a, std::span<const double> b,
                                  std::span<double> grad_a) const {
  const std::size_t N = static_cast<std::size_t>(size_) * size_ * 3;
  if (a.size() != N || b.size() != N) throw DimensionMismatch("perceptual distance: patch size mismatch");
  const bool want_grad = !grad_a.empty();
  if (want_grad && grad_a.size() != N) throw DimensionMismatch("perceptual distance: gradient size mismatch");
  Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor> g_px;
  if (want_grad) g_px = Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor>::Zero(size_ * size_, 3);
  const double L = static_cast<double>(ops_.size());
  double total = 0.0;
  MatrixXd fa, fb;
  for (const auto& level : ops_) {
    features(a, level, fa);
    features(b, level, fb);
    const int P = level.pixels;
    MatrixXd g_f = want_grad ? MatrixXd::Zero(6 * P, 3) : MatrixXd();
    double sum = 0.0;
    for (int p = 0; p < P; ++p) {
      double na2 = eps_ * eps_, nb2 = eps_ * eps_;
      for (int f = 0; f < 6; ++f)
        for (int c = 0; c < 3; ++c) {
          na2 += fa(f * P + p, c) * fa(f * P + p, c);
          nb2 += fb(f * P + p, c) * fb(f * P + p, c);
        }
      const double ra = std::sqrt(na2), rb = std::sqrt(nb2);
      double diff2 = 0.0, f_dot_g = 0.0;
      std::array<double, 18> gn{};
      for (int f = 0; f < 6; ++f)
        for (int c = 0; c < 3; ++c) {
          const double d = fa(f * P + p, c) / ra - fb(f * P + p, c) / rb;
          diff2 += d * d;
          gn[f * 3 + c] = 2.0 * d / (P * L);
          f_dot_g += fa(f * P + p, c) * gn[f * 3 + c];
        }
      sum += diff2;
      if (want_grad)
        for (int f = 0; f < 6; ++f)
          for (int c = 0; c < 3; ++c)
            g_f(f * P + p, c) = gn[f * 3 + c] / ra - fa(f * P + p, c) * f_dot_g / (ra * ra * ra);
    }
    total += sum / P;
    if (want_grad) g_px.noalias() += level.op.transpose() * g_f;
  }
  if (want_grad) std::copy(g_px.data(), g_px.data() + N, grad_a.begin());
  return total / L;
}

std::vector<double> extract_patch(const RgbImage& image, const PatchAnchor& anchor, int size) {
  if (anchor.x < 0 || anchor.y < 0 || anchor.x + size > image.width() || anchor.y + size > image.height())
    throw OutOfBounds("patch leaves the image");
  std::vector<double> out(static_cast<std::size_t>(size) * size * 3);
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x)
      for (int c = 0; c < 3; ++c) out[(static_cast<std::size_t>(y) * size + x) * 3 + c] = image.at(anchor.x + x, anchor.y + y, c);
  return out;
}

double inpaint_loss(const RgbImage& rendered, const RgbImage& target, const PatchSet& patches,
                    const PerceptualMetric& metric, RgbImage* grad) {
  if (!rendered.same_shape(target)) throw DimensionMismatch("inpaint_loss: rendered and target differ in shape");
  if (metric.size() != patches.size) throw DimensionMismatch("inpaint_loss: metric and patch sizes differ");
  if (grad) *grad = RgbImage(rendered.width(), rendered.height(), 3, 0.0f);
  if (patches.with_mask.empty()) return 0.0;
  const int s = patches.size;
  const double norm = 1.0 / static_cast<double>(patches.with_mask.size());
  std::vector<double> g(static_cast<std::size_t>(s) * s * 3);
  double loss = 0.0;
  for (const auto& a : patches.with_mask) {
    const auto pr = extract_patch(rendered, a, s), pt = extract_patch(target, a, s);
    loss += metric.distance(pr, pt, grad ? std::span<double>(g) : std::span<double>());
    if (grad)
      for (int y = 0; y < s; ++y)
        for (int x = 0; x < s; ++x)
          for (int c = 0; c < 3; ++c)
            grad->at(a.x + x, a.y + y, c) += static_cast<float>(norm * g[(static_cast<std::size_t>(y) * s + x) * 3 + c]);
  }
  return loss * norm;
}

double total_loss(const LossTerms& terms, const LossConfig& cfg) {
  if (cfg.lambda_geom < 0 || cfg.lambda_in < 0) throw ConfigError("loss weights must be non-negative");
  return cfg.lambda_geom * terms.geom + cfg.lambda_in * terms.in + terms.pix;
}

}  // namespace inpaint360
