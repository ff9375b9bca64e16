#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "inpaint360/geometry.hpp"
#include "inpaint360/image.hpp"
#include "inpaint360/optimizer.hpp"
#include "inpaint360/random.hpp"

namespace inpaint360 {

struct Aabb {
  Vec3 min = Vec3::Constant(-1.0);
  Vec3 max = Vec3::Constant(1.0);

  Vec3 extent() const { return max - min; }
  bool contains(const Vec3& p) const {
    return (p.array() >= min.array()).all() && (p.array() <= max.array()).all();
  }
  // Slab test. Returns [t_near, t_far] with t_near >= 0, or nullopt on a miss
  // (including rays that only graze an edge: t_near == t_far).
  std::optional<std::pair<double, double>> intersect(const Ray& ray) const;
};

// Cached trilinear footprint of one query point.
struct Trilinear {
  std::uint32_t base = 0;  // node index of the (i0, j0, k0) corner
  double fx = 0, fy = 0, fz = 0;
};

struct FieldQuery {
  double s = 0;        // interpolated raw density parameter
  double sigma = 0;    // softplus(s)
  Vec3 c_raw = Vec3::Zero();
  Vec3 color = Vec3::Zero();  // sigmoid(c_raw)
  Trilinear lerp;
};

// Dense voxel radiance field: per grid node one unconstrained density
// parameter s (sigma = softplus(s) after interpolation) and three color
// parameters (color = sigmoid(.) after interpolation). Nodes sit at
// aabb.min + index * voxel_size, so the grid reproduces node values exactly.
class RadianceField {
 public:
  static constexpr int kChannels = 4;

  RadianceField() = default;
  RadianceField(int resolution, const Aabb& aabb, float init_density = -5.0f, float init_color = 0.0f);

  int resolution() const { return resolution_; }
  const Aabb& aabb() const { return aabb_; }
  Vec3 voxel_size() const { return aabb_.extent() / static_cast<double>(resolution_ - 1); }
  double voxel_diagonal() const { return voxel_size().norm(); }
  std::size_t node_count() const { return static_cast<std::size_t>(resolution_) * resolution_ * resolution_; }

  std::uint32_t node_index(int i, int j, int k) const {
    return static_cast<std::uint32_t>((static_cast<std::size_t>(k) * resolution_ + j) * resolution_ + i);
  }
  Vec3 node_position(int i, int j, int k) const;

  float& density_param(std::uint32_t node) { return params_[node * kChannels]; }
  float density_param(std::uint32_t node) const { return params_[node * kChannels]; }
  float& color_param(std::uint32_t node, int c) { return params_[node * kChannels + 1 + c]; }
  float color_param(std::uint32_t node, int c) const { return params_[node * kChannels + 1 + c]; }
  double node_sigma(std::uint32_t node) const;

  std::span<float> params() { return params_; }
  std::span<const float> params() const { return params_; }
  std::span<double> grads() { return grads_; }
  std::span<const double> grads() const { return grads_; }

  FieldQuery query(const Vec3& p) const;
  double sigma_at(const Vec3& p) const { return query(p).sigma; }

  // Chain rule from (d sigma, d color) at a query point into a gradient
  // buffer laid out like params().
  void scatter_grad(const FieldQuery& q, double d_sigma, const Vec3& d_color, std::span<double> buffer) const;

  // Sum of node sigmas (the field's "density mass"), optionally restricted
  // by a predicate on node indices.
  double sigma_mass(const std::function<bool(std::uint32_t)>& in_region = {}) const;

  // FNV-1a over the raw parameter bytes.
  std::uint64_t checksum() const;

 private:
  int resolution_ = 0;
  Aabb aabb_;
  std::vector<float> params_;
  std::vector<double> grads_;
};

struct Sample {
  double t = 0;        // ray depth
  double delta = 0;    // t_i - t_{i-1}, with t_0 the aabb entry depth
  FieldQuery q;
  double opacity = 0;        // 1 - exp(-sigma * delta)
  double transmittance = 1;  // prod_{j<i} (1 - opacity_j)
};

struct RaySampleBatch {
  Ray ray;
  double t_near = 0, t_far = 0;
  std::vector<Sample> samples;
  // Samples past this index were not composited (early ray termination).
  std::size_t active = 0;
};

struct RenderResult {
  Vec3 rgb = Vec3::Zero();
  double depth = 0;         // ray-parameter depth, sum_i w_i t_i
  double accumulation = 0;  // sum_i w_i
};

// Stratified depths: one sample per equal bin over [t_near, t_far], jittered
// uniformly within its bin when rng is given, else at the bin midpoint.
std::vector<double> stratified_depths(double t_near, double t_far, int count, Rng* rng);

// nullopt signals NoIntersection (the ray misses the aabb).
std::optional<RaySampleBatch> sample_ray(const RadianceField& field, const Ray& ray, int count, Rng* rng = nullptr);

// Front-to-back compositing over a sampled ray. Fills opacity and
// transmittance in the batch. Stops once transmittance drops below
// stop_transmittance (0 composites every sample).
RenderResult composite(RaySampleBatch& batch, double stop_transmittance = 0.0);

// Fused sample + composite that skips field queries after termination.
std::optional<RenderResult> render_ray(const RadianceField& field, const Ray& ray, int count, Rng* rng,
                                       double stop_transmittance, RaySampleBatch& batch);

// Accumulates dL/dparams given upstream gradients on the three heads.
void backward(const RadianceField& field, const RaySampleBatch& batch, const Vec3& d_rgb, double d_depth,
              double d_accum, std::span<double> buffer);
inline void backward(RadianceField& field, const RaySampleBatch& batch, const Vec3& d_rgb, double d_depth,
                     double d_accum) {
  backward(field, batch, d_rgb, d_depth, d_accum, field.grads());
}

// Adam step on the field's parameters; zeroes its gradient buffer.
void optimizer_step(RadianceField& field, OptimizerState& state);
OptimizerState make_field_optimizer(const RadianceField& field, double lr_density, double lr_color);

struct RenderOptions {
  int samples_per_ray = 192;
  double stop_transmittance = 1e-4;
  int workers = 1;
};

struct ViewRender {
  RgbImage rgb;
  DepthImage depth;  // ray-parameter depth sum_i w_i t_i; 0 where nothing accumulates
  Image<double> accumulation;
};

ViewRender render_view(const RadianceField& field, const Camera& cam, const RenderOptions& opts);

struct TrainConfig {
  int iterations = 3000;
  int batch_rays = 1024;
  int samples_per_ray = 192;
  double lr_density = 1.0;
  double lr_color = 0.05;
  double lr_final_fraction = 0.1;  // exponential decay to this fraction of the initial lr
  double stop_transmittance = 1e-4;
  std::uint64_t seed = 0;
  int workers = 1;
  int grad_shards = 1;  // fixed reduction partition; results do not depend on workers
  int log_every = 100;
};

struct TrainingView {
  const RgbImage* image = nullptr;
  const Mask* exclude = nullptr;  // pixels with value 1 are never sampled
  Camera camera;
};

struct TrainLog {
  std::vector<std::pair<int, double>> loss;  // (iteration, mean L1 over the batch)
};

// Minimises mean per-pixel L1 (summed over channels) over randomly sampled
// rays. Deterministic for a fixed seed and grad_shards.
RadianceField train_field(std::span<const TrainingView> views, const TrainConfig& cfg, RadianceField init,
                          TrainLog* log = nullptr);

// Versioned binary checkpoint: header + little-endian float32 arrays.
void save_field(const std::string& path, const RadianceField& field);
RadianceField load_field(const std::string& path);
std::vector<std::uint8_t> field_to_bytes(const RadianceField& field);
RadianceField field_from_bytes(std::span<const std::uint8_t> bytes);

inline double softplus(double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); }
inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace inpaint360
