#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "inpaint360/field.hpp"
#include "inpaint360/geometry.hpp"
#include "inpaint360/image.hpp"
#include "inpaint360/random.hpp"

namespace inpaint360 {

// m^3 occupancy block, x-fastest layout: index = (k * m + j) * m + i.
// Values are exactly -1 (empty) or +1 (occupied) before noising.
struct OccupancyCube {
  int m = 16;
  Vec3 center = Vec3::Zero();
  double edge = 1.0;
  std::vector<float> x;

  std::size_t size() const { return x.size(); }
  Vec3 cell_center(int i, int j, int k) const {
    const double h = edge / m;
    return center + Vec3((i + 0.5) * h, (j + 0.5) * h, (k + 0.5) * h) - Vec3::Constant(0.5 * edge);
  }
};

struct NoiseSchedule {
  int T = 1000;
  double beta_start = 1e-4;
  double beta_end = 2e-2;
  // Index 0 is the clean state (alpha_bar[0] = 1); steps are 1..T.
  std::vector<double> beta, alpha, alpha_bar;

  static NoiseSchedule linear(int T = 1000, double beta_start = 1e-4, double beta_end = 2e-2);
};

// sqrt(abar_t) x0 + sqrt(1 - abar_t) eps, elementwise.
std::vector<float> q_sample(std::span<const float> x0, int t, std::span<const float> eps, const NoiseSchedule& s);

struct PriorConfig {
  double rho = 1.0;   // occupancy threshold on sigma, half of w
  double w = 2.0;     // density target for predicted-occupied voxels
  double fraction_min = 0.03;
  double fraction_max = 0.08;
  int cubes_per_shape = 8;
  int m = 16;
  int t_star = 200;         // timestep of the one-shot x0 estimate
  double cube_edge = 0.48;  // world edge of cubes applied to the field
  double visibility_radius_edges = 2.0;
  int cubes_per_step = 0;   // visible cubes scored per finetune iteration, 0 for all
};

// Samples sigma at the m^3 cell centers: +1 where sigma > rho, else -1.
// Throws OutOfBounds when the cube leaves the field's aabb.
OccupancyCube voxelize(const RadianceField& field, const Vec3& center, double edge, double rho, int m = 16);

enum class ShapeFamily { kSphere, kBox, kCylinder, kLBracket, kSlab };
const char* to_string(ShapeFamily f);

// Procedural training shape: a solid given by an inside test in its local
// frame, placed by a rotation about the origin.
struct ProceduralShape {
  ShapeFamily family = ShapeFamily::kSphere;
  Vec3 size = Vec3::Ones();  // half extents (sphere: x = radius; cylinder: x = radius, z = half height)
  Mat3 rotation = Mat3::Identity();

  bool inside(const Vec3& p) const;
  Aabb bounds() const;
};

// `count` shapes cycling through the five families with random proportions
// and orientations.
std::vector<ProceduralShape> procedural_corpus(int count, std::uint64_t seed);
std::string corpus_manifest_json(const std::vector<ProceduralShape>& corpus, std::uint64_t seed);

OccupancyCube voxelize_shape(const ProceduralShape& shape, const Vec3& center, double edge, int m);

// cubes_per_shape cubes with edge^3 / bbox volume uniform in
// [fraction_min, fraction_max] and centers uniform in the bounding box.
std::vector<OccupancyCube> sample_training_cubes(const ProceduralShape& shape, const PriorConfig& cfg,
                                                 std::uint64_t seed);

// Small 3D U-Net predicting the noise of an m^3 single-channel cube:
//   m^3:   1 -> c0          (enc0)
//   m/2^3: c0 -> c1         (enc1, after 2x average pooling)
//   m/4^3: c1 -> c1         (bottleneck)
//   m/2^3: c1 -> c0         (dec1, input = upsampled bottleneck + enc1)
//   m^3:   c0 -> c0         (dec0, input = upsampled dec1 + enc0)
//   m^3:   c0 -> 1          (head)
// 3x3x3 zero-padded convolutions, SiLU, and a per-stage channel bias from a
// linear map of a sinusoidal timestep embedding.
struct DenoiserShape {
  int m = 16;
  int c0 = 16;
  int c1 = 32;
  int embed_dim = 32;
  bool operator==(const DenoiserShape&) const = default;
};

// Eigen's vectorized products round differently depending on pointer
// alignment, so every buffer the net multiplies lives at a fixed alignment.
template <typename T>
using AlignedVector = std::vector<T, Eigen::aligned_allocator<T>>;

template <typename T>
class DenoiserNet {
 public:
  struct Cache;

  DenoiserNet() = default;
  DenoiserNet(const DenoiserShape& shape, std::uint64_t seed);

  const DenoiserShape& shape() const { return shape_; }
  std::size_t parameter_count() const { return params_.size(); }
  std::span<T> params() { return params_; }
  std::span<const T> params() const { return params_; }

  // eps_out has m^3 entries. With a cache, keeps what backward needs.
  void forward(std::span<const T> x, int t, std::span<T> eps_out, Cache* cache = nullptr) const;
  // Accumulates dL/dparams into grad (parameter_count entries).
  void backward(const Cache& cache, std::span<const T> d_eps, std::span<T> grad) const;

  template <typename U>
  DenoiserNet<U> cast() const;

 private:
  template <typename>
  friend class DenoiserNet;
  struct Layer {
    std::size_t w = 0, b = 0, emb = 0;  // offsets; emb == npos for the head
    int cin = 0, cout = 0;
  };
  void layout();

  DenoiserShape shape_;
  AlignedVector<T> params_;
  std::vector<Layer> layers_;  // enc0, enc1, mid, dec1, dec0, head
};

template <typename T>
struct DenoiserNet<T>::Cache {
  int t = 0;
  AlignedVector<T> embed;
  // Per layer, on zero-bordered grids: convolution input and pre-activation.
  std::vector<AlignedVector<T>> inputs, pre;
};

std::vector<double> timestep_embedding(int t, int dim);

struct DdpmTrainConfig {
  int steps = 3000;
  int batch = 16;
  double lr = 2e-3;
  double lr_final_fraction = 0.1;
  std::uint64_t seed = 0;
  int workers = 1;
  bool augment = true;  // random axis flips and permutations
  int log_every = 100;
};

struct DdpmLog {
  std::vector<std::pair<int, double>> loss;  // (step, batch-mean MSE)
};

// Minimises E||eps - eps_theta(x_t, t)||^2 with t uniform in [1, T].
// Deterministic under the seed for any worker count.
void train_ddpm(const std::vector<OccupancyCube>& cubes, DenoiserNet<float>& net, const NoiseSchedule& schedule,
                const DdpmTrainConfig& cfg, DdpmLog* log = nullptr);

// Mean squared noise-prediction error over `samples` random (cube, t, eps).
double ddpm_eval_loss(const std::vector<OccupancyCube>& cubes, const DenoiserNet<float>& net,
                      const NoiseSchedule& schedule, int samples, std::uint64_t seed);

// Noises x0 to t and returns (x_t - sqrt(1 - abar) eps_hat) / sqrt(abar).
std::vector<float> one_shot_x0(const DenoiserNet<float>& net, const NoiseSchedule& s, std::span<const float> x0,
                               int t, Rng& rng);
// Noises x0 to t_start, then runs `steps` strided deterministic reverse
// steps to t = 0 and returns the final clean estimate.
std::vector<float> posterior_denoise(const DenoiserNet<float>& net, const NoiseSchedule& s, std::span<const float> x0,
                                     int t_start, int steps, Rng& rng);

double occupancy_iou(std::span<const float> a, std::span<const float> b);

void save_denoiser(const std::string& path, const DenoiserNet<float>& net, const NoiseSchedule& schedule);
DenoiserNet<float> load_denoiser(const std::string& path, NoiseSchedule* schedule = nullptr);
std::vector<std::uint8_t> denoiser_to_bytes(const DenoiserNet<float>& net, const NoiseSchedule& schedule);
DenoiserNet<float> denoiser_from_bytes(std::span<const std::uint8_t> bytes, NoiseSchedule* schedule = nullptr);

struct DsdsResult {
  double loss = 0.0;
  std::vector<double> d_sigma;
};

// sum_i u_i sigma_i + (1 - u_i) max(w - sigma_i, 0), u = 1{x0 < 0}.
DsdsResult dsds_loss(std::span<const double> sigma, std::span<const float> x0_pred, double w);

// Supplies the clean-occupancy estimate used to decide u.
class OccupancyPredictor {
 public:
  virtual ~OccupancyPredictor() = default;
  virtual std::vector<float> predict_x0(const OccupancyCube& cube, Rng& rng) const = 0;
};

class DiffusionPredictor : public OccupancyPredictor {
 public:
  DiffusionPredictor(const DenoiserNet<float>& net, NoiseSchedule schedule, int t_star)
      : net_(net), schedule_(std::move(schedule)), t_star_(t_star) {}
  std::vector<float> predict_x0(const OccupancyCube& cube, Rng& rng) const override;

 private:
  const DenoiserNet<float>& net_;
  NoiseSchedule schedule_;
  int t_star_;
};

// Cube centers whose visibility indicator is 1.
struct VisibleRegion {
  double edge = 0.0;
  std::vector<Vec3> points;        // backprojected in-mask surface points
  std::vector<Vec3> cube_centers;  // coarse-grid centers within reach of the points
};

// Backprojects in-mask pixels with their rendered ray depth and keeps the
// coarse-grid cube centers (spacing edge / 2, cubes inside the aabb) within
// visibility_radius_edges * edge of any point. A center that some view sees
// outside its mask, farther than the rendered depth there, lies behind kept
// geometry and is dropped.
VisibleRegion build_visible_region(const Aabb& aabb, const std::vector<Mask>& masks,
                                   const std::vector<DepthImage>& ray_depths, const std::vector<Camera>& cameras,
                                   const PriorConfig& cfg);

struct GeomLossResult {
  double loss = 0.0;
  int cubes = 0;
};

// Scores cfg.cubes_per_step visible cubes drawn with rng (all of them when
// cubes_per_step <= 0), adds weight * d(L_geom)/d(params) into `grads`.
// Cubes are scored in parallel and accumulated in draw order.
GeomLossResult geom_loss(const RadianceField& field, const VisibleRegion& region, const OccupancyPredictor& predictor,
                         const PriorConfig& cfg, double weight, Rng& rng, std::span<double> grads, int workers = 1);

}  // namespace inpaint360
