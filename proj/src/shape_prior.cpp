#include "inpaint360/shape_prior.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>

#include <json.hpp>

#include "inpaint360/blob.hpp"
#include "inpaint360/errors.hpp"
#include "inpaint360/optimizer.hpp"
#include "inpaint360/parallel.hpp"

namespace inpaint360 {

NoiseSchedule NoiseSchedule::linear(int T, double beta_start, double beta_end) {
  if (T < 2 || !(beta_start > 0) || !(beta_end < 1) || beta_end < beta_start) throw BadSpec("noise schedule");
  NoiseSchedule s;
  s.T = T;
  s.beta_start = beta_start;
  s.beta_end = beta_end;
  s.beta.assign(T + 1, 0.0);
  s.alpha.assign(T + 1, 1.0);
  s.alpha_bar.assign(T + 1, 1.0);
  for (int t = 1; t <= T; ++t) {
    s.beta[t] = beta_start + (beta_end - beta_start) * (t - 1) / (T - 1);
    s.alpha[t] = 1.0 - s.beta[t];
    s.alpha_bar[t] = s.alpha_bar[t - 1] * s.alpha[t];
  }
  return s;
}

std::vector<float> q_sample(std::span<const float> x0, int t, std::span<const float> eps, const NoiseSchedule& s) {
  if (t < 1 || t > s.T) throw OutOfBounds("q_sample: t outside [1, T]");
  if (x0.size() != eps.size()) throw DimensionMismatch("q_sample: x0 and eps sizes differ");
  const double a = std::sqrt(s.alpha_bar[t]), b = std::sqrt(1.0 - s.alpha_bar[t]);
  std::vector<float> out(x0.size());
  for (std::size_t i = 0; i < x0.size(); ++i) out[i] = static_cast<float>(a * x0[i] + b * eps[i]);
  return out;
}

OccupancyCube voxelize(const RadianceField& field, const Vec3& center, double edge, double rho, int m) {
  if (!(edge > 0) || m < 1) throw BadSpec("voxelize: edge and m must be positive");
  const Vec3 lo = center - Vec3::Constant(edge / 2), hi = center + Vec3::Constant(edge / 2);
  const double tol = 1e-9;
  if ((lo.array() < field.aabb().min.array() - tol).any() || (hi.array() > field.aabb().max.array() + tol).any())
    throw OutOfBounds("voxelize: cube leaves the field bounds");
  OccupancyCube cube;
  cube.m = m;
  cube.center = center;
  cube.edge = edge;
  cube.x.resize(static_cast<std::size_t>(m) * m * m);
  for (int k = 0; k < m; ++k)
    for (int j = 0; j < m; ++j)
      for (int i = 0; i < m; ++i)
        cube.x[(static_cast<std::size_t>(k) * m + j) * m + i] = field.sigma_at(cube.cell_center(i, j, k)) > rho ? 1.0f : -1.0f;
  return cube;
}

const char* to_string(ShapeFamily f) {
  switch (f) {
    case ShapeFamily::kSphere: return "sphere";
    case ShapeFamily::kBox: return "box";
    case ShapeFamily::kCylinder: return "cylinder";
    case ShapeFamily::kLBracket: return "l-bracket";
    case ShapeFamily::kSlab: return "slab";
  }
  return "?";
}

namespace {

bool in_box(const Vec3& p, const Vec3& lo, const Vec3& hi) {
  return (p.array() >= lo.array()).all() && (p.array() <= hi.array()).all();
}

Vec3 local_half_extents(const ProceduralShape& s) {
  switch (s.family) {
    case ShapeFamily::kSphere: return Vec3::Constant(s.size.x());
    case ShapeFamily::kCylinder: return Vec3(s.size.x(), s.size.x(), s.size.z());
    default: return s.size;
  }
}

constexpr double kBracketThickness = 0.35;  // arm thickness as a fraction of the full extent

}  // namespace

bool ProceduralShape::inside(const Vec3& p_world) const {
  const Vec3 p = rotation.transpose() * p_world;
  switch (family) {
    case ShapeFamily::kSphere: return p.norm() <= size.x();
    case ShapeFamily::kBox:
    case ShapeFamily::kSlab: return in_box(p, -size, size);
    case ShapeFamily::kCylinder: return std::hypot(p.x(), p.y()) <= size.x() && std::abs(p.z()) <= size.z();
    case ShapeFamily::kLBracket: {
      const Vec3 lo = -size;
      const Vec3 foot_hi(size.x(), size.y(), -size.z() + 2 * kBracketThickness * size.z());
      const Vec3 wall_hi(-size.x() + 2 * kBracketThickness * size.x(), size.y(), size.z());
      return in_box(p, lo, foot_hi) || in_box(p, lo, wall_hi);
    }
  }
  return false;
}

Aabb ProceduralShape::bounds() const {
  const Vec3 h = local_half_extents(*this);
  Vec3 half = Vec3::Zero();
  if (family == ShapeFamily::kSphere) {
    half = h;
  } else {
    for (int r = 0; r < 3; ++r) half[r] = rotation.row(r).cwiseAbs().dot(h);
  }
  return Aabb{-half, half};
}

std::vector<ProceduralShape> procedural_corpus(int count, std::uint64_t seed) {
  std::vector<ProceduralShape> out;
  for (int i = 0; i < count; ++i) {
    Rng rng = make_rng(seed, {0x5a9eULL, static_cast<std::uint64_t>(i)});
    ProceduralShape s;
    s.family = static_cast<ShapeFamily>(i % 5);
    const double scale = uniform(rng, 0.5, 1.0);
    Vec3 aspect(uniform(rng, 0.5, 1.5), uniform(rng, 0.5, 1.5), uniform(rng, 0.5, 1.5));
    switch (s.family) {
      case ShapeFamily::kSphere: s.size = Vec3::Constant(scale); break;
      case ShapeFamily::kSlab:
        s.size = scale * Vec3(aspect.x(), aspect.y(), uniform(rng, 0.06, 0.2) * std::max(aspect.x(), aspect.y()));
        break;
      default: s.size = scale * aspect; break;
    }
    const double yaw = uniform(rng, 0.0, 2.0 * M_PI);
    Mat3 R = Eigen::AngleAxisd(yaw, Vec3::UnitZ()).toRotationMatrix();
    if (uniform01(rng) < 0.5) {
      const Eigen::Quaterniond q(Eigen::Vector4d(normal01(rng), normal01(rng), normal01(rng), normal01(rng)).normalized());
      R = q.toRotationMatrix();
    }
    s.rotation = R;
    out.push_back(s);
  }
  return out;
}

std::string corpus_manifest_json(const std::vector<ProceduralShape>& corpus, std::uint64_t seed) {
  nlohmann::ordered_json doc;
  doc["format"] = "inpaint360-shape-corpus";
  doc["version"] = 1;
  doc["seed"] = seed;
  auto shapes = nlohmann::ordered_json::array();
  for (const auto& s : corpus) {
    std::vector<double> rot(s.rotation.data(), s.rotation.data() + 9);
    shapes.push_back({{"family", to_string(s.family)},
                      {"size", {s.size.x(), s.size.y(), s.size.z()}},
                      {"rotation_col_major", rot}});
  }
  doc["shapes"] = shapes;
  return doc.dump(2) + "\n";
}

OccupancyCube voxelize_shape(const ProceduralShape& shape, const Vec3& center, double edge, int m) {
  OccupancyCube cube;
  cube.m = m;
  cube.center = center;
  cube.edge = edge;
  cube.x.resize(static_cast<std::size_t>(m) * m * m);
  for (int k = 0; k < m; ++k)
    for (int j = 0; j < m; ++j)
      for (int i = 0; i < m; ++i)
        cube.x[(static_cast<std::size_t>(k) * m + j) * m + i] = shape.inside(cube.cell_center(i, j, k)) ? 1.0f : -1.0f;
  return cube;
}

std::vector<OccupancyCube> sample_training_cubes(const ProceduralShape& shape, const PriorConfig& cfg,
                                                 std::uint64_t seed) {
  if (!(cfg.fraction_min > 0) || !(cfg.fraction_max < 1) || cfg.fraction_max < cfg.fraction_min)
    throw ConfigError("cube volume fraction range must lie in (0, 1)");
  const Aabb box = shape.bounds();
  const Vec3 ext = box.extent();
  const double volume = ext.prod();
  if (!(volume > 0)) throw BadSpec("sample_training_cubes: shape has no volume");
  Rng rng = make_rng(seed, {0xc0beULL});
  std::vector<OccupancyCube> out;
  for (int n = 0; n < cfg.cubes_per_shape; ++n) {
    const double fraction = uniform(rng, cfg.fraction_min, cfg.fraction_max);
    const double edge = std::cbrt(fraction * volume);
    Vec3 c;
    for (int a = 0; a < 3; ++a) c[a] = uniform(rng, box.min[a], box.max[a]);
    out.push_back(voxelize_shape(shape, c, edge, cfg.m));
  }
  return out;
}

namespace {

// One of the 48 axis flips/permutations of a cube, chosen by `code`.
std::vector<float> augment_cube(const std::vector<float>& x, int m, int code) {
  static constexpr int perms[6][3] = {{0, 1, 2}, {0, 2, 1}, {1, 0, 2}, {1, 2, 0}, {2, 0, 1}, {2, 1, 0}};
  const int* p = perms[code % 6];
  const int flips = code / 6;
  std::vector<float> out(x.size());
  for (int k = 0; k < m; ++k)
    for (int j = 0; j < m; ++j)
      for (int i = 0; i < m; ++i) {
        int src[3] = {i, j, k};
        int dst[3];
        for (int a = 0; a < 3; ++a) {
          dst[a] = src[p[a]];
          if (flips >> a & 1) dst[a] = m - 1 - dst[a];
        }
        out[(static_cast<std::size_t>(dst[2]) * m + dst[1]) * m + dst[0]] = x[(static_cast<std::size_t>(k) * m + j) * m + i];
      }
  return out;
}

struct NoisedSample {
  std::vector<float> x_t, eps;
  int t = 1;
};

NoisedSample draw_sample(const std::vector<OccupancyCube>& cubes, const NoiseSchedule& s, bool augment, Rng& rng) {
  const OccupancyCube& cube = cubes[uniform_index(rng, cubes.size())];
  NoisedSample out;
  out.t = 1 + static_cast<int>(uniform_index(rng, s.T));
  const int code = augment ? static_cast<int>(uniform_index(rng, 48)) : 0;
  const std::vector<float> x0 = code ? augment_cube(cube.x, cube.m, code) : cube.x;
  out.eps.resize(x0.size());
  for (auto& e : out.eps) e = static_cast<float>(normal01(rng));
  out.x_t = q_sample(x0, out.t, out.eps, s);
  return out;
}

}  // namespace

void train_ddpm(const std::vector<OccupancyCube>& cubes, DenoiserNet<float>& net, const NoiseSchedule& schedule,
                const DdpmTrainConfig& cfg, DdpmLog* log) {
  if (cubes.empty()) throw BadSpec("train_ddpm: no training cubes");
  for (const auto& c : cubes)
    if (c.m != net.shape().m) throw DimensionMismatch("train_ddpm: cube size differs from the network");
  const std::size_t P = net.parameter_count();
  const std::size_t V = cubes[0].x.size();
  OptimizerState opt(P, {cfg.lr});
  std::vector<double> grads(P, 0.0);
  std::vector<std::vector<float>> sample_grads(cfg.batch, std::vector<float>(P));
  std::vector<double> sample_loss(cfg.batch);
  for (int step = 0; step < cfg.steps; ++step) {
    parallel_for(cfg.batch, cfg.workers, [&](std::size_t b) {
      thread_local DenoiserNet<float>::Cache cache;
      Rng rng = make_rng(cfg.seed, {0xd0d0ULL, static_cast<std::uint64_t>(step), b});
      const NoisedSample s = draw_sample(cubes, schedule, cfg.augment, rng);
      std::vector<float> pred(V), d(V);
      net.forward(s.x_t, s.t, pred, &cache);
      double loss = 0.0;
      const float scale = 2.0f / static_cast<float>(V * cfg.batch);
      for (std::size_t i = 0; i < V; ++i) {
        const float r = pred[i] - s.eps[i];
        loss += static_cast<double>(r) * r;
        d[i] = scale * r;
      }
      sample_loss[b] = loss / static_cast<double>(V);
      std::fill(sample_grads[b].begin(), sample_grads[b].end(), 0.0f);
      net.backward(cache, d, sample_grads[b]);
    });
    double loss = 0.0;
    for (int b = 0; b < cfg.batch; ++b) {
      loss += sample_loss[b];
      for (std::size_t i = 0; i < P; ++i) grads[i] += sample_grads[b][i];
    }
    loss /= cfg.batch;
    if (!std::isfinite(loss)) throw NumericalError("prior-train", step);
    opt.lr_scale = std::pow(cfg.lr_final_fraction, static_cast<double>(step) / std::max(1, cfg.steps));
    adam_step(net.params(), grads, opt);
    if (log && (step % std::max(1, cfg.log_every) == 0 || step + 1 == cfg.steps)) log->loss.emplace_back(step, loss);
  }
}

double ddpm_eval_loss(const std::vector<OccupancyCube>& cubes, const DenoiserNet<float>& net,
                      const NoiseSchedule& schedule, int samples, std::uint64_t seed) {
  double total = 0.0;
  for (int n = 0; n < samples; ++n) {
    Rng rng = make_rng(seed, {0xe7a1ULL, static_cast<std::uint64_t>(n)});
    const NoisedSample s = draw_sample(cubes, schedule, false, rng);
    std::vector<float> pred(s.eps.size());
    net.forward(s.x_t, s.t, pred);
    double l = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) l += static_cast<double>(pred[i] - s.eps[i]) * (pred[i] - s.eps[i]);
    total += l / static_cast<double>(pred.size());
  }
  return total / samples;
}

std::vector<float> one_shot_x0(const DenoiserNet<float>& net, const NoiseSchedule& s, std::span<const float> x0,
                               int t, Rng& rng) {
  std::vector<float> eps(x0.size());
  for (auto& e : eps) e = static_cast<float>(normal01(rng));
  const std::vector<float> xt = q_sample(x0, t, eps, s);
  std::vector<float> pred(x0.size());
  net.forward(xt, t, pred);
  const double a = std::sqrt(s.alpha_bar[t]), b = std::sqrt(1.0 - s.alpha_bar[t]);
  std::vector<float> out(x0.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<float>((xt[i] - b * pred[i]) / a);
  return out;
}

std::vector<float> posterior_denoise(const DenoiserNet<float>& net, const NoiseSchedule& s, std::span<const float> x0,
                                     int t_start, int steps, Rng& rng) {
  if (t_start < 1 || t_start > s.T || steps < 1) throw OutOfBounds("posterior_denoise: bad schedule range");
  std::vector<float> eps(x0.size());
  for (auto& e : eps) e = static_cast<float>(normal01(rng));
  std::vector<float> x = q_sample(x0, t_start, eps, s);
  std::vector<float> pred(x.size()), x0_hat(x.size());
  for (int k = 0; k < steps; ++k) {
    const int t = t_start - static_cast<int>(std::llround(static_cast<double>(k) * t_start / steps));
    const int t_next = t_start - static_cast<int>(std::llround(static_cast<double>(k + 1) * t_start / steps));
    if (t < 1) break;
    net.forward(x, t, pred);
    const double a = std::sqrt(s.alpha_bar[t]), b = std::sqrt(1.0 - s.alpha_bar[t]);
    const double an = std::sqrt(s.alpha_bar[std::max(t_next, 0)]), bn = std::sqrt(1.0 - s.alpha_bar[std::max(t_next, 0)]);
    for (std::size_t i = 0; i < x.size(); ++i) {
      x0_hat[i] = std::clamp(static_cast<float>((x[i] - b * pred[i]) / a), -1.0f, 1.0f);
      x[i] = static_cast<float>(an * x0_hat[i] + bn * pred[i]);
    }
  }
  return x0_hat;
}

double occupancy_iou(std::span<const float> a, std::span<const float> b) {
  if (a.size() != b.size()) throw DimensionMismatch("occupancy_iou: sizes differ");
  std::size_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const bool x = a[i] > 0, y = b[i] > 0;
    inter += x && y;
    uni += x || y;
  }
  return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

std::vector<std::uint8_t> denoiser_to_bytes(const DenoiserNet<float>& net, const NoiseSchedule& schedule) {
  BlobWriter w(BlobKind::kDenoiser);
  const auto& s = net.shape();
  w.u32(static_cast<std::uint32_t>(s.m));
  w.u32(static_cast<std::uint32_t>(s.c0));
  w.u32(static_cast<std::uint32_t>(s.c1));
  w.u32(static_cast<std::uint32_t>(s.embed_dim));
  w.u32(static_cast<std::uint32_t>(schedule.T));
  w.f64(schedule.beta_start);
  w.f64(schedule.beta_end);
  w.u64(net.parameter_count());
  w.f32_array(net.params());
  return w.take();
}

DenoiserNet<float> denoiser_from_bytes(std::span<const std::uint8_t> bytes, NoiseSchedule* schedule) {
  BlobReader r(bytes, BlobKind::kDenoiser);
  DenoiserShape s;
  s.m = static_cast<int>(r.u32());
  s.c0 = static_cast<int>(r.u32());
  s.c1 = static_cast<int>(r.u32());
  s.embed_dim = static_cast<int>(r.u32());
  const int T = static_cast<int>(r.u32());
  const double b0 = r.f64(), b1 = r.f64();
  DenoiserNet<float> net(s, 0);
  if (r.u64() != net.parameter_count()) throw IoError("denoiser checkpoint: parameter count mismatch");
  r.f32_array(net.params());
  if (!r.done()) throw IoError("denoiser checkpoint: trailing bytes");
  if (schedule) *schedule = NoiseSchedule::linear(T, b0, b1);
  return net;
}

void save_denoiser(const std::string& path, const DenoiserNet<float>& net, const NoiseSchedule& schedule) {
  write_file_bytes(path, denoiser_to_bytes(net, schedule));
}

DenoiserNet<float> load_denoiser(const std::string& path, NoiseSchedule* schedule) {
  return denoiser_from_bytes(read_file_bytes(path), schedule);
}

DsdsResult dsds_loss(std::span<const double> sigma, std::span<const float> x0_pred, double w) {
  if (sigma.size() != x0_pred.size()) throw DimensionMismatch("dsds_loss: sigma and x0 sizes differ");
  DsdsResult r;
  r.d_sigma.assign(sigma.size(), 0.0);
  for (std::size_t i = 0; i < sigma.size(); ++i) {
    if (x0_pred[i] < 0) {
      r.loss += sigma[i];
      r.d_sigma[i] = 1.0;
    } else if (sigma[i] < w) {
      r.loss += w - sigma[i];
      r.d_sigma[i] = -1.0;
    }
  }
  return r;
}

std::vector<float> DiffusionPredictor::predict_x0(const OccupancyCube& cube, Rng& rng) const {
  return one_shot_x0(net_, schedule_, cube.x, t_star_, rng);
}

VisibleRegion build_visible_region(const Aabb& aabb, const std::vector<Mask>& masks,
                                   const std::vector<DepthImage>& ray_depths, const std::vector<Camera>& cameras,
                                   const PriorConfig& cfg) {
  if (masks.size() != cameras.size() || ray_depths.size() != cameras.size())
    throw DimensionMismatch("visible region: masks, depths and cameras must align");
  VisibleRegion region;
  region.edge = cfg.cube_edge;
  const double radius = cfg.visibility_radius_edges * cfg.cube_edge;
  // Points are deduplicated on a fine lattice to bound the search cost.
  const double cell = cfg.cube_edge / 16.0;
  std::vector<std::array<long, 3>> keys;
  for (std::size_t n = 0; n < masks.size(); ++n) {
    require_same_size(masks[n], ray_depths[n], "visible region");
    for (int y = 0; y < masks[n].height(); ++y)
      for (int x = 0; x < masks[n].width(); ++x) {
        if (!masks[n].at(x, y)) continue;
        const double t = ray_depths[n].at(x, y);
        if (!(t > 0)) continue;
        const Vec3 X = point_from_depth(pixel_center_ray(cameras[n], x, y), t);
        const std::array<long, 3> key = {std::lround(X.x() / cell), std::lround(X.y() / cell), std::lround(X.z() / cell)};
        keys.push_back(key);
        region.points.push_back(X);
      }
  }
  std::vector<std::size_t> order(keys.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return keys[a] < keys[b] || (keys[a] == keys[b] && a < b); });
  std::vector<Vec3> unique;
  for (std::size_t i = 0; i < order.size(); ++i)
    if (i == 0 || keys[order[i]] != keys[order[i - 1]]) unique.push_back(region.points[order[i]]);
  region.points = std::move(unique);
  if (region.points.empty()) return region;

  // Space behind a surface that some view sees outside its mask belongs to
  // kept geometry; only the rest can be removal space.
  auto hidden = [&](const Vec3& c) {
    for (std::size_t n = 0; n < masks.size(); ++n) {
      const auto proj = project(cameras[n], c);
      if (!proj) continue;
      const int x = static_cast<int>(std::floor(proj->pixel.u)), y = static_cast<int>(std::floor(proj->pixel.v));
      if (!masks[n].contains(x, y) || masks[n].at(x, y)) continue;
      const double t = ray_depths[n].at(x, y);
      if (t > 0 && (c - cameras[n].center()).norm() > t) return true;
    }
    return false;
  };
  const double step = cfg.cube_edge / 2.0;
  std::array<int, 3> count;
  for (int a = 0; a < 3; ++a) count[a] = static_cast<int>(std::floor((aabb.extent()[a] - cfg.cube_edge) / step + 1e-9)) + 1;
  for (int k = 0; k < count[2]; ++k)
    for (int j = 0; j < count[1]; ++j)
      for (int i = 0; i < count[0]; ++i) {
        const Vec3 c = aabb.min + Vec3::Constant(cfg.cube_edge / 2) + step * Vec3(i, j, k);
        if (hidden(c)) continue;
        for (const auto& p : region.points)
          if ((p - c).squaredNorm() <= radius * radius) {
            region.cube_centers.push_back(c);
            break;
          }
      }
  return region;
}

GeomLossResult geom_loss(const RadianceField& field, const VisibleRegion& region, const OccupancyPredictor& predictor,
                         const PriorConfig& cfg, double weight, Rng& rng, std::span<double> grads, int workers) {
  GeomLossResult out;
  if (region.cube_centers.empty()) return out;
  std::vector<std::size_t> pick(region.cube_centers.size());
  std::iota(pick.begin(), pick.end(), 0);
  std::size_t n = pick.size();
  if (cfg.cubes_per_step > 0 && static_cast<std::size_t>(cfg.cubes_per_step) < n) {
    n = static_cast<std::size_t>(cfg.cubes_per_step);
    for (std::size_t i = 0; i < n; ++i) std::swap(pick[i], pick[i + uniform_index(rng, pick.size() - i)]);
  }
  std::vector<std::uint64_t> seeds(n);
  for (auto& s : seeds) s = rng();

  const int m = cfg.m;
  struct Scored {
    std::vector<FieldQuery> q;
    DsdsResult r;
  };
  std::vector<Scored> scored(n);
  parallel_for(n, workers, [&](std::size_t c) {
    OccupancyCube cube;
    cube.m = m;
    cube.center = region.cube_centers[pick[c]];
    cube.edge = region.edge;
    cube.x.resize(static_cast<std::size_t>(m) * m * m);
    std::vector<FieldQuery>& q = scored[c].q;
    q.resize(cube.x.size());
    std::vector<double> sigma(cube.x.size());
    for (int k = 0; k < m; ++k)
      for (int j = 0; j < m; ++j)
        for (int i = 0; i < m; ++i) {
          const std::size_t idx = (static_cast<std::size_t>(k) * m + j) * m + i;
          q[idx] = field.query(cube.cell_center(i, j, k));
          sigma[idx] = q[idx].sigma;
          cube.x[idx] = sigma[idx] > cfg.rho ? 1.0f : -1.0f;
        }
    Rng cube_rng(seeds[c]);
    scored[c].r = dsds_loss(sigma, predictor.predict_x0(cube, cube_rng), cfg.w);
  });
  for (const auto& sc : scored) {
    out.loss += sc.r.loss;
    ++out.cubes;
    if (weight != 0.0)
      for (std::size_t i = 0; i < sc.q.size(); ++i)
        if (sc.r.d_sigma[i] != 0.0) field.scatter_grad(sc.q[i], weight * sc.r.d_sigma[i], Vec3::Zero(), grads);
  }
  return out;
}

}  // namespace inpaint360
