#include "inpaint360/field.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "inpaint360/blob.hpp"
#include "inpaint360/errors.hpp"
#include "inpaint360/parallel.hpp"

namespace inpaint360 {

std::optional<std::pair<double, double>> Aabb::intersect(const Ray& ray) const {
  double t0 = 0.0;
  double t1 = std::numeric_limits<double>::infinity();
  for (int a = 0; a < 3; ++a) {
    const double o = ray.origin[a], d = ray.direction[a];
    if (d == 0.0) {
      if (o < min[a] || o > max[a]) return std::nullopt;
      continue;
    }
    double ta = (min[a] - o) / d;
    double tb = (max[a] - o) / d;
    if (ta > tb) std::swap(ta, tb);
    t0 = std::max(t0, ta);
    t1 = std::min(t1, tb);
  }
  if (!(t1 > t0)) return std::nullopt;
  return std::make_pair(t0, t1);
}

RadianceField::RadianceField(int resolution, const Aabb& aabb, float init_density, float init_color)
    : resolution_(resolution), aabb_(aabb) {
  if (resolution < 2) throw BadSpec("field resolution must be >= 2");
  if (!((aabb.max - aabb.min).array() > 0.0).all()) throw BadSpec("field aabb must have positive extent");
  params_.resize(node_count() * kChannels);
  for (std::size_t n = 0; n < node_count(); ++n) {
    params_[n * kChannels] = init_density;
    for (int c = 1; c < kChannels; ++c) params_[n * kChannels + c] = init_color;
  }
  grads_.assign(params_.size(), 0.0);
}

Vec3 RadianceField::node_position(int i, int j, int k) const {
  return aabb_.min + voxel_size().cwiseProduct(Vec3(i, j, k));
}

double RadianceField::node_sigma(std::uint32_t node) const { return softplus(density_param(node)); }

FieldQuery RadianceField::query(const Vec3& p) const {
  const Vec3 g = (p - aabb_.min).cwiseQuotient(voxel_size());
  const int last = resolution_ - 2;
  const int i0 = std::clamp(static_cast<int>(std::floor(g.x())), 0, last);
  const int j0 = std::clamp(static_cast<int>(std::floor(g.y())), 0, last);
  const int k0 = std::clamp(static_cast<int>(std::floor(g.z())), 0, last);
  FieldQuery q;
  q.lerp.base = node_index(i0, j0, k0);
  q.lerp.fx = std::clamp(g.x() - i0, 0.0, 1.0);
  q.lerp.fy = std::clamp(g.y() - j0, 0.0, 1.0);
  q.lerp.fz = std::clamp(g.z() - k0, 0.0, 1.0);

  const std::size_t sy = resolution_, sz = static_cast<std::size_t>(resolution_) * resolution_;
  const double fx = q.lerp.fx, fy = q.lerp.fy, fz = q.lerp.fz;
  double acc[kChannels] = {0, 0, 0, 0};
  for (int c = 0; c < 8; ++c) {
    const int dx = c & 1, dy = (c >> 1) & 1, dz = (c >> 2) & 1;
    const double w = (dx ? fx : 1 - fx) * (dy ? fy : 1 - fy) * (dz ? fz : 1 - fz);
    const float* node = &params_[(q.lerp.base + dx + dy * sy + dz * sz) * kChannels];
    for (int ch = 0; ch < kChannels; ++ch) acc[ch] += w * node[ch];
  }
  q.s = acc[0];
  q.sigma = softplus(acc[0]);
  q.c_raw = Vec3(acc[1], acc[2], acc[3]);
  q.color = Vec3(sigmoid(acc[1]), sigmoid(acc[2]), sigmoid(acc[3]));
  return q;
}

void RadianceField::scatter_grad(const FieldQuery& q, double d_sigma, const Vec3& d_color,
                                 std::span<double> buffer) const {
  double d[kChannels];
  d[0] = d_sigma * sigmoid(q.s);
  for (int c = 0; c < 3; ++c) d[c + 1] = d_color[c] * q.color[c] * (1.0 - q.color[c]);
  if (d[0] == 0.0 && d[1] == 0.0 && d[2] == 0.0 && d[3] == 0.0) return;
  const std::size_t sy = resolution_, sz = static_cast<std::size_t>(resolution_) * resolution_;
  const double fx = q.lerp.fx, fy = q.lerp.fy, fz = q.lerp.fz;
  for (int c = 0; c < 8; ++c) {
    const int dx = c & 1, dy = (c >> 1) & 1, dz = (c >> 2) & 1;
    const double w = (dx ? fx : 1 - fx) * (dy ? fy : 1 - fy) * (dz ? fz : 1 - fz);
    double* node = &buffer[(q.lerp.base + dx + dy * sy + dz * sz) * kChannels];
    for (int ch = 0; ch < kChannels; ++ch) node[ch] += w * d[ch];
  }
}

double RadianceField::sigma_mass(const std::function<bool(std::uint32_t)>& in_region) const {
  double sum = 0.0;
  for (std::uint32_t n = 0; n < node_count(); ++n)
    if (!in_region || in_region(n)) sum += node_sigma(n);
  return sum;
}

std::uint64_t RadianceField::checksum() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  const auto* bytes = reinterpret_cast<const unsigned char*>(params_.data());
  for (std::size_t i = 0; i < params_.size() * sizeof(float); ++i) {
    h ^= bytes[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::vector<double> stratified_depths(double t_near, double t_far, int count, Rng* rng) {
  std::vector<double> t(count);
  const double bin = (t_far - t_near) / count;
  for (int i = 0; i < count; ++i) t[i] = t_near + (i + (rng ? uniform01(*rng) : 0.5)) * bin;
  return t;
}

namespace {

void fill_samples(const std::vector<double>& depths, double t_near, RaySampleBatch& batch) {
  batch.samples.resize(depths.size());
  double prev = t_near;
  for (std::size_t i = 0; i < depths.size(); ++i) {
    batch.samples[i].t = depths[i];
    batch.samples[i].delta = depths[i] - prev;
    prev = depths[i];
  }
}

}  // namespace

std::optional<RaySampleBatch> sample_ray(const RadianceField& field, const Ray& ray, int count, Rng* rng) {
  if (count < 1) throw BadSpec("sample_ray: need at least one sample");
  const auto hit = field.aabb().intersect(ray);
  if (!hit) return std::nullopt;
  RaySampleBatch batch;
  batch.ray = ray;
  batch.t_near = hit->first;
  batch.t_far = hit->second;
  fill_samples(stratified_depths(hit->first, hit->second, count, rng), hit->first, batch);
  for (auto& s : batch.samples) s.q = field.query(point_from_depth(ray, s.t));
  batch.active = 0;
  return batch;
}

RenderResult composite(RaySampleBatch& batch, double stop_transmittance) {
  RenderResult r;
  double trans = 1.0;
  batch.active = 0;
  for (auto& s : batch.samples) {
    const double tau = s.q.sigma * s.delta;
    s.transmittance = trans;
    s.opacity = -std::expm1(-tau);
    const double w = trans * s.opacity;
    r.rgb += w * s.q.color;
    r.depth += w * s.t;
    r.accumulation += w;
    trans *= std::exp(-tau);
    ++batch.active;
    if (trans < stop_transmittance) break;
  }
  return r;
}

std::optional<RenderResult> render_ray(const RadianceField& field, const Ray& ray, int count, Rng* rng,
                                       double stop_transmittance, RaySampleBatch& batch) {
  const auto hit = field.aabb().intersect(ray);
  if (!hit) return std::nullopt;
  batch.ray = ray;
  batch.t_near = hit->first;
  batch.t_far = hit->second;
  fill_samples(stratified_depths(hit->first, hit->second, count, rng), hit->first, batch);
  RenderResult r;
  double trans = 1.0;
  batch.active = 0;
  for (auto& s : batch.samples) {
    s.q = field.query(point_from_depth(ray, s.t));
    const double tau = s.q.sigma * s.delta;
    s.transmittance = trans;
    s.opacity = -std::expm1(-tau);
    const double w = trans * s.opacity;
    r.rgb += w * s.q.color;
    r.depth += w * s.t;
    r.accumulation += w;
    trans *= std::exp(-tau);
    ++batch.active;
    if (trans < stop_transmittance) break;
  }
  return r;
}

void backward(const RadianceField& field, const RaySampleBatch& batch, const Vec3& d_rgb, double d_depth,
              double d_accum, std::span<double> buffer) {
  if (d_rgb.isZero(0.0) && d_depth == 0.0 && d_accum == 0.0) return;
  double suffix = 0.0;  // sum_{k > i} w_k g_k
  for (std::size_t n = batch.active; n-- > 0;) {
    const Sample& s = batch.samples[n];
    const double g = d_rgb.dot(s.q.color) + d_depth * s.t + d_accum;
    const double w = s.transmittance * s.opacity;
    const double trans_next = s.transmittance * std::exp(-s.q.sigma * s.delta);
    const double d_sigma = s.delta * (trans_next * g - suffix);
    suffix += w * g;
    field.scatter_grad(s.q, d_sigma, w * d_rgb, buffer);
  }
}

OptimizerState make_field_optimizer(const RadianceField& field, double lr_density, double lr_color) {
  return OptimizerState(field.params().size(), {lr_density, lr_color, lr_color, lr_color});
}

void optimizer_step(RadianceField& field, OptimizerState& state) { adam_step(field.params(), field.grads(), state); }

ViewRender render_view(const RadianceField& field, const Camera& cam, const RenderOptions& opts) {
  ViewRender out;
  out.rgb = RgbImage(cam.width(), cam.height(), 3, 0.0f);
  out.depth = DepthImage(cam.width(), cam.height(), 1, 0.0);
  out.accumulation = Image<double>(cam.width(), cam.height(), 1, 0.0);
  parallel_for(static_cast<std::size_t>(cam.height()), opts.workers, [&](std::size_t row) {
    RaySampleBatch batch;
    const int y = static_cast<int>(row);
    for (int x = 0; x < cam.width(); ++x) {
      const auto r = render_ray(field, pixel_center_ray(cam, x, y), opts.samples_per_ray, nullptr,
                                opts.stop_transmittance, batch);
      if (!r) continue;
      for (int c = 0; c < 3; ++c) out.rgb.at(x, y, c) = static_cast<float>(r->rgb[c]);
      out.depth.at(x, y) = r->depth;
      out.accumulation.at(x, y) = r->accumulation;
    }
  });
  return out;
}

RadianceField train_field(std::span<const TrainingView> views, const TrainConfig& cfg, RadianceField field,
                          TrainLog* log) {
  struct PixelRef {
    std::uint32_t view, x, y;
  };
  std::vector<PixelRef> pixels;
  for (std::size_t v = 0; v < views.size(); ++v) {
    const auto& tv = views[v];
    if (!tv.image || tv.image->channels() != 3) throw DimensionMismatch("train_field: view image must be RGB");
    if (tv.image->width() != tv.camera.width() || tv.image->height() != tv.camera.height())
      throw DimensionMismatch("train_field: image size disagrees with camera for view " + std::to_string(v));
    if (tv.exclude) require_same_size(*tv.exclude, *tv.image, "train_field exclusion mask");
    for (int y = 0; y < tv.image->height(); ++y)
      for (int x = 0; x < tv.image->width(); ++x)
        if (!tv.exclude || tv.exclude->at(x, y) == 0)
          pixels.push_back({static_cast<std::uint32_t>(v), static_cast<std::uint32_t>(x), static_cast<std::uint32_t>(y)});
  }
  if (pixels.empty()) throw BadSpec("train_field: no supervisable pixels");

  OptimizerState opt = make_field_optimizer(field, cfg.lr_density, cfg.lr_color);
  const int shards = std::max(cfg.grad_shards, 1);
  std::vector<std::vector<double>> shard_grads(shards - 1, std::vector<double>(field.params().size(), 0.0));
  std::vector<double> shard_loss(shards);
  const int B = cfg.batch_rays;

  for (int it = 0; it < cfg.iterations; ++it) {
    opt.lr_scale = std::pow(cfg.lr_final_fraction, static_cast<double>(it) / std::max(cfg.iterations, 1));
    Rng pick = make_rng(cfg.seed, {0x7261ULL, static_cast<std::uint64_t>(it)});
    std::vector<std::uint32_t> chosen(B);
    for (auto& c : chosen) c = static_cast<std::uint32_t>(uniform_index(pick, pixels.size()));

    parallel_for(static_cast<std::size_t>(shards), cfg.workers, [&](std::size_t k) {
      std::span<double> buffer = k == 0 ? field.grads() : std::span<double>(shard_grads[k - 1]);
      const int begin = static_cast<int>(k * B / shards), end = static_cast<int>((k + 1) * B / shards);
      RaySampleBatch batch;
      double loss = 0.0;
      for (int r = begin; r < end; ++r) {
        const PixelRef& px = pixels[chosen[r]];
        const TrainingView& tv = views[px.view];
        Rng jitter = make_rng(cfg.seed, {static_cast<std::uint64_t>(it), static_cast<std::uint64_t>(r)});
        const auto res = render_ray(field, pixel_center_ray(tv.camera, px.x, px.y), cfg.samples_per_ray, &jitter,
                                    cfg.stop_transmittance, batch);
        const Vec3 rgb = res ? res->rgb : Vec3::Zero();
        Vec3 d_rgb;
        for (int c = 0; c < 3; ++c) {
          const double diff = rgb[c] - tv.image->at(px.x, px.y, c);
          loss += std::abs(diff);
          d_rgb[c] = (diff > 0) - (diff < 0);
        }
        if (res) backward(field, batch, d_rgb / B, 0.0, 0.0, buffer);
      }
      shard_loss[k] = loss;
    });

    double loss = 0.0;
    for (int k = 0; k < shards; ++k) loss += shard_loss[k];
    loss /= B;
    for (auto& g : shard_grads) {
      auto main = field.grads();
      for (std::size_t i = 0; i < g.size(); ++i) {
        main[i] += g[i];
        g[i] = 0.0;
      }
    }
    if (!std::isfinite(loss)) throw NumericalError("train", it);
    optimizer_step(field, opt);
    if (log && (it % std::max(cfg.log_every, 1) == 0 || it + 1 == cfg.iterations)) log->loss.emplace_back(it, loss);
  }
  return field;
}

std::vector<std::uint8_t> field_to_bytes(const RadianceField& field) {
  BlobWriter w(BlobKind::kField);
  w.u32(static_cast<std::uint32_t>(field.resolution()));
  for (int a = 0; a < 3; ++a) w.f64(field.aabb().min[a]);
  for (int a = 0; a < 3; ++a) w.f64(field.aabb().max[a]);
  const std::size_t n = field.node_count();
  w.u32(2);
  w.u64(n);
  w.u64(3 * n);
  std::vector<float> density(n), color(3 * n);
  for (std::size_t i = 0; i < n; ++i) {
    density[i] = field.density_param(static_cast<std::uint32_t>(i));
    for (int c = 0; c < 3; ++c) color[3 * i + c] = field.color_param(static_cast<std::uint32_t>(i), c);
  }
  w.f32_array(density);
  w.f32_array(color);
  return w.take();
}

RadianceField field_from_bytes(std::span<const std::uint8_t> bytes) {
  BlobReader r(bytes, BlobKind::kField);
  const int res = static_cast<int>(r.u32());
  Aabb box;
  for (int a = 0; a < 3; ++a) box.min[a] = r.f64();
  for (int a = 0; a < 3; ++a) box.max[a] = r.f64();
  RadianceField field(res, box);
  const std::size_t n = field.node_count();
  if (r.u32() != 2 || r.u64() != n || r.u64() != 3 * n) throw IoError("field checkpoint: array counts disagree");
  std::vector<float> density(n), color(3 * n);
  r.f32_array(density);
  r.f32_array(color);
  if (!r.done()) throw IoError("field checkpoint: trailing bytes");
  for (std::size_t i = 0; i < n; ++i) {
    field.density_param(static_cast<std::uint32_t>(i)) = density[i];
    for (int c = 0; c < 3; ++c) field.color_param(static_cast<std::uint32_t>(i), c) = color[3 * i + c];
  }
  return field;
}

void save_field(const std::string& path, const RadianceField& field) { write_file_bytes(path, field_to_bytes(field)); }

RadianceField load_field(const std::string& path) { return field_from_bytes(read_file_bytes(path)); }

std::vector<std::uint8_t> read_file_bytes(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw MissingInput("missing file " + path);
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(f), {});
}

void write_file_bytes(const std::string& path, std::span<const std::uint8_t> bytes) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write " + path);
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace inpaint360
