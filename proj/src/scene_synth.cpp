#include "inpaint360/scene_synth.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "inpaint360/errors.hpp"
#include "inpaint360/parallel.hpp"
#include "inpaint360/png_io.hpp"
#include "inpaint360/random.hpp"

namespace inpaint360 {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

const char* to_string(PrimitiveKind k) {
  switch (k) {
    case PrimitiveKind::kSphere: return "sphere";
    case PrimitiveKind::kBox: return "box";
    case PrimitiveKind::kCylinder: return "cylinder";
    case PrimitiveKind::kPlane: return "plane";
  }
  return "?";
}

PrimitiveKind primitive_kind_from_string(const std::string& s) {
  if (s == "sphere") return PrimitiveKind::kSphere;
  if (s == "box") return PrimitiveKind::kBox;
  if (s == "cylinder") return PrimitiveKind::kCylinder;
  if (s == "plane") return PrimitiveKind::kPlane;
  throw BadSpec("unknown primitive kind '" + s + "'");
}

namespace {

// World -> primitive-local (yaw removed, centered).
Vec3 to_local(const ScenePrimitive& p, const Vec3& x) {
  const Vec3 d = x - p.center;
  const double c = std::cos(p.yaw), s = std::sin(p.yaw);
  return Vec3(c * d.x() + s * d.y(), -s * d.x() + c * d.y(), d.z());
}

Vec3 dir_to_local(const ScenePrimitive& p, const Vec3& v) {
  const double c = std::cos(p.yaw), s = std::sin(p.yaw);
  return Vec3(c * v.x() + s * v.y(), -s * v.x() + c * v.y(), v.z());
}

Vec3 dir_to_world(const ScenePrimitive& p, const Vec3& v) {
  const double c = std::cos(p.yaw), s = std::sin(p.yaw);
  return Vec3(c * v.x() - s * v.y(), s * v.x() + c * v.y(), v.z());
}

constexpr double kEps = 1e-9;

}  // namespace

std::optional<ScenePrimitive::Hit> ScenePrimitive::intersect(const Ray& ray) const {
  Hit hit;
  switch (kind) {
    case PrimitiveKind::kSphere: {
      const Vec3 oc = ray.origin - center;
      const double b = oc.dot(ray.direction);
      const double c = oc.squaredNorm() - size.x() * size.x();
      const double disc = b * b - c;
      if (disc < 0) return std::nullopt;
      const double sq = std::sqrt(disc);
      double t = -b - sq;
      if (t <= kEps) t = -b + sq;
      if (t <= kEps) return std::nullopt;
      hit.t = t;
      hit.normal = (point_from_depth(ray, t) - center).normalized();
      return hit;
    }
    case PrimitiveKind::kBox: {
      const Vec3 o = to_local(*this, ray.origin), d = dir_to_local(*this, ray.direction);
      double t0 = -std::numeric_limits<double>::infinity(), t1 = std::numeric_limits<double>::infinity();
      int axis0 = 0, axis1 = 0;
      for (int a = 0; a < 3; ++a) {
        if (d[a] == 0.0) {
          if (std::abs(o[a]) > size[a]) return std::nullopt;
          continue;
        }
        double ta = (-size[a] - o[a]) / d[a], tb = (size[a] - o[a]) / d[a];
        if (ta > tb) std::swap(ta, tb);
        if (ta > t0) t0 = ta, axis0 = a;
        if (tb < t1) t1 = tb, axis1 = a;
      }
      if (t0 > t1) return std::nullopt;
      int axis = axis0;
      double t = t0;
      if (t <= kEps) t = t1, axis = axis1;
      if (t <= kEps) return std::nullopt;
      Vec3 n = Vec3::Zero();
      n[axis] = (o[axis] + t * d[axis]) > 0 ? 1.0 : -1.0;
      hit.t = t;
      hit.normal = dir_to_world(*this, n);
      return hit;
    }
    case PrimitiveKind::kCylinder: {
      const Vec3 o = ray.origin - center;
      const Vec3& d = ray.direction;
      const double r = size.x(), h = size.z();
      double best = std::numeric_limits<double>::infinity();
      Vec3 normal = Vec3::UnitZ();
      const double a = d.x() * d.x() + d.y() * d.y();
      if (a > 0) {
        const double b = o.x() * d.x() + o.y() * d.y();
        const double c = o.x() * o.x() + o.y() * o.y() - r * r;
        const double disc = b * b - a * c;
        if (disc >= 0) {
          const double sq = std::sqrt(disc);
          for (double t : {(-b - sq) / a, (-b + sq) / a}) {
            if (t <= kEps || t >= best) continue;
            const double z = o.z() + t * d.z();
            if (std::abs(z) <= h) {
              best = t;
              normal = Vec3(o.x() + t * d.x(), o.y() + t * d.y(), 0).normalized();
            }
          }
        }
      }
      if (d.z() != 0) {
        for (double cap : {-h, h}) {
          const double t = (cap - o.z()) / d.z();
          if (t <= kEps || t >= best) continue;
          const double x = o.x() + t * d.x(), y = o.y() + t * d.y();
          if (x * x + y * y <= r * r) {
            best = t;
            normal = Vec3(0, 0, cap > 0 ? 1 : -1);
          }
        }
      }
      if (!std::isfinite(best)) return std::nullopt;
      hit.t = best;
      hit.normal = normal;
      return hit;
    }
    case PrimitiveKind::kPlane: {
      if (ray.direction.z() == 0) return std::nullopt;
      const double t = (center.z() - ray.origin.z()) / ray.direction.z();
      if (t <= kEps) return std::nullopt;
      const Vec3 q = to_local(*this, point_from_depth(ray, t));
      if (std::abs(q.x()) > size.x() || std::abs(q.y()) > size.y()) return std::nullopt;
      hit.t = t;
      hit.normal = Vec3::UnitZ();
      return hit;
    }
  }
  return std::nullopt;
}

double ScenePrimitive::signed_distance(const Vec3& p) const {
  switch (kind) {
    case PrimitiveKind::kSphere: return (p - center).norm() - size.x();
    case PrimitiveKind::kBox: {
      const Vec3 q = to_local(*this, p).cwiseAbs() - size;
      return q.cwiseMax(0.0).norm() + std::min(q.maxCoeff(), 0.0);
    }
    case PrimitiveKind::kCylinder: {
      const Vec3 d = p - center;
      const double dx = std::hypot(d.x(), d.y()) - size.x();
      const double dz = std::abs(d.z()) - size.z();
      return std::min(std::max(dx, dz), 0.0) + std::hypot(std::max(dx, 0.0), std::max(dz, 0.0));
    }
    case PrimitiveKind::kPlane: {
      const Vec3 q = to_local(*this, p);
      return Vec3(std::max(std::abs(q.x()) - size.x(), 0.0), std::max(std::abs(q.y()) - size.y(), 0.0), q.z()).norm();
    }
  }
  return std::numeric_limits<double>::infinity();
}

Aabb ScenePrimitive::bounds() const {
  Vec3 half;
  switch (kind) {
    case PrimitiveKind::kSphere: half = Vec3::Constant(size.x()); break;
    case PrimitiveKind::kCylinder: half = Vec3(size.x(), size.x(), size.z()); break;
    case PrimitiveKind::kBox:
    case PrimitiveKind::kPlane: {
      const double c = std::abs(std::cos(yaw)), s = std::abs(std::sin(yaw));
      const double hz = kind == PrimitiveKind::kBox ? size.z() : 0.0;
      half = Vec3(c * size.x() + s * size.y(), s * size.x() + c * size.y(), hz);
      break;
    }
  }
  return Aabb{center - half, center + half};
}

Vec3 ScenePrimitive::albedo_at(const Vec3& p) const {
  if (!checker_albedo) return albedo;
  const Vec3 q = to_local(*this, p) / checker_size;
  const long parity = static_cast<long>(std::floor(q.x())) + static_cast<long>(std::floor(q.y())) +
                      (kind == PrimitiveKind::kPlane ? 0 : static_cast<long>(std::floor(q.z())));
  return (parity & 1) ? *checker_albedo : albedo;
}

SceneSpec default_scene_spec() {
  SceneSpec s;
  auto add = [&](PrimitiveKind kind, Vec3 c, Vec3 size, Vec3 albedo, std::string name, bool removable,
                 double yaw = 0.0) -> ScenePrimitive& {
    ScenePrimitive p;
    p.kind = kind;
    p.center = c;
    p.size = size;
    p.albedo = albedo;
    p.name = std::move(name);
    p.removable = removable;
    p.yaw = yaw;
    p.instance_id = static_cast<int>(s.primitives.size()) + 1;
    s.primitives.push_back(p);
    return s.primitives.back();
  };
  auto& floor = add(PrimitiveKind::kPlane, Vec3(0, 0, -0.9), Vec3(1.45, 1.45, 0), Vec3(0.62, 0.6, 0.55), "floor", false);
  floor.checker_albedo = Vec3(0.32, 0.3, 0.28);
  floor.checker_size = 0.36;
  add(PrimitiveKind::kBox, Vec3(0, 0, -0.6), Vec3(0.85, 0.65, 0.3), Vec3(0.66, 0.46, 0.3), "table", false, 0.15);
  add(PrimitiveKind::kCylinder, Vec3(0.05, -0.05, -0.05), Vec3(0.28, 0.28, 0.25), Vec3(0.82, 0.36, 0.2), "flowerpot", true);
  add(PrimitiveKind::kSphere, Vec3(0.05, -0.05, 0.44), Vec3(0.26, 0.26, 0.26), Vec3(0.95, 0.86, 0.25), "flowers", true);
  add(PrimitiveKind::kBox, Vec3(-0.5, 0.32, -0.2), Vec3(0.17, 0.13, 0.1), Vec3(0.2, 0.35, 0.78), "book", false, 0.4);
  add(PrimitiveKind::kSphere, Vec3(1.0, 0.9, -0.7), Vec3(0.2, 0.2, 0.2), Vec3(0.3, 0.72, 0.36), "ball", false);
  s.ring = RingSpec{40, 3.6, 30.0, 80, 80, 80.0};
  return s;
}

namespace {

ordered_json vec_json(const Vec3& v) { return ordered_json::array({v.x(), v.y(), v.z()}); }

Vec3 json_vec(const json& j) {
  const auto a = j.get<std::vector<double>>();
  if (a.size() != 3) throw BadSpec("expected a 3-vector");
  return Vec3(a[0], a[1], a[2]);
}

}  // namespace

std::string scene_spec_to_json(const SceneSpec& spec) {
  ordered_json doc;
  doc["format"] = "inpaint360-scene";
  doc["version"] = 1;
  ordered_json prims = ordered_json::array();
  for (const auto& p : spec.primitives) {
    ordered_json j;
    j["kind"] = to_string(p.kind);
    j["name"] = p.name;
    j["instance_id"] = p.instance_id;
    j["removable"] = p.removable;
    j["center"] = vec_json(p.center);
    j["yaw"] = p.yaw;
    j["size"] = vec_json(p.size);
    j["albedo"] = vec_json(p.albedo);
    if (p.checker_albedo) {
      j["checker_albedo"] = vec_json(*p.checker_albedo);
      j["checker_size"] = p.checker_size;
    }
    prims.push_back(j);
  }
  doc["primitives"] = prims;
  doc["ring"] = {{"count", spec.ring.count}, {"radius", spec.ring.radius}, {"elevation_deg", spec.ring.elevation_deg},
                 {"width", spec.ring.width}, {"height", spec.ring.height}, {"focal", spec.ring.focal}};
  doc["bounds"] = {{"min", vec_json(spec.bounds.min)}, {"max", vec_json(spec.bounds.max)}};
  doc["background"] = vec_json(spec.background);
  doc["light_dir"] = vec_json(spec.light_dir);
  doc["ambient"] = spec.ambient;
  return doc.dump(2) + "\n";
}

SceneSpec scene_spec_from_json(const std::string& text) {
  SceneSpec s;
  try {
    const json doc = json::parse(text);
    for (const auto& j : doc.at("primitives")) {
      ScenePrimitive p;
      p.kind = primitive_kind_from_string(j.at("kind").get<std::string>());
      p.name = j.at("name").get<std::string>();
      p.instance_id = j.at("instance_id").get<int>();
      p.removable = j.value("removable", false);
      p.center = json_vec(j.at("center"));
      p.yaw = j.value("yaw", 0.0);
      p.size = json_vec(j.at("size"));
      p.albedo = json_vec(j.at("albedo"));
      if (j.contains("checker_albedo")) {
        p.checker_albedo = json_vec(j.at("checker_albedo"));
        p.checker_size = j.value("checker_size", 0.25);
      }
      s.primitives.push_back(p);
    }
    if (doc.contains("ring")) {
      const auto& r = doc.at("ring");
      s.ring.count = r.value("count", s.ring.count);
      s.ring.radius = r.value("radius", s.ring.radius);
      s.ring.elevation_deg = r.value("elevation_deg", s.ring.elevation_deg);
      s.ring.width = r.value("width", s.ring.width);
      s.ring.height = r.value("height", s.ring.height);
      s.ring.focal = r.value("focal", s.ring.focal);
    }
    if (doc.contains("bounds")) {
      s.bounds.min = json_vec(doc.at("bounds").at("min"));
      s.bounds.max = json_vec(doc.at("bounds").at("max"));
    }
    if (doc.contains("background")) s.background = json_vec(doc.at("background"));
    if (doc.contains("light_dir")) s.light_dir = json_vec(doc.at("light_dir"));
    s.ambient = doc.value("ambient", s.ambient);
  } catch (const json::exception& e) {
    throw BadSpec(std::string("scene spec: ") + e.what());
  }
  return s;
}

const ScenePrimitive* Scene::find(const std::string& name) const {
  for (const auto& p : spec.primitives)
    if (p.name == name) return &p;
  return nullptr;
}

const ScenePrimitive* Scene::find(int instance_id) const {
  for (const auto& p : spec.primitives)
    if (p.instance_id == instance_id) return &p;
  return nullptr;
}

double Scene::empty_scene_distance(const Vec3& p) const {
  double d = std::numeric_limits<double>::infinity();
  for (const auto& prim : spec.primitives)
    if (!prim.removable) d = std::min(d, prim.signed_distance(p));
  return d;
}

std::vector<Camera> ring_cameras(const RingSpec& ring, const Vec3& target, double phase, double elevation_deg) {
  std::vector<Camera> cams;
  const double el = elevation_deg * M_PI / 180.0;
  for (int i = 0; i < ring.count; ++i) {
    const double az = phase + 2.0 * M_PI * i / ring.count;
    const Vec3 eye = target + ring.radius * Vec3(std::cos(el) * std::cos(az), std::cos(el) * std::sin(az), std::sin(el));
    cams.push_back(look_at(ring.width, ring.height, ring.focal, eye, target));
  }
  return cams;
}

Scene generate_scene(const SceneSpec& spec, std::uint64_t seed) {
  if (spec.primitives.empty()) throw BadSpec("scene has no primitives");
  std::set<int> ids;
  std::set<std::string> names;
  bool any_removable = false;
  for (const auto& p : spec.primitives) {
    if (p.instance_id <= 0 || p.instance_id > 254) throw BadSpec("instance ids must be in [1, 254]");
    if (!ids.insert(p.instance_id).second) throw BadSpec("duplicate instance id " + std::to_string(p.instance_id));
    if (p.name.empty() || !names.insert(p.name).second) throw BadSpec("primitive names must be unique and non-empty");
    any_removable |= p.removable;
  }
  if (!any_removable) throw BadSpec("scene needs at least one removable object");
  if (spec.ring.count < 1) throw BadSpec("camera ring needs at least one view");

  Scene scene;
  scene.spec = spec;
  Vec3 c = Vec3::Zero();
  for (const auto& p : spec.primitives) c += p.center;
  scene.centroid = c / static_cast<double>(spec.primitives.size());
  Rng rng = make_rng(seed, {0x5ce9eULL});
  const double phase = uniform(rng, 0.0, 2.0 * M_PI / spec.ring.count);
  scene.cameras = ring_cameras(spec.ring, scene.centroid, phase, spec.ring.elevation_deg);
  return scene;
}

PixelTrace trace_pixel(const SceneSpec& spec, const Camera& cam, int x, int y, bool skip_removable) {
  const Ray ray = pixel_center_ray(cam, x, y);
  PixelTrace out;
  out.rgb = spec.background;
  const ScenePrimitive* best = nullptr;
  ScenePrimitive::Hit best_hit;
  for (const auto& p : spec.primitives) {
    if (skip_removable && p.removable) continue;
    const auto h = p.intersect(ray);
    if (h && h->t < best_hit.t) {
      best_hit = *h;
      best = &p;
    }
  }
  if (!best) return out;
  const Vec3 X = point_from_depth(ray, best_hit.t);
  Vec3 n = best_hit.normal;
  if (n.dot(ray.direction) > 0) n = -n;
  const double shade = spec.ambient + (1.0 - spec.ambient) * std::max(0.0, n.dot(spec.light_dir.normalized()));
  out.rgb = best->albedo_at(X) * shade;
  out.z_depth = cam.z_from_ray_depth(ray.direction, best_hit.t);
  out.id = best->instance_id;
  return out;
}

SyntheticDataset render_ground_truth(const Scene& scene, const std::vector<Camera>& cameras, int workers) {
  SyntheticDataset data;
  data.scene = scene;
  data.views.resize(cameras.size());
  parallel_for(cameras.size(), workers, [&](std::size_t v) {
    const Camera& cam = cameras[v];
    ViewData& out = data.views[v];
    out.camera = cam;
    out.rgb = RgbImage(cam.width(), cam.height(), 3);
    out.empty_rgb = RgbImage(cam.width(), cam.height(), 3);
    out.depth = DepthImage(cam.width(), cam.height(), 1);
    out.ids = IdImage(cam.width(), cam.height(), 1);
    for (int y = 0; y < cam.height(); ++y)
      for (int x = 0; x < cam.width(); ++x) {
        const PixelTrace full = trace_pixel(scene.spec, cam, x, y, false);
        const PixelTrace empty = trace_pixel(scene.spec, cam, x, y, true);
        for (int c = 0; c < 3; ++c) {
          out.rgb.at(x, y, c) = static_cast<float>(full.rgb[c]);
          out.empty_rgb.at(x, y, c) = static_cast<float>(empty.rgb[c]);
        }
        out.depth.at(x, y) = full.z_depth;
        out.ids.at(x, y) = static_cast<std::uint8_t>(full.id);
      }
  });
  return data;
}

Mask instance_mask(const IdImage& ids, int instance_id) {
  Mask m(ids.width(), ids.height(), 1, 0);
  for (std::size_t i = 0; i < ids.data().size(); ++i) m.data()[i] = ids.data()[i] == instance_id;
  return m;
}

namespace {

// Shrinks a tight box from one side until it keeps at least `phi` of the
// object's pixels.
BoxProposal truncate_box(const BoxProposal& tight, const Mask& obj, double phi, int side) {
  const bool horizontal = side < 2;
  const int lo = horizontal ? tight.l : tight.u, hi = horizontal ? tight.r : tight.d;
  std::vector<std::size_t> line(hi - lo, 0);
  std::size_t total = 0;
  for (int y = tight.u; y < tight.d; ++y)
    for (int x = tight.l; x < tight.r; ++x)
      if (obj.at(x, y)) {
        ++line[(horizontal ? x : y) - lo];
        ++total;
      }
  const double need = phi * static_cast<double>(total);
  BoxProposal b = tight;
  b.truncated = true;
  std::size_t acc = 0;
  if (side % 2 == 0) {  // keep the low side: advance the high bound
    int cut = lo;
    while (cut < hi && static_cast<double>(acc) < need) acc += line[cut++ - lo];
    cut = std::max(cut, lo + 1);
    (horizontal ? b.r : b.d) = cut;
  } else {
    int cut = hi;
    while (cut > lo && static_cast<double>(acc) < need) acc += line[--cut - lo];
    cut = std::min(cut, hi - 1);
    (horizontal ? b.l : b.u) = cut;
  }
  return b;
}

}  // namespace

std::vector<BoxProposal> propose_boxes(const Scene& scene, const IdImage& ids, std::size_t view_index,
                                       const std::vector<std::string>& objects, const BoxFailureConfig& failure,
                                       std::uint64_t seed) {
  std::vector<BoxProposal> out;
  for (std::size_t q = 0; q < objects.size(); ++q) {
    const ScenePrimitive* prim = scene.find(objects[q]);
    if (!prim) throw UnknownObject("no scene object named '" + objects[q] + "'");
    Rng rng = make_rng(seed, {0xb0c5ULL, view_index, q});
    const double u_miss = uniform01(rng), u_trunc = uniform01(rng);
    const double phi = uniform(rng, failure.phi_min, failure.phi_max);
    const int side = static_cast<int>(uniform_index(rng, 4));

    const Mask obj = instance_mask(ids, prim->instance_id);
    BoxProposal box;
    box.l = ids.width();
    box.u = ids.height();
    box.r = box.d = 0;
    for (int y = 0; y < ids.height(); ++y)
      for (int x = 0; x < ids.width(); ++x)
        if (obj.at(x, y)) {
          box.l = std::min(box.l, x);
          box.r = std::max(box.r, x + 1);
          box.u = std::min(box.u, y);
          box.d = std::max(box.d, y + 1);
        }
    if (box.r <= box.l) continue;  // not visible in this view
    box.object = static_cast<int>(q);
    box.score = 1.0;
    if (u_miss < failure.q_miss) continue;
    if (u_trunc < failure.q_trunc) box = truncate_box(box, obj, phi, side);
    out.push_back(box);
  }
  return out;
}

std::vector<RgbImage> simulate_inpainting(const SyntheticDataset& data, const std::vector<Mask>& masks,
                                          const InpainterPerturbation& pert) {
  if (masks.size() != data.views.size()) throw DimensionMismatch("simulate_inpainting: one mask per view required");
  if (pert.color_shift < 0 || pert.blob_amplitude < 0) throw BadSpec("perturbation amplitudes must be >= 0");
  std::vector<RgbImage> out;
  out.reserve(masks.size());
  for (std::size_t v = 0; v < masks.size(); ++v) {
    const ViewData& view = data.views[v];
    require_same_size(masks[v], view.rgb, "simulate_inpainting");
    Rng rng = make_rng(pert.seed, {0x1a9a1ULL, v});
    Vec3 shift;
    for (int c = 0; c < 3; ++c) shift[c] = uniform(rng, -pert.color_shift, pert.color_shift);
    struct Wave {
      double kx, ky, phase;
    };
    std::array<std::array<Wave, 8>, 3> waves;
    for (auto& ch : waves)
      for (auto& w : ch) {
        const double theta = uniform(rng, 0.0, 2.0 * M_PI);
        const double k = 2.0 * M_PI / std::max(pert.blob_length, 1e-6) * uniform(rng, 0.5, 1.5);
        w = {k * std::cos(theta), k * std::sin(theta), uniform(rng, 0.0, 2.0 * M_PI)};
      }
    RgbImage img = view.rgb;
    for (int y = 0; y < img.height(); ++y)
      for (int x = 0; x < img.width(); ++x) {
        if (!masks[v].at(x, y)) continue;
        for (int c = 0; c < 3; ++c) {
          double blob = 0.0;
          if (pert.blob_amplitude > 0)
            for (const auto& w : waves[c]) blob += std::cos(w.kx * (x + 0.5) + w.ky * (y + 0.5) + w.phase);
          // 8 unit cosines have variance 4; scale to std = amplitude.
          const double value = view.empty_rgb.at(x, y, c) + shift[c] + pert.blob_amplitude * 0.5 * blob;
          img.at(x, y, c) = static_cast<float>(std::clamp(value, 0.0, 1.0));
        }
      }
    out.push_back(std::move(img));
  }
  return out;
}

EncodedDepth encode_depth(const DepthImage& depth, double scale) {
  EncodedDepth e{Image<std::uint16_t>(depth.width(), depth.height(), 1, 0), Mask(depth.width(), depth.height(), 1, 0)};
  for (std::size_t i = 0; i < depth.data().size(); ++i) {
    const double z = depth.data()[i];
    if (!std::isfinite(z)) continue;
    e.depth.data()[i] = static_cast<std::uint16_t>(std::clamp(std::llround(z / scale), 1LL, 65535LL));
    e.valid.data()[i] = 1;
  }
  return e;
}

DepthImage decode_depth(const EncodedDepth& e, double scale) {
  DepthImage d(e.depth.width(), e.depth.height(), 1, std::numeric_limits<double>::infinity());
  for (std::size_t i = 0; i < d.data().size(); ++i)
    if (e.valid.data()[i]) d.data()[i] = e.depth.data()[i] * scale;
  return d;
}

namespace {

std::vector<std::array<std::uint8_t, 3>> id_palette() {
  std::vector<std::array<std::uint8_t, 3>> pal(256);
  pal[0] = {0, 0, 0};
  for (int i = 1; i < 256; ++i) {
    const std::uint64_t h = splitmix64(static_cast<std::uint64_t>(i));
    pal[i] = {static_cast<std::uint8_t>(64 + (h & 0xbf)), static_cast<std::uint8_t>(64 + ((h >> 8) & 0xbf)),
              static_cast<std::uint8_t>(64 + ((h >> 16) & 0xbf))};
  }
  return pal;
}

std::string view_file(const std::string& prefix, std::size_t v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s_%03zu.png", prefix.c_str(), v);
  return buf;
}

std::string slurp(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw MissingInput("missing file " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

}  // namespace

void write_dataset(const std::string& dir, const SyntheticDataset& data, double depth_scale) {
  fs::create_directories(fs::path(dir) / "views");
  CameraSet cams;
  ordered_json views = ordered_json::object();
  const auto pal = id_palette();
  for (std::size_t v = 0; v < data.views.size(); ++v) {
    const ViewData& view = data.views[v];
    cams.emplace(static_cast<int>(v), view.camera);
    const auto enc = encode_depth(view.depth, depth_scale);
    ordered_json j;
    j["rgb"] = "views/" + view_file("rgb", v);
    j["empty_rgb"] = "views/" + view_file("empty", v);
    j["depth"] = "views/" + view_file("depth", v);
    j["depth_valid"] = "views/" + view_file("depth_valid", v);
    j["ids"] = "views/" + view_file("ids", v);
    write_png_rgb((fs::path(dir) / j["rgb"].get<std::string>()).string(), view.rgb);
    write_png_rgb((fs::path(dir) / j["empty_rgb"].get<std::string>()).string(), view.empty_rgb);
    write_png_gray16((fs::path(dir) / j["depth"].get<std::string>()).string(), enc.depth);
    write_mask_png((fs::path(dir) / j["depth_valid"].get<std::string>()).string(), enc.valid);
    write_png_palette((fs::path(dir) / j["ids"].get<std::string>()).string(), view.ids, pal);
    views[std::to_string(v)] = j;
  }
  save_cameras((fs::path(dir) / "cameras.json").string(), cams);
  {
    std::ofstream f(fs::path(dir) / "scene.json", std::ios::binary);
    f << scene_spec_to_json(data.scene.spec);
  }
  ordered_json manifest;
  manifest["format"] = "inpaint360-dataset";
  manifest["version"] = 1;
  manifest["depth_scale"] = depth_scale;
  manifest["depth_encoding"] = "z-depth = value * depth_scale; value 0 and depth_valid 0 mean no hit";
  manifest["centroid"] = vec_json(data.scene.centroid);
  manifest["cameras"] = "cameras.json";
  manifest["scene"] = "scene.json";
  manifest["views"] = views;
  std::ofstream f(fs::path(dir) / "manifest.json", std::ios::binary);
  f << manifest.dump(2) << "\n";
}

SyntheticDataset read_dataset(const std::string& dir) {
  const fs::path root(dir);
  SyntheticDataset data;
  try {
    const json manifest = json::parse(slurp((root / "manifest.json").string()));
    const double scale = manifest.at("depth_scale").get<double>();
    data.scene.spec = scene_spec_from_json(slurp((root / manifest.at("scene").get<std::string>()).string()));
    data.scene.centroid = json_vec(manifest.at("centroid"));
    const CameraSet cams = load_cameras((root / manifest.at("cameras").get<std::string>()).string());
    const auto& views = manifest.at("views");
    data.views.resize(views.size());
    for (const auto& [key, j] : views.items()) {
      const std::size_t v = std::stoul(key);
      if (v >= data.views.size()) throw BadSpec("dataset manifest: view indices must be contiguous");
      ViewData& out = data.views[v];
      out.camera = cams.at(static_cast<int>(v));
      out.rgb = read_png_rgb((root / j.at("rgb").get<std::string>()).string());
      out.empty_rgb = read_png_rgb((root / j.at("empty_rgb").get<std::string>()).string());
      EncodedDepth enc{read_png_gray16((root / j.at("depth").get<std::string>()).string()),
                       read_mask_png((root / j.at("depth_valid").get<std::string>()).string())};
      out.depth = decode_depth(enc, scale);
      out.ids = read_png_palette((root / j.at("ids").get<std::string>()).string());
      data.scene.cameras.push_back(out.camera);
    }
  } catch (const json::exception& e) {
    throw BadSpec(std::string("dataset manifest: ") + e.what());
  }
  return data;
}

}  // namespace inpaint360
