#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "inpaint360/field.hpp"
#include "inpaint360/geometry.hpp"
#include "inpaint360/image.hpp"
#include "inpaint360/prompts.hpp"

namespace inpaint360 {

enum class PrimitiveKind { kSphere, kBox, kCylinder, kPlane };

const char* to_string(PrimitiveKind k);
PrimitiveKind primitive_kind_from_string(const std::string& s);

// Size conventions (all in world units):
//   sphere   size.x = radius
//   box      size   = half extents (before yaw)
//   cylinder size.x = radius, size.z = half height; axis is world z
//   plane    size.x, size.y = half extents of a horizontal rectangle at center.z
struct ScenePrimitive {
  PrimitiveKind kind = PrimitiveKind::kSphere;
  Vec3 center = Vec3::Zero();
  double yaw = 0.0;  // rotation about world z, radians
  Vec3 size = Vec3::Ones();
  Vec3 albedo = Vec3::Constant(0.7);
  // Optional two-tone checker on top of albedo, with square size in world units.
  std::optional<Vec3> checker_albedo;
  double checker_size = 0.25;
  int instance_id = 1;
  std::string name;
  bool removable = false;

  struct Hit {
    double t = std::numeric_limits<double>::infinity();
    Vec3 normal = Vec3::UnitZ();
  };
  std::optional<Hit> intersect(const Ray& ray) const;
  // Signed distance (negative inside); planes are infinitely thin.
  double signed_distance(const Vec3& p) const;
  bool inside(const Vec3& p) const { return signed_distance(p) < 0.0; }
  Aabb bounds() const;
  Vec3 albedo_at(const Vec3& p) const;
};

struct RingSpec {
  int count = 40;
  double radius = 4.2;           // distance from the centroid
  double elevation_deg = 30.0;
  int width = 64;
  int height = 64;
  double focal = 72.0;
};

struct SceneSpec {
  std::vector<ScenePrimitive> primitives;
  RingSpec ring;
  Aabb bounds{Vec3(-1.5, -1.5, -1.5), Vec3(1.5, 1.5, 1.5)};  // radiance field volume
  Vec3 background = Vec3::Zero();
  Vec3 light_dir = Vec3(0.4, 0.3, 0.85).normalized();
  double ambient = 0.35;
};

// The flowerpot-and-flowers-on-a-table scene used by default.
SceneSpec default_scene_spec();

std::string scene_spec_to_json(const SceneSpec& spec);
SceneSpec scene_spec_from_json(const std::string& text);

struct Scene {
  SceneSpec spec;
  Vec3 centroid = Vec3::Zero();
  std::vector<Camera> cameras;  // training ring

  const ScenePrimitive* find(const std::string& name) const;
  const ScenePrimitive* find(int instance_id) const;
  // Signed distance to the scene with removable objects deleted.
  double empty_scene_distance(const Vec3& p) const;
};

// Cameras on a full 360-degree ring around `target`, equal angular spacing
// starting at `phase`, all at 3D distance `ring.radius`.
std::vector<Camera> ring_cameras(const RingSpec& ring, const Vec3& target, double phase, double elevation_deg);

// Validates the spec and places the camera ring. Throws BadSpec for empty
// scenes, scenes without a removable object, or duplicate ids/names.
Scene generate_scene(const SceneSpec& spec, std::uint64_t seed);

struct ViewData {
  Camera camera;
  RgbImage rgb;
  DepthImage depth;  // z-depth; +inf where the ray hits nothing
  IdImage ids;       // instance ids; 0 = background
  RgbImage empty_rgb;
};

struct SyntheticDataset {
  Scene scene;
  std::vector<ViewData> views;
};

struct PixelTrace {
  Vec3 rgb = Vec3::Zero();
  double z_depth = std::numeric_limits<double>::infinity();
  int id = 0;
};

PixelTrace trace_pixel(const SceneSpec& spec, const Camera& cam, int x, int y, bool skip_removable);

SyntheticDataset render_ground_truth(const Scene& scene, const std::vector<Camera>& cameras, int workers = 1);
inline SyntheticDataset render_ground_truth(const Scene& scene, int workers = 1) {
  return render_ground_truth(scene, scene.cameras, workers);
}

struct BoxFailureConfig {
  double q_trunc = 0.0;
  double q_miss = 0.0;
  double phi_min = 0.3;
  double phi_max = 0.7;
};

// Synthetic stand-in for an open-vocabulary detector: tight GT boxes with
// injected truncation/miss failures. Objects not visible in the view yield
// no box. Throws UnknownObject when a name matches nothing in the scene.
std::vector<BoxProposal> propose_boxes(const Scene& scene, const IdImage& ids, std::size_t view_index,
                                       const std::vector<std::string>& objects, const BoxFailureConfig& failure,
                                       std::uint64_t seed);

Mask instance_mask(const IdImage& ids, int instance_id);

struct InpainterPerturbation {
  double color_shift = 0.1;    // per-view RGB offset amplitude
  double blob_amplitude = 0.05;
  double blob_length = 12.0;   // correlation length in pixels
  std::uint64_t seed = 0;
};

// Stand-in for a per-image 2D inpainter: inside each mask the empty-scene
// render plus a per-view color shift and smooth blob noise; outside, the
// source image untouched.
std::vector<RgbImage> simulate_inpainting(const SyntheticDataset& data, const std::vector<Mask>& masks,
                                          const InpainterPerturbation& perturbation);

// 16-bit depth encoding: value = round(z / scale), 0 reserved for "no hit".
struct EncodedDepth {
  Image<std::uint16_t> depth;
  Mask valid;
};
EncodedDepth encode_depth(const DepthImage& depth, double scale);
DepthImage decode_depth(const EncodedDepth& enc, double scale);

// Writes views/*.png, cameras.json, scene.json and manifest.json under dir.
void write_dataset(const std::string& dir, const SyntheticDataset& data, double depth_scale);
SyntheticDataset read_dataset(const std::string& dir);

}  // namespace inpaint360
