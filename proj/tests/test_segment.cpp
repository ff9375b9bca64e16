#include <cmath>
#include <set>

#include <gtest/gtest.h>

#include "inpaint360/errors.hpp"
#include "inpaint360/scene_synth.hpp"
#include "inpaint360/segment.hpp"

using namespace inpaint360;

namespace {

DepthImage ray_depth_from_z(const ViewData& v) {
  DepthImage t(v.depth.width(), v.depth.height(), 1, 0.0);
  for (int y = 0; y < t.height(); ++y)
    for (int x = 0; x < t.width(); ++x) {
      const double z = v.depth.at(x, y);
      if (std::isfinite(z)) t.at(x, y) = z / pixel_center_ray(v.camera, x, y).direction.dot(v.camera.forward());
    }
  return t;
}

std::vector<IdImage> id_maps(const SyntheticDataset& d) {
  std::vector<IdImage> ids;
  for (const auto& v : d.views) ids.push_back(v.ids);
  return ids;
}

std::vector<Camera> cams(const SyntheticDataset& d) {
  std::vector<Camera> c;
  for (const auto& v : d.views) c.push_back(v.camera);
  return c;
}

std::vector<DepthImage> depths(const SyntheticDataset& d) {
  std::vector<DepthImage> out;
  for (const auto& v : d.views) out.push_back(ray_depth_from_z(v));
  return out;
}

// Independent projection: 4x4 inverse, axis flip, intrinsic matrix.
Eigen::Vector2d oracle_pixel(const Camera& c, const Vec3& X) {
  Eigen::Matrix3d K;
  K << c.fx(), 0, c.cx(), 0, c.fy(), c.cy(), 0, 0, 1;
  const Eigen::Vector4d Xc = Eigen::Vector4d(1, -1, -1, 1).asDiagonal() * (c.cam_to_world().inverse() * X.homogeneous());
  const Vec3 uvw = K * Xc.head<3>();
  return {uvw.x() / uvw.z(), uvw.y() / uvw.z()};
}

Mask gt_union(const ViewData& v, const Scene& s, const std::vector<std::string>& objs) {
  std::vector<Mask> ms;
  for (const auto& o : objs) ms.push_back(instance_mask(v.ids, s.find(o)->instance_id));
  return union_masks(ms);
}

// Sphere in front of a back wall, seen by two cameras.
SyntheticDataset toy_scene(double wall_y = 3.0) {
  SceneSpec spec;
  ScenePrimitive ball;
  ball.kind = PrimitiveKind::kSphere;
  ball.size = Vec3::Constant(0.5);
  ball.name = "ball";
  ball.instance_id = 1;
  ball.removable = true;
  ScenePrimitive wall;
  wall.kind = PrimitiveKind::kBox;
  wall.center = Vec3(0, wall_y, 0);
  wall.size = Vec3(6, 0.1, 6);
  wall.name = "wall";
  wall.instance_id = 2;
  spec.primitives = {ball, wall};
  Scene scene = generate_scene(spec, 0);
  const std::vector<Camera> c = {look_at(64, 64, 60, Vec3(0, -4, 0), Vec3::Zero()),
                                 look_at(64, 64, 60, Vec3(2.4, -3.2, 0.4), Vec3::Zero())};
  return render_ground_truth(scene, c);
}

MaskSet single_object_set(const std::vector<Mask>& masks, const std::vector<std::optional<BoxProposal>>& boxes) {
  MaskSet s;
  s.objects = {"ball"};
  for (std::size_t n = 0; n < masks.size(); ++n) {
    ViewMasks vm;
    ObjectView ov;
    ov.mask = masks[n];
    ov.box = boxes[n];
    if (ov.box) ov.prompts = seed_prompts_from_box(*ov.box);
    vm.objects.push_back(ov);
    vm.united = masks[n];
    s.views.push_back(vm);
  }
  return s;
}

BoxProposal box_of(const Mask& m) {
  BoxProposal b{m.width(), 0, m.height(), 0};
  for (int y = 0; y < m.height(); ++y)
    for (int x = 0; x < m.width(); ++x)
      if (m.at(x, y)) b.l = std::min(b.l, x), b.r = std::max(b.r, x + 1), b.u = std::min(b.u, y), b.d = std::max(b.d, y + 1);
  return b;
}

}  // namespace

TEST(Instruction, CaptionStringsParse) {
  EXPECT_EQ(parse_instruction("Remove the flowerpot and flowers").objects,
            (std::vector<std::string>{"flowerpot", "flowers"}));
  EXPECT_EQ(parse_instruction("Remove the vase and the flowers.").objects,
            (std::vector<std::string>{"vase", "flowers"}));
}

TEST(Instruction, CaseAndPunctuation) {
  EXPECT_EQ(parse_instruction("  REMOVE THE Vase!  ").objects, (std::vector<std::string>{"vase"}));
  EXPECT_EQ(parse_instruction("remove the a and b and the c").objects, (std::vector<std::string>{"a", "b", "c"}));
}

TEST(Instruction, MalformedInputsReportPositions) {
  auto position = [](const std::string& s) -> long {
    try {
      parse_instruction(s);
    } catch (const ParseError& e) {
      return static_cast<long>(e.position());
    }
    return -1;
  };
  EXPECT_EQ(position("Paint the vase red"), 0);
  EXPECT_EQ(position("Remove a vase"), 7);
  EXPECT_EQ(position("Remove the vase or flowers"), 16);
  EXPECT_EQ(position("Remove the vase and"), 19);
  EXPECT_EQ(position("Remove the"), 10);
  EXPECT_EQ(position("Remove the and"), 11);
  EXPECT_EQ(position("Remove the va$e"), 13);
  EXPECT_EQ(position(""), 0);
  EXPECT_EQ(position("Paint the vase red"), 0);
}

TEST(Prompts, UniformObjectGivesFivePrompts) {
  const IdImage ids(20, 20, 1, 3);
  const BoxProposal box{4, 14, 2, 12};
  const auto p = seed_prompts_from_box(box, &ids, 3);
  ASSERT_EQ(p.size(), 5u);
  for (const auto& q : p) EXPECT_TRUE(box.contains(q.x, q.y));
  EXPECT_EQ(p[0].x, 9);
  EXPECT_EQ(p[0].y, 7);
}

TEST(Prompts, HoleUnderCenterDropsCenter) {
  IdImage ids(20, 20, 1, 0);
  for (int y = 0; y < 20; ++y)
    for (int x = 0; x < 20; ++x) {
      const double r = std::hypot(x + 0.5 - 10, y + 0.5 - 10);
      ids.at(x, y) = (r > 2.5 && r < 9.5) ? 3 : 0;
    }
  const auto p = seed_prompts_from_box(BoxProposal{1, 19, 1, 19}, &ids);
  ASSERT_EQ(p.size(), 4u);
  for (const auto& q : p) EXPECT_EQ(ids.at(q.x, q.y), 3);
}

TEST(Prompts, DegenerateBoxDeduplicates) {
  const auto p = seed_prompts_from_box(BoxProposal{5, 6, 7, 8});
  ASSERT_EQ(p.size(), 1u);
  EXPECT_EQ(p[0].x, 5);
  EXPECT_EQ(p[0].y, 7);
}

TEST(Oracle, FullBoxGivesExactMask) {
  const auto d = toy_scene();
  OracleSegmenter seg(id_maps(d));
  const Mask gt = instance_mask(d.views[0].ids, 1);
  const BoxProposal box = box_of(gt);
  EXPECT_EQ(mask_iou(seg.segment(0, 0, seed_prompts_from_box(box, &d.views[0].ids), box), gt), 1.0);
  EXPECT_THROW(seg.segment(0, 0, {}, box), EmptyPrompts);
}

TEST(Oracle, TruncatedBoxGivesCoveredFraction) {
  const auto d = toy_scene();
  OracleSegmenter seg(id_maps(d));
  const Mask gt = instance_mask(d.views[0].ids, 1);
  BoxProposal box = box_of(gt);
  box.r = box.l + box.width() / 2;
  std::size_t covered = 0;
  for (int y = box.u; y < box.d; ++y)
    for (int x = box.l; x < box.r; ++x) covered += gt.at(x, y);
  const double fraction = static_cast<double>(covered) / static_cast<double>(mask_area(gt));
  auto prompts = seed_prompts_from_box(box, &d.views[0].ids);
  const Mask part = seg.segment(0, 0, prompts, box);
  EXPECT_NEAR(mask_iou(part, gt), fraction, 1e-12);
  EXPECT_NEAR(fraction, 0.5, 0.1);

  // One warped prompt outside the box lifts the clip.
  prompts.push_back(PointPrompt{box.r + 2, (box.u + box.d) / 2, true, PromptSource::kWarped, 1});
  ASSERT_TRUE(gt.at(prompts.back().x, prompts.back().y));
  EXPECT_EQ(mask_iou(seg.segment(0, 0, prompts, box), gt), 1.0);
}

TEST(Union, OrAlgebra) {
  Mask a(8, 8, 1, 0), b(8, 8, 1, 0);
  for (int i = 0; i < 4; ++i) a.at(i, 1) = 1, b.at(i, 5) = 1;
  a.at(7, 7) = 1;
  EXPECT_EQ(union_masks({a}), a);
  EXPECT_EQ(mask_area(union_masks({a, b})), mask_area(a) + mask_area(b));
  EXPECT_EQ(union_masks({a, b}), union_masks({b, a}));
  EXPECT_EQ(union_masks({a, a}), a);
  EXPECT_THROW(union_masks({a, Mask(4, 8, 1, 0)}), DimensionMismatch);
}

TEST(Refine, FullMasksAreAFixedPoint) {
  const auto d = toy_scene();
  std::vector<Mask> masks;
  std::vector<std::optional<BoxProposal>> boxes;
  for (const auto& v : d.views) {
    masks.push_back(instance_mask(v.ids, 1));
    boxes.push_back(box_of(masks.back()));
  }
  const MaskSet in = single_object_set(masks, boxes);
  RefineConfig cfg;
  cfg.views_per_target = 1;
  cfg.rays_per_source = 200;
  const MaskSet out = refine_depth_warp(in, depths(d), cams(d), cfg, OracleSegmenter(id_maps(d)));
  EXPECT_EQ(out.rounds, 0);
  EXPECT_EQ(out.checksum(), in.checksum());
}

TEST(Refine, TwoViewToyConvergesInOneRound) {
  const auto d = toy_scene();
  const Mask full_a = instance_mask(d.views[0].ids, 1), gt_b = instance_mask(d.views[1].ids, 1);
  BoxProposal box_b = box_of(gt_b);
  box_b.l = box_b.r - box_b.width() / 2;
  OracleSegmenter seg(id_maps(d));
  const Mask half_b = seg.segment(1, 0, seed_prompts_from_box(box_b, &d.views[1].ids), box_b);
  ASSERT_LT(mask_iou(half_b, gt_b), 0.7);
  const MaskSet in = single_object_set({full_a, half_b}, {box_of(full_a), box_b});

  RefineConfig cfg;
  cfg.views_per_target = 1;
  cfg.rays_per_source = 20;
  cfg.seed = 4;
  const auto dep = depths(d);
  const MaskSet out = refine_depth_warp(in, dep, cams(d), cfg, seg);
  EXPECT_EQ(mask_iou(out.views[1].united, gt_b), 1.0);
  EXPECT_EQ(out.views[0].united, full_a);
  EXPECT_EQ(out.rounds, 1);  // second round adds nothing and stops

  // Every warped prompt in B is the oracle projection of some in-mask pixel of A.
  std::set<std::pair<int, int>> reachable;
  for (int y = 0; y < 64; ++y)
    for (int x = 0; x < 64; ++x)
      if (full_a.at(x, y)) {
        const Vec3 X = point_from_depth(pixel_center_ray(d.views[0].camera, x, y), dep[0].at(x, y));
        const auto px = oracle_pixel(d.views[1].camera, X);
        reachable.emplace(static_cast<int>(std::floor(px.x())), static_cast<int>(std::floor(px.y())));
      }
  int warped = 0;
  for (const auto& p : out.views[1].objects[0].prompts) {
    if (p.source != PromptSource::kWarped) continue;
    ++warped;
    EXPECT_EQ(p.origin_view, 0);
    EXPECT_TRUE(reachable.count({p.x, p.y}));
    EXPECT_FALSE(half_b.at(p.x, p.y));
  }
  EXPECT_GT(warped, 0);
}

TEST(Refine, FarBackgroundPointsAreDiscarded) {
  const auto d = toy_scene(6.0);
  // View A's mask bleeds onto a 4x4 patch of wall far behind the ball.
  Mask a = instance_mask(d.views[0].ids, 1);
  auto wall_patch = [&](int x0, int y0) {
    for (int y = y0 - 1; y <= y0 + 4; ++y)
      for (int x = x0 - 1; x <= x0 + 4; ++x)
        if (!d.views[0].ids.contains(x, y) || d.views[0].ids.at(x, y) != 2 || a.at(x, y)) return false;
    return true;
  };
  // Closest free patch to the ball, left of it on row 30.
  int px = -1, py = 30;
  for (int x = 32; x > 0 && px < 0; --x)
    if (wall_patch(x, py)) px = x;
  ASSERT_GE(px, 0);
  for (int y = py; y < py + 4; ++y)
    for (int x = px; x < px + 4; ++x) a.at(x, y) = 1;
  ASSERT_LT(16.0 / mask_area(a), 0.1);
  const Mask b = instance_mask(d.views[1].ids, 1);
  const MaskSet in = single_object_set({a, b}, {std::nullopt, std::nullopt});

  RefineConfig cfg;
  cfg.views_per_target = 1;
  cfg.rays_per_source = 3000;
  cfg.max_rounds = 1;
  auto prompts_on_wall = [&](const RefineConfig& c) {
    const MaskSet out = refine_depth_warp(in, depths(d), cams(d), c, OracleSegmenter(id_maps(d)));
    int wall = 0;
    for (const auto& p : out.views[1].objects[0].prompts) wall += d.views[1].ids.at(p.x, p.y) == 2;
    return wall;
  };
  EXPECT_EQ(prompts_on_wall(cfg), 0);
  cfg.depth_percentile_factor = 100.0;  // threshold off: the wall points get through
  EXPECT_GT(prompts_on_wall(cfg), 0);
}

TEST(Refine, MissingDepthThrows) {
  const auto d = toy_scene();
  const Mask a = instance_mask(d.views[0].ids, 1);
  const MaskSet in = single_object_set({a, a}, {std::nullopt, std::nullopt});
  auto dep = depths(d);
  dep[1] = DepthImage();
  EXPECT_THROW(refine_depth_warp(in, dep, cams(d), {}, OracleSegmenter(id_maps(d))), MissingDepth);
  dep.pop_back();
  EXPECT_THROW(refine_depth_warp(in, dep, cams(d), {}, OracleSegmenter(id_maps(d))), MissingDepth);
}

class RefineDefaultScene : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    data_ = new SyntheticDataset(render_ground_truth(generate_scene(default_scene_spec(), 2), 1));
  }
  static void TearDownTestSuite() { delete data_; }

  MaskSet initial(std::uint64_t seed, double q_trunc = 0.3) const {
    BoxFailureConfig f;
    f.q_trunc = q_trunc;
    std::vector<std::vector<BoxProposal>> boxes;
    for (std::size_t n = 0; n < data_->views.size(); ++n)
      boxes.push_back(propose_boxes(data_->scene, data_->views[n].ids, n, objects_, f, seed));
    const auto ids = id_maps(*data_);
    return initial_masks(objects_, boxes, &ids, OracleSegmenter(ids), 80, 80);
  }
  double mean_iou(const MaskSet& s) const {
    double sum = 0.0;
    for (std::size_t n = 0; n < s.views.size(); ++n)
      sum += mask_iou(s.views[n].united, gt_union(data_->views[n], data_->scene, objects_));
    return sum / static_cast<double>(s.views.size());
  }

  static SyntheticDataset* data_;
  const std::vector<std::string> objects_{"flowerpot", "flowers"};
};
SyntheticDataset* RefineDefaultScene::data_ = nullptr;

TEST_F(RefineDefaultScene, RecoversTruncatedViewsMonotonically) {
  const MaskSet init = initial(7);
  const double before = mean_iou(init);
  EXPECT_LT(before, 0.95);
  RefineConfig cfg;
  cfg.seed = 1;
  const MaskSet out = refine_depth_warp(init, depths(*data_), cams(*data_), cfg, OracleSegmenter(id_maps(*data_)));
  EXPECT_LE(out.rounds, cfg.max_rounds);
  EXPECT_GE(mean_iou(out), 0.95);
  for (std::size_t r = 1; r < out.area_history.size(); ++r)
    for (std::size_t n = 0; n < out.views.size(); ++n) EXPECT_GE(out.area_history[r][n], out.area_history[r - 1][n]);
}

TEST_F(RefineDefaultScene, WarpedPromptsAreSoundUnderPerfectDepth) {
  RefineConfig cfg;
  cfg.z_tolerance = 0.02;  // exact depth needs only a rounding margin
  int warped = 0;
  for (std::uint64_t seed : {3, 8, 13}) {
    cfg.seed = seed;
    const MaskSet out =
        refine_depth_warp(initial(11 + seed, 0.5), depths(*data_), cams(*data_), cfg, OracleSegmenter(id_maps(*data_)));
    for (std::size_t n = 0; n < out.views.size(); ++n)
      for (std::size_t q = 0; q < objects_.size(); ++q) {
        const int id = data_->scene.find(objects_[q])->instance_id;
        for (const auto& p : out.views[n].objects[q].prompts) {
          if (p.source != PromptSource::kWarped) continue;
          ++warped;
          EXPECT_EQ(data_->views[n].ids.at(p.x, p.y), id) << "seed " << seed << " view " << n << " pixel " << p.x << "," << p.y;
        }
      }
  }
  EXPECT_GT(warped, 0);
}

TEST_F(RefineDefaultScene, DeterministicUnderSeedAndWorkers) {
  RefineConfig cfg;
  cfg.seed = 5;
  const auto run = [&](int workers) {
    cfg.workers = workers;
    return refine_depth_warp(initial(3), depths(*data_), cams(*data_), cfg, OracleSegmenter(id_maps(*data_))).checksum();
  };
  const auto a = run(1);
  EXPECT_EQ(a, run(1));
  EXPECT_EQ(a, run(3));
}

TEST_F(RefineDefaultScene, PromptFileListsEveryPrompt) {
  const MaskSet s = initial(7);
  const std::string text = prompts_to_json(s, 4);
  EXPECT_NE(text.find("\"format\": \"inpaint360-prompts\""), std::string::npos);
  EXPECT_NE(text.find("\"source\": \"box-seed\""), std::string::npos);
}
