#include "inpaint360/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "inpaint360/blob.hpp"
#include "inpaint360/errors.hpp"
#include "inpaint360/png_io.hpp"

namespace inpaint360 {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

constexpr double kRenderDepthScale = 2e-4;  // ray depth per 16-bit level in rendered depth maps

struct StageDef {
  std::string name;
  std::vector<std::string> upstream;
  std::vector<std::string> config_keys;  // top-level config sections the stage reads
};

const std::vector<StageDef>& stage_defs() {
  static const std::vector<StageDef> defs = {
      {"synth", {}, {"scene_spec", "depth_scale"}},
      {"train", {"synth"}, {"train"}},
      {"segment", {"synth"}, {"instruction", "boxes", "masks_dir"}},
      {"refine-masks", {"synth", "train", "segment"}, {"refine", "masks_dir"}},
      {"inpaint", {"synth", "refine-masks"}, {"inpaint", "mask_dilation", "inpainted_dir"}},
      {"retrain", {"synth", "inpaint"}, {"retrain"}},
      {"prior-train", {}, {"prior", "prior_train"}},
      {"finetune", {"synth", "inpaint", "retrain", "prior-train"}, {"prior", "finetune", "variants"}},
      {"render", {"synth", "retrain", "finetune"}, {"finetune", "variants"}},
      {"eval", {"synth", "inpaint", "retrain", "finetune", "render"}, {"eval", "finetune", "variants"}},
  };
  return defs;
}

const StageDef& stage_def(const std::string& name) {
  for (const auto& d : stage_defs())
    if (d.name == name) return d;
  throw ConfigError("unknown stage '" + name + "'");
}

std::uint64_t stage_seed(const PipelineConfig& cfg, const std::string& stage) {
  std::uint64_t h = 0;
  for (unsigned char c : stage) h = h * 131 + c;
  return derive_seed(cfg.seed, {0x57a9e, h});
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  if (!f) throw MissingInput("missing file " + p.string());
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

void write_text(const fs::path& p, const std::string& text) {
  fs::create_directories(p.parent_path());
  std::ofstream f(p, std::ios::binary);
  if (!f) throw IoError("cannot write " + p.string());
  f << text;
  if (!f) throw IoError("failed writing " + p.string());
}

std::string indexed(const std::string& prefix, std::size_t v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s_%03zu.png", prefix.c_str(), v);
  return buf;
}

std::string config_digest(const PipelineConfig& cfg, const StageDef& def) {
  const json all = json::parse(config_to_json(cfg));
  ordered_json sel;
  sel["stage"] = def.name;
  sel["seed"] = cfg.seed;
  for (const auto& k : def.config_keys) sel[k] = all.at(k);
  const std::string text = sel.dump();
  return sha256_hex(std::vector<std::uint8_t>(text.begin(), text.end()));
}

// Every regular file below dir except the manifest, by relative path.
std::map<std::string, std::string> hash_tree(const fs::path& dir) {
  std::map<std::string, std::string> out;
  if (!fs::exists(dir)) return out;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    const std::string rel = fs::relative(e.path(), dir).generic_string();
    if (rel == "stage.json") continue;
    out[rel] = sha256_file(e.path().string());
  }
  return out;
}

struct Manifest {
  std::string digest;
  std::map<std::string, std::string> inputs, outputs;
};

std::optional<Manifest> read_manifest(const fs::path& dir) {
  const fs::path p = dir / "stage.json";
  if (!fs::exists(p)) return std::nullopt;
  try {
    const json j = json::parse(slurp(p));
    Manifest m;
    m.digest = j.at("config_digest").get<std::string>();
    m.inputs = j.at("inputs").get<std::map<std::string, std::string>>();
    m.outputs = j.at("outputs").get<std::map<std::string, std::string>>();
    return m;
  } catch (const json::exception&) {
    return std::nullopt;
  }
}

void write_manifest(const fs::path& dir, const std::string& stage, const Manifest& m) {
  ordered_json j;
  j["stage"] = stage;
  j["config_digest"] = m.digest;
  j["inputs"] = m.inputs;
  j["outputs"] = m.outputs;
  write_text(dir / "stage.json", j.dump(2) + "\n");
}

std::map<std::string, std::string> hash_external_dir(const std::string& dir, const std::string& tag) {
  std::map<std::string, std::string> out;
  if (dir.empty()) return out;
  if (!fs::is_directory(dir)) throw MissingInput(tag + " directory not found: " + dir);
  for (const auto& [rel, sha] : hash_tree(dir)) out[tag + ":" + rel] = sha;
  return out;
}

class Stage {
 public:
  Stage(const PipelineConfig& cfg, const StageDef& def)
      : cfg(cfg), def(def), root(cfg.out_dir), dir(root / def.name), seed(stage_seed(cfg, def.name)) {}

  fs::path in(const std::string& stage) const { return root / stage; }

  SyntheticDataset dataset() const { return read_dataset(in("synth").string()); }

  std::vector<Camera> cameras() const {
    const CameraSet set = load_cameras((in("synth") / "cameras.json").string());
    std::vector<Camera> cams;
    for (const auto& [i, c] : set) {
      if (i != static_cast<int>(cams.size())) throw BadSpec("cameras.json: view indices must be contiguous");
      cams.push_back(c);
    }
    return cams;
  }

  std::vector<Mask> inpaint_masks(std::size_t n) const {
    std::vector<Mask> masks;
    for (std::size_t v = 0; v < n; ++v) masks.push_back(read_mask_png((in("inpaint") / indexed("mask", v)).string()));
    return masks;
  }

  const PipelineConfig& cfg;
  const StageDef& def;
  fs::path root, dir;
  std::uint64_t seed;
};

// ---- mask sets ----

ordered_json maskset_json(const MaskSet& set) {
  ordered_json j;
  j["objects"] = set.objects;
  j["rounds"] = set.rounds;
  j["area_history"] = set.area_history;
  j["checksum"] = set.checksum();
  ordered_json views = ordered_json::array();
  for (const auto& vm : set.views) {
    ordered_json objs = ordered_json::array();
    for (const auto& ov : vm.objects) {
      ordered_json o;
      if (ov.box)
        o["box"] = {{"l", ov.box->l}, {"r", ov.box->r}, {"u", ov.box->u}, {"d", ov.box->d},
                    {"score", ov.box->score}, {"object", ov.box->object}, {"truncated", ov.box->truncated}};
      else
        o["box"] = nullptr;
      ordered_json ps = ordered_json::array();
      for (const auto& p : ov.prompts)
        ps.push_back({{"x", p.x}, {"y", p.y}, {"positive", p.positive}, {"source", to_string(p.source)},
                      {"origin_view", p.origin_view}});
      o["prompts"] = ps;
      objs.push_back(o);
    }
    views.push_back(objs);
  }
  j["views"] = views;
  return j;
}

void write_maskset(const fs::path& dir, const MaskSet& set) {
  write_text(dir / "maskset.json", maskset_json(set).dump(2) + "\n");
  fs::create_directories(dir / "masks");
  for (std::size_t v = 0; v < set.views.size(); ++v) {
    for (std::size_t q = 0; q < set.views[v].objects.size(); ++q)
      write_mask_png((dir / "masks" / FileSegmenter::mask_name(v, q)).string(), set.views[v].objects[q].mask);
    write_mask_png((dir / indexed("union", v)).string(), set.views[v].united);
  }
}

MaskSet read_maskset(const fs::path& dir) {
  MaskSet set;
  try {
    const json j = json::parse(slurp(dir / "maskset.json"));
    set.objects = j.at("objects").get<std::vector<std::string>>();
    set.rounds = j.at("rounds").get<int>();
    set.area_history = j.at("area_history").get<std::vector<std::vector<std::size_t>>>();
    const auto& views = j.at("views");
    for (std::size_t v = 0; v < views.size(); ++v) {
      ViewMasks vm;
      for (std::size_t q = 0; q < views[v].size(); ++q) {
        const auto& o = views[v][q];
        ObjectView ov;
        if (!o.at("box").is_null()) {
          const auto& b = o.at("box");
          ov.box = BoxProposal{b.at("l"), b.at("r"), b.at("u"), b.at("d"), b.at("score"), b.at("object"), b.at("truncated")};
        }
        for (const auto& p : o.at("prompts"))
          ov.prompts.push_back({p.at("x"), p.at("y"), p.at("positive"),
                                p.at("source").get<std::string>() == "warped" ? PromptSource::kWarped
                                                                                : PromptSource::kBoxSeed,
                                p.at("origin_view")});
        ov.mask = read_mask_png((dir / "masks" / FileSegmenter::mask_name(v, q)).string());
        vm.objects.push_back(std::move(ov));
      }
      vm.united = read_mask_png((dir / indexed("union", v)).string());
      set.views.push_back(std::move(vm));
    }
  } catch (const json::exception& e) {
    throw IoError(std::string("maskset.json: ") + e.what());
  }
  return set;
}

// ---- helpers ----

std::vector<DepthImage> render_ray_depths(const RadianceField& field, const std::vector<Camera>& cams, int workers) {
  std::vector<DepthImage> depths;
  RenderOptions ro;
  ro.workers = workers;
  for (const auto& c : cams) depths.push_back(render_view(field, c, ro).depth);
  return depths;
}

Mask dilate(const Mask& m, int r) {
  if (r <= 0) return m;
  Mask out(m.width(), m.height(), 1, 0);
  for (int y = 0; y < m.height(); ++y)
    for (int x = 0; x < m.width(); ++x) {
      if (!m.at(x, y)) continue;
      for (int dy = -r; dy <= r; ++dy)
        for (int dx = -r; dx <= r; ++dx)
          if (out.contains(x + dx, y + dy)) out.at(x + dx, y + dy) = 1;
    }
  return out;
}

FieldStageConfig seeded(FieldStageConfig f, std::uint64_t seed, int workers) {
  f.train.seed = seed;
  f.train.workers = workers;
  return f;
}

void write_train_log(const fs::path& p, const TrainLog& log) {
  ordered_json j = ordered_json::array();
  for (const auto& [it, loss] : log.loss) j.push_back({{"iteration", it}, {"l1", loss}});
  write_text(p, j.dump(2) + "\n");
}

RadianceField train_on(const std::vector<RgbImage>& images, const std::vector<Camera>& cams, const Aabb& aabb,
                       const FieldStageConfig& f, TrainLog* log) {
  std::vector<TrainingView> views;
  for (std::size_t v = 0; v < images.size(); ++v) views.push_back({&images[v], nullptr, cams[v]});
  return train_field(views, f.train, RadianceField(f.resolution, aabb), log);
}

FinetuneConfig variant_config(const FinetuneConfig& base, const std::string& variant) {
  FinetuneConfig f = base;
  if (variant == "base" || variant == "in") f.loss.lambda_geom = 0.0;
  if (variant == "base" || variant == "geom") f.loss.lambda_in = 0.0;
  return f;
}

// ---- stages ----

void run_synth(const Stage& s) {
  SceneSpec spec = default_scene_spec();
  if (!s.cfg.scene_spec.empty()) spec = scene_spec_from_json(slurp(s.cfg.scene_spec));
  const Scene scene = generate_scene(spec, s.seed);
  write_dataset(s.dir.string(), render_ground_truth(scene, s.cfg.workers), s.cfg.depth_scale);
}

void run_train(const Stage& s) {
  const SyntheticDataset data = s.dataset();
  std::vector<RgbImage> images;
  std::vector<Camera> cams;
  for (const auto& v : data.views) {
    images.push_back(v.rgb);
    cams.push_back(v.camera);
  }
  TrainLog log;
  const RadianceField field =
      train_on(images, cams, data.scene.spec.bounds, seeded(s.cfg.train, s.seed, s.cfg.workers), &log);
  save_field((s.dir / "field.bin").string(), field);
  write_train_log(s.dir / "log.json", log);
}

std::unique_ptr<Segmenter> make_segmenter(const Stage& s, const SyntheticDataset& data) {
  if (!s.cfg.masks_dir.empty()) {
    if (!fs::is_directory(s.cfg.masks_dir)) throw MissingInput("masks directory not found: " + s.cfg.masks_dir);
    const Camera& c = data.views.front().camera;
    return std::make_unique<FileSegmenter>(s.cfg.masks_dir, c.width(), c.height());
  }
  std::vector<IdImage> ids;
  for (const auto& v : data.views) ids.push_back(v.ids);
  return std::make_unique<OracleSegmenter>(std::move(ids));
}

void run_segment(const Stage& s) {
  const SyntheticDataset data = s.dataset();
  if (data.views.empty()) throw MissingInput("segment: dataset has no views");
  const Instruction instr = parse_instruction(s.cfg.instruction);
  std::vector<std::vector<BoxProposal>> boxes;
  std::vector<IdImage> ids;
  for (std::size_t v = 0; v < data.views.size(); ++v) {
    boxes.push_back(propose_boxes(data.scene, data.views[v].ids, v, instr.objects, s.cfg.boxes, s.seed));
    ids.push_back(data.views[v].ids);
  }
  const auto seg = make_segmenter(s, data);
  const Camera& c = data.views.front().camera;
  const MaskSet set = initial_masks(instr.objects, boxes, s.cfg.masks_dir.empty() ? &ids : nullptr, *seg, c.width(),
                                    c.height(), s.cfg.workers);
  write_maskset(s.dir, set);
}

double mean_union_iou(const MaskSet& set, const SyntheticDataset& data) {
  double sum = 0.0;
  for (std::size_t v = 0; v < set.views.size(); ++v) {
    std::vector<Mask> gt;
    for (const auto& name : set.objects)
      if (const auto* p = data.scene.find(name)) gt.push_back(instance_mask(data.views[v].ids, p->instance_id));
    sum += gt.empty() ? 1.0 : mask_iou(set.views[v].united, union_masks(gt));
  }
  return set.views.empty() ? 1.0 : sum / static_cast<double>(set.views.size());
}

void run_refine(const Stage& s) {
  const SyntheticDataset data = s.dataset();
  const RadianceField field = load_field((s.in("train") / "field.bin").string());
  MaskSet set = read_maskset(s.in("segment"));
  std::vector<Camera> cams;
  for (const auto& v : data.views) cams.push_back(v.camera);
  const auto depths = render_ray_depths(field, cams, s.cfg.workers);
  RefineConfig rc = s.cfg.refine;
  rc.seed = s.seed;
  rc.workers = s.cfg.workers;
  const auto seg = make_segmenter(s, data);
  const double before = mean_union_iou(set, data);
  set = refine_depth_warp(std::move(set), depths, cams, rc, *seg);
  write_maskset(s.dir, set);
  for (std::size_t v = 0; v < set.views.size(); ++v) {
    char name[32];
    std::snprintf(name, sizeof name, "view_%03zu.json", v);
    write_text(s.dir / "prompts" / name, prompts_to_json(set, v));
  }
  ordered_json r;
  r["rounds"] = set.rounds;
  r["area_history"] = set.area_history;
  r["mean_iou_before"] = before;
  r["mean_iou_after"] = mean_union_iou(set, data);
  write_text(s.dir / "rounds.json", r.dump(2) + "\n");
}

void run_inpaint(const Stage& s) {
  const SyntheticDataset data = s.dataset();
  std::vector<Mask> masks;
  for (std::size_t v = 0; v < data.views.size(); ++v)
    masks.push_back(dilate(read_mask_png((s.in("refine-masks") / indexed("union", v)).string()), s.cfg.mask_dilation));
  std::vector<RgbImage> images;
  if (!s.cfg.inpainted_dir.empty()) {
    for (std::size_t v = 0; v < data.views.size(); ++v) {
      images.push_back(read_png_rgb((fs::path(s.cfg.inpainted_dir) / indexed("rgb", v)).string()));
      require_same_size(images.back(), masks[v], "inpainted image");
    }
  } else {
    InpainterPerturbation p = s.cfg.inpaint;
    p.seed = s.seed;
    images = simulate_inpainting(data, masks, p);
  }
  fs::create_directories(s.dir);
  for (std::size_t v = 0; v < data.views.size(); ++v) {
    write_png_rgb((s.dir / indexed("rgb", v)).string(), images[v]);
    write_mask_png((s.dir / indexed("mask", v)).string(), masks[v]);
  }
}

void run_retrain(const Stage& s) {
  const std::vector<Camera> cams = s.cameras();
  const SceneSpec spec = scene_spec_from_json(slurp(s.in("synth") / "scene.json"));
  std::vector<RgbImage> images;
  for (std::size_t v = 0; v < cams.size(); ++v) images.push_back(read_png_rgb((s.in("inpaint") / indexed("rgb", v)).string()));
  TrainLog log;
  RadianceField field;
  try {
    field = train_on(images, cams, spec.bounds, seeded(s.cfg.retrain, s.seed, s.cfg.workers), &log);
  } catch (const NumericalError& e) {
    throw NumericalError("retrain", e.iteration());
  }
  save_field((s.dir / "field.bin").string(), field);
  write_train_log(s.dir / "log.json", log);
}

void run_prior_train(const Stage& s) {
  const PriorTrainConfig& pt = s.cfg.prior_train;
  const auto corpus = procedural_corpus(pt.corpus_shapes, derive_seed(s.seed, {1}));
  std::vector<OccupancyCube> cubes;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    auto c = sample_training_cubes(corpus[i], s.cfg.prior, derive_seed(s.seed, {2, i}));
    for (auto& cube : c) cubes.push_back(std::move(cube));
  }
  DenoiserShape shape = pt.net;
  shape.m = s.cfg.prior.m;
  DenoiserNet<float> net(shape, derive_seed(s.seed, {3}));
  const NoiseSchedule schedule = NoiseSchedule::linear(pt.schedule_steps, pt.beta_start, pt.beta_end);
  DdpmTrainConfig dc = pt.ddpm;
  dc.seed = derive_seed(s.seed, {4});
  dc.workers = s.cfg.workers;
  DdpmLog log;
  train_ddpm(cubes, net, schedule, dc, &log);
  save_denoiser((s.dir / "denoiser.bin").string(), net, schedule);
  write_text(s.dir / "corpus.json", corpus_manifest_json(corpus, derive_seed(s.seed, {1})));
  ordered_json j;
  j["cubes"] = cubes.size();
  j["parameters"] = net.parameter_count();
  ordered_json losses = ordered_json::array();
  for (const auto& [step, loss] : log.loss) losses.push_back({{"step", step}, {"mse", loss}});
  j["loss"] = losses;
  write_text(s.dir / "log.json", j.dump(2) + "\n");
}

void run_finetune(const Stage& s) {
  const std::vector<Camera> cams = s.cameras();
  const RadianceField retrained = load_field((s.in("retrain") / "field.bin").string());
  std::vector<RgbImage> images;
  for (std::size_t v = 0; v < cams.size(); ++v) images.push_back(read_png_rgb((s.in("inpaint") / indexed("rgb", v)).string()));
  const std::vector<Mask> masks = s.inpaint_masks(cams.size());
  const auto depths = render_ray_depths(retrained, cams, s.cfg.workers);
  const VisibleRegion region = build_visible_region(retrained.aabb(), masks, depths, cams, s.cfg.prior);
  NoiseSchedule schedule;
  const DenoiserNet<float> net = load_denoiser((s.in("prior-train") / "denoiser.bin").string(), &schedule);
  if (net.shape().m != s.cfg.prior.m) throw ConfigError("finetune: denoiser cube size differs from prior.m");
  const DiffusionPredictor predictor(net, schedule, s.cfg.prior.t_star);
  std::vector<FinetuneView> views;
  for (std::size_t v = 0; v < cams.size(); ++v) views.push_back({cams[v], &images[v], &masks[v]});
  ordered_json summary;
  summary["visible_points"] = region.points.size();
  summary["visible_cubes"] = region.cube_centers.size();
  for (const auto& variant : s.cfg.variants) {
    FinetuneConfig fc = variant_config(s.cfg.finetune, variant);
    fc.seed = derive_seed(s.seed, {5});
    fc.workers = s.cfg.workers;
    FinetuneLog log;
    const RadianceField out = finetune_field(retrained, views, region, &predictor, s.cfg.prior, fc, &log);
    fs::create_directories(s.dir / variant);
    save_field((s.dir / variant / "field.bin").string(), out);
    ordered_json lj = ordered_json::array();
    for (const auto& [it, t] : log.terms) lj.push_back({{"iteration", it}, {"geom", t.geom}, {"in", t.in}, {"pix", t.pix}});
    write_text(s.dir / variant / "log.json", lj.dump(2) + "\n");
  }
  write_text(s.dir / "region.json", summary.dump(2) + "\n");
}

std::vector<std::pair<std::string, fs::path>> result_fields(const Stage& s) {
  std::vector<std::pair<std::string, fs::path>> out = {{"retrain", s.in("retrain") / "field.bin"}};
  for (const auto& v : s.cfg.variants) out.emplace_back(v, s.in("finetune") / v / "field.bin");
  return out;
}

void run_render(const Stage& s) {
  const std::vector<Camera> cams = s.cameras();
  RenderOptions ro;
  ro.samples_per_ray = s.cfg.finetune.samples_per_ray;
  ro.stop_transmittance = s.cfg.finetune.stop_transmittance;
  ro.workers = s.cfg.workers;
  for (const auto& [name, path] : result_fields(s)) {
    const RadianceField field = load_field(path.string());
    fs::create_directories(s.dir / name);
    for (std::size_t v = 0; v < cams.size(); ++v) {
      const ViewRender r = render_view(field, cams[v], ro);
      write_png_rgb((s.dir / name / indexed("rgb", v)).string(), r.rgb);
      Image<std::uint16_t> d(r.depth.width(), r.depth.height(), 1, 0);
      for (std::size_t i = 0; i < d.data().size(); ++i)
        d.data()[i] = static_cast<std::uint16_t>(std::clamp(std::llround(r.depth.data()[i] / kRenderDepthScale), 0LL, 65535LL));
      write_png_gray16((s.dir / name / indexed("depth", v)).string(), d);
    }
  }
}

void run_eval(const Stage& s) {
  const std::vector<Camera> cams = s.cameras();
  const Scene scene = generate_scene(scene_spec_from_json(slurp(s.in("synth") / "scene.json")), 0);
  std::vector<RgbImage> gt;
  for (std::size_t v = 0; v < cams.size(); ++v)
    gt.push_back(read_png_rgb((s.in("synth") / "views" / indexed("empty", v)).string()));
  const std::vector<Mask> masks = s.inpaint_masks(cams.size());
  const PerceptualMetric metric(s.cfg.finetune.loss.patch, s.cfg.finetune.loss.levels);
  std::vector<EvalReport> reports;
  std::vector<std::uint8_t> region;
  for (const auto& [name, path] : result_fields(s)) {
    const RadianceField field = load_field(path.string());
    if (region.empty()) region = removal_region(field, scene, cams, masks, s.cfg.eval.surface_margin);
    EvalReport rep;
    rep.name = name;
    rep.floater_mass = field.sigma_mass([&](std::uint32_t n) { return region[n] != 0; });
    rep.outside_mass = field.sigma_mass([&](std::uint32_t n) { return region[n] == 0; });
    std::vector<RgbImage> renders;
    std::vector<DepthImage> depths;
    for (std::size_t v = 0; v < cams.size(); ++v) {
      renders.push_back(read_png_rgb((s.in("render") / name / indexed("rgb", v)).string()));
      const auto d16 = read_png_gray16((s.in("render") / name / indexed("depth", v)).string());
      DepthImage d(d16.width(), d16.height(), 1, 0.0);
      for (std::size_t i = 0; i < d.data().size(); ++i) d.data()[i] = d16.data()[i] * kRenderDepthScale;
      depths.push_back(std::move(d));
      rep.views.push_back(evaluate_view(renders.back(), gt[v], masks[v], metric));
    }
    for (const auto& r : rep.views) {
      rep.mean.psnr += r.psnr / rep.views.size();
      rep.mean.masked_l1 += r.masked_l1 / rep.views.size();
      rep.mean.lpips_proxy += r.lpips_proxy / rep.views.size();
    }
    rep.inconsistency = cross_view_inconsistency(renders, depths, cams, masks, s.cfg.eval.consistency_z_tolerance);
    reports.push_back(std::move(rep));
  }
  write_text(s.dir / "report.json", eval_report_json(reports));
}

void dispatch(const Stage& s) {
  const std::string& n = s.def.name;
  if (n == "synth") return run_synth(s);
  if (n == "train") return run_train(s);
  if (n == "segment") return run_segment(s);
  if (n == "refine-masks") return run_refine(s);
  if (n == "inpaint") return run_inpaint(s);
  if (n == "retrain") return run_retrain(s);
  if (n == "prior-train") return run_prior_train(s);
  if (n == "finetune") return run_finetune(s);
  if (n == "render") return run_render(s);
  if (n == "eval") return run_eval(s);
  throw ConfigError("unknown stage '" + n + "'");
}

}  // namespace

const std::vector<std::string>& stage_names() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> n;
    for (const auto& d : stage_defs()) n.push_back(d.name);
    return n;
  }();
  return names;
}

StageResult run_stage(const std::string& name, const PipelineConfig& cfg, bool force) {
  const StageDef& def = stage_def(name);
  const Stage stage(cfg, def);

  Manifest m;
  m.digest = config_digest(cfg, def);
  for (const auto& up : def.upstream) {
    const auto um = read_manifest(stage.in(up));
    if (!um) throw MissingInput("stage '" + name + "' needs stage '" + up + "' to run first");
    for (const auto& [rel, sha] : um->outputs) m.inputs[up + "/" + rel] = sha;
  }
  if (!cfg.scene_spec.empty() && name == "synth") {
    if (!fs::exists(cfg.scene_spec)) throw MissingInput("scene spec not found: " + cfg.scene_spec);
    m.inputs["scene_spec"] = sha256_file(cfg.scene_spec);
  }
  if (name == "segment" || name == "refine-masks") m.inputs.merge(hash_external_dir(cfg.masks_dir, "masks_dir"));
  if (name == "inpaint") m.inputs.merge(hash_external_dir(cfg.inpainted_dir, "inpainted_dir"));

  StageResult result;
  result.stage = name;
  if (!force) {
    const auto old = read_manifest(stage.dir);
    if (old && old->digest == m.digest && old->inputs == m.inputs && hash_tree(stage.dir) == old->outputs) {
      result.skipped = true;
      result.outputs = old->outputs;
      return result;
    }
  }
  fs::remove_all(stage.dir);
  fs::create_directories(stage.dir);
  dispatch(stage);
  m.outputs = hash_tree(stage.dir);
  write_manifest(stage.dir, name, m);
  result.outputs = m.outputs;
  return result;
}

std::vector<StageResult> run_all(const PipelineConfig& cfg, bool force,
                                 const std::function<void(const StageResult&)>& on_stage) {
  std::vector<StageResult> out;
  for (const auto& n : stage_names()) {
    out.push_back(run_stage(n, cfg, force));
    if (on_stage) on_stage(out.back());
  }
  return out;
}

}  // namespace inpaint360
