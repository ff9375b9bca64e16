// Acceptance gate: one PASS/FAIL line per criterion, exit status 1 if any fail.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "inpaint360/errors.hpp"
#include "inpaint360/pipeline.hpp"
#include "inpaint360/png_io.hpp"

using namespace inpaint360;
namespace fs = std::filesystem;

namespace {

// Frozen from the first full run (29.4 dB held-out on the default scene).
constexpr double kHeldOutPsnrFloor = 28.5;

struct Outcome {
  bool pass = false;
  std::string detail;
};

class Timer {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

std::string indexed(const char* prefix, std::size_t v) { return fmt("%s_%03zu.png", prefix, v); }

// ---- 1 ----

Outcome rendering_correctness() {
  Timer timer;
  double worst_segment = 0.0, max_weight_sum = 0.0, worst_depth = 0.0, diag = 0.0;
  for (double s : {-3.0, 0.0, 1.5, 4.0}) {
    RadianceField f(8, Aabb{});
    for (std::uint32_t n = 0; n < f.node_count(); ++n) f.density_param(n) = static_cast<float>(s);
    Ray r;
    r.origin = Vec3(0.2, -0.1, 3.0);
    r.direction = Vec3(0, 0, -1);
    auto b = sample_ray(f, r, 1);
    const RenderResult res = composite(*b);
    const double closed = 1.0 - std::exp(-softplus(s) * b->samples[0].delta);
    worst_segment = std::max(worst_segment, std::abs(res.accumulation - closed));
  }
  Rng rng = make_rng(1, {});
  RadianceField noisy(12, Aabb{});
  for (std::uint32_t n = 0; n < noisy.node_count(); ++n) {
    noisy.density_param(n) = static_cast<float>(uniform(rng, -3.0, 6.0));
    for (int c = 0; c < 3; ++c) noisy.color_param(n, c) = static_cast<float>(uniform(rng, -2.0, 2.0));
  }
  for (int i = 0; i < 500; ++i) {
    Ray r;
    r.origin = Vec3(normal01(rng), normal01(rng), normal01(rng)).normalized() * 3.0;
    r.direction = (Vec3(uniform(rng, -0.8, 0.8), uniform(rng, -0.8, 0.8), uniform(rng, -0.8, 0.8)) - r.origin).normalized();
    auto b = sample_ray(noisy, r, 96, &rng);
    if (!b) continue;
    composite(*b);
    double sum = 0.0;
    for (const auto& smp : b->samples) sum += smp.transmittance * smp.opacity;
    max_weight_sum = std::max(max_weight_sum, sum);
  }
  RadianceField wall(64, Aabb{});
  diag = wall.voxel_diagonal();
  for (int k = 0; k < 64; ++k)
    for (int j = 0; j < 64; ++j)
      for (int i = 0; i < 64; ++i) wall.density_param(wall.node_index(i, j, k)) = i <= 20 ? 200.0f : -10.0f;
  const double wall_x = wall.node_position(20, 0, 0).x();
  for (double y : {-0.6, -0.2, 0.0, 0.45}) {
    Ray r;
    r.origin = Vec3(3.0, y, 0.1);
    r.direction = Vec3(-1, 0, 0);
    auto b = sample_ray(wall, r, 192);
    const RenderResult res = composite(*b);
    worst_depth = std::max(worst_depth, std::abs(res.depth - (3.0 - wall_x)));
  }
  const double t = timer.seconds();
  Outcome o;
  o.pass = worst_segment <= 1e-9 && max_weight_sum <= 1.0 && worst_depth <= diag && t < 1.0;
  o.detail = fmt("segment err %.2e (<=1e-9), max weight sum %.12f (<=1), wall depth err %.4f (<=%.4f), %.3f s (<1)",
                 worst_segment, max_weight_sum, worst_depth, diag, t);
  return o;
}

// ---- 2 ----

Outcome gradient_fidelity() {
  Timer timer;
  int field_probes = 0, image_probes = 0;
  double field_worst = 0.0, image_worst = 0.0;
  for (int trial = 0; trial < 12 && field_probes < 150; ++trial) {
    Rng rng = make_rng(20, {static_cast<std::uint64_t>(trial)});
    RadianceField f(8, Aabb{});
    for (std::uint32_t n = 0; n < f.node_count(); ++n) {
      f.density_param(n) = static_cast<float>(uniform(rng, -2.0, 2.5));
      for (int c = 0; c < 3; ++c) f.color_param(n, c) = static_cast<float>(uniform(rng, -2.0, 2.0));
    }
    Ray ray;
    ray.origin = Vec3(normal01(rng), normal01(rng), normal01(rng)).normalized() * 3.0;
    ray.direction = (Vec3(uniform(rng, -0.6, 0.6), uniform(rng, -0.6, 0.6), uniform(rng, -0.6, 0.6)) - ray.origin).normalized();
    const Vec3 a(normal01(rng), normal01(rng), normal01(rng));
    const double bd = 0.3 * normal01(rng), ca = normal01(rng);
    auto loss = [&] {
      auto b = sample_ray(f, ray, 24);
      const RenderResult r = composite(*b);
      return a.dot(r.rgb) + bd * r.depth + ca * r.accumulation;
    };
    auto b = sample_ray(f, ray, 24);
    composite(*b);
    backward(f, *b, a, bd, ca);
    const std::vector<double> analytic(f.grads().begin(), f.grads().end());
    for (std::size_t p = 0; p < analytic.size(); ++p) {
      if (std::abs(analytic[p]) < 1e-6) continue;
      const float orig = f.params()[p], up = orig + 1e-3f, down = orig - 1e-3f;
      f.params()[p] = up;
      const double lp = loss();
      f.params()[p] = down;
      const double lm = loss();
      f.params()[p] = orig;
      const double fd = (lp - lm) / (static_cast<double>(up) - down);
      field_worst = std::max(field_worst, std::abs(fd - analytic[p]) / std::max(std::abs(fd), std::abs(analytic[p])));
      ++field_probes;
    }
  }

  const int w = 40, h = 32;
  Rng rng = make_rng(21, {});
  RgbImage rendered(w, h, 3), target(w, h, 3);
  for (auto& v : rendered.data()) v = static_cast<float>(uniform(rng, 0.1, 0.9));
  for (auto& v : target.data()) v = static_cast<float>(uniform(rng, 0.1, 0.9));
  Mask mask(w, h, 1, 0);
  for (int y = 4; y < 28; ++y)
    for (int x = 10; x < 30; ++x) mask.at(x, y) = 1;
  const PatchSet set = partition_patches(mask, 16);
  const PerceptualMetric metric(16, 3);
  RgbImage grad;
  inpaint_loss(rendered, target, set, metric, &grad);
  while (image_probes < 150) {
    const std::size_t i = uniform_index(rng, rendered.data().size());
    if (std::abs(grad.data()[i]) < 1e-6f) continue;
    const float orig = rendered.data()[i], up = orig + 1e-3f, down = orig - 1e-3f;
    rendered.data()[i] = up;
    const double lp = inpaint_loss(rendered, target, set, metric);
    rendered.data()[i] = down;
    const double lm = inpaint_loss(rendered, target, set, metric);
    rendered.data()[i] = orig;
    const double fd = (lp - lm) / (static_cast<double>(up) - down);
    const double an = grad.data()[i];
    image_worst = std::max(image_worst, std::abs(fd - an) / std::max(std::abs(fd), std::abs(an)));
    ++image_probes;
  }
  const double t = timer.seconds();
  Outcome o;
  o.pass = field_probes >= 100 && image_probes >= 100 && field_worst <= 1e-3 && image_worst <= 1e-3 && t < 60.0;
  o.detail = fmt("field %d probes worst rel %.2e, inpaint loss %d probes worst rel %.2e (<=1e-3), %.1f s (<60)",
                 field_probes, field_worst, image_probes, image_worst, t);
  return o;
}

// ---- shared pipeline run ----

struct FullRun {
  PipelineConfig cfg;
  std::map<std::string, double> seconds;
};

void run_timed(FullRun& run, const std::string& stage) {
  Timer t;
  run_stage(stage, run.cfg, true);
  run.seconds[stage] = t.seconds();
  std::printf("  [stage %s: %.1f s]\n", stage.c_str(), run.seconds[stage]);
  std::fflush(stdout);
}

std::vector<Camera> load_cams(const fs::path& synth) {
  std::vector<Camera> cams;
  for (const auto& [i, c] : load_cameras((synth / "cameras.json").string())) cams.push_back(c);
  return cams;
}

// ---- 3 ----

Outcome base_reconstruction(const FullRun& run) {
  const fs::path out(run.cfg.out_dir);
  const SyntheticDataset data = read_dataset((out / "synth").string());
  const RingSpec& ring = data.scene.spec.ring;
  const auto held_out = ring_cameras(ring, data.scene.centroid, M_PI / ring.count, ring.elevation_deg);
  const SyntheticDataset truth = render_ground_truth(data.scene, held_out, run.cfg.workers);
  const RadianceField field = load_field((out / "train" / "field.bin").string());
  RenderOptions ro;
  ro.workers = run.cfg.workers;
  double psnr = 0.0;
  for (std::size_t v = 0; v < held_out.size(); ++v)
    psnr += psnr_capped(render_view(field, held_out[v], ro).rgb, truth.views[v].rgb) / held_out.size();
  const double t = run.seconds.at("train");
  Outcome o;
  o.pass = field.resolution() == 64 && psnr >= kHeldOutPsnrFloor && t < 900.0;
  o.detail = fmt("%d^3 grid, held-out PSNR %.2f dB over %zu interleaved views (floor %.1f), train %.0f s (<900)",
                 field.resolution(), psnr, held_out.size(), kHeldOutPsnrFloor, t);
  return o;
}

// ---- 4 ----

Outcome segmentation_refinement(const FullRun& run) {
  const fs::path out(run.cfg.out_dir);
  const SyntheticDataset data = read_dataset((out / "synth").string());
  const RadianceField field = load_field((out / "train" / "field.bin").string());
  Timer timer;
  const Instruction instr = parse_instruction(run.cfg.instruction);
  BoxFailureConfig boxes_cfg{0.3, 0.0, 0.3, 0.7};
  std::vector<std::vector<BoxProposal>> boxes;
  std::vector<IdImage> ids;
  std::vector<Camera> cams;
  std::vector<Mask> gt;
  for (std::size_t v = 0; v < data.views.size(); ++v) {
    boxes.push_back(propose_boxes(data.scene, data.views[v].ids, v, instr.objects, boxes_cfg, 4242));
    ids.push_back(data.views[v].ids);
    cams.push_back(data.views[v].camera);
    std::vector<Mask> parts;
    for (const auto& name : instr.objects) parts.push_back(instance_mask(data.views[v].ids, data.scene.find(name)->instance_id));
    gt.push_back(union_masks(parts));
  }
  const OracleSegmenter seg(ids);
  const int w = cams[0].width(), h = cams[0].height();
  const MaskSet initial = initial_masks(instr.objects, boxes, &ids, seg, w, h, run.cfg.workers);

  auto mean_iou = [&](const MaskSet& s) {
    double sum = 0.0;
    for (std::size_t v = 0; v < s.views.size(); ++v) sum += mask_iou(s.views[v].united, gt[v]);
    return sum / s.views.size();
  };
  // Covered fraction: GT pixels inside the proposed boxes.
  double covered = 0.0;
  int truncated = 0;
  for (std::size_t v = 0; v < boxes.size(); ++v) {
    std::size_t in = 0, all = 0;
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        if (!gt[v].at(x, y)) continue;
        ++all;
        for (const auto& b : boxes[v])
          if (b.contains(x, y) && data.scene.find(instr.objects[b.object])->instance_id == data.views[v].ids.at(x, y)) {
            ++in;
            break;
          }
      }
    covered += all ? static_cast<double>(in) / all : 1.0;
    for (const auto& b : boxes[v]) truncated += b.truncated;
  }
  covered /= boxes.size();

  RenderOptions ro;
  ro.workers = run.cfg.workers;
  std::vector<DepthImage> depths;
  for (const auto& c : cams) depths.push_back(render_view(field, c, ro).depth);
  std::vector<double> ious = {mean_iou(initial)};
  RefineConfig rc = run.cfg.refine;
  rc.seed = 99;
  rc.workers = run.cfg.workers;
  for (int r = 1; r <= 3; ++r) {
    rc.max_rounds = r;
    ious.push_back(mean_iou(refine_depth_warp(initial, depths, cams, rc, seg)));
  }
  const double t = timer.seconds();
  bool monotone = true;
  for (std::size_t i = 1; i < ious.size(); ++i) monotone &= ious[i] >= ious[i - 1];
  Outcome o;
  o.pass = truncated > 0 && std::abs(ious[0] - covered) <= 0.02 && ious.back() >= 0.95 && monotone && t < 120.0 &&
           data.views.size() == 40;
  o.detail = fmt("%zu views, %d truncated boxes, initial IoU %.4f vs covered %.4f, rounds %.4f %.4f %.4f (>=0.95, "
                 "monotone %s), %.1f s (<120)",
                 data.views.size(), truncated, ious[0], covered, ious[1], ious[2], ious[3], monotone ? "yes" : "no", t);
  return o;
}

// ---- 5 ----

Outcome floater_removal(const FullRun& run) {
  const fs::path out(run.cfg.out_dir);
  const std::vector<Camera> cams = load_cams(out / "synth");
  const Scene scene = generate_scene(scene_spec_from_json([&] {
                                       std::ifstream f(out / "synth" / "scene.json");
                                       std::stringstream ss;
                                       ss << f.rdbuf();
                                       return ss.str();
                                     }()),
                                     0);
  std::vector<Mask> masks;
  std::vector<RgbImage> empty;
  for (std::size_t v = 0; v < cams.size(); ++v) {
    masks.push_back(read_mask_png((out / "inpaint" / indexed("mask", v)).string()));
    empty.push_back(read_png_rgb((out / "synth" / "views" / indexed("empty", v)).string()));
  }
  const RadianceField retrained = load_field((out / "retrain" / "field.bin").string());
  const auto region = removal_region(retrained, scene, cams, masks, run.cfg.eval.surface_margin);
  auto inside = [&](std::uint32_t n) { return region[n] != 0; };
  auto outside = [&](std::uint32_t n) { return region[n] == 0; };

  std::vector<TrainingView> views;
  for (std::size_t v = 0; v < cams.size(); ++v) views.push_back({&empty[v], nullptr, cams[v]});
  TrainConfig tc = run.cfg.retrain.train;
  tc.seed = 31337;
  tc.workers = run.cfg.workers;
  const RadianceField baseline = train_field(views, tc, RadianceField(run.cfg.retrain.resolution, scene.spec.bounds));

  const double base_mass = baseline.sigma_mass(inside), floater = retrained.sigma_mass(inside);
  const double out_before = retrained.sigma_mass(outside);
  std::string detail = fmt("region %zu nodes, floater mass %.1f vs empty-scene %.1f (x%.1f, >=5)",
                           static_cast<std::size_t>(std::count(region.begin(), region.end(), 1)), floater, base_mass,
                           floater / std::max(base_mass, 1e-12));
  bool pass = floater >= 5.0 * base_mass;

  for (const auto& variant : {"geom", "both"}) {
    const RadianceField f = load_field((out / "finetune" / variant / "field.bin").string());
    const double reduction = 1.0 - f.sigma_mass(inside) / floater;
    const double drift = std::abs(f.sigma_mass(outside) - out_before) / out_before;
    pass &= reduction >= 0.9 && drift <= 0.01;
    detail += fmt("; %s: -%.1f%% (>=90), drift %.2f%% (<=1)", variant, 100 * reduction, 100 * drift);
  }

  const nlohmann::json report = nlohmann::json::parse(std::ifstream(out / "eval" / "report.json"));
  std::map<std::string, std::pair<double, double>> score;
  for (const auto& r : report.at("reports"))
    score[r.at("name")] = {r.at("mean").at("lpips_proxy"), r.at("mean").at("masked_l1")};
  auto ordered = [&](auto get) {
    const double b = get(score.at("base")), i = get(score.at("in")), g = get(score.at("geom")), a = get(score.at("both"));
    return a <= i && a <= g && i <= b && g <= b;
  };
  const bool lp = ordered([](auto p) { return p.first; }), l1 = ordered([](auto p) { return p.second; });
  pass &= lp && l1;
  for (const auto* v : {"base", "in", "geom", "both"})
    detail += fmt("; %s lpips %.4f l1 %.4f", v, score.at(v).first, score.at(v).second);
  const double t = run.seconds.at("finetune");
  pass &= t < 1800.0;
  detail += fmt("; ordering lpips %s l1 %s; grid %.0f s (<1800)", lp ? "ok" : "broken", l1 ? "ok" : "broken", t);
  return {pass, detail};
}

// ---- 6 ----

Outcome ddpm_sanity(const FullRun& run) {
  NoiseSchedule schedule;
  const auto net = load_denoiser((fs::path(run.cfg.out_dir) / "prior-train" / "denoiser.bin").string(), &schedule);
  const auto shapes = procedural_corpus(50, 0xfeed);
  std::vector<OccupancyCube> held;
  for (std::size_t i = 0; i < shapes.size(); ++i)
    for (auto& c : sample_training_cubes(shapes[i], run.cfg.prior, derive_seed(0xfeed, {i}))) held.push_back(std::move(c));
  const double mse = ddpm_eval_loss(held, net, schedule, 400, 7);
  double iou = 0.0;
  for (std::size_t i = 0; i < held.size(); ++i) {
    Rng rng = make_rng(8, {i});
    iou += occupancy_iou(one_shot_x0(net, schedule, held[i].x, run.cfg.prior.t_star, rng), held[i].x) / held.size();
  }
  const double t = run.seconds.at("prior-train");
  Outcome o;
  o.pass = mse < 1.0 && iou >= 0.95 && run.cfg.prior.t_star == 200 && t < 600.0;
  o.detail = fmt("held-out noise MSE %.4f (<1), one-shot IoU at t=%d %.4f over %zu crops (>=0.95), train %.0f s (<600)",
                 mse, run.cfg.prior.t_star, iou, held.size(), t);
  return o;
}

// ---- 7 ----

Outcome dsds_identities() {
  const double a = dsds_loss(std::vector<double>{5.0}, std::vector<float>{-1.0f}, 10.0).loss;
  const double b = dsds_loss(std::vector<double>{0.0}, std::vector<float>{1.0f}, 10.0).loss;
  const double c = dsds_loss(std::vector<double>{15.0}, std::vector<float>{1.0f}, 10.0).loss;
  PriorConfig cfg;
  cfg.cubes_per_shape = 100;
  int cubes = 0, violations = 0;
  const auto shapes = procedural_corpus(100, 5);
  for (std::size_t i = 0; i < shapes.size(); ++i) {
    const Aabb bb = shapes[i].bounds();
    const double vol = bb.extent().prod();
    for (const auto& cube : sample_training_cubes(shapes[i], cfg, derive_seed(6, {i}))) {
      const double frac = std::pow(cube.edge, 3) / vol;
      violations += frac < cfg.fraction_min - 1e-12 || frac > cfg.fraction_max + 1e-12;
      ++cubes;
    }
  }
  Outcome o;
  o.pass = a == 5.0 && b == 10.0 && c == 0.0 && cubes >= 10000 && violations == 0;
  o.detail = fmt("cases %.17g %.17g %.17g (5, 10, 0), %d cubes, %d outside [0.03, 0.08]", a, b, c, cubes, violations);
  return o;
}

// ---- 8 ----

Outcome determinism(const fs::path& work) {
  PipelineConfig c;
  c.seed = 11;
  c.workers = 1;
  for (auto* f : {&c.train, &c.retrain}) {
    f->resolution = 32;
    f->train.iterations = 300;
    f->train.batch_rays = 512;
    f->train.samples_per_ray = 96;
  }
  c.prior_train.corpus_shapes = 20;
  c.prior_train.ddpm.steps = 40;
  c.prior_train.ddpm.batch = 4;
  c.finetune.iterations = 20;
  c.finetune.pixel_rays = 128;
  c.finetune.samples_per_ray = 96;
  std::vector<std::map<std::string, std::map<std::string, std::string>>> runs;
  for (const char* name : {"det_a", "det_b"}) {
    c.out_dir = (work / name).string();
    fs::remove_all(c.out_dir);
    std::map<std::string, std::map<std::string, std::string>> h;
    for (const auto& r : run_all(c, true)) h[r.stage] = r.outputs;
    runs.push_back(std::move(h));
  }
  std::size_t files = 0;
  std::vector<std::string> differing;
  for (const auto& [stage, outs] : runs[0]) {
    files += outs.size();
    if (runs[1].at(stage) != outs) differing.push_back(stage);
  }
  Outcome o;
  o.pass = differing.empty() && runs[0].size() == stage_names().size();
  o.detail = fmt("%zu stages, %zu artifacts hashed, %zu stages differ", runs[0].size(), files, differing.size());
  for (const auto& s : differing) o.detail += " " + s;
  return o;
}

// ---- 9 ----

Outcome instruction_grammar() {
  bool pass = true;
  std::string detail;
  const std::vector<std::pair<std::string, std::vector<std::string>>> cases = {
      {"Remove the flowerpot and flowers", {"flowerpot", "flowers"}},
      {"Remove the vase and the flowers.", {"vase", "flowers"}},
  };
  for (const auto& [text, want] : cases) {
    const auto got = parse_instruction(text).objects;
    pass &= got == want;
    detail += "'" + text + "' -> [";
    for (std::size_t i = 0; i < got.size(); ++i) detail += (i ? ", " : "") + got[i];
    detail += "]; ";
  }
  for (const std::string bad : {"Paint the vase red", "Delete the flowers", "Removes the vase"}) {
    try {
      parse_instruction(bad);
      pass = false;
      detail += "'" + bad + "' accepted; ";
    } catch (const ParseError& e) {
      pass &= e.position() == 0;
      detail += fmt("'%s' rejected at %zu; ", bad.c_str(), e.position());
    }
  }
  return {pass, detail};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"inpaint360 acceptance gate"};
  std::string work = "acceptance_work";
  int workers = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  std::vector<int> only;
  app.add_option("--work", work, "Scratch directory for pipeline runs");
  app.add_option("--workers", workers, "Worker threads for the timed pipeline run");
  app.add_option("--only", only, "Criteria to run (default: all)");
  CLI11_PARSE(app, argc, argv);
  const std::set<int> selected(only.begin(), only.end());
  auto want = [&](int n) { return selected.empty() || selected.count(n) > 0; };

  std::map<int, Outcome> results;
  auto record = [&](int n, const std::function<Outcome()>& f) {
    if (!want(n)) return;
    try {
      results[n] = f();
    } catch (const std::exception& e) {
      results[n] = {false, std::string("exception: ") + e.what()};
    }
    std::printf("criterion %d: %s | %s\n", n, results[n].pass ? "PASS" : "FAIL", results[n].detail.c_str());
    std::fflush(stdout);
  };

  record(1, rendering_correctness);
  record(2, gradient_fidelity);
  record(7, dsds_identities);
  record(9, instruction_grammar);

  if (want(3) || want(4) || want(5) || want(6)) {
    FullRun run;
    run.cfg.out_dir = (fs::path(work) / "full").string();
    run.cfg.workers = workers;
    bool ok = true;
    try {
      for (const auto& s : stage_names()) run_timed(run, s);
    } catch (const std::exception& e) {
      ok = false;
      for (int n : {3, 4, 5, 6})
        if (want(n)) {
          results[n] = {false, std::string("pipeline failed: ") + e.what()};
          std::printf("criterion %d: FAIL | %s\n", n, results[n].detail.c_str());
        }
    }
    if (ok) {
      record(3, [&] { return base_reconstruction(run); });
      record(4, [&] { return segmentation_refinement(run); });
      record(5, [&] { return floater_removal(run); });
      record(6, [&] { return ddpm_sanity(run); });
    }
  }
  record(8, [&] { return determinism(work); });

  int failed = 0;
  for (const auto& [n, o] : results) failed += !o.pass;
  std::printf("acceptance: %zu criteria run, %d failed\n", results.size(), failed);
  return failed ? 1 : 0;
}
