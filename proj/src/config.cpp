#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "inpaint360/errors.hpp"
#include "inpaint360/pipeline.hpp"

namespace inpaint360 {

namespace {

using nlohmann::json;
using nlohmann::ordered_json;

// Reads keys of one JSON object and rejects any key nobody asked for.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_ + ": expected an object");
  }

  template <typename T>
  void read(const char* key, T& out) {
    seen_.insert(key);
    const auto it = j_.find(key);
    if (it == j_.end()) return;
    try {
      out = it->template get<T>();
    } catch (const json::exception&) {
      throw ConfigError(path_ + "." + key + ": wrong type");
    }
  }

  std::optional<Section> sub(const char* key) {
    seen_.insert(key);
    const auto it = j_.find(key);
    if (it == j_.end()) return std::nullopt;
    return Section(*it, path_ + "." + key);
  }

  void finish() const {
    for (const auto& [k, v] : j_.items())
      if (!seen_.count(k)) throw ConfigError(path_ + ": unknown key '" + k + "'");
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

void require(bool ok, const std::string& what) {
  if (!ok) throw ConfigError(what);
}

void read_train(Section s, FieldStageConfig& f) {
  s.read("resolution", f.resolution);
  s.read("iterations", f.train.iterations);
  s.read("batch_rays", f.train.batch_rays);
  s.read("samples_per_ray", f.train.samples_per_ray);
  s.read("lr_density", f.train.lr_density);
  s.read("lr_color", f.train.lr_color);
  s.read("lr_final_fraction", f.train.lr_final_fraction);
  s.read("stop_transmittance", f.train.stop_transmittance);
  s.read("grad_shards", f.train.grad_shards);
  s.read("log_every", f.train.log_every);
  s.finish();
}

ordered_json train_json(const FieldStageConfig& f) {
  return {{"resolution", f.resolution},
          {"iterations", f.train.iterations},
          {"batch_rays", f.train.batch_rays},
          {"samples_per_ray", f.train.samples_per_ray},
          {"lr_density", f.train.lr_density},
          {"lr_color", f.train.lr_color},
          {"lr_final_fraction", f.train.lr_final_fraction},
          {"stop_transmittance", f.train.stop_transmittance},
          {"grad_shards", f.train.grad_shards},
          {"log_every", f.train.log_every}};
}

void validate_train(const FieldStageConfig& f, const std::string& name) {
  require(f.resolution >= 2, name + ".resolution must be >= 2");
  require(f.train.iterations >= 0, name + ".iterations must be >= 0");
  require(f.train.batch_rays >= 1, name + ".batch_rays must be >= 1");
  require(f.train.samples_per_ray >= 1, name + ".samples_per_ray must be >= 1");
  require(f.train.lr_density > 0 && f.train.lr_color > 0, name + " learning rates must be positive");
  require(f.train.lr_final_fraction > 0 && f.train.lr_final_fraction <= 1, name + ".lr_final_fraction must be in (0, 1]");
  require(f.train.stop_transmittance >= 0 && f.train.stop_transmittance < 1, name + ".stop_transmittance must be in [0, 1)");
  require(f.train.grad_shards >= 1, name + ".grad_shards must be >= 1");
}

void validate(const PipelineConfig& c) {
  require(c.workers >= 1, "workers must be >= 1");
  require(c.depth_scale > 0, "depth_scale must be positive");
  require(!c.out_dir.empty(), "out_dir must not be empty");
  require(c.boxes.q_trunc >= 0 && c.boxes.q_trunc <= 1 && c.boxes.q_miss >= 0 && c.boxes.q_miss <= 1,
          "boxes: failure probabilities must be in [0, 1]");
  require(c.boxes.phi_min > 0 && c.boxes.phi_min <= c.boxes.phi_max && c.boxes.phi_max <= 1,
          "boxes: need 0 < phi_min <= phi_max <= 1");
  require(c.refine.views_per_target >= 1 && c.refine.rays_per_source >= 1 && c.refine.max_rounds >= 1,
          "refine: counts must be positive");
  require(c.refine.depth_percentile_factor > 0 && c.refine.z_tolerance > 0, "refine: factor and tolerance must be positive");
  require(c.inpaint.color_shift >= 0 && c.inpaint.blob_amplitude >= 0 && c.inpaint.blob_length > 0,
          "inpaint: amplitudes must be >= 0 and blob_length > 0");
  require(c.mask_dilation >= 0, "mask_dilation must be >= 0");
  validate_train(c.train, "train");
  validate_train(c.retrain, "retrain");
  const PriorConfig& p = c.prior;
  require(p.rho > 0 && p.w > 0, "prior: rho and w must be positive");
  require(p.fraction_min > 0 && p.fraction_min <= p.fraction_max && p.fraction_max < 1,
          "prior: fraction range must lie in (0, 1)");
  require(p.cubes_per_shape >= 1, "prior.cubes_per_shape must be >= 1");
  require(p.m >= 4 && p.m % 4 == 0 && p.m == c.prior_train.net.m, "prior.m must be a multiple of 4 matching the denoiser");
  require(p.cube_edge > 0 && p.visibility_radius_edges > 0, "prior: cube_edge and visibility radius must be positive");
  const PriorTrainConfig& pt = c.prior_train;
  require(pt.corpus_shapes >= 1, "prior_train.corpus_shapes must be >= 1");
  require(pt.net.c0 >= 1 && pt.net.c1 >= 1 && pt.net.embed_dim >= 2 && pt.net.embed_dim % 2 == 0,
          "prior_train: bad network shape");
  require(pt.ddpm.steps >= 0 && pt.ddpm.batch >= 1 && pt.ddpm.lr > 0, "prior_train: bad optimizer settings");
  require(pt.ddpm.lr_final_fraction > 0 && pt.ddpm.lr_final_fraction <= 1, "prior_train.lr_final_fraction must be in (0, 1]");
  require(pt.schedule_steps >= 2 && pt.beta_start > 0 && pt.beta_start <= pt.beta_end && pt.beta_end < 1,
          "prior_train: bad noise schedule");
  require(p.t_star >= 1 && p.t_star <= pt.schedule_steps, "prior.t_star must lie in [1, schedule_steps]");
  const FinetuneConfig& f = c.finetune;
  require(f.iterations >= 0 && f.patches_per_step >= 0 && f.pixel_rays >= 0 && f.samples_per_ray >= 1,
          "finetune: counts must be non-negative");
  require(f.lr_density > 0 && f.lr_color > 0, "finetune: learning rates must be positive");
  require(f.loss.lambda_geom >= 0 && f.loss.lambda_in >= 0, "finetune: loss weights must be non-negative");
  require(f.loss.patch >= 1 && f.loss.levels >= 1, "finetune: patch size and pyramid levels must be >= 1");
  static const std::set<std::string> known = {"base", "in", "geom", "both"};
  std::set<std::string> seen;
  for (const auto& v : c.variants) {
    require(known.count(v) > 0, "variants: unknown variant '" + v + "' (base, in, geom, both)");
    require(seen.insert(v).second, "variants: duplicate '" + v + "'");
  }
  require(c.eval.surface_margin >= 0 && c.eval.consistency_z_tolerance > 0, "eval: bad tolerances");
}

}  // namespace

PipelineConfig config_from_json(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  PipelineConfig c;
  Section root(doc, "config");
  root.read("scene_spec", c.scene_spec);
  root.read("instruction", c.instruction);
  root.read("seed", c.seed);
  root.read("workers", c.workers);
  root.read("out_dir", c.out_dir);
  root.read("depth_scale", c.depth_scale);
  root.read("mask_dilation", c.mask_dilation);
  root.read("variants", c.variants);
  root.read("masks_dir", c.masks_dir);
  root.read("inpainted_dir", c.inpainted_dir);
  if (auto s = root.sub("boxes")) {
    s->read("q_trunc", c.boxes.q_trunc);
    s->read("q_miss", c.boxes.q_miss);
    s->read("phi_min", c.boxes.phi_min);
    s->read("phi_max", c.boxes.phi_max);
    s->finish();
  }
  if (auto s = root.sub("refine")) {
    s->read("views_per_target", c.refine.views_per_target);
    s->read("rays_per_source", c.refine.rays_per_source);
    s->read("depth_percentile_factor", c.refine.depth_percentile_factor);
    s->read("z_tolerance", c.refine.z_tolerance);
    s->read("max_rounds", c.refine.max_rounds);
    s->finish();
  }
  if (auto s = root.sub("inpaint")) {
    s->read("color_shift", c.inpaint.color_shift);
    s->read("blob_amplitude", c.inpaint.blob_amplitude);
    s->read("blob_length", c.inpaint.blob_length);
    s->finish();
  }
  if (auto s = root.sub("train")) read_train(*s, c.train);
  if (auto s = root.sub("retrain")) read_train(*s, c.retrain);
  if (auto s = root.sub("prior")) {
    s->read("rho", c.prior.rho);
    s->read("w", c.prior.w);
    s->read("fraction_min", c.prior.fraction_min);
    s->read("fraction_max", c.prior.fraction_max);
    s->read("cubes_per_shape", c.prior.cubes_per_shape);
    s->read("m", c.prior.m);
    s->read("t_star", c.prior.t_star);
    s->read("cube_edge", c.prior.cube_edge);
    s->read("visibility_radius_edges", c.prior.visibility_radius_edges);
    s->read("cubes_per_step", c.prior.cubes_per_step);
    s->finish();
  }
  if (auto s = root.sub("prior_train")) {
    auto& p = c.prior_train;
    s->read("corpus_shapes", p.corpus_shapes);
    s->read("c0", p.net.c0);
    s->read("c1", p.net.c1);
    s->read("embed_dim", p.net.embed_dim);
    s->read("steps", p.ddpm.steps);
    s->read("batch", p.ddpm.batch);
    s->read("lr", p.ddpm.lr);
    s->read("lr_final_fraction", p.ddpm.lr_final_fraction);
    s->read("augment", p.ddpm.augment);
    s->read("log_every", p.ddpm.log_every);
    s->read("schedule_steps", p.schedule_steps);
    s->read("beta_start", p.beta_start);
    s->read("beta_end", p.beta_end);
    s->finish();
  }
  c.prior_train.net.m = c.prior.m;
  if (auto s = root.sub("finetune")) {
    auto& f = c.finetune;
    s->read("iterations", f.iterations);
    s->read("patches_per_step", f.patches_per_step);
    s->read("pixel_rays", f.pixel_rays);
    s->read("samples_per_ray", f.samples_per_ray);
    s->read("stop_transmittance", f.stop_transmittance);
    s->read("lr_density", f.lr_density);
    s->read("lr_color", f.lr_color);
    s->read("lambda_geom", f.loss.lambda_geom);
    s->read("lambda_in", f.loss.lambda_in);
    s->read("patch", f.loss.patch);
    s->read("levels", f.loss.levels);
    s->read("log_every", f.log_every);
    s->finish();
  }
  if (auto s = root.sub("eval")) {
    s->read("surface_margin", c.eval.surface_margin);
    s->read("consistency_z_tolerance", c.eval.consistency_z_tolerance);
    s->finish();
  }
  root.finish();
  validate(c);
  return c;
}

std::string config_to_json(const PipelineConfig& c) {
  ordered_json doc;
  doc["scene_spec"] = c.scene_spec;
  doc["instruction"] = c.instruction;
  doc["seed"] = c.seed;
  doc["workers"] = c.workers;
  doc["out_dir"] = c.out_dir;
  doc["depth_scale"] = c.depth_scale;
  doc["mask_dilation"] = c.mask_dilation;
  doc["variants"] = c.variants;
  doc["masks_dir"] = c.masks_dir;
  doc["inpainted_dir"] = c.inpainted_dir;
  doc["boxes"] = {{"q_trunc", c.boxes.q_trunc}, {"q_miss", c.boxes.q_miss}, {"phi_min", c.boxes.phi_min},
                  {"phi_max", c.boxes.phi_max}};
  doc["refine"] = {{"views_per_target", c.refine.views_per_target},
                   {"rays_per_source", c.refine.rays_per_source},
                   {"depth_percentile_factor", c.refine.depth_percentile_factor},
                   {"z_tolerance", c.refine.z_tolerance},
                   {"max_rounds", c.refine.max_rounds}};
  doc["inpaint"] = {{"color_shift", c.inpaint.color_shift},
                    {"blob_amplitude", c.inpaint.blob_amplitude},
                    {"blob_length", c.inpaint.blob_length}};
  doc["train"] = train_json(c.train);
  doc["retrain"] = train_json(c.retrain);
  doc["prior"] = {{"rho", c.prior.rho},
                  {"w", c.prior.w},
                  {"fraction_min", c.prior.fraction_min},
                  {"fraction_max", c.prior.fraction_max},
                  {"cubes_per_shape", c.prior.cubes_per_shape},
                  {"m", c.prior.m},
                  {"t_star", c.prior.t_star},
                  {"cube_edge", c.prior.cube_edge},
                  {"visibility_radius_edges", c.prior.visibility_radius_edges},
                  {"cubes_per_step", c.prior.cubes_per_step}};
  const auto& p = c.prior_train;
  doc["prior_train"] = {{"corpus_shapes", p.corpus_shapes},
                        {"c0", p.net.c0},
                        {"c1", p.net.c1},
                        {"embed_dim", p.net.embed_dim},
                        {"steps", p.ddpm.steps},
                        {"batch", p.ddpm.batch},
                        {"lr", p.ddpm.lr},
                        {"lr_final_fraction", p.ddpm.lr_final_fraction},
                        {"augment", p.ddpm.augment},
                        {"log_every", p.ddpm.log_every},
                        {"schedule_steps", p.schedule_steps},
                        {"beta_start", p.beta_start},
                        {"beta_end", p.beta_end}};
  const auto& f = c.finetune;
  doc["finetune"] = {{"iterations", f.iterations},
                     {"patches_per_step", f.patches_per_step},
                     {"pixel_rays", f.pixel_rays},
                     {"samples_per_ray", f.samples_per_ray},
                     {"stop_transmittance", f.stop_transmittance},
                     {"lr_density", f.lr_density},
                     {"lr_color", f.lr_color},
                     {"lambda_geom", f.loss.lambda_geom},
                     {"lambda_in", f.loss.lambda_in},
                     {"patch", f.loss.patch},
                     {"levels", f.loss.levels},
                     {"log_every", f.log_every}};
  doc["eval"] = {{"surface_margin", c.eval.surface_margin},
                 {"consistency_z_tolerance", c.eval.consistency_z_tolerance}};
  return doc.dump(2) + "\n";
}

PipelineConfig load_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot read config " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return config_from_json(ss.str());
}

}  // namespace inpaint360
