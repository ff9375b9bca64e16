#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "inpaint360/field.hpp"
#include "inpaint360/finetune.hpp"
#include "inpaint360/perceptual.hpp"
#include "inpaint360/scene_synth.hpp"
#include "inpaint360/segment.hpp"
#include "inpaint360/shape_prior.hpp"

namespace inpaint360 {

struct FieldStageConfig {
  int resolution = 64;
  TrainConfig train;
};

struct PriorTrainConfig {
  int corpus_shapes = 200;
  DenoiserShape net;
  DdpmTrainConfig ddpm;
  int schedule_steps = 1000;
  double beta_start = 1e-4;
  double beta_end = 2e-2;
};

struct EvalConfig {
  // Nodes closer than this to a surface of the empty scene are not counted
  // as floaters (world units). A trained 64^3 field smears surfaces over a
  // few voxels, so the band is about three voxel diagonals wide.
  double surface_margin = 0.25;
  // Reprojected colors agree with a view when rendered z-depths agree within this.
  double consistency_z_tolerance = 0.05;
};

struct PipelineConfig {
  std::string scene_spec;  // path to a scene JSON; empty = built-in default scene
  std::string instruction = "Remove the flowerpot and the flowers";
  std::uint64_t seed = 0;
  int workers = 1;
  std::string out_dir = "run";
  double depth_scale = 1e-3;

  BoxFailureConfig boxes{0.3, 0.0, 0.3, 0.7};  // truncated detector boxes exercise refinement
  RefineConfig refine;
  InpainterPerturbation inpaint;
  int mask_dilation = 1;  // pixels added around the refined masks before inpainting
  FieldStageConfig train;
  FieldStageConfig retrain;
  PriorConfig prior;
  PriorTrainConfig prior_train;
  FinetuneConfig finetune;
  std::vector<std::string> variants = {"base", "in", "geom", "both"};
  EvalConfig eval;

  // External-input slots; empty = use the built-in oracles.
  std::string masks_dir;      // view_NNN_obj_Q.png per view and object
  std::string inpainted_dir;  // rgb_NNN.png per view
};

// Reads a structured-text (JSON) config. Unknown keys and invalid values
// throw ConfigError; absent keys keep their defaults.
PipelineConfig config_from_json(const std::string& text);
std::string config_to_json(const PipelineConfig& cfg);
PipelineConfig load_config(const std::string& path);

const std::vector<std::string>& stage_names();

struct StageResult {
  std::string stage;
  bool skipped = false;  // outputs were up to date
  std::map<std::string, std::string> outputs;  // relative path -> sha256
};

// Runs one stage (see stage_names()). Inputs come from upstream stage
// directories under cfg.out_dir; a stage whose manifest records the same
// config digest, input hashes and intact outputs is skipped.
StageResult run_stage(const std::string& name, const PipelineConfig& cfg, bool force = false);
std::vector<StageResult> run_all(const PipelineConfig& cfg, bool force = false,
                                 const std::function<void(const StageResult&)>& on_stage = {});

struct EvalRow {
  double psnr = 0.0;            // whole image vs empty-scene GT, capped at 99 dB
  double masked_l1 = 0.0;       // mean |rendered - GT| over masked pixels and channels
  double lpips_proxy = 0.0;     // mean perceptual distance over masked patches
};

struct EvalReport {
  std::string name;
  std::vector<EvalRow> views;
  EvalRow mean;
  double floater_mass = 0.0;     // sum of node sigma inside the removal region
  double outside_mass = 0.0;     // sum of node sigma elsewhere
  double inconsistency = 0.0;    // mean per-point color variance across views
};

inline constexpr double kPsnrCap = 99.0;

double psnr_capped(const RgbImage& a, const RgbImage& b);
EvalRow evaluate_view(const RgbImage& rendered, const RgbImage& empty_gt, const Mask& mask,
                      const PerceptualMetric& metric);

// Grid nodes inside the visual hull of the masks (inside every mask whose
// image the node projects into) and at least `margin` away from every
// surface of the empty scene.
std::vector<std::uint8_t> removal_region(const RadianceField& field, const Scene& scene,
                                         const std::vector<Camera>& cameras, const std::vector<Mask>& masks,
                                         double margin);

// Variance of rendered colors of in-mask surface points reprojected into
// the other views whose rendered depth agrees, averaged over points.
double cross_view_inconsistency(const std::vector<RgbImage>& renders, const std::vector<DepthImage>& ray_depths,
                                const std::vector<Camera>& cameras, const std::vector<Mask>& masks,
                                double z_tolerance);

std::string eval_report_json(const std::vector<EvalReport>& reports);

std::string sha256_hex(const std::vector<std::uint8_t>& bytes);
std::string sha256_file(const std::string& path);

}  // namespace inpaint360
