#pragma once

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "inpaint360/field.hpp"
#include "inpaint360/perceptual.hpp"
#include "inpaint360/shape_prior.hpp"

namespace inpaint360 {

struct FinetuneConfig {
  int iterations = 1200;
  int patches_per_step = 2;  // masked patches rendered per iteration for the perceptual term
  int pixel_rays = 512;      // unmasked-patch pixels per iteration for the L1 term
  int samples_per_ray = 192;
  double stop_transmittance = 1e-4;
  double lr_density = 0.03;
  double lr_color = 0.01;
  LossConfig loss;
  std::uint64_t seed = 0;
  int workers = 1;
  int log_every = 50;
};

struct FinetuneView {
  Camera camera;
  const RgbImage* target = nullptr;  // inpainted training image
  const Mask* mask = nullptr;        // inpainted region
};

struct FinetuneLog {
  std::vector<std::pair<int, LossTerms>> terms;  // per-iteration estimates, every log_every
};

// Minimises lambda_geom * L_geom + lambda_in * L_in + L_pix by Adam on the
// field: L_pix on random pixels of unmasked patches, L_in on random masked
// patches rendered whole, L_geom on the visible cubes. A zero weight skips
// its term entirely; lambda_geom > 0 needs a predictor.
RadianceField finetune_field(RadianceField field, std::span<const FinetuneView> views, const VisibleRegion& region,
                             const OccupancyPredictor* predictor, const PriorConfig& prior, const FinetuneConfig& cfg,
                             FinetuneLog* log = nullptr);

}  // namespace inpaint360
