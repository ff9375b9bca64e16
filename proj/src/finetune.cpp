#include "inpaint360/finetune.hpp"

#include <cmath>

#include "inpaint360/errors.hpp"
#include "inpaint360/parallel.hpp"

namespace inpaint360 {

namespace {

struct RayJob {
  std::size_t view = 0;
  int x = 0, y = 0;
  Vec3 rgb = Vec3::Zero();
  bool hit = false;
  RaySampleBatch batch;
  Vec3 d_rgb = Vec3::Zero();
};

struct PatchRef {
  std::size_t view = 0;
  PatchAnchor anchor;
};

}  // namespace

RadianceField finetune_field(RadianceField field, std::span<const FinetuneView> views, const VisibleRegion& region,
                             const OccupancyPredictor* predictor, const PriorConfig& prior, const FinetuneConfig& cfg,
                             FinetuneLog* log) {
  const LossConfig& lc = cfg.loss;
  if (lc.lambda_geom < 0 || lc.lambda_in < 0) throw ConfigError("finetune: loss weights must be non-negative");
  if (lc.lambda_geom > 0 && !predictor) throw ConfigError("finetune: the geometric term needs a trained denoiser");
  if (views.empty()) throw MissingInput("finetune: no training views");

  std::vector<PatchRef> masked, unmasked;
  for (std::size_t v = 0; v < views.size(); ++v) {
    if (!views[v].target || !views[v].mask) throw MissingInput("finetune: view without image or mask");
    require_same_size(*views[v].target, *views[v].mask, "finetune view");
    const PatchSet set = partition_patches(*views[v].mask, lc.patch);
    for (const auto& a : set.with_mask) masked.push_back({v, a});
    for (const auto& a : set.without_mask) unmasked.push_back({v, a});
  }
  const PerceptualMetric metric(lc.patch, lc.levels);
  const int s = lc.patch;
  OptimizerState opt = make_field_optimizer(field, cfg.lr_density, cfg.lr_color);
  std::vector<RayJob> jobs;

  for (int it = 0; it < cfg.iterations; ++it) {
    Rng rng = make_rng(cfg.seed, {0xf17eULL, static_cast<std::uint64_t>(it)});
    jobs.clear();
    const bool use_in = lc.lambda_in > 0 && !masked.empty();
    std::vector<PatchRef> patches;
    if (use_in)
      for (int p = 0; p < cfg.patches_per_step; ++p) {
        patches.push_back(masked[uniform_index(rng, masked.size())]);
        for (int y = 0; y < s; ++y)
          for (int x = 0; x < s; ++x) {
            RayJob j;
            j.view = patches.back().view;
            j.x = patches.back().anchor.x + x;
            j.y = patches.back().anchor.y + y;
            jobs.push_back(std::move(j));
          }
      }
    const std::size_t first_pixel = jobs.size();
    if (!unmasked.empty())
      for (int r = 0; r < cfg.pixel_rays; ++r) {
        const PatchRef& p = unmasked[uniform_index(rng, unmasked.size())];
        RayJob j;
        j.view = p.view;
        j.x = p.anchor.x + static_cast<int>(uniform_index(rng, s));
        j.y = p.anchor.y + static_cast<int>(uniform_index(rng, s));
        jobs.push_back(std::move(j));
      }

    parallel_for(jobs.size(), cfg.workers, [&](std::size_t i) {
      RayJob& j = jobs[i];
      Rng ray_rng = make_rng(cfg.seed, {0xf17fULL, static_cast<std::uint64_t>(it), i});
      const auto r = render_ray(field, pixel_center_ray(views[j.view].camera, j.x, j.y), cfg.samples_per_ray, &ray_rng,
                                cfg.stop_transmittance, j.batch);
      j.hit = r.has_value();
      if (r) j.rgb = r->rgb;
    });

    LossTerms terms;
    for (std::size_t p = 0; p < patches.size(); ++p) {
      std::vector<double> rendered(static_cast<std::size_t>(s) * s * 3), grad(rendered.size());
      for (int k = 0; k < s * s; ++k)
        for (int c = 0; c < 3; ++c) rendered[k * 3 + c] = jobs[p * s * s + k].rgb[c];
      const auto target = extract_patch(*views[patches[p].view].target, patches[p].anchor, s);
      terms.in += metric.distance(rendered, target, grad) / patches.size();
      const double scale = lc.lambda_in / patches.size();
      for (int k = 0; k < s * s; ++k)
        jobs[p * s * s + k].d_rgb = scale * Vec3(grad[k * 3], grad[k * 3 + 1], grad[k * 3 + 2]);
    }
    const std::size_t n_pix = jobs.size() - first_pixel;
    for (std::size_t i = first_pixel; i < jobs.size(); ++i) {
      RayJob& j = jobs[i];
      const RgbImage& t = *views[j.view].target;
      for (int c = 0; c < 3; ++c) {
        const double r = j.rgb[c] - t.at(j.x, j.y, c);
        terms.pix += std::abs(r) / n_pix;
        j.d_rgb[c] = ((r > 0) - (r < 0)) / static_cast<double>(n_pix);
      }
    }
    for (const auto& j : jobs)
      if (j.hit) backward(field, j.batch, j.d_rgb, 0.0, 0.0);

    if (lc.lambda_geom > 0) {
      Rng geom_rng = make_rng(cfg.seed, {0x9e03ULL, static_cast<std::uint64_t>(it)});
      terms.geom = geom_loss(field, region, *predictor, prior, lc.lambda_geom, geom_rng, field.grads(), cfg.workers).loss;
    }
    const double total = total_loss(terms, lc);
    if (!std::isfinite(total)) throw NumericalError("finetune", it);
    optimizer_step(field, opt);
    if (log && (it % std::max(1, cfg.log_every) == 0 || it + 1 == cfg.iterations)) log->terms.emplace_back(it, terms);
  }
  return field;
}

}  // namespace inpaint360
