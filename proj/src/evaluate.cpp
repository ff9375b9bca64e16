#include <openssl/evp.h>

#include <algorithm>
#include <cmath>
#include <cstdio>

#include <json.hpp>

#include "inpaint360/blob.hpp"
#include "inpaint360/errors.hpp"
#include "inpaint360/pipeline.hpp"

namespace inpaint360 {

double psnr_capped(const RgbImage& a, const RgbImage& b) {
  if (!a.same_shape(b)) throw DimensionMismatch("psnr: image shapes differ");
  double se = 0.0;
  for (std::size_t i = 0; i < a.data().size(); ++i) {
    const double d = static_cast<double>(a.data()[i]) - b.data()[i];
    se += d * d;
  }
  const double mse = se / static_cast<double>(std::max<std::size_t>(a.data().size(), 1));
  if (mse <= 0.0) return kPsnrCap;
  return std::min(kPsnrCap, -10.0 * std::log10(mse));
}

EvalRow evaluate_view(const RgbImage& rendered, const RgbImage& empty_gt, const Mask& mask,
                      const PerceptualMetric& metric) {
  require_same_size(rendered, mask, "evaluate_view");
  EvalRow row;
  row.psnr = psnr_capped(rendered, empty_gt);
  double l1 = 0.0;
  std::size_t n = 0;
  for (int y = 0; y < mask.height(); ++y)
    for (int x = 0; x < mask.width(); ++x) {
      if (!mask.at(x, y)) continue;
      for (int c = 0; c < 3; ++c) l1 += std::abs(static_cast<double>(rendered.at(x, y, c)) - empty_gt.at(x, y, c));
      n += 3;
    }
  row.masked_l1 = n ? l1 / static_cast<double>(n) : 0.0;
  const PatchSet set = partition_patches(mask, metric.size());
  for (const auto& a : set.with_mask)
    row.lpips_proxy += metric.distance(extract_patch(rendered, a, metric.size()), extract_patch(empty_gt, a, metric.size()));
  if (!set.with_mask.empty()) row.lpips_proxy /= static_cast<double>(set.with_mask.size());
  return row;
}

std::vector<std::uint8_t> removal_region(const RadianceField& field, const Scene& scene,
                                         const std::vector<Camera>& cameras, const std::vector<Mask>& masks,
                                         double margin) {
  if (cameras.size() != masks.size()) throw DimensionMismatch("removal_region: one mask per camera required");
  const int g = field.resolution();
  std::vector<std::uint8_t> region(field.node_count(), 0);
  for (int k = 0; k < g; ++k)
    for (int j = 0; j < g; ++j)
      for (int i = 0; i < g; ++i) {
        const Vec3 p = field.node_position(i, j, k);
        if (scene.empty_scene_distance(p) < margin) continue;
        int seen = 0;
        bool inside = true;
        for (std::size_t v = 0; v < cameras.size() && inside; ++v) {
          const auto pr = project(cameras[v], p);
          if (!pr) continue;
          const int x = static_cast<int>(std::floor(pr->pixel.u)), y = static_cast<int>(std::floor(pr->pixel.v));
          if (!masks[v].contains(x, y)) continue;
          inside = masks[v].at(x, y) != 0;
          ++seen;
        }
        region[field.node_index(i, j, k)] = inside && seen > 0;
      }
  return region;
}

double cross_view_inconsistency(const std::vector<RgbImage>& renders, const std::vector<DepthImage>& ray_depths,
                                const std::vector<Camera>& cameras, const std::vector<Mask>& masks,
                                double z_tolerance) {
  const std::size_t n = cameras.size();
  if (renders.size() != n || ray_depths.size() != n || masks.size() != n)
    throw DimensionMismatch("cross_view_inconsistency: one render, depth and mask per camera required");
  double total = 0.0;
  std::size_t points = 0;
  for (std::size_t v = 0; v < n; ++v)
    for (int y = 0; y < masks[v].height(); ++y)
      for (int x = 0; x < masks[v].width(); ++x) {
        const double t = ray_depths[v].at(x, y);
        if (!masks[v].at(x, y) || !(t > 0.0) || !std::isfinite(t)) continue;
        const Vec3 X = point_from_depth(pixel_center_ray(cameras[v], x, y), t);
        Vec3 sum = Vec3::Zero(), sum_sq = Vec3::Zero();
        int k = 0;
        for (std::size_t u = 0; u < n; ++u) {
          const auto pr = project(cameras[u], X);
          if (!pr) continue;
          const int px = static_cast<int>(std::floor(pr->pixel.u)), py = static_cast<int>(std::floor(pr->pixel.v));
          if (!renders[u].contains(px, py)) continue;
          const Ray r = pixel_center_ray(cameras[u], px, py);
          const double z = cameras[u].z_from_ray_depth(r.direction, ray_depths[u].at(px, py));
          if (std::abs(z - pr->depth) > z_tolerance) continue;
          const Vec3 c(renders[u].at(px, py, 0), renders[u].at(px, py, 1), renders[u].at(px, py, 2));
          sum += c;
          sum_sq += c.cwiseProduct(c);
          ++k;
        }
        if (k < 2) continue;
        const Vec3 mean = sum / k;
        total += (sum_sq / k - mean.cwiseProduct(mean)).cwiseMax(0.0).mean();
        ++points;
      }
  return points ? total / static_cast<double>(points) : 0.0;
}

std::string eval_report_json(const std::vector<EvalReport>& reports) {
  using nlohmann::ordered_json;
  auto row_json = [](const EvalRow& r) {
    return ordered_json{{"psnr", r.psnr}, {"masked_l1", r.masked_l1}, {"lpips_proxy", r.lpips_proxy}};
  };
  ordered_json doc;
  doc["format"] = "inpaint360-eval";
  doc["psnr_cap"] = kPsnrCap;
  doc["note"] = "FID is not computed; lpips_proxy is a fixed-filter perceptual distance";
  ordered_json list = ordered_json::array();
  for (const auto& rep : reports) {
    ordered_json j;
    j["name"] = rep.name;
    j["mean"] = row_json(rep.mean);
    j["floater_mass"] = rep.floater_mass;
    j["outside_mass"] = rep.outside_mass;
    j["inconsistency"] = rep.inconsistency;
    ordered_json views = ordered_json::array();
    for (const auto& r : rep.views) views.push_back(row_json(r));
    j["views"] = views;
    list.push_back(j);
  }
  doc["reports"] = list;
  return doc.dump(2) + "\n";
}

std::string sha256_hex(const std::vector<std::uint8_t>& bytes) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1)
    throw IoError("sha256 failed");
  std::string hex;
  char buf[3];
  for (unsigned int i = 0; i < len; ++i) {
    std::snprintf(buf, sizeof buf, "%02x", md[i]);
    hex += buf;
  }
  return hex;
}

std::string sha256_file(const std::string& path) { return sha256_hex(read_file_bytes(path)); }

}  // namespace inpaint360
