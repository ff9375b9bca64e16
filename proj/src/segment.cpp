#include "inpaint360/segment.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <filesystem>
#include <map>
#include <set>

#include <json.hpp>

#include "inpaint360/errors.hpp"
#include "inpaint360/parallel.hpp"
#include "inpaint360/png_io.hpp"
#include "inpaint360/random.hpp"

namespace inpaint360 {

namespace {

struct Token {
  std::string word;  // lowercase
  std::size_t pos;
};

std::string lower(std::string s) {
  for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

}  // namespace

Instruction parse_instruction(const std::string& text) {
  std::size_t end = text.size();
  while (end > 0 && (std::isspace(static_cast<unsigned char>(text[end - 1])) || std::ispunct(static_cast<unsigned char>(text[end - 1]))))
    --end;
  std::vector<Token> tokens;
  for (std::size_t i = 0; i < end;) {
    if (std::isspace(static_cast<unsigned char>(text[i]))) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < end && !std::isspace(static_cast<unsigned char>(text[j]))) ++j;
    tokens.push_back({lower(text.substr(i, j - i)), i});
    i = j;
  }
  if (tokens.empty()) throw ParseError("empty instruction", 0);

  std::size_t k = 0;
  auto pos_here = [&] { return k < tokens.size() ? tokens[k].pos : end; };
  auto expect = [&](const char* word) {
    if (k >= tokens.size() || tokens[k].word != word)
      throw ParseError(std::string("expected '") + word + "'", pos_here());
    ++k;
  };
  auto object_name = [&] {
    if (k >= tokens.size()) throw ParseError("expected an object name", pos_here());
    const Token& t = tokens[k];
    if (t.word == "and" || t.word == "the") throw ParseError("expected an object name", t.pos);
    for (std::size_t c = 0; c < t.word.size(); ++c) {
      const unsigned char ch = static_cast<unsigned char>(t.word[c]);
      if (!std::isalnum(ch) && ch != '-' && ch != '_') throw ParseError("invalid character in object name", t.pos + c);
    }
    ++k;
    return t.word;
  };

  if (tokens[0].word != "remove") throw ParseError("unsupported verb '" + text.substr(tokens[0].pos, tokens[0].word.size()) + "'", tokens[0].pos);
  ++k;
  expect("the");
  Instruction ins;
  ins.text = text;
  ins.objects.push_back(object_name());
  while (k < tokens.size()) {
    expect("and");
    if (k < tokens.size() && tokens[k].word == "the") ++k;
    ins.objects.push_back(object_name());
  }
  return ins;
}

std::vector<PointPrompt> seed_prompts_from_box(const BoxProposal& box, const IdImage* ids, int target_id) {
  if (box.r <= box.l || box.d <= box.u) throw BadSpec("seed_prompts_from_box: empty box");
  const double w = box.width(), h = box.height();
  auto at = [&](double fx, double fy) {
    PointPrompt p;
    p.x = std::min(box.r - 1, box.l + static_cast<int>(std::floor(fx * w)));
    p.y = std::min(box.d - 1, box.u + static_cast<int>(std::floor(fy * h)));
    p.source = PromptSource::kBoxSeed;
    return p;
  };
  std::vector<PointPrompt> pts;
  for (const auto& [fx, fy] : {std::pair{0.5, 0.5}, {0.25, 0.25}, {0.75, 0.25}, {0.25, 0.75}, {0.75, 0.75}}) {
    const PointPrompt p = at(fx, fy);
    if (std::find(pts.begin(), pts.end(), p) == pts.end()) pts.push_back(p);
  }
  if (!ids) return pts;
  if (target_id <= 0) {
    std::map<int, int> votes;
    for (const auto& p : pts)
      if (ids->contains(p.x, p.y) && ids->at(p.x, p.y) != 0) ++votes[ids->at(p.x, p.y)];
    int best = 0;
    for (const auto& [id, n] : votes)
      if (best == 0 || n > votes[best]) best = id;
    target_id = best;
  }
  std::vector<PointPrompt> kept;
  for (const auto& p : pts)
    if (ids->contains(p.x, p.y) && ids->at(p.x, p.y) == target_id) kept.push_back(p);
  return kept;
}

Mask OracleSegmenter::segment(std::size_t view, std::size_t, const std::vector<PointPrompt>& prompts,
                              const std::optional<BoxProposal>& box) const {
  if (prompts.empty()) throw EmptyPrompts("segmenter called without prompts");
  if (view >= ids_.size()) throw OutOfBounds("oracle segmenter: view index out of range");
  const IdImage& ids = ids_[view];
  std::map<int, int> votes;
  bool warped = false;
  for (const auto& p : prompts) {
    warped |= p.source == PromptSource::kWarped;
    if (ids.contains(p.x, p.y)) ++votes[ids.at(p.x, p.y)];
  }
  int best = 0, best_votes = 0;
  for (const auto& [id, n] : votes)
    if (n > best_votes) best = id, best_votes = n;
  Mask m(ids.width(), ids.height(), 1, 0);
  if (best == 0) return m;
  for (int y = 0; y < ids.height(); ++y)
    for (int x = 0; x < ids.width(); ++x)
      m.at(x, y) = ids.at(x, y) == best && (warped || !box || box->contains(x, y));
  return m;
}

std::string FileSegmenter::mask_name(std::size_t view, std::size_t object) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "view_%03zu_obj_%zu.png", view, object);
  return buf;
}

Mask FileSegmenter::segment(std::size_t view, std::size_t object, const std::vector<PointPrompt>&,
                            const std::optional<BoxProposal>&) const {
  const auto path = std::filesystem::path(dir_) / mask_name(view, object);
  if (!std::filesystem::exists(path)) return Mask(width_, height_, 1, 0);
  Mask m = read_mask_png(path.string());
  if (m.width() != width_ || m.height() != height_) throw DimensionMismatch("external mask " + path.string());
  return m;
}

Mask union_masks(const std::vector<Mask>& masks) {
  if (masks.empty()) throw DimensionMismatch("union_masks: no masks");
  Mask out(masks[0].width(), masks[0].height(), 1, 0);
  for (const auto& m : masks) {
    require_same_size(m, out, "union_masks");
    for (std::size_t i = 0; i < out.data().size(); ++i) out.data()[i] |= m.data()[i] != 0;
  }
  return out;
}

std::uint64_t MaskSet::checksum() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&](std::uint64_t v) {
    for (int b = 0; b < 8; ++b) {
      h ^= (v >> (8 * b)) & 0xff;
      h *= 0x100000001b3ULL;
    }
  };
  mix(static_cast<std::uint64_t>(rounds));
  for (const auto& v : views)
    for (const auto& o : v.objects) {
      for (auto b : o.mask.data()) mix(b);
      for (const auto& p : o.prompts) {
        mix(static_cast<std::uint64_t>(p.x));
        mix(static_cast<std::uint64_t>(p.y));
        mix(static_cast<std::uint64_t>(p.source));
        mix(static_cast<std::uint64_t>(p.origin_view));
      }
    }
  return h;
}

namespace {

void rebuild_union(ViewMasks& v) {
  std::vector<Mask> ms;
  for (const auto& o : v.objects) ms.push_back(o.mask);
  v.united = union_masks(ms);
}

std::vector<std::size_t> union_areas(const MaskSet& s) {
  std::vector<std::size_t> a;
  for (const auto& v : s.views) a.push_back(mask_area(v.united));
  return a;
}

// Value below which `fraction` of the sorted values lie (nearest rank).
double percentile(std::vector<double> v, double fraction) {
  std::sort(v.begin(), v.end());
  const std::size_t k = std::min(v.size() - 1, static_cast<std::size_t>(std::ceil(fraction * v.size())) - 1);
  return v[k];
}

}  // namespace

MaskSet initial_masks(const std::vector<std::string>& objects, const std::vector<std::vector<BoxProposal>>& boxes,
                      const std::vector<IdImage>* ids, const Segmenter& segmenter, int width, int height,
                      int workers) {
  if (objects.empty()) throw BadSpec("initial_masks: no objects");
  if (ids && ids->size() != boxes.size()) throw DimensionMismatch("initial_masks: one id map per view required");
  MaskSet set;
  set.objects = objects;
  set.views.resize(boxes.size());
  parallel_for(boxes.size(), workers, [&](std::size_t n) {
    ViewMasks& vm = set.views[n];
    vm.objects.resize(objects.size());
    for (std::size_t q = 0; q < objects.size(); ++q) {
      ObjectView& ov = vm.objects[q];
      for (const auto& b : boxes[n])
        if (b.object == static_cast<int>(q)) ov.box = b;
      if (ov.box) ov.prompts = seed_prompts_from_box(*ov.box, ids ? &(*ids)[n] : nullptr);
      ov.mask = ov.prompts.empty() ? Mask(width, height, 1, 0) : segmenter.segment(n, q, ov.prompts, ov.box);
      for (auto& p : ov.prompts) p.origin_view = static_cast<int>(n);
    }
    rebuild_union(vm);
  });
  set.area_history.push_back(union_areas(set));
  return set;
}

namespace {

// True when one of the eight neighbours of (x, y) has mask value `value`.
// Pixels past the border count as background.
bool touches(const Mask& m, int x, int y, std::uint8_t value) {
  for (int dy = -1; dy <= 1; ++dy)
    for (int dx = -1; dx <= 1; ++dx) {
      if (dx == 0 && dy == 0) continue;
      const std::uint8_t here = m.contains(x + dx, y + dy) ? (m.at(x + dx, y + dy) ? 1 : 0) : 0;
      if (here == value) return true;
    }
  return false;
}

}  // namespace

MaskSet refine_depth_warp(MaskSet set, const std::vector<DepthImage>& ray_depths, const std::vector<Camera>& cameras,
                          const RefineConfig& cfg, const Segmenter& segmenter) {
  if (cfg.views_per_target < 1 || cfg.rays_per_source < 1 || cfg.max_rounds < 1)
    throw ConfigError("refine: m, p and rounds must be >= 1");
  const std::size_t N = set.views.size();
  if (cameras.size() != N) throw DimensionMismatch("refine: one camera per view required");
  if (ray_depths.size() != N) throw MissingDepth("refine: depth renders missing for some views");
  for (std::size_t n = 0; n < N; ++n) {
    if (ray_depths[n].empty()) throw MissingDepth("refine: view " + std::to_string(n) + " has no depth render");
    if (ray_depths[n].width() != cameras[n].width() || ray_depths[n].height() != cameras[n].height())
      throw DimensionMismatch("refine: depth size differs from camera");
  }
  if (set.area_history.empty()) set.area_history.push_back(union_areas(set));
  const std::size_t Q = set.objects.size();

  // Per (view, object): in-mask pixels and the discard threshold.
  struct Source {
    std::vector<std::pair<int, int>> pixels;
    double tau = 0.0;
  };

  for (int round = 1; round <= cfg.max_rounds; ++round) {
    std::vector<std::vector<Source>> sources(N, std::vector<Source>(Q));
    for (std::size_t n = 0; n < N; ++n)
      for (std::size_t q = 0; q < Q; ++q) {
        Source& s = sources[n][q];
        const Mask& m = set.views[n].objects[q].mask;
        std::vector<double> depths;
        std::vector<std::pair<int, int>> all;
        for (int y = 0; y < m.height(); ++y)
          for (int x = 0; x < m.width(); ++x)
            if (m.at(x, y)) {
              all.emplace_back(x, y);
              if (!touches(m, x, y, 0)) s.pixels.emplace_back(x, y);
              depths.push_back(ray_depths[n].at(x, y));
            }
        // Thin masks have no interior; fall back to every pixel.
        if (s.pixels.empty()) s.pixels = std::move(all);
        if (!depths.empty()) s.tau = cfg.depth_percentile_factor * percentile(depths, 0.9);
      }

    // Every view reads the previous round's masks and writes only its own
    // new prompts, so views are independent within the round.
    std::vector<std::vector<std::vector<PointPrompt>>> gained(N, std::vector<std::vector<PointPrompt>>(Q));
    parallel_for(N, cfg.workers, [&](std::size_t n) {
      if (N < 2) return;
      Rng rng = make_rng(cfg.seed, {0x3e7aULL, static_cast<std::uint64_t>(round), n});
      std::vector<std::size_t> others;
      for (std::size_t s = 0; s < N; ++s)
        if (s != n) others.push_back(s);
      const std::size_t m = std::min<std::size_t>(cfg.views_per_target, others.size());
      for (std::size_t i = 0; i < m; ++i) std::swap(others[i], others[i + uniform_index(rng, others.size() - i)]);
      const Camera& target = cameras[n];
      for (std::size_t q = 0; q < Q; ++q) {
        const ObjectView& ov = set.views[n].objects[q];
        auto& out = gained[n][q];
        for (std::size_t i = 0; i < m; ++i) {
          const std::size_t s = others[i];
          const Source& src = sources[s][q];
          if (src.pixels.empty()) continue;
          for (int k = 0; k < cfg.rays_per_source; ++k) {
            const auto [x, y] = src.pixels[uniform_index(rng, src.pixels.size())];
            const double t = ray_depths[s].at(x, y);
            if (!(t > 0.0) || t > src.tau) continue;
            const Vec3 X = point_from_depth(pixel_center_ray(cameras[s], x, y), t);
            const auto proj = project(target, X);
            if (!proj) continue;
            const int u = static_cast<int>(std::floor(proj->pixel.u)), v = static_cast<int>(std::floor(proj->pixel.v));
            if (!ov.mask.contains(u, v) || ov.mask.at(u, v) || touches(ov.mask, u, v, 1)) continue;
            const Ray land = pixel_center_ray(target, u, v);
            const double z_rendered = target.z_from_ray_depth(land.direction, ray_depths[n].at(u, v));
            if (std::abs(proj->depth - z_rendered) > cfg.z_tolerance) continue;
            PointPrompt p{u, v, true, PromptSource::kWarped, static_cast<int>(s)};
            auto same_pixel = [&](const PointPrompt& o) { return o.x == u && o.y == v; };
            if (std::none_of(ov.prompts.begin(), ov.prompts.end(), same_pixel) &&
                std::none_of(out.begin(), out.end(), same_pixel))
              out.push_back(p);
          }
        }
      }
    });

    bool any = false;
    for (std::size_t n = 0; n < N; ++n)
      for (std::size_t q = 0; q < Q; ++q) any |= !gained[n][q].empty();
    if (!any) break;

    parallel_for(N, cfg.workers, [&](std::size_t n) {
      bool changed = false;
      for (std::size_t q = 0; q < Q; ++q) {
        if (gained[n][q].empty()) continue;
        ObjectView& ov = set.views[n].objects[q];
        ov.prompts.insert(ov.prompts.end(), gained[n][q].begin(), gained[n][q].end());
        ov.mask = segmenter.segment(n, q, ov.prompts, ov.box);
        changed = true;
      }
      if (changed) rebuild_union(set.views[n]);
    });
    set.rounds = round;
    set.area_history.push_back(union_areas(set));
  }
  return set;
}

std::string prompts_to_json(const MaskSet& set, std::size_t view) {
  using nlohmann::ordered_json;
  ordered_json doc;
  doc["format"] = "inpaint360-prompts";
  doc["version"] = 1;
  doc["view"] = view;
  ordered_json objs = ordered_json::array();
  const ViewMasks& vm = set.views.at(view);
  for (std::size_t q = 0; q < vm.objects.size(); ++q) {
    ordered_json o;
    o["object"] = q;
    o["name"] = set.objects[q];
    if (vm.objects[q].box) {
      const auto& b = *vm.objects[q].box;
      o["box"] = {{"l", b.l}, {"r", b.r}, {"u", b.u}, {"d", b.d}, {"score", b.score}};
    }
    ordered_json ps = ordered_json::array();
    for (const auto& p : vm.objects[q].prompts)
      ps.push_back({{"u", p.x + 0.5}, {"v", p.y + 0.5}, {"polarity", p.positive ? "positive" : "negative"},
                    {"source", to_string(p.source)}, {"origin_view", p.origin_view}});
    o["prompts"] = ps;
    objs.push_back(o);
  }
  doc["objects"] = objs;
  return doc.dump(2) + "\n";
}

}  // namespace inpaint360
