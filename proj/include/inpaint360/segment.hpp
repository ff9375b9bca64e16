#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "inpaint360/geometry.hpp"
#include "inpaint360/image.hpp"
#include "inpaint360/prompts.hpp"

namespace inpaint360 {

struct Instruction {
  std::string text;
  std::vector<std::string> objects;
};

// Grammar (case-insensitive, trailing punctuation ignored):
//   Remove the <obj> {and [the] <obj>}
// Object names are single words, returned lowercase. Throws ParseError with
// the offending character offset.
Instruction parse_instruction(const std::string& text);

// Box center plus the four points at 25%/75% of the box extents, deduplicated.
// With an id map, points on a different instance than `target_id` are dropped;
// target_id <= 0 means "the most frequent non-background id under the points".
std::vector<PointPrompt> seed_prompts_from_box(const BoxProposal& box, const IdImage* ids = nullptr,
                                               int target_id = 0);

// Promptable segmenter contract. Implementations must be safe to call from
// several threads at once.
class Segmenter {
 public:
  virtual ~Segmenter() = default;
  virtual Mask segment(std::size_t view, std::size_t object, const std::vector<PointPrompt>& prompts,
                       const std::optional<BoxProposal>& box) const = 0;
};

// Answers from ground-truth instance ids: the instance under the majority of
// prompts. While no warped prompt exists the answer is clipped to the seeding
// box, so a truncated box yields a partial mask.
class OracleSegmenter : public Segmenter {
 public:
  explicit OracleSegmenter(std::vector<IdImage> ids) : ids_(std::move(ids)) {}
  Mask segment(std::size_t view, std::size_t object, const std::vector<PointPrompt>& prompts,
               const std::optional<BoxProposal>& box) const override;

 private:
  std::vector<IdImage> ids_;
};

// Reads externally produced masks: <dir>/view_NNN_obj_Q.png (0/255 PNG).
// A missing file means an empty mask.
class FileSegmenter : public Segmenter {
 public:
  FileSegmenter(std::string dir, int width, int height) : dir_(std::move(dir)), width_(width), height_(height) {}
  Mask segment(std::size_t view, std::size_t object, const std::vector<PointPrompt>& prompts,
               const std::optional<BoxProposal>& box) const override;
  static std::string mask_name(std::size_t view, std::size_t object);

 private:
  std::string dir_;
  int width_, height_;
};

struct ObjectView {
  std::optional<BoxProposal> box;
  std::vector<PointPrompt> prompts;
  Mask mask;
};

struct ViewMasks {
  std::vector<ObjectView> objects;  // one per instruction object
  Mask united;
};

struct MaskSet {
  std::vector<std::string> objects;
  std::vector<ViewMasks> views;
  int rounds = 0;
  // area_history[r][n]: union-mask area of view n after round r (r = 0 is
  // the box-seeded state).
  std::vector<std::vector<std::size_t>> area_history;

  std::uint64_t checksum() const;
};

// Pixelwise OR. Throws DimensionMismatch on size disagreement.
Mask union_masks(const std::vector<Mask>& masks);

// Seeds prompts from per-view boxes (boxes[n] lists the proposals for view n)
// and asks the segmenter for each object mask.
MaskSet initial_masks(const std::vector<std::string>& objects, const std::vector<std::vector<BoxProposal>>& boxes,
                      const std::vector<IdImage>* ids, const Segmenter& segmenter, int width, int height,
                      int workers = 1);

struct RefineConfig {
  int views_per_target = 5;      // m
  int rays_per_source = 20;      // p
  double depth_percentile_factor = 1.5;
  double z_tolerance = 0.165;    // world units; 2 voxel diagonals at 64^3 over 3 units
  int max_rounds = 3;
  std::uint64_t seed = 0;
  int workers = 1;
};

// Depth-warping prompt refinement. `ray_depths[n]` is the ray-parameter
// depth rendered for view n. Sources are drawn from the mask interior and a
// landing pixel touching the target mask is skipped, since silhouette pixels
// mix two surfaces. Prompts accumulate across rounds; a round ends at a
// barrier before the next starts. Throws MissingDepth when a view has no
// depth render.
MaskSet refine_depth_warp(MaskSet masks, const std::vector<DepthImage>& ray_depths,
                          const std::vector<Camera>& cameras, const RefineConfig& cfg, const Segmenter& segmenter);

// Prompt exchange document for one view (for external segmenters).
std::string prompts_to_json(const MaskSet& masks, std::size_t view);

}  // namespace inpaint360
