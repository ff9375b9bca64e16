#pragma once

#include <string>
#include <vector>

namespace inpaint360 {

// Detector output for one object in one view. Pixel bounds are half-open:
// l <= x < r, u <= y < d.
struct BoxProposal {
  int l = 0, r = 0, u = 0, d = 0;
  double score = 1.0;
  int object = 0;          // index into Instruction::objects
  bool truncated = false;  // set by the synthetic detector; diagnostics only

  int width() const { return r - l; }
  int height() const { return d - u; }
  bool contains(int x, int y) const { return x >= l && x < r && y >= u && y < d; }
  bool operator==(const BoxProposal&) const = default;
};

enum class PromptSource { kBoxSeed, kWarped };

struct PointPrompt {
  int x = 0, y = 0;  // integer pixel; its center is (x + 0.5, y + 0.5)
  bool positive = true;
  PromptSource source = PromptSource::kBoxSeed;
  int origin_view = -1;
  bool operator==(const PointPrompt&) const = default;
};

inline const char* to_string(PromptSource s) { return s == PromptSource::kBoxSeed ? "box-seed" : "warped"; }

}  // namespace inpaint360
