#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace inpaint360 {

// Adam moments for a flat parameter vector. Parameters are grouped by
// index modulo `group_lr.size()`, so interleaved layouts (density + rgb per
// voxel) can use one learning rate per channel.
struct OptimizerState {
  std::vector<double> m;
  std::vector<double> v;
  long step = 0;
  double beta1 = 0.9;
  double beta2 = 0.99;
  double eps = 1e-8;
  std::vector<double> group_lr{1e-2};
  double lr_scale = 1.0;  // schedules multiply into this

  OptimizerState() = default;
  OptimizerState(std::size_t n, std::vector<double> lrs) : m(n, 0.0), v(n, 0.0), group_lr(std::move(lrs)) {}
};

// One Adam update. Consumed gradients are zeroed.
void adam_step(std::span<float> params, std::span<double> grads, OptimizerState& state);

}  // namespace inpaint360
