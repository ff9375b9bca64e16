#include "inpaint360/optimizer.hpp"

#include <cmath>

#include "inpaint360/errors.hpp"

namespace inpaint360 {

void adam_step(std::span<float> params, std::span<double> grads, OptimizerState& state) {
  if (params.size() != grads.size()) throw DimensionMismatch("adam_step: params/grads size");
  if (state.m.size() != params.size()) {
    state.m.assign(params.size(), 0.0);
    state.v.assign(params.size(), 0.0);
  }
  ++state.step;
  const double b1 = state.beta1, b2 = state.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
  const std::size_t groups = state.group_lr.size();
  const double* lr = state.group_lr.data();
  double* m = state.m.data();
  double* v = state.v.data();
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    grads[i] = 0.0;
    m[i] = b1 * m[i] + (1.0 - b1) * g;
    v[i] = b2 * v[i] + (1.0 - b2) * g * g;
    if (m[i] == 0.0) continue;
    const double mhat = m[i] / c1;
    const double vhat = v[i] / c2;
    const double step = state.lr_scale * lr[i % groups] * mhat / (std::sqrt(vhat) + state.eps);
    params[i] = static_cast<float>(params[i] - step);
  }
}

}  // namespace inpaint360
