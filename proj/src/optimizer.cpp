#include "nssi/optimizer.hpp"

#include <cmath>
#include <stdexcept>

namespace nssi {

RmspropState rmsprop_init(const ParamSet& params) { return {params.zeros_like()}; }

void rmsprop_step(ParamSet& params, const GradientSet& grads, RmspropState& state, const RmspropConfig& config) {
  if (!(config.lr > 0) || !(config.decay >= 0 && config.decay < 1) || !(config.epsilon > 0) ||
      !(config.weight_decay >= 0)) {
    throw std::invalid_argument("rmsprop: invalid hyperparameters");
  }
  for (ParamTensor& p : params.entries()) {
    if (!p.trainable || !grads.contains(p.name)) continue;
    const Tensor& g = grads[p.name];
    Tensor& s = state.square_avg[p.name];
    if (g.shape() != p.value.shape() || s.shape() != p.value.shape()) {
      throw std::invalid_argument("rmsprop: shape mismatch for " + p.name);
    }
    const double wd = p.decay ? config.weight_decay : 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double gi = g[i] + wd * p.value[i];
      if (!std::isfinite(gi)) throw std::runtime_error("rmsprop: non-finite gradient in " + p.name);
      s[i] = config.decay * s[i] + (1.0 - config.decay) * gi * gi;
      p.value[i] -= config.lr * gi / (std::sqrt(s[i]) + config.epsilon);
    }
  }
}

}  // namespace nssi
