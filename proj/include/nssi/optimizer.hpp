#pragma once

#include "nssi/params.hpp"

namespace nssi {

struct RmspropConfig {
  double lr = 1e-3;
  double decay = 0.99;
  double epsilon = 1e-8;
  double weight_decay = 1e-5;  // added to the gradient of tensors flagged `decay`
};

// Squared-gradient accumulators, one per trainable tensor.
struct RmspropState {
  ParamSet square_avg;
};

RmspropState rmsprop_init(const ParamSet& params);

//   g <- g + wd * p      (decay-flagged tensors only)
//   s <- decay * s + (1 - decay) * g^2
//   p <- p - lr * g / (sqrt(s) + eps)
// Tensors absent from grads are left untouched.
void rmsprop_step(ParamSet& params, const GradientSet& grads, RmspropState& state, const RmspropConfig& config);

}  // namespace nssi
