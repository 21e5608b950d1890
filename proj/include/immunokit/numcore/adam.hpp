#pragma once

#include "immunokit/numcore/param_store.hpp"

namespace immunokit::nn {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  void validate() const;
};

// One Adam update with bias-corrected moments:
//   m <- b1 m + (1-b1) g,  v <- b2 v + (1-b2) g^2
//   value <- value - lr * (m / (1-b1^t)) / (sqrt(v / (1-b2^t)) + eps)
// Increments the step counter and zeroes gradients. Throws NumericError
// naming the first parameter with a non-finite gradient, before any update.
void adam_step(ParamStore& params, const AdamConfig& config);

}  // namespace immunokit::nn
