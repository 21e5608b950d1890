#pragma once

#include <cstdint>
#include <functional>
#include <string>

#include "immunokit/numcore/param_store.hpp"

namespace immunokit::nn {

// Evaluates the loss at the current parameter values. When `with_gradients`
// is true it must also add analytic gradients into the store.
using LossClosure = std::function<double(bool with_gradients)>;

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::string worst_parameter;
  std::size_t worst_index = 0;
  std::size_t probes = 0;
};

// Compares analytic gradients with central differences on `probes`
// coordinates drawn uniformly over all scalars of the store. Relative error
// is |a - f| / max(|a|, |f|, scale_floor). Gradients are zeroed before and
// after. Throws NumericError on a non-finite loss.
GradCheckResult grad_check(const LossClosure& loss, ParamStore& params, std::size_t probes,
                           std::uint64_t seed, double step = 1e-6, double scale_floor = 1e-6);

}  // namespace immunokit::nn
