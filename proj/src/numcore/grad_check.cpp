#include "immunokit/numcore/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "immunokit/error.hpp"
#include "immunokit/rng.hpp"

namespace immunokit::nn {

namespace {

double checked(double loss) {
  if (!std::isfinite(loss)) throw NumericError("grad_check: non-finite loss");
  return loss;
}

}  // namespace

GradCheckResult grad_check(const LossClosure& loss, ParamStore& params, std::size_t probes,
                           std::uint64_t seed, double step, double scale_floor) {
  params.zero_grad();
  checked(loss(true));

  std::vector<std::pair<std::string, Parameter*>> entries;
  std::vector<std::size_t> offsets;
  std::size_t total = 0;
  for (auto& [name, p] : params) {
    entries.emplace_back(name, &p);
    offsets.push_back(total);
    total += p.value.size();
  }
  GradCheckResult result;
  if (total == 0) return result;

  Rng rng(seed);
  for (std::size_t probe = 0; probe < probes; ++probe) {
    const std::size_t flat = rng.below(total);
    const auto entry = static_cast<std::size_t>(
        std::upper_bound(offsets.begin(), offsets.end(), flat) - offsets.begin() - 1);
    Parameter& p = *entries[entry].second;
    const std::size_t i = flat - offsets[entry];

    const double analytic = p.grad[i];
    const double saved = p.value[i];
    p.value[i] = saved + step;
    const double plus = checked(loss(false));
    p.value[i] = saved - step;
    const double minus = checked(loss(false));
    p.value[i] = saved;

    const double numeric = (plus - minus) / (2.0 * step);
    const double scale = std::max({std::abs(analytic), std::abs(numeric), scale_floor});
    const double error = std::abs(analytic - numeric) / scale;
    ++result.probes;
    if (error >= result.max_relative_error) {
      result.max_relative_error = error;
      result.worst_parameter = entries[entry].first;
      result.worst_index = i;
    }
  }
  params.zero_grad();
  return result;
}

}  // namespace immunokit::nn
