#include "immunokit/numcore/adam.hpp"

#include <cmath>

#include "immunokit/error.hpp"
#include "immunokit/textio.hpp"

namespace immunokit::nn {

void AdamConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ValidationError("learning rate must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0)) throw ValidationError("beta1 must lie in [0, 1)");
  if (!(beta2 >= 0.0 && beta2 < 1.0)) throw ValidationError("beta2 must lie in [0, 1)");
  if (!(epsilon > 0.0)) throw ValidationError("epsilon must be positive");
}

void adam_step(ParamStore& params, const AdamConfig& config) {
  for (const auto& [name, p] : params) {
    if (!p.grad.all_finite()) throw NumericError("non-finite gradient in parameter '" + name + "'");
  }
  const std::uint64_t t = params.step_count() + 1;
  const double correction1 = 1.0 - std::pow(config.beta1, static_cast<double>(t));
  const double correction2 = 1.0 - std::pow(config.beta2, static_cast<double>(t));
  for (auto& [name, p] : params) {
    auto value = p.value.data();
    auto grad = p.grad.data();
    auto m = p.m.data();
    auto v = p.v.data();
    for (std::size_t i = 0; i < value.size(); ++i) {
      const double g = grad[i];
      m[i] = config.beta1 * m[i] + (1.0 - config.beta1) * g;
      v[i] = config.beta2 * v[i] + (1.0 - config.beta2) * g * g;
      const double m_hat = m[i] / correction1;
      const double v_hat = v[i] / correction2;
      value[i] -= config.learning_rate * m_hat / (std::sqrt(v_hat) + config.epsilon);
      grad[i] = 0.0;
    }
  }
  params.set_step_count(t);
}

}  // namespace immunokit::nn
