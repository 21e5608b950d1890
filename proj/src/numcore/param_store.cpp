#include "immunokit/numcore/param_store.hpp"

#include <cmath>

#include "immunokit/error.hpp"
#include "immunokit/rng.hpp"

namespace immunokit::nn {

Parameter& ParamStore::add(const std::string& name, std::vector<std::size_t> shape) {
  if (contains(name)) throw ValidationError("duplicate parameter name '" + name + "'");
  DenseArray zeros(std::move(shape));
  auto [it, inserted] = entries_.emplace(name, Parameter{zeros, zeros, zeros, zeros});
  (void)inserted;
  return it->second;
}

Parameter& ParamStore::add_uniform(const std::string& name, std::vector<std::size_t> shape,
                                   std::size_t fan_in, Rng& rng) {
  Parameter& p = add(name, std::move(shape));
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  for (auto& x : p.value.data()) x = rng.uniform(-bound, bound);
  return p;
}

Parameter& ParamStore::at(const std::string& name) {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw ValidationError("unknown parameter '" + name + "'");
  return it->second;
}

const Parameter& ParamStore::at(const std::string& name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw ValidationError("unknown parameter '" + name + "'");
  return it->second;
}

std::size_t ParamStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& [name, p] : entries_) n += p.value.size();
  return n;
}

void ParamStore::zero_grad() {
  for (auto& [name, p] : entries_) p.grad.fill(0.0);
}

void ParamStore::scale_grad(double factor) {
  for (auto& [name, p] : entries_) {
    for (auto& g : p.grad.data()) g *= factor;
  }
}

void ParamStore::assign_values(const ParamStore& other) {
  for (auto& [name, p] : entries_) {
    const auto& src = other.at(name).value;
    expect_shape(src, p.value.shape(), "assign_values '" + name + "'");
    p.value = src;
  }
}

}  // namespace immunokit::nn
