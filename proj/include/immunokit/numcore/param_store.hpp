#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "immunokit/numcore/dense_array.hpp"

namespace immunokit {
class Rng;
}

namespace immunokit::nn {

// One learnable tensor with its gradient accumulator and Adam moments.
struct Parameter {
  DenseArray value;
  DenseArray grad;
  DenseArray m;
  DenseArray v;
};

// Named parameters of one model plus the optimizer step counter.
// Confined to one training thread at a time.
class ParamStore {
 public:
  using Map = std::map<std::string, Parameter>;

  // Adds a zero-valued parameter. Throws ValidationError on a duplicate name.
  Parameter& add(const std::string& name, std::vector<std::size_t> shape);
  // Adds a parameter initialised uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)].
  Parameter& add_uniform(const std::string& name, std::vector<std::size_t> shape,
                         std::size_t fan_in, Rng& rng);

  bool contains(const std::string& name) const { return entries_.count(name) != 0; }
  // Throw ValidationError naming the missing parameter.
  Parameter& at(const std::string& name);
  const Parameter& at(const std::string& name) const;
  const DenseArray& value(const std::string& name) const { return at(name).value; }
  DenseArray& grad(const std::string& name) { return at(name).grad; }

  Map::iterator begin() { return entries_.begin(); }
  Map::iterator end() { return entries_.end(); }
  Map::const_iterator begin() const { return entries_.begin(); }
  Map::const_iterator end() const { return entries_.end(); }
  std::size_t entry_count() const { return entries_.size(); }
  std::size_t scalar_count() const;

  std::uint64_t step_count() const { return step_count_; }
  void set_step_count(std::uint64_t t) { step_count_ = t; }

  void zero_grad();
  void scale_grad(double factor);
  // Copies values (not gradients or moments) from a store with identical names/shapes.
  void assign_values(const ParamStore& other);

 private:
  Map entries_;
  std::uint64_t step_count_ = 0;
};

}  // namespace immunokit::nn
