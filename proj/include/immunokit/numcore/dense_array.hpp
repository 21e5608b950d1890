#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace immunokit::nn {

// Row-major dense array of doubles. Layers work on rank-2 arrays laid out
// as [tokens, features]; rank-1 arrays carry biases and index sequences.
class DenseArray {
 public:
  DenseArray() = default;
  explicit DenseArray(std::vector<std::size_t> shape, double fill = 0.0);
  DenseArray(std::vector<std::size_t> shape, std::vector<double> data);

  static DenseArray matrix(std::size_t rows, std::size_t cols, double fill = 0.0) {
    return DenseArray({rows, cols}, fill);
  }

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  std::size_t rows() const { return shape_.empty() ? 0 : shape_[0]; }
  // Product of all extents after the first (1 for rank-1 arrays).
  std::size_t cols() const;

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }
  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  std::span<double> row(std::size_t r);
  std::span<const double> row(std::size_t r) const;

  void fill(double value);
  bool all_finite() const;
  DenseArray reshaped(std::vector<std::size_t> shape) const;

  friend bool operator==(const DenseArray&, const DenseArray&) = default;

 private:
  std::vector<std::size_t> shape_;
  std::vector<double> data_;
};

std::string shape_string(const std::vector<std::size_t>& shape);

// Throws ShapeError naming `what` unless `actual` equals `expected`.
void expect_shape(const DenseArray& actual, const std::vector<std::size_t>& expected,
                  const std::string& what);

// out[r, :] = sum_k a[r, k] * b[k, :]; a is [n, k], b is [k, m].
DenseArray matmul(const DenseArray& a, const DenseArray& b);
// a^T b for a [k, n], b [k, m].
DenseArray matmul_at_b(const DenseArray& a, const DenseArray& b);
// a b^T for a [n, k], b [m, k].
DenseArray matmul_a_bt(const DenseArray& a, const DenseArray& b);
// target += source (same shape).
void add_inplace(DenseArray& target, const DenseArray& source);

}  // namespace immunokit::nn
