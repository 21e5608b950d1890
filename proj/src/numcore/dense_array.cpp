#include "immunokit/numcore/dense_array.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

#include "immunokit/error.hpp"

namespace immunokit::nn {

namespace {

std::size_t product(const std::vector<std::size_t>& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

void check_extents(const std::vector<std::size_t>& shape) {
  if (shape.empty()) throw ShapeError("array shape must have at least one extent");
  for (auto extent : shape) {
    if (extent == 0) throw ShapeError("array extents must be positive: " + shape_string(shape));
  }
}

}  // namespace

DenseArray::DenseArray(std::vector<std::size_t> shape, double fill) : shape_(std::move(shape)) {
  check_extents(shape_);
  data_.assign(product(shape_), fill);
}

DenseArray::DenseArray(std::vector<std::size_t> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  check_extents(shape_);
  if (data_.size() != product(shape_)) {
    throw ShapeError("data length " + std::to_string(data_.size()) + " does not match shape " +
                     shape_string(shape_));
  }
}

std::size_t DenseArray::cols() const {
  if (shape_.size() <= 1) return 1;
  return std::accumulate(shape_.begin() + 1, shape_.end(), std::size_t{1}, std::multiplies<>());
}

std::span<double> DenseArray::row(std::size_t r) {
  const auto c = cols();
  return std::span<double>(data_).subspan(r * c, c);
}

std::span<const double> DenseArray::row(std::size_t r) const {
  const auto c = cols();
  return std::span<const double>(data_).subspan(r * c, c);
}

void DenseArray::fill(double value) { std::fill(data_.begin(), data_.end(), value); }

bool DenseArray::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double x) { return std::isfinite(x); });
}

DenseArray DenseArray::reshaped(std::vector<std::size_t> shape) const {
  return DenseArray(std::move(shape), data_);
}

std::string shape_string(const std::vector<std::size_t>& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ", ";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

void expect_shape(const DenseArray& actual, const std::vector<std::size_t>& expected,
                  const std::string& what) {
  if (actual.shape() != expected) {
    throw ShapeError(what + ": expected shape " + shape_string(expected) + ", got " +
                     shape_string(actual.shape()));
  }
}

DenseArray matmul(const DenseArray& a, const DenseArray& b) {
  const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
  if (b.rows() != k) {
    throw ShapeError("matmul: inner extents differ (" + shape_string(a.shape()) + " x " +
                     shape_string(b.shape()) + ")");
  }
  DenseArray out = DenseArray::matrix(n, m);
  const double* pa = a.data().data();
  const double* pb = b.data().data();
  double* po = out.data().data();
  for (std::size_t i = 0; i < n; ++i) {
    double* orow = po + i * m;
    for (std::size_t p = 0; p < k; ++p) {
      const double x = pa[i * k + p];
      const double* brow = pb + p * m;
      for (std::size_t j = 0; j < m; ++j) orow[j] += x * brow[j];
    }
  }
  return out;
}

DenseArray matmul_at_b(const DenseArray& a, const DenseArray& b) {
  const std::size_t k = a.rows(), n = a.cols(), m = b.cols();
  if (b.rows() != k) {
    throw ShapeError("matmul_at_b: row extents differ (" + shape_string(a.shape()) + ", " +
                     shape_string(b.shape()) + ")");
  }
  DenseArray out = DenseArray::matrix(n, m);
  const double* pa = a.data().data();
  const double* pb = b.data().data();
  double* po = out.data().data();
  for (std::size_t p = 0; p < k; ++p) {
    const double* brow = pb + p * m;
    for (std::size_t i = 0; i < n; ++i) {
      const double x = pa[p * n + i];
      double* orow = po + i * m;
      for (std::size_t j = 0; j < m; ++j) orow[j] += x * brow[j];
    }
  }
  return out;
}

DenseArray matmul_a_bt(const DenseArray& a, const DenseArray& b) {
  const std::size_t n = a.rows(), k = a.cols(), m = b.rows();
  if (b.cols() != k) {
    throw ShapeError("matmul_a_bt: column extents differ (" + shape_string(a.shape()) + ", " +
                     shape_string(b.shape()) + ")");
  }
  DenseArray out = DenseArray::matrix(n, m);
  const double* pa = a.data().data();
  const double* pb = b.data().data();
  double* po = out.data().data();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += pa[i * k + p] * pb[j * k + p];
      po[i * m + j] = acc;
    }
  }
  return out;
}

void add_inplace(DenseArray& target, const DenseArray& source) {
  if (target.shape() != source.shape()) {
    throw ShapeError("add: shapes differ (" + shape_string(target.shape()) + " vs " +
                     shape_string(source.shape()) + ")");
  }
  auto t = target.data();
  auto s = source.data();
  for (std::size_t i = 0; i < t.size(); ++i) t[i] += s[i];
}

}  // namespace immunokit::nn
