#include "stlab/tensor.hpp"

#include <cmath>
#include <cstring>
#include <functional>
#include <numeric>
#include <sstream>

#include "stlab/error.hpp"

namespace stlab {

Tensor::Tensor(Shape shape, std::vector<double> values)
    : shape_(std::move(shape)), values_(std::move(values)) {
  const std::size_t expected =
      std::accumulate(shape_.begin(), shape_.end(), std::size_t{1}, std::multiplies<>());
  if (shape_.empty() || expected != values_.size()) {
    throw DimensionError("tensor shape " + shape_string(shape_) + " does not hold " +
                         std::to_string(values_.size()) + " values");
  }
  check_finite("tensor construction");
}

Tensor Tensor::zeros(std::size_t rows, std::size_t cols) {
  Tensor t;
  t.shape_ = {rows, cols};
  t.values_.assign(rows * cols, 0.0);
  return t;
}

Tensor Tensor::filled(std::size_t rows, std::size_t cols, double value) {
  Tensor t = zeros(rows, cols);
  std::fill(t.values_.begin(), t.values_.end(), value);
  t.check_finite("tensor fill");
  return t;
}

Tensor Tensor::identity(std::size_t n) {
  Tensor t = zeros(n, n);
  for (std::size_t i = 0; i < n; ++i) t(i, i) = 1.0;
  return t;
}

Tensor Tensor::matrix(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r == 0 ? 0 : rows.begin()->size();
  std::vector<double> values;
  values.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw DimensionError("ragged matrix literal");
    values.insert(values.end(), row.begin(), row.end());
  }
  return Tensor({r, c}, std::move(values));
}

Tensor Tensor::vector(std::vector<double> values) {
  const std::size_t n = values.size();
  return Tensor({n}, std::move(values));
}

std::size_t Tensor::rows() const {
  if (shape_.size() == 1) return 1;
  return shape_.empty() ? 0 : shape_[0];
}

std::size_t Tensor::cols() const { return shape_.empty() ? 0 : shape_.back(); }

std::span<const double> Tensor::row(std::size_t r) const {
  return std::span<const double>(values_).subspan(r * cols(), cols());
}

std::span<double> Tensor::row(std::size_t r) {
  return std::span<double>(values_).subspan(r * cols(), cols());
}

bool Tensor::bitwise_equal(const Tensor& other) const {
  return shape_ == other.shape_ && values_.size() == other.values_.size() &&
         (values_.empty() ||
          std::memcmp(values_.data(), other.values_.data(), values_.size() * sizeof(double)) == 0);
}

void Tensor::check_finite(const std::string& what) const {
  for (std::size_t i = 0; i < values_.size(); ++i) {
    if (!std::isfinite(values_[i])) {
      throw NumericError(what + ": non-finite value at flat index " + std::to_string(i));
    }
  }
}

std::string shape_string(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << 'x';
    out << shape[i];
  }
  out << ']';
  return out.str();
}

}  // namespace stlab
