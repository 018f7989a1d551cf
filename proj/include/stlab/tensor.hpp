#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace stlab {

using Shape = std::vector<std::size_t>;

// Dense row-major array of doubles. Rank 1 tensors behave as a single row
// when accessed through the matrix helpers.
class Tensor {
 public:
  Tensor() = default;
  // Throws DimensionError when the shape does not match the value count and
  // NumericError when a value is NaN or infinite.
  Tensor(Shape shape, std::vector<double> values);

  static Tensor zeros(std::size_t rows, std::size_t cols);
  static Tensor filled(std::size_t rows, std::size_t cols, double value);
  static Tensor identity(std::size_t n);
  static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows);
  static Tensor vector(std::vector<double> values);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return values_.size(); }
  std::size_t rows() const;
  std::size_t cols() const;

  double operator()(std::size_t r, std::size_t c) const { return values_[r * cols() + c]; }
  double& operator()(std::size_t r, std::size_t c) { return values_[r * cols() + c]; }

  std::span<const double> values() const { return values_; }
  std::span<double> values() { return values_; }
  std::span<const double> row(std::size_t r) const;
  std::span<double> row(std::size_t r);

  // True when shapes match and every value has the same bit pattern.
  bool bitwise_equal(const Tensor& other) const;

  // Throws NumericError naming `what` if any value is not finite.
  void check_finite(const std::string& what) const;

 private:
  Shape shape_;
  std::vector<double> values_;
};

std::string shape_string(const Shape& shape);

}  // namespace stlab
