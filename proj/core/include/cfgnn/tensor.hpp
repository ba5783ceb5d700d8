// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace cfgnn::numerics {

/// Raised when an operation would produce NaN/Inf or is mathematically undefined
/// (division by zero, log of a non-positive value).
class NumericError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Raised on incompatible operand shapes.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Dense row-major tensor of doubles. Rank 1 and rank 2 are the supported
/// cases; a rank-1 tensor behaves as a row vector in matrix contexts.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> shape, double fill = 0.0);
  Tensor(std::vector<std::size_t> shape, std::vector<double> values);

  static Tensor matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  static Tensor vector(std::vector<double> values);
  static Tensor scalar(double value);
  static Tensor from_rows(std::initializer_list<std::initializer_list<double>> rows);

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return values_.size(); }
  std::size_t rows() const;
  std::size_t cols() const;
  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

  double& operator[](std::size_t i) { return values_[i]; }
  double operator[](std::size_t i) const { return values_[i]; }
  double& operator()(std::size_t r, std::size_t c) { return values_[r * cols() + c]; }
  double operator()(std::size_t r, std::size_t c) const { return values_[r * cols() + c]; }

  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }
  std::span<double> row(std::size_t r) { return {values_.data() + r * cols(), cols()}; }
  std::span<const double> row(std::size_t r) const { return {values_.data() + r * cols(), cols()}; }

  /// Same values, new shape with identical element count.
  Tensor reshaped(std::vector<std::size_t> shape) const;

  bool all_finite() const;
  std::string shape_string() const;

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  std::vector<std::size_t> shape_;
  std::vector<double> values_;
};

enum class ReduceOp { kSum, kMean, kMax };

// Value-level kernels. Every kernel validates shapes and throws NumericError
// if the result would contain a non-finite value.
//
// Binary elementwise kernels accept `b` with the same shape as `a`, a single
// element (scalar broadcast), or a row vector of length a.cols() (broadcast
// across the rows of a rank-2 `a`).

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Tensor relu(const Tensor& a);
Tensor log2(const Tensor& a);
Tensor square(const Tensor& a);
Tensor sqrt(const Tensor& a);

/// axis 0 reduces over rows (result has length cols), axis 1 over columns
/// (result has length rows). A rank-1 input is treated as a 1×n matrix.
Tensor reduce(const Tensor& a, ReduceOp op, int axis);
Tensor sum_all(const Tensor& a);

Tensor concat_rows(std::span<const Tensor> parts);
Tensor concat_cols(std::span<const Tensor> parts);
Tensor gather_rows(const Tensor& a, std::span<const std::size_t> index);

/// Reduces the rows of `a` into `groups` output rows; row i goes to group
/// group_of_row[i]. Groups that receive no rows produce a zero row.
Tensor group_reduce(const Tensor& a, std::span<const std::size_t> group_of_row, std::size_t groups,
                    ReduceOp op);

/// Index of the selected row per (group, col) for kMax, lowest index on ties.
/// Entries for empty groups are set to SIZE_MAX.
std::vector<std::size_t> group_argmax(const Tensor& a, std::span<const std::size_t> group_of_row,
                                      std::size_t groups);

}  // namespace cfgnn::numerics
