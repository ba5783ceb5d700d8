// SPDX-License-Identifier: Apache-2.0
#include "cfgnn/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <sstream>

namespace cfgnn::numerics {

namespace {

std::size_t extent_product(const std::vector<std::size_t>& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

void require_finite(const Tensor& t, const char* op) {
  if (!t.all_finite()) {
    throw NumericError(std::string(op) + ": result contains a non-finite value");
  }
}

enum class Broadcast { kSame, kScalar, kRow };

Broadcast classify(const Tensor& a, const Tensor& b, const char* op) {
  if (a.same_shape(b)) return Broadcast::kSame;
  if (b.size() == 1) return Broadcast::kScalar;
  if (a.rank() == 2 && b.size() == a.cols() && (b.rank() == 1 || b.rows() == 1)) {
    return Broadcast::kRow;
  }
  throw ShapeError(std::string(op) + ": cannot broadcast " + b.shape_string() + " onto " +
                   a.shape_string());
}

template <typename F>
Tensor binary(const Tensor& a, const Tensor& b, const char* op, F f) {
  const Broadcast mode = classify(a, b, op);
  Tensor out(a.shape());
  const std::size_t cols = a.cols();
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double rhs = mode == Broadcast::kSame ? b[i] : mode == Broadcast::kScalar ? b[0] : b[i % cols];
    out[i] = f(a[i], rhs);
  }
  require_finite(out, op);
  return out;
}

template <typename F>
Tensor unary(const Tensor& a, const char* op, F f) {
  Tensor out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = f(a[i]);
  require_finite(out, op);
  return out;
}

}  // namespace

Tensor::Tensor(std::vector<std::size_t> shape, double fill)
    : shape_(std::move(shape)), values_(extent_product(shape_), fill) {}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> values)
    : shape_(std::move(shape)), values_(std::move(values)) {
  if (extent_product(shape_) != values_.size()) {
    throw ShapeError("Tensor: shape " + shape_string() + " does not hold " +
                     std::to_string(values_.size()) + " values");
  }
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, double fill) {
  return Tensor({rows, cols}, fill);
}

Tensor Tensor::vector(std::vector<double> values) {
  const std::size_t n = values.size();
  return Tensor({n}, std::move(values));
}

Tensor Tensor::scalar(double value) { return Tensor({1}, std::vector<double>{value}); }

Tensor Tensor::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r == 0 ? 0 : rows.begin()->size();
  std::vector<double> values;
  values.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw ShapeError("Tensor::from_rows: ragged rows");
    values.insert(values.end(), row.begin(), row.end());
  }
  return Tensor({r, c}, std::move(values));
}

std::size_t Tensor::rows() const {
  if (rank() == 2) return shape_[0];
  return 1;
}

std::size_t Tensor::cols() const {
  if (rank() == 2) return shape_[1];
  if (rank() == 1) return shape_[0];
  return 1;
}

Tensor Tensor::reshaped(std::vector<std::size_t> shape) const { return Tensor(std::move(shape), values_); }

bool Tensor::all_finite() const {
  return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
}

std::string Tensor::shape_string() const {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape_.size(); ++i) os << (i ? "x" : "") << shape_[i];
  os << ']';
  return os.str();
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.cols() != b.rows()) {
    throw ShapeError("matmul: inner extents differ, " + a.shape_string() + " x " + b.shape_string());
  }
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  Tensor out = Tensor::matrix(m, n);
  for (std::size_t i = 0; i < m; ++i) {
    double* orow = &out(i, 0);
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = a(i, p);
      if (aip == 0.0) continue;
      const double* brow = b.row(p).data();
      for (std::size_t j = 0; j < n; ++j) orow[j] += aip * brow[j];
    }
  }
  require_finite(out, "matmul");
  return out;
}

Tensor transpose(const Tensor& a) {
  const std::size_t r = a.rows(), c = a.cols();
  Tensor out = Tensor::matrix(c, r);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out(j, i) = a(i, j);
  return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
  return binary(a, b, "add", [](double x, double y) { return x + y; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary(a, b, "sub", [](double x, double y) { return x - y; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary(a, b, "mul", [](double x, double y) { return x * y; });
}

Tensor div(const Tensor& a, const Tensor& b) {
  return binary(a, b, "div", [](double x, double y) {
    if (y == 0.0) throw NumericError("div: division by zero");
    return x / y;
  });
}

Tensor scale(const Tensor& a, double factor) {
  return unary(a, "scale", [factor](double x) { return x * factor; });
}

Tensor relu(const Tensor& a) {
  return unary(a, "relu", [](double x) { return x > 0.0 ? x : 0.0; });
}

Tensor log2(const Tensor& a) {
  return unary(a, "log2", [](double x) {
    if (!(x > 0.0)) throw NumericError("log2: argument must be positive");
    return std::log2(x);
  });
}

Tensor square(const Tensor& a) {
  return unary(a, "square", [](double x) { return x * x; });
}

Tensor sqrt(const Tensor& a) {
  return unary(a, "sqrt", [](double x) {
    if (x < 0.0) throw NumericError("sqrt: negative argument");
    return std::sqrt(x);
  });
}

Tensor reduce(const Tensor& a, ReduceOp op, int axis) {
  if (axis != 0 && axis != 1) throw ShapeError("reduce: axis must be 0 or 1");
  const std::size_t r = a.rows(), c = a.cols();
  const std::size_t extent = axis == 0 ? r : c;
  const std::size_t outer = axis == 0 ? c : r;
  if (extent == 0) throw ShapeError("reduce: empty reduction axis");
  Tensor out({outer});
  for (std::size_t o = 0; o < outer; ++o) {
    double acc = op == ReduceOp::kMax ? -std::numeric_limits<double>::infinity() : 0.0;
    for (std::size_t e = 0; e < extent; ++e) {
      const double x = axis == 0 ? a(e, o) : a(o, e);
      acc = op == ReduceOp::kMax ? std::max(acc, x) : acc + x;
    }
    out[o] = op == ReduceOp::kMean ? acc / static_cast<double>(extent) : acc;
  }
  require_finite(out, "reduce");
  return out;
}

Tensor sum_all(const Tensor& a) {
  if (a.size() == 0) throw ShapeError("sum_all: empty tensor");
  double acc = 0.0;
  for (double x : a.values()) acc += x;
  Tensor out = Tensor::scalar(acc);
  require_finite(out, "sum_all");
  return out;
}

Tensor concat_rows(std::span<const Tensor> parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no inputs");
  const bool vectors = std::all_of(parts.begin(), parts.end(), [](const Tensor& t) { return t.rank() == 1; });
  std::vector<double> values;
  std::size_t rows = 0;
  const std::size_t cols = parts.front().cols();
  for (const Tensor& t : parts) {
    if (!vectors && t.cols() != cols) {
      throw ShapeError("concat_rows: column count " + std::to_string(t.cols()) + " differs from " +
                       std::to_string(cols));
    }
    values.insert(values.end(), t.values().begin(), t.values().end());
    rows += t.rows();
  }
  if (vectors) return Tensor::vector(std::move(values));
  return Tensor({rows, cols}, std::move(values));
}

Tensor concat_cols(std::span<const Tensor> parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no inputs");
  const std::size_t rows = parts.front().rows();
  std::size_t cols = 0;
  for (const Tensor& t : parts) {
    if (t.rows() != rows) {
      throw ShapeError("concat_cols: row count " + std::to_string(t.rows()) + " differs from " +
                       std::to_string(rows));
    }
    cols += t.cols();
  }
  Tensor out = Tensor::matrix(rows, cols);
  for (std::size_t i = 0; i < rows; ++i) {
    double* dst = &out(i, 0);
    for (const Tensor& t : parts) {
      const auto src = t.row(i);
      dst = std::copy(src.begin(), src.end(), dst);
    }
  }
  return out;
}

Tensor gather_rows(const Tensor& a, std::span<const std::size_t> index) {
  const std::size_t c = a.cols();
  Tensor out = Tensor::matrix(index.size(), c);
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] >= a.rows()) throw ShapeError("gather_rows: index out of range");
    const auto src = a.row(index[i]);
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  return out;
}

Tensor group_reduce(const Tensor& a, std::span<const std::size_t> group_of_row, std::size_t groups,
                    ReduceOp op) {
  if (group_of_row.size() != a.rows()) throw ShapeError("group_reduce: one group id per row required");
  const std::size_t c = a.cols();
  Tensor out = Tensor::matrix(groups, c);
  std::vector<std::size_t> count(groups, 0);
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const std::size_t g = group_of_row[i];
    if (g >= groups) throw ShapeError("group_reduce: group id out of range");
    auto dst = out.row(g);
    const auto src = a.row(i);
    for (std::size_t j = 0; j < c; ++j) {
      if (op == ReduceOp::kMax) {
        dst[j] = count[g] == 0 ? src[j] : std::max(dst[j], src[j]);
      } else {
        dst[j] += src[j];
      }
    }
    ++count[g];
  }
  if (op == ReduceOp::kMean) {
    for (std::size_t g = 0; g < groups; ++g) {
      if (count[g] == 0) continue;
      for (double& x : out.row(g)) x /= static_cast<double>(count[g]);
    }
  }
  require_finite(out, "group_reduce");
  return out;
}

std::vector<std::size_t> group_argmax(const Tensor& a, std::span<const std::size_t> group_of_row,
                                      std::size_t groups) {
  const std::size_t c = a.cols();
  std::vector<std::size_t> arg(groups * c, std::numeric_limits<std::size_t>::max());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const std::size_t g = group_of_row[i];
    for (std::size_t j = 0; j < c; ++j) {
      std::size_t& best = arg[g * c + j];
      if (best == std::numeric_limits<std::size_t>::max() || a(i, j) > a(best, j)) best = i;
    }
  }
  return arg;
}

}  // namespace cfgnn::numerics
