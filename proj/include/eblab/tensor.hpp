#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <numeric>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace eblab {

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class NonFiniteError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

inline std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

/// Dense row-major array of doubles. Rank-0 is not used; scalars are {1}.
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(Shape shape, double fill = 0.0) : shape_(std::move(shape)) {
    validate_shape();
    data_.assign(shape_size(shape_), fill);
  }

  Tensor(Shape shape, std::vector<double> values)
      : shape_(std::move(shape)), data_(std::move(values)) {
    validate_shape();
    if (data_.size() != shape_size(shape_)) {
      throw ShapeError("tensor: " + std::to_string(data_.size()) +
                       " values for shape " + shape_string(shape_));
    }
  }

  static Tensor scalar(double v) { return Tensor({1}, std::vector<double>{v}); }

  static Tensor vector(std::initializer_list<double> v) {
    return Tensor({v.size()}, std::vector<double>(v));
  }

  /// Builds a matrix from nested rows; all rows must have equal length.
  static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows) {
    const std::size_t r = rows.size();
    const std::size_t c = r ? rows.begin()->size() : 0;
    std::vector<double> values;
    values.reserve(r * c);
    for (const auto& row : rows) {
      if (row.size() != c) throw ShapeError("matrix: ragged rows");
      values.insert(values.end(), row.begin(), row.end());
    }
    return Tensor({r, c}, std::move(values));
  }

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  /// Leading extent; the batch dimension for 2-D data.
  std::size_t rows() const { return shape_.empty() ? 0 : shape_[0]; }
  /// Product of the trailing extents.
  std::size_t cols() const { return shape_.empty() || shape_[0] == 0 ? 0 : size() / shape_[0]; }

  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }
  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  double& at(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
  double at(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols(), cols()}; }
  std::span<const double> row(std::size_t r) const {
    return {data_.data() + r * cols(), cols()};
  }

  double item() const {
    if (data_.size() != 1) throw ShapeError("item: tensor is not a scalar");
    return data_[0];
  }

  Tensor reshaped(Shape shape) const {
    if (shape_size(shape) != size()) {
      throw ShapeError("reshape " + shape_string(shape_) + " -> " + shape_string(shape));
    }
    return Tensor(std::move(shape), data_);
  }

  void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

  bool all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
  }

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

  friend std::ostream& operator<<(std::ostream& os, const Tensor& t) {
    os << shape_string(t.shape_) << " [";
    for (std::size_t i = 0; i < t.data_.size() && i < 16; ++i) os << (i ? ", " : "") << t.data_[i];
    if (t.data_.size() > 16) os << ", ...";
    return os << ']';
  }

 private:
  void validate_shape() const {
    for (auto extent : shape_) {
      if (extent == 0) throw ShapeError("tensor extents must be positive: " + shape_string(shape_));
    }
  }

  Shape shape_;
  std::vector<double> data_;
};

inline void require_finite(const Tensor& t, const char* where) {
  if (!t.all_finite()) throw NonFiniteError(std::string(where) + ": non-finite value");
}

/// Row slice [begin, begin + count) of a rank-2 tensor.
inline Tensor slice_rows(const Tensor& t, std::size_t begin, std::size_t count) {
  if (begin + count > t.rows()) throw ShapeError("slice_rows: out of range");
  const std::size_t c = t.cols();
  std::vector<double> v(t.data() + begin * c, t.data() + (begin + count) * c);
  Shape s = t.shape();
  s[0] = count;
  return Tensor(std::move(s), std::move(v));
}

}  // namespace eblab
