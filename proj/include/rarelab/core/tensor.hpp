#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "rarelab/core/error.hpp"

namespace rarelab::core {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

inline std::string shape_string(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << 'x';
    out << shape[i];
  }
  out << ']';
  return out.str();
}

/// Dense row-major array with an optional gradient slot of the same shape.
///
/// Rank-1 tensors behave as a single row wherever an operation expects a
/// matrix, so `rows()` is 1 and `cols()` is the length.
template <typename Real>
class Tensor {
 public:
  using value_type = Real;

  Tensor() = default;

  explicit Tensor(Shape shape, Real fill = Real{0})
      : shape_(std::move(shape)), data_(shape_size(shape_), fill) {}

  Tensor(Shape shape, std::vector<Real> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    if (shape_size(shape_) != data_.size()) {
      throw DimensionError("tensor data of length " +
                           std::to_string(data_.size()) +
                           " does not fit shape " + shape_string(shape_));
    }
  }

  static Tensor vector(std::vector<Real> values) {
    const std::size_t n = values.size();
    return Tensor({n}, std::move(values));
  }

  static Tensor matrix(std::size_t rows, std::size_t cols,
                       std::vector<Real> values) {
    return Tensor({rows, cols}, std::move(values));
  }

  static Tensor scalar(Real value) { return Tensor({1}, {value}); }

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t numel() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::size_t rows() const {
    if (shape_.size() <= 1) return 1;
    return shape_size(shape_) / shape_.back();
  }
  std::size_t cols() const { return shape_.empty() ? 1 : shape_.back(); }

  std::span<Real> data() { return data_; }
  std::span<const Real> data() const { return data_; }
  std::vector<Real>& values() { return data_; }
  const std::vector<Real>& values() const { return data_; }

  Real& operator[](std::size_t i) { return data_[i]; }
  Real operator[](std::size_t i) const { return data_[i]; }
  Real& operator()(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
  Real operator()(std::size_t r, std::size_t c) const {
    return data_[r * cols() + c];
  }

  std::span<Real> row(std::size_t r) {
    return std::span<Real>(data_).subspan(r * cols(), cols());
  }
  std::span<const Real> row(std::size_t r) const {
    return std::span<const Real>(data_).subspan(r * cols(), cols());
  }

  Real item() const {
    if (data_.size() != 1) {
      throw DomainError("item() on tensor of shape " + shape_string(shape_));
    }
    return data_[0];
  }

  bool has_grad() const { return !grad_.empty(); }
  std::span<Real> grad() { return grad_; }
  std::span<const Real> grad() const { return grad_; }

  /// Allocates a zeroed gradient slot if none is present.
  void ensure_grad() {
    if (grad_.size() != data_.size()) grad_.assign(data_.size(), Real{0});
  }
  void zero_grad() { std::fill(grad_.begin(), grad_.end(), Real{0}); }
  void clear_grad() {
    grad_.clear();
    grad_.shrink_to_fit();
  }

  bool all_finite() const {
    auto finite = [](Real v) { return std::isfinite(v); };
    return std::all_of(data_.begin(), data_.end(), finite) &&
           std::all_of(grad_.begin(), grad_.end(), finite);
  }

  void reshape(Shape shape) {
    if (shape_size(shape) != data_.size()) {
      throw DimensionError("cannot reshape " + shape_string(shape_) + " to " +
                           shape_string(shape));
    }
    shape_ = std::move(shape);
    if (!grad_.empty()) grad_.resize(data_.size());
  }

  template <typename Other>
  Tensor<Other> cast() const {
    std::vector<Other> out(data_.begin(), data_.end());
    return Tensor<Other>(shape_, std::move(out));
  }

  bool operator==(const Tensor& other) const {
    return shape_ == other.shape_ && data_ == other.data_;
  }

 private:
  Shape shape_;
  std::vector<Real> data_;
  std::vector<Real> grad_;
};

/// Numerically stable logistic function.
template <typename Real>
Real sigmoid(Real x) {
  if (x >= Real{0}) {
    return Real{1} / (Real{1} + std::exp(-x));
  }
  const Real e = std::exp(x);
  return e / (Real{1} + e);
}

/// Softmax over the last dimension of `x` with max subtraction.
template <typename Real>
Tensor<Real> softmax(const Tensor<Real>& x) {
  if (x.numel() == 0) throw DomainError("softmax of an empty tensor");
  Tensor<Real> out(x.shape());
  const std::size_t n = x.cols();
  for (std::size_t r = 0; r < x.rows(); ++r) {
    auto in = x.row(r);
    auto o = out.row(r);
    const Real mx = *std::max_element(in.begin(), in.end());
    Real total = 0;
    for (std::size_t i = 0; i < n; ++i) {
      o[i] = std::exp(in[i] - mx);
      total += o[i];
    }
    for (std::size_t i = 0; i < n; ++i) o[i] /= total;
  }
  return out;
}

}  // namespace rarelab::core
