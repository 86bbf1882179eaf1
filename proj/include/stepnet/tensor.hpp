#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "stepnet/errors.hpp"

namespace stepnet {

using Shape = std::vector<int64_t>;

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) os << 'x';
    os << s[i];
  }
  return os.str();
}

inline int64_t shape_numel(const Shape& s) {
  int64_t n = 1;
  for (int64_t d : s) {
    if (d <= 0) throw ShapeError("non-positive axis length in shape " + shape_str(s));
    n *= d;
  }
  return n;
}

// Dense row-major real tensor. Values are expected to stay finite; callers
// that can produce NaN/Inf check with all_finite().
template <class Real>
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(Shape shape) : shape_(std::move(shape)), data_(shape_numel(shape_), Real(0)) {}

  Tensor(Shape shape, std::vector<Real> values) : shape_(std::move(shape)), data_(std::move(values)) {
    if (static_cast<int64_t>(data_.size()) != shape_numel(shape_)) {
      throw ShapeError("data length " + std::to_string(data_.size()) + " does not match shape " +
                       shape_str(shape_));
    }
  }

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }

  static Tensor full(Shape shape, Real v) {
    Tensor t(std::move(shape));
    for (Real& x : t.data_) x = v;
    return t;
  }

  const Shape& shape() const { return shape_; }
  int64_t rank() const { return static_cast<int64_t>(shape_.size()); }
  int64_t dim(int64_t i) const { return shape_[static_cast<size_t>(i)]; }
  int64_t numel() const { return static_cast<int64_t>(data_.size()); }
  bool empty() const { return data_.empty(); }

  Real* data() { return data_.data(); }
  const Real* data() const { return data_.data(); }
  std::vector<Real>& vec() { return data_; }
  const std::vector<Real>& vec() const { return data_; }

  Real& operator[](int64_t i) { return data_[static_cast<size_t>(i)]; }
  Real operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }

  // rank-specific indexers; bounds are the caller's responsibility
  Real& at2(int64_t r, int64_t c) { return data_[static_cast<size_t>(r * shape_[1] + c)]; }
  Real at2(int64_t r, int64_t c) const { return data_[static_cast<size_t>(r * shape_[1] + c)]; }

  Real& at4(int64_t a, int64_t b, int64_t c, int64_t d) {
    return data_[static_cast<size_t>(((a * shape_[1] + b) * shape_[2] + c) * shape_[3] + d)];
  }
  Real at4(int64_t a, int64_t b, int64_t c, int64_t d) const {
    return data_[static_cast<size_t>(((a * shape_[1] + b) * shape_[2] + c) * shape_[3] + d)];
  }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

  bool all_finite() const {
    for (Real x : data_) {
      if (!std::isfinite(static_cast<double>(x))) return false;
    }
    return true;
  }

  void fill(Real v) {
    for (Real& x : data_) x = v;
  }

 private:
  Shape shape_;
  std::vector<Real> data_;
};

// Balanced pairwise reduction. For power-of-two n the grouping is invariant
// under reversing the input sequence, which is what makes the flip-swap
// contracts of the partition/pooling stack hold bit-for-bit.
template <class Real>
Real pairwise_sum(const Real* v, int64_t n) {
  if (n <= 0) return Real(0);
  if (n == 1) return v[0];
  if (n == 2) return v[0] + v[1];
  const int64_t m = n / 2;
  return pairwise_sum(v, m) + pairwise_sum(v + m, n - m);
}

template <class Real>
Real pairwise_sum_strided(const Real* v, int64_t n, int64_t stride) {
  if (n <= 0) return Real(0);
  if (n == 1) return v[0];
  if (n == 2) return v[0] + v[stride];
  const int64_t m = n / 2;
  return pairwise_sum_strided(v, m, stride) + pairwise_sum_strided(v + m * stride, n - m, stride);
}

}  // namespace stepnet
