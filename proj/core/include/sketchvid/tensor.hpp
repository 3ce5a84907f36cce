#pragma once

#include <cstddef>
#include <initializer_list>
#include <string>
#include <vector>

#include "sketchvid/rng.hpp"

namespace svr {

using Shape = std::vector<size_t>;

std::string shape_str(const Shape& s);
size_t shape_count(const Shape& s);

// Dense row-major tensor of doubles. The single value carrier for all
// network math; verification runs use it end to end, file formats may
// quantize on the way out.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape);
  Tensor(Shape shape, std::vector<double> values);
  Tensor(std::initializer_list<double> values);  // 1-D

  static Tensor full(Shape shape, double v);
  static Tensor uniform(Shape shape, double lo, double hi, Rng& rng);

  const Shape& shape() const { return shape_; }
  size_t ndim() const { return shape_.size(); }
  size_t dim(size_t i) const { return shape_[i]; }
  size_t size() const { return values_.size(); }
  bool empty() const { return values_.empty(); }

  double* data() { return values_.data(); }
  const double* data() const { return values_.data(); }
  double& operator[](size_t i) { return values_[i]; }
  double operator[](size_t i) const { return values_[i]; }

  std::vector<double>& values() { return values_; }
  const std::vector<double>& values() const { return values_; }

  // 3-D (c, y, x) accessors for image-like tensors.
  double& at3(size_t c, size_t y, size_t x) {
    return values_[(c * shape_[1] + y) * shape_[2] + x];
  }
  double at3(size_t c, size_t y, size_t x) const {
    return values_[(c * shape_[1] + y) * shape_[2] + x];
  }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }
  bool all_finite() const;
  // Throws svr::Error (Numeric) naming `what` when a NaN/Inf is present.
  void require_finite(const std::string& what) const;

  void fill(double v);
  uint64_t digest() const;

 private:
  Shape shape_;
  std::vector<double> values_;
};

}  // namespace svr
