#include "sketchvid/tensor.hpp"

#include <cmath>
#include <sstream>

#include "sketchvid/errors.hpp"

namespace svr {

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
  os << "]";
  return os.str();
}

size_t shape_count(const Shape& s) {
  size_t n = 1;
  for (size_t d : s) n *= d;
  return n;
}

Tensor::Tensor(Shape shape) : shape_(std::move(shape)) {
  for (size_t d : shape_) {
    if (d == 0) throw data_error("tensor dimension must be positive, got shape " + shape_str(shape_));
  }
  values_.assign(shape_count(shape_), 0.0);
}

Tensor::Tensor(Shape shape, std::vector<double> values)
    : shape_(std::move(shape)), values_(std::move(values)) {
  for (size_t d : shape_) {
    if (d == 0) throw data_error("tensor dimension must be positive, got shape " + shape_str(shape_));
  }
  if (values_.size() != shape_count(shape_)) {
    throw data_error("tensor value count " + std::to_string(values_.size()) +
                     " does not match shape " + shape_str(shape_));
  }
}

Tensor::Tensor(std::initializer_list<double> values)
    : shape_{values.size()}, values_(values) {}

Tensor Tensor::full(Shape shape, double v) {
  Tensor t(std::move(shape));
  t.fill(v);
  return t;
}

Tensor Tensor::uniform(Shape shape, double lo, double hi, Rng& rng) {
  Tensor t(std::move(shape));
  for (auto& v : t.values_) v = rng.uniform(lo, hi);
  return t;
}

bool Tensor::all_finite() const {
  for (double v : values_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

void Tensor::require_finite(const std::string& what) const {
  if (!all_finite()) throw numeric_error("non-finite values in " + what);
}

void Tensor::fill(double v) {
  for (auto& x : values_) x = v;
}

uint64_t Tensor::digest() const {
  uint64_t h = fnv1a64(values_.data(), values_.size() * sizeof(double));
  h ^= splitmix64(fnv1a64(shape_.data(), shape_.size() * sizeof(size_t)));
  return h;
}

}  // namespace svr
