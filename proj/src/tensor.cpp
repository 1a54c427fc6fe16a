#include "zsad/tensor.hpp"

#include <atomic>
#include <cmath>
#include <cstring>
#include <sstream>

namespace zsad {

namespace {
std::atomic<bool> g_checked{true};
}

bool checked_mode() { return g_checked.load(std::memory_order_relaxed); }
void set_checked_mode(bool on) { g_checked.store(on, std::memory_order_relaxed); }

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)) {
  for (auto d : shape_) {
    if (d == 0) throw ShapeError("tensor dims must be positive: " + shape_str(shape_));
  }
  values_.assign(shape_numel(shape_), fill);
  if (checked_mode() && !std::isfinite(fill)) throw Error("non-finite fill value");
}

Tensor::Tensor(Shape shape, std::vector<double> values)
    : shape_(std::move(shape)), values_(std::move(values)) {
  for (auto d : shape_) {
    if (d == 0) throw ShapeError("tensor dims must be positive: " + shape_str(shape_));
  }
  if (shape_numel(shape_) != values_.size()) {
    throw ShapeError("shape " + shape_str(shape_) + " does not match " +
                     std::to_string(values_.size()) + " values");
  }
  if (checked_mode()) check_finite();
}

Tensor Tensor::from(std::vector<double> values) {
  Shape s{values.size()};
  return Tensor(std::move(s), std::move(values));
}

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= shape_.size()) throw ShapeError("axis out of range for " + shape_str(shape_));
  return shape_[axis];
}

double Tensor::item() const {
  if (values_.size() != 1) throw ShapeError("item() on tensor of shape " + shape_str(shape_));
  return values_[0];
}

Tensor Tensor::reshaped(Shape shape) const {
  if (shape_numel(shape) != values_.size()) {
    throw ShapeError("cannot reshape " + shape_str(shape_) + " to " + shape_str(shape));
  }
  Tensor out;
  out.shape_ = std::move(shape);
  out.values_ = values_;
  return out;
}

void Tensor::fill(double value) { std::fill(values_.begin(), values_.end(), value); }

void Tensor::check_finite(const char* what) const {
  for (double v : values_) {
    if (!std::isfinite(v)) throw Error(std::string("non-finite value in ") + what);
  }
}

bool Tensor::identical(const Tensor& other) const {
  return shape_ == other.shape_ && values_.size() == other.values_.size() &&
         (values_.empty() ||
          std::memcmp(values_.data(), other.values_.data(), values_.size() * sizeof(double)) == 0);
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) throw ShapeError("max_abs_diff shape mismatch");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

double l2_norm(std::span<const double> v) { return std::sqrt(dot(v, v)); }

double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ShapeError("dot length mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace zsad
