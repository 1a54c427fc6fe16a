#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace zsad {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Raised when an input breaks a data contract (for example an anomaly
/// labelled entry in a training corpus).
class ContractViolation : public Error {
 public:
  using Error::Error;
};

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

// Checked mode rejects non-finite tensor values at construction and makes
// degenerate normalizations throw. On by default.
bool checked_mode();
void set_checked_mode(bool on);

class ScopedCheckedMode {
 public:
  explicit ScopedCheckedMode(bool on) : previous_(checked_mode()) { set_checked_mode(on); }
  ~ScopedCheckedMode() { set_checked_mode(previous_); }
  ScopedCheckedMode(const ScopedCheckedMode&) = delete;
  ScopedCheckedMode& operator=(const ScopedCheckedMode&) = delete;

 private:
  bool previous_;
};

/// Dense row-major array of doubles.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> values);

  static Tensor scalar(double value) { return Tensor({1}, {value}); }
  static Tensor from(std::vector<double> values);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t size() const { return values_.size(); }
  bool empty() const { return values_.empty(); }

  double* ptr() { return values_.data(); }
  const double* ptr() const { return values_.data(); }
  std::span<double> data() { return values_; }
  std::span<const double> data() const { return values_; }
  const std::vector<double>& values() const { return values_; }

  double& operator[](std::size_t i) { return values_[i]; }
  double operator[](std::size_t i) const { return values_[i]; }

  /// Value of a single-element tensor.
  double item() const;

  Tensor reshaped(Shape shape) const;
  void fill(double value);

  /// Throws if any value is NaN or infinite.
  void check_finite(const char* what = "tensor") const;

  /// Bitwise equality of shape and values.
  bool identical(const Tensor& other) const;

 private:
  Shape shape_;
  std::vector<double> values_;
};

double max_abs_diff(const Tensor& a, const Tensor& b);
double l2_norm(std::span<const double> v);
double dot(std::span<const double> a, std::span<const double> b);

}  // namespace zsad
