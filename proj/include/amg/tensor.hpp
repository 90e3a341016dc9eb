#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

namespace amg {

/// Dense row-major array of doubles. Images are stored as (channels, height, width);
/// batches prepend a leading batch extent.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> shape, double fill = 0.0);
  Tensor(std::vector<std::size_t> shape, std::vector<double> data);

  static Tensor vector(std::vector<double> values);

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t extent(std::size_t axis) const { return shape_.at(axis); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }
  std::vector<double>& raw() { return data_; }
  const std::vector<double>& raw() const { return data_; }

  /// Same data, new shape with an equal element count.
  Tensor reshaped(std::vector<std::size_t> shape) const;

  /// Copy of the i-th slice along the leading axis.
  Tensor slice(std::size_t i) const;

  bool all_finite() const;

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  std::vector<std::size_t> shape_;
  std::vector<double> data_;
};

std::size_t shape_product(std::span<const std::size_t> shape);

// Elementwise helpers over equally sized tensors.
double dot(const Tensor& a, const Tensor& b);
double l2_norm(const Tensor& a);
double l2_distance(const Tensor& a, const Tensor& b);
double linf_distance(const Tensor& a, const Tensor& b);
Tensor operator+(const Tensor& a, const Tensor& b);
Tensor operator-(const Tensor& a, const Tensor& b);
Tensor operator*(double s, const Tensor& a);
Tensor& axpy(double alpha, const Tensor& x, Tensor& y);  // y += alpha * x
Tensor clip(const Tensor& a, double lo = 0.0, double hi = 1.0);
/// (1 - t) * a + t * b
Tensor lerp(const Tensor& a, const Tensor& b, double t);

/// Stacks equally shaped tensors along a new leading axis.
Tensor stack(std::span<const Tensor> items);

}  // namespace amg
