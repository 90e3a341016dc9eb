#include "amg/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

#include "amg/errors.hpp"

namespace amg {

namespace {

void require_same_size(const Tensor& a, const Tensor& b) {
  if (a.size() != b.size()) throw InvalidInput("tensor size mismatch");
}

}  // namespace

std::size_t shape_product(std::span<const std::size_t> shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

Tensor::Tensor(std::vector<std::size_t> shape, double fill)
    : shape_(std::move(shape)), data_(shape_product(shape_), fill) {}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (shape_product(shape_) != data_.size()) throw InvalidInput("shape does not match data length");
}

Tensor Tensor::vector(std::vector<double> values) {
  std::vector<std::size_t> shape{values.size()};
  return Tensor(std::move(shape), std::move(values));
}

Tensor Tensor::reshaped(std::vector<std::size_t> shape) const {
  return Tensor(std::move(shape), data_);
}

Tensor Tensor::slice(std::size_t i) const {
  if (shape_.empty() || i >= shape_[0]) throw InvalidInput("slice index out of range");
  std::vector<std::size_t> inner(shape_.begin() + 1, shape_.end());
  const std::size_t n = shape_product(inner);
  std::vector<double> part(data_.begin() + static_cast<std::ptrdiff_t>(i * n),
                           data_.begin() + static_cast<std::ptrdiff_t>((i + 1) * n));
  return Tensor(std::move(inner), std::move(part));
}

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

double dot(const Tensor& a, const Tensor& b) {
  require_same_size(a, b);
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double l2_norm(const Tensor& a) { return std::sqrt(dot(a, a)); }

double l2_distance(const Tensor& a, const Tensor& b) {
  require_same_size(a, b);
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return std::sqrt(s);
}

double linf_distance(const Tensor& a, const Tensor& b) {
  require_same_size(a, b);
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

Tensor operator+(const Tensor& a, const Tensor& b) {
  require_same_size(a, b);
  Tensor out = a;
  for (std::size_t i = 0; i < a.size(); ++i) out[i] += b[i];
  return out;
}

Tensor operator-(const Tensor& a, const Tensor& b) {
  require_same_size(a, b);
  Tensor out = a;
  for (std::size_t i = 0; i < a.size(); ++i) out[i] -= b[i];
  return out;
}

Tensor operator*(double s, const Tensor& a) {
  Tensor out = a;
  for (double& v : out.raw()) v *= s;
  return out;
}

Tensor& axpy(double alpha, const Tensor& x, Tensor& y) {
  require_same_size(x, y);
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
  return y;
}

Tensor clip(const Tensor& a, double lo, double hi) {
  Tensor out = a;
  for (double& v : out.raw()) v = std::clamp(v, lo, hi);
  return out;
}

Tensor lerp(const Tensor& a, const Tensor& b, double t) {
  require_same_size(a, b);
  Tensor out = a;
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = (1.0 - t) * a[i] + t * b[i];
  return out;
}

Tensor stack(std::span<const Tensor> items) {
  if (items.empty()) throw InvalidInput("cannot stack zero tensors");
  std::vector<std::size_t> shape{items.size()};
  shape.insert(shape.end(), items[0].shape().begin(), items[0].shape().end());
  std::vector<double> data;
  data.reserve(items.size() * items[0].size());
  for (const auto& t : items) {
    if (t.shape() != items[0].shape()) throw InvalidInput("stack: shape mismatch");
    data.insert(data.end(), t.raw().begin(), t.raw().end());
  }
  return Tensor(std::move(shape), std::move(data));
}

}  // namespace amg
