#pragma once

#include <cstddef>
#include <span>

// Layer kernels in two flavours. `ref` is the plain serial loop nest kept as the
// testing baseline; `par` reorders loops for locality and splits work with OpenMP.
// Every `par` kernel partitions over independent outputs so results never depend
// on the thread count.
namespace amg::kernels {

struct ConvGeometry {
  std::size_t in_c = 1, in_h = 1, in_w = 1;
  std::size_t out_c = 1, k = 1, stride = 1;

  std::size_t out_h() const { return (in_h - k) / stride + 1; }
  std::size_t out_w() const { return (in_w - k) / stride + 1; }
  std::size_t in_size() const { return in_c * in_h * in_w; }
  std::size_t out_size() const { return out_c * out_h() * out_w(); }
  std::size_t weight_size() const { return out_c * in_c * k * k; }
};

struct PoolGeometry {
  std::size_t c = 1, h = 1, w = 1, k = 2;

  std::size_t out_h() const { return h / k; }
  std::size_t out_w() const { return w / k; }
  std::size_t in_size() const { return c * h * w; }
  std::size_t out_size() const { return c * out_h() * out_w(); }
};

namespace ref {

// out[n, j] = b[j] + sum_i w[j, i] * in[n, i]
void dense_forward(std::span<const double> w, std::span<const double> b, std::span<const double> in,
                   std::span<double> out, std::size_t batch);
// Accumulates into grad_w / grad_b; grad_in is overwritten when non-empty.
void dense_backward(std::span<const double> w, std::span<const double> in,
                    std::span<const double> grad_out, std::span<double> grad_in,
                    std::span<double> grad_w, std::span<double> grad_b, std::size_t batch);

void conv2d_forward(const ConvGeometry& g, std::span<const double> w, std::span<const double> b,
                    std::span<const double> in, std::span<double> out, std::size_t batch);
void conv2d_backward(const ConvGeometry& g, std::span<const double> w, std::span<const double> in,
                     std::span<const double> grad_out, std::span<double> grad_in,
                     std::span<double> grad_w, std::span<double> grad_b, std::size_t batch);

void avgpool_forward(const PoolGeometry& g, std::span<const double> in, std::span<double> out,
                     std::size_t batch);
void avgpool_backward(const PoolGeometry& g, std::span<const double> grad_out,
                      std::span<double> grad_in, std::size_t batch);

}  // namespace ref

namespace par {

void dense_forward(std::span<const double> w, std::span<const double> b, std::span<const double> in,
                   std::span<double> out, std::size_t batch);
void dense_backward(std::span<const double> w, std::span<const double> in,
                    std::span<const double> grad_out, std::span<double> grad_in,
                    std::span<double> grad_w, std::span<double> grad_b, std::size_t batch);

void conv2d_forward(const ConvGeometry& g, std::span<const double> w, std::span<const double> b,
                    std::span<const double> in, std::span<double> out, std::size_t batch);
void conv2d_backward(const ConvGeometry& g, std::span<const double> w, std::span<const double> in,
                     std::span<const double> grad_out, std::span<double> grad_in,
                     std::span<double> grad_w, std::span<double> grad_b, std::size_t batch);

void avgpool_forward(const PoolGeometry& g, std::span<const double> in, std::span<double> out,
                     std::size_t batch);
void avgpool_backward(const PoolGeometry& g, std::span<const double> grad_out,
                      std::span<double> grad_in, std::size_t batch);

}  // namespace par

}  // namespace amg::kernels
