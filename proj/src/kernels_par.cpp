#include <algorithm>

#include <Eigen/Dense>

#include "amg/kernels.hpp"

namespace amg::kernels::par {

namespace {

// Below this many multiply-adds a parallel region costs more than it saves.
constexpr std::size_t kParallelWork = 1u << 15;

}  // namespace

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using CMap = Eigen::Map<const RowMat>;
using MMap = Eigen::Map<RowMat>;

void dense_forward(std::span<const double> w, std::span<const double> b, std::span<const double> in,
                   std::span<double> out, std::size_t batch) {
  const auto n_out = static_cast<Eigen::Index>(b.size());
  const auto n_in = static_cast<Eigen::Index>(w.size() / b.size());
  const auto nb = static_cast<Eigen::Index>(batch);
  MMap o(out.data(), nb, n_out);
  o.noalias() = CMap(in.data(), nb, n_in) * CMap(w.data(), n_out, n_in).transpose();
  o.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(b.data(), n_out);
}

void dense_backward(std::span<const double> w, std::span<const double> in,
                    std::span<const double> grad_out, std::span<double> grad_in,
                    std::span<double> grad_w, std::span<double> grad_b, std::size_t batch) {
  const auto n_out = static_cast<Eigen::Index>(grad_b.size());
  const auto n_in = static_cast<Eigen::Index>(w.size() / grad_b.size());
  const auto nb = static_cast<Eigen::Index>(batch);
  const CMap go(grad_out.data(), nb, n_out);
  MMap(grad_w.data(), n_out, n_in).noalias() += go.transpose() * CMap(in.data(), nb, n_in);
  Eigen::Map<Eigen::RowVectorXd>(grad_b.data(), n_out) += go.colwise().sum();
  if (grad_in.empty()) return;
  MMap(grad_in.data(), nb, n_in).noalias() = go * CMap(w.data(), n_out, n_in);
}

namespace {

// Column matrix with one row per (ic, ky, kx) and one column per (n, oy, ox).
void im2col(const ConvGeometry& g, const double* in, std::size_t batch, RowMat& col) {
  const std::size_t oh = g.out_h(), ow = g.out_w(), plane = oh * ow;
  col.resize(static_cast<Eigen::Index>(g.in_c * g.k * g.k), static_cast<Eigen::Index>(batch * plane));
  const auto rows = static_cast<long>(g.in_c * g.k * g.k);
#pragma omp parallel for schedule(static) if (batch * plane * g.in_c * g.k * g.k > kParallelWork)
  for (long r = 0; r < rows; ++r) {
    const std::size_t ic = static_cast<std::size_t>(r) / (g.k * g.k);
    const std::size_t ky = (static_cast<std::size_t>(r) / g.k) % g.k, kx = static_cast<std::size_t>(r) % g.k;
    double* dst = col.data() + static_cast<std::size_t>(r) * batch * plane;
    for (std::size_t n = 0; n < batch; ++n) {
      const double* src = in + n * g.in_size() + ic * g.in_h * g.in_w;
      for (std::size_t oy = 0; oy < oh; ++oy) {
        const double* row = src + (oy * g.stride + ky) * g.in_w + kx;
        for (std::size_t ox = 0; ox < ow; ++ox) *dst++ = row[ox * g.stride];
      }
    }
  }
}

}  // namespace

void conv2d_forward(const ConvGeometry& g, std::span<const double> w, std::span<const double> b,
                    std::span<const double> in, std::span<double> out, std::size_t batch) {
  const std::size_t plane = g.out_h() * g.out_w();
  RowMat col;
  im2col(g, in.data(), batch, col);
  const RowMat res = CMap(w.data(), static_cast<Eigen::Index>(g.out_c), col.rows()) * col;
  const auto total = static_cast<long>(batch * g.out_c);
#pragma omp parallel for schedule(static) if (batch * g.out_size() > kParallelWork)
  for (long idx = 0; idx < total; ++idx) {
    const std::size_t n = static_cast<std::size_t>(idx) / g.out_c, oc = static_cast<std::size_t>(idx) % g.out_c;
    const double* src = res.data() + oc * batch * plane + n * plane;
    double* dst = out.data() + n * g.out_size() + oc * plane;
    for (std::size_t i = 0; i < plane; ++i) dst[i] = src[i] + b[oc];
  }
}

void conv2d_backward(const ConvGeometry& g, std::span<const double> w, std::span<const double> in,
                     std::span<const double> grad_out, std::span<double> grad_in,
                     std::span<double> grad_w, std::span<double> grad_b, std::size_t batch) {
  const std::size_t plane = g.out_h() * g.out_w(), oh = g.out_h(), ow = g.out_w();
  // Gradient of the output rearranged to (out_c, n * plane) to match the column layout.
  RowMat go(static_cast<Eigen::Index>(g.out_c), static_cast<Eigen::Index>(batch * plane));
  for (std::size_t n = 0; n < batch; ++n)
    for (std::size_t oc = 0; oc < g.out_c; ++oc) {
      const double* src = grad_out.data() + n * g.out_size() + oc * plane;
      std::copy(src, src + plane, go.data() + oc * batch * plane + n * plane);
    }
  RowMat col;
  im2col(g, in.data(), batch, col);
  MMap(grad_w.data(), go.rows(), col.rows()).noalias() += go * col.transpose();
  Eigen::Map<Eigen::VectorXd>(grad_b.data(), go.rows()) += go.rowwise().sum();
  if (grad_in.empty()) return;
  const RowMat gcol = CMap(w.data(), go.rows(), col.rows()).transpose() * go;
  // col2im: each input plane gathers from its own rows, so planes are independent.
  const auto total = static_cast<long>(batch * g.in_c);
#pragma omp parallel for schedule(static) if (batch * g.in_size() * g.k * g.k > kParallelWork)
  for (long idx = 0; idx < total; ++idx) {
    const std::size_t n = static_cast<std::size_t>(idx) / g.in_c, ic = static_cast<std::size_t>(idx) % g.in_c;
    double* gplane = grad_in.data() + n * g.in_size() + ic * g.in_h * g.in_w;
    std::fill(gplane, gplane + g.in_h * g.in_w, 0.0);
    for (std::size_t ky = 0; ky < g.k; ++ky)
      for (std::size_t kx = 0; kx < g.k; ++kx) {
        const double* src = gcol.data() + ((ic * g.k + ky) * g.k + kx) * batch * plane + n * plane;
        for (std::size_t oy = 0; oy < oh; ++oy) {
          double* grow = gplane + (oy * g.stride + ky) * g.in_w + kx;
          for (std::size_t ox = 0; ox < ow; ++ox) grow[ox * g.stride] += src[oy * ow + ox];
        }
      }
  }
}

void avgpool_forward(const PoolGeometry& g, std::span<const double> in, std::span<double> out,
                     std::size_t batch) {
  const std::size_t oh = g.out_h(), ow = g.out_w();
  const double scale = 1.0 / static_cast<double>(g.k * g.k);
  const auto total = static_cast<long>(batch * g.c);
#pragma omp parallel for schedule(static) if (batch * g.in_size() > kParallelWork)
  for (long idx = 0; idx < total; ++idx) {
    const std::size_t n = static_cast<std::size_t>(idx) / g.c;
    const std::size_t c = static_cast<std::size_t>(idx) % g.c;
    const double* src = in.data() + n * g.in_size() + c * g.h * g.w;
    double* dst = out.data() + n * g.out_size() + c * oh * ow;
    for (std::size_t oy = 0; oy < oh; ++oy)
      for (std::size_t ox = 0; ox < ow; ++ox) {
        double s = 0.0;
        for (std::size_t ky = 0; ky < g.k; ++ky)
          for (std::size_t kx = 0; kx < g.k; ++kx) s += src[(oy * g.k + ky) * g.w + ox * g.k + kx];
        dst[oy * ow + ox] = s * scale;
      }
  }
}

void avgpool_backward(const PoolGeometry& g, std::span<const double> grad_out,
                      std::span<double> grad_in, std::size_t batch) {
  const std::size_t oh = g.out_h(), ow = g.out_w();
  const double scale = 1.0 / static_cast<double>(g.k * g.k);
  const auto total = static_cast<long>(batch * g.c);
#pragma omp parallel for schedule(static) if (batch * g.in_size() > kParallelWork)
  for (long idx = 0; idx < total; ++idx) {
    const std::size_t n = static_cast<std::size_t>(idx) / g.c;
    const std::size_t c = static_cast<std::size_t>(idx) % g.c;
    double* dst = grad_in.data() + n * g.in_size() + c * g.h * g.w;
    std::fill(dst, dst + g.h * g.w, 0.0);
    const double* go = grad_out.data() + n * g.out_size() + c * oh * ow;
    for (std::size_t oy = 0; oy < oh; ++oy)
      for (std::size_t ox = 0; ox < ow; ++ox) {
        const double v = go[oy * ow + ox] * scale;
        for (std::size_t ky = 0; ky < g.k; ++ky)
          for (std::size_t kx = 0; kx < g.k; ++kx) dst[(oy * g.k + ky) * g.w + ox * g.k + kx] += v;
      }
  }
}

}  // namespace amg::kernels::par
