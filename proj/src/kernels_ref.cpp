#include "amg/kernels.hpp"

#include <algorithm>

namespace amg::kernels::ref {

void dense_forward(std::span<const double> w, std::span<const double> b, std::span<const double> in,
                   std::span<double> out, std::size_t batch) {
  const std::size_t n_out = b.size();
  const std::size_t n_in = w.size() / n_out;
  for (std::size_t n = 0; n < batch; ++n) {
    for (std::size_t j = 0; j < n_out; ++j) {
      double s = b[j];
      for (std::size_t i = 0; i < n_in; ++i) s += w[j * n_in + i] * in[n * n_in + i];
      out[n * n_out + j] = s;
    }
  }
}

void dense_backward(std::span<const double> w, std::span<const double> in,
                    std::span<const double> grad_out, std::span<double> grad_in,
                    std::span<double> grad_w, std::span<double> grad_b, std::size_t batch) {
  const std::size_t n_out = grad_b.size();
  const std::size_t n_in = w.size() / n_out;
  if (!grad_in.empty()) std::fill(grad_in.begin(), grad_in.end(), 0.0);
  for (std::size_t n = 0; n < batch; ++n) {
    for (std::size_t j = 0; j < n_out; ++j) {
      const double go = grad_out[n * n_out + j];
      grad_b[j] += go;
      for (std::size_t i = 0; i < n_in; ++i) {
        grad_w[j * n_in + i] += go * in[n * n_in + i];
        if (!grad_in.empty()) grad_in[n * n_in + i] += go * w[j * n_in + i];
      }
    }
  }
}

void conv2d_forward(const ConvGeometry& g, std::span<const double> w, std::span<const double> b,
                    std::span<const double> in, std::span<double> out, std::size_t batch) {
  const std::size_t oh = g.out_h(), ow = g.out_w();
  for (std::size_t n = 0; n < batch; ++n) {
    for (std::size_t oc = 0; oc < g.out_c; ++oc) {
      for (std::size_t oy = 0; oy < oh; ++oy) {
        for (std::size_t ox = 0; ox < ow; ++ox) {
          double s = b[oc];
          for (std::size_t ic = 0; ic < g.in_c; ++ic) {
            for (std::size_t ky = 0; ky < g.k; ++ky) {
              for (std::size_t kx = 0; kx < g.k; ++kx) {
                const std::size_t iy = oy * g.stride + ky, ix = ox * g.stride + kx;
                s += w[((oc * g.in_c + ic) * g.k + ky) * g.k + kx] *
                     in[n * g.in_size() + (ic * g.in_h + iy) * g.in_w + ix];
              }
            }
          }
          out[n * g.out_size() + (oc * oh + oy) * ow + ox] = s;
        }
      }
    }
  }
}

void conv2d_backward(const ConvGeometry& g, std::span<const double> w, std::span<const double> in,
                     std::span<const double> grad_out, std::span<double> grad_in,
                     std::span<double> grad_w, std::span<double> grad_b, std::size_t batch) {
  const std::size_t oh = g.out_h(), ow = g.out_w();
  if (!grad_in.empty()) std::fill(grad_in.begin(), grad_in.end(), 0.0);
  for (std::size_t n = 0; n < batch; ++n) {
    for (std::size_t oc = 0; oc < g.out_c; ++oc) {
      for (std::size_t oy = 0; oy < oh; ++oy) {
        for (std::size_t ox = 0; ox < ow; ++ox) {
          const double go = grad_out[n * g.out_size() + (oc * oh + oy) * ow + ox];
          grad_b[oc] += go;
          for (std::size_t ic = 0; ic < g.in_c; ++ic) {
            for (std::size_t ky = 0; ky < g.k; ++ky) {
              for (std::size_t kx = 0; kx < g.k; ++kx) {
                const std::size_t iy = oy * g.stride + ky, ix = ox * g.stride + kx;
                const std::size_t wi = ((oc * g.in_c + ic) * g.k + ky) * g.k + kx;
                const std::size_t ii = n * g.in_size() + (ic * g.in_h + iy) * g.in_w + ix;
                grad_w[wi] += go * in[ii];
                if (!grad_in.empty()) grad_in[ii] += go * w[wi];
              }
            }
          }
        }
      }
    }
  }
}

void avgpool_forward(const PoolGeometry& g, std::span<const double> in, std::span<double> out,
                     std::size_t batch) {
  const std::size_t oh = g.out_h(), ow = g.out_w();
  const double scale = 1.0 / static_cast<double>(g.k * g.k);
  for (std::size_t n = 0; n < batch; ++n)
    for (std::size_t c = 0; c < g.c; ++c)
      for (std::size_t oy = 0; oy < oh; ++oy)
        for (std::size_t ox = 0; ox < ow; ++ox) {
          double s = 0.0;
          for (std::size_t ky = 0; ky < g.k; ++ky)
            for (std::size_t kx = 0; kx < g.k; ++kx)
              s += in[n * g.in_size() + (c * g.h + oy * g.k + ky) * g.w + ox * g.k + kx];
          out[n * g.out_size() + (c * oh + oy) * ow + ox] = s * scale;
        }
}

void avgpool_backward(const PoolGeometry& g, std::span<const double> grad_out,
                      std::span<double> grad_in, std::size_t batch) {
  const std::size_t oh = g.out_h(), ow = g.out_w();
  const double scale = 1.0 / static_cast<double>(g.k * g.k);
  std::fill(grad_in.begin(), grad_in.end(), 0.0);
  for (std::size_t n = 0; n < batch; ++n)
    for (std::size_t c = 0; c < g.c; ++c)
      for (std::size_t oy = 0; oy < oh; ++oy)
        for (std::size_t ox = 0; ox < ow; ++ox) {
          const double go = grad_out[n * g.out_size() + (c * oh + oy) * ow + ox] * scale;
          for (std::size_t ky = 0; ky < g.k; ++ky)
            for (std::size_t kx = 0; kx < g.k; ++kx)
              grad_in[n * g.in_size() + (c * g.h + oy * g.k + ky) * g.w + ox * g.k + kx] += go;
        }
}

}  // namespace amg::kernels::ref
