// Serial loop nests. Slow on purpose: every output is the literal sum from
// its definition, so these serve as the ground truth for `parallel`.

#include <limits>

#include "biofuse/kernels.hpp"

namespace biofuse::kernels::reference {

void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
             double* c) {
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t t = 0; t < k; ++t) s += a[i * k + t] * b[t * n + j];
      c[i * n + j] = s;
    }
}

void gemm_nt_acc(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
                 double* c) {
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t t = 0; t < k; ++t) s += a[i * k + t] * b[j * k + t];
      c[i * n + j] += s;
    }
}

void gemm_tn_acc(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
                 double* c) {
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t t = 0; t < k; ++t) s += a[t * m + i] * b[t * n + j];
      c[i * n + j] += s;
    }
}

namespace {

// Input value at (c, y, x) of the zero-padded image; y/x are padded coordinates.
double padded(const ConvGeometry& g, const double* input, std::size_t c, std::size_t y,
              std::size_t x) {
  if (y < g.padding || x < g.padding) return 0.0;
  const std::size_t iy = y - g.padding, ix = x - g.padding;
  if (iy >= g.height || ix >= g.width) return 0.0;
  return input[(c * g.height + iy) * g.width + ix];
}

}  // namespace

void conv2d_forward(const ConvGeometry& g, const double* input, const double* kernels,
                    const double* bias, double* output) {
  const std::size_t oh = g.out_height(), ow = g.out_width();
  for (std::size_t co = 0; co < g.out_channels; ++co)
    for (std::size_t oy = 0; oy < oh; ++oy)
      for (std::size_t ox = 0; ox < ow; ++ox) {
        double s = bias ? bias[co] : 0.0;
        for (std::size_t ci = 0; ci < g.in_channels; ++ci)
          for (std::size_t ky = 0; ky < g.kernel_h; ++ky)
            for (std::size_t kx = 0; kx < g.kernel_w; ++kx)
              s += kernels[((co * g.in_channels + ci) * g.kernel_h + ky) * g.kernel_w + kx] *
                   padded(g, input, ci, oy * g.stride + ky, ox * g.stride + kx);
        output[(co * oh + oy) * ow + ox] = s;
      }
}

void conv2d_backward(const ConvGeometry& g, const double* input, const double* kernels,
                     const double* grad_output, double* grad_input, double* grad_kernels,
                     double* grad_bias) {
  const std::size_t oh = g.out_height(), ow = g.out_width();
  for (std::size_t co = 0; co < g.out_channels; ++co)
    for (std::size_t oy = 0; oy < oh; ++oy)
      for (std::size_t ox = 0; ox < ow; ++ox) {
        const double go = grad_output[(co * oh + oy) * ow + ox];
        if (grad_bias) grad_bias[co] += go;
        for (std::size_t ci = 0; ci < g.in_channels; ++ci)
          for (std::size_t ky = 0; ky < g.kernel_h; ++ky)
            for (std::size_t kx = 0; kx < g.kernel_w; ++kx) {
              const std::size_t kidx =
                  ((co * g.in_channels + ci) * g.kernel_h + ky) * g.kernel_w + kx;
              const std::size_t py = oy * g.stride + ky, px = ox * g.stride + kx;
              if (grad_kernels) grad_kernels[kidx] += go * padded(g, input, ci, py, px);
              if (grad_input && py >= g.padding && px >= g.padding && py - g.padding < g.height &&
                  px - g.padding < g.width)
                grad_input[(ci * g.height + py - g.padding) * g.width + px - g.padding] +=
                    go * kernels[kidx];
            }
      }
}

void maxpool2d_forward(const PoolGeometry& g, const double* input, double* output,
                       std::size_t* argmax) {
  const std::size_t oh = g.out_height(), ow = g.out_width();
  for (std::size_t c = 0; c < g.channels; ++c)
    for (std::size_t oy = 0; oy < oh; ++oy)
      for (std::size_t ox = 0; ox < ow; ++ox) {
        double best = -std::numeric_limits<double>::infinity();
        std::size_t best_idx = 0;
        for (std::size_t ky = 0; ky < g.size; ++ky)
          for (std::size_t kx = 0; kx < g.size; ++kx) {
            const std::size_t idx = (c * g.height + oy * g.stride + ky) * g.width + ox * g.stride + kx;
            if (input[idx] > best) {
              best = input[idx];
              best_idx = idx;
            }
          }
        output[(c * oh + oy) * ow + ox] = best;
        argmax[(c * oh + oy) * ow + ox] = best_idx;
      }
}

void dense_forward(std::size_t out, std::size_t n, const double* x, const double* w,
                   const double* b, double* y) {
  for (std::size_t i = 0; i < out; ++i) {
    double s = b ? b[i] : 0.0;
    for (std::size_t j = 0; j < n; ++j) s += w[i * n + j] * x[j];
    y[i] = s;
  }
}

void dense_backward(std::size_t out, std::size_t n, const double* x, const double* w,
                    const double* grad_y, double* grad_x, double* grad_w, double* grad_b) {
  for (std::size_t i = 0; i < out; ++i) {
    if (grad_b) grad_b[i] += grad_y[i];
    for (std::size_t j = 0; j < n; ++j) {
      if (grad_w) grad_w[i * n + j] += grad_y[i] * x[j];
      if (grad_x) grad_x[j] += grad_y[i] * w[i * n + j];
    }
  }
}

}  // namespace biofuse::kernels::reference
