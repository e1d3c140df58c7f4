#pragma once

// Raw compute kernels over row-major buffers.
//
// Two implementations share one interface: `reference` is the plain serial
// loop nest kept as the ground truth for tests and benchmarks, `parallel` is
// the im2col/blocked-GEMM version with OpenMP work sharing over output rows.
// Work is split only along independent outputs, so `parallel` results do not
// depend on the thread count.

#include <cstddef>

namespace biofuse::kernels {

struct ConvGeometry {
  std::size_t in_channels = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t out_channels = 0;
  std::size_t kernel_h = 0;
  std::size_t kernel_w = 0;
  std::size_t stride = 1;
  std::size_t padding = 0;

  std::size_t out_height() const { return (height + 2 * padding - kernel_h) / stride + 1; }
  std::size_t out_width() const { return (width + 2 * padding - kernel_w) / stride + 1; }
  std::size_t patch_size() const { return in_channels * kernel_h * kernel_w; }
};

struct PoolGeometry {
  std::size_t channels = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t size = 2;
  std::size_t stride = 2;

  std::size_t out_height() const { return (height - size) / stride + 1; }
  std::size_t out_width() const { return (width - size) / stride + 1; }
};

namespace reference {
// c[m x n] = a[m x k] * b[k x n]
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
             double* c);
// c[m x n] += a[m x k] * b[n x k]^T
void gemm_nt_acc(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
                 double* c);
// c[m x n] += a[k x m]^T * b[k x n]
void gemm_tn_acc(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
                 double* c);

void conv2d_forward(const ConvGeometry& g, const double* input, const double* kernels,
                    const double* bias, double* output);
// Accumulates into every non-null gradient buffer.
void conv2d_backward(const ConvGeometry& g, const double* input, const double* kernels,
                     const double* grad_output, double* grad_input, double* grad_kernels,
                     double* grad_bias);

// argmax receives the flat input index of each window maximum (first on ties).
void maxpool2d_forward(const PoolGeometry& g, const double* input, double* output,
                       std::size_t* argmax);

// y[out] = w[out x n] * x[n] + b[out]
void dense_forward(std::size_t out, std::size_t n, const double* x, const double* w,
                   const double* b, double* y);
// Accumulates into every non-null gradient buffer.
void dense_backward(std::size_t out, std::size_t n, const double* x, const double* w,
                    const double* grad_y, double* grad_x, double* grad_w, double* grad_b);
}  // namespace reference

namespace parallel {
// c[m x n] = a[m x k] * b[k x n]
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
             double* c);
// c[m x n] += a[m x k] * b[n x k]^T
void gemm_nt_acc(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
                 double* c);
// c[m x n] += a[k x m]^T * b[k x n]
void gemm_tn_acc(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
                 double* c);

void conv2d_forward(const ConvGeometry& g, const double* input, const double* kernels,
                    const double* bias, double* output);
// Accumulates into every non-null gradient buffer.
void conv2d_backward(const ConvGeometry& g, const double* input, const double* kernels,
                     const double* grad_output, double* grad_input, double* grad_kernels,
                     double* grad_bias);

// argmax receives the flat input index of each window maximum (first on ties).
void maxpool2d_forward(const PoolGeometry& g, const double* input, double* output,
                       std::size_t* argmax);

// y[out] = w[out x n] * x[n] + b[out]
void dense_forward(std::size_t out, std::size_t n, const double* x, const double* w,
                   const double* b, double* y);
// Accumulates into every non-null gradient buffer.
void dense_backward(std::size_t out, std::size_t n, const double* x, const double* w,
                    const double* grad_y, double* grad_x, double* grad_w, double* grad_b);
}  // namespace parallel

}  // namespace biofuse::kernels
