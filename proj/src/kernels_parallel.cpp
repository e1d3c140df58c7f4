#include <algorithm>
#include <cstring>
#include <limits>
#include <vector>

#include "biofuse/kernels.hpp"

namespace biofuse::kernels::parallel {

namespace {

using index_t = std::ptrdiff_t;

constexpr std::size_t kRowBlock = 4;
constexpr std::size_t kColTile = 512;

// c[rows x n] += a-column-values * b rows, four output rows at a time.
// a_at(r, t) yields the multiplier for output row r and inner index t.
template <typename AAt>
void accumulate_row_block(std::size_t rows, std::size_t n, std::size_t k, AAt a_at,
                          const double* b, double* c) {
  for (std::size_t j0 = 0; j0 < n; j0 += kColTile) {
    const std::size_t j1 = std::min(n, j0 + kColTile);
    if (rows == kRowBlock) {
      double* c0 = c;
      double* c1 = c + n;
      double* c2 = c + 2 * n;
      double* c3 = c + 3 * n;
      for (std::size_t t = 0; t < k; ++t) {
        const double a0 = a_at(0, t), a1 = a_at(1, t), a2 = a_at(2, t), a3 = a_at(3, t);
        const double* brow = b + t * n;
#pragma omp simd
        for (std::size_t j = j0; j < j1; ++j) {
          const double bv = brow[j];
          c0[j] += a0 * bv;
          c1[j] += a1 * bv;
          c2[j] += a2 * bv;
          c3[j] += a3 * bv;
        }
      }
    } else {
      for (std::size_t r = 0; r < rows; ++r) {
        double* cr = c + r * n;
        for (std::size_t t = 0; t < k; ++t) {
          const double av = a_at(r, t);
          const double* brow = b + t * n;
#pragma omp simd
          for (std::size_t j = j0; j < j1; ++j) cr[j] += av * brow[j];
        }
      }
    }
  }
}

void im2col(const ConvGeometry& g, const double* input, double* cols) {
  const std::size_t oh = g.out_height(), ow = g.out_width();
  const std::size_t patch = g.patch_size();
#pragma omp parallel for schedule(static)
  for (index_t p = 0; p < static_cast<index_t>(patch); ++p) {
    const std::size_t kx = p % g.kernel_w;
    const std::size_t ky = (p / g.kernel_w) % g.kernel_h;
    const std::size_t ci = p / (g.kernel_w * g.kernel_h);
    const double* plane = input + ci * g.height * g.width;
    double* row = cols + p * oh * ow;
    for (std::size_t oy = 0; oy < oh; ++oy) {
      const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) -
                                static_cast<std::ptrdiff_t>(g.padding);
      double* out = row + oy * ow;
      if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.height)) {
        std::fill(out, out + ow, 0.0);
        continue;
      }
      const double* src = plane + iy * g.width;
      for (std::size_t ox = 0; ox < ow; ++ox) {
        const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx) -
                                  static_cast<std::ptrdiff_t>(g.padding);
        out[ox] = (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.width)) ? 0.0 : src[ix];
      }
    }
  }
}

// grad_input += col2im(cols); each patch row maps into one input channel.
void col2im_acc(const ConvGeometry& g, const double* cols, double* grad_input) {
  const std::size_t oh = g.out_height(), ow = g.out_width();
  const std::size_t taps = g.kernel_h * g.kernel_w;
#pragma omp parallel for schedule(static)
  for (index_t ci = 0; ci < static_cast<index_t>(g.in_channels); ++ci) {
    double* plane = grad_input + ci * g.height * g.width;
    for (std::size_t tap = 0; tap < taps; ++tap) {
      const std::size_t ky = tap / g.kernel_w, kx = tap % g.kernel_w;
      const double* row = cols + (ci * taps + tap) * oh * ow;
      for (std::size_t oy = 0; oy < oh; ++oy) {
        const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) -
                                  static_cast<std::ptrdiff_t>(g.padding);
        if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.height)) continue;
        for (std::size_t ox = 0; ox < ow; ++ox) {
          const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx) -
                                    static_cast<std::ptrdiff_t>(g.padding);
          if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.width)) continue;
          plane[iy * g.width + ix] += row[oy * ow + ox];
        }
      }
    }
  }
}

}  // namespace

void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
             double* c) {
  const index_t blocks = static_cast<index_t>((m + kRowBlock - 1) / kRowBlock);
#pragma omp parallel for schedule(static)
  for (index_t blk = 0; blk < blocks; ++blk) {
    const std::size_t i0 = blk * kRowBlock;
    const std::size_t rows = std::min(kRowBlock, m - i0);
    double* cblk = c + i0 * n;
    std::fill(cblk, cblk + rows * n, 0.0);
    accumulate_row_block(
        rows, n, k, [&](std::size_t r, std::size_t t) { return a[(i0 + r) * k + t]; }, b, cblk);
  }
}

void gemm_nt_acc(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
                 double* c) {
  // Transposing b once turns the dot products into the streaming row-block update.
  std::vector<double> bt(k * n);
#pragma omp parallel for schedule(static)
  for (index_t t = 0; t < static_cast<index_t>(k); ++t)
    for (std::size_t j = 0; j < n; ++j) bt[t * n + j] = b[j * k + t];
  const index_t blocks = static_cast<index_t>((m + kRowBlock - 1) / kRowBlock);
#pragma omp parallel for schedule(static)
  for (index_t blk = 0; blk < blocks; ++blk) {
    const std::size_t i0 = blk * kRowBlock;
    const std::size_t rows = std::min(kRowBlock, m - i0);
    accumulate_row_block(
        rows, n, k, [&](std::size_t r, std::size_t t) { return a[(i0 + r) * k + t]; }, bt.data(),
        c + i0 * n);
  }
}

void gemm_tn_acc(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
                 double* c) {
  const index_t blocks = static_cast<index_t>((m + kRowBlock - 1) / kRowBlock);
#pragma omp parallel for schedule(static)
  for (index_t blk = 0; blk < blocks; ++blk) {
    const std::size_t i0 = blk * kRowBlock;
    const std::size_t rows = std::min(kRowBlock, m - i0);
    accumulate_row_block(
        rows, n, k, [&](std::size_t r, std::size_t t) { return a[t * m + i0 + r]; }, b,
        c + i0 * n);
  }
}

void conv2d_forward(const ConvGeometry& g, const double* input, const double* kernels,
                    const double* bias, double* output) {
  const std::size_t spatial = g.out_height() * g.out_width();
  std::vector<double> cols(g.patch_size() * spatial);
  im2col(g, input, cols.data());
  gemm_nn(g.out_channels, spatial, g.patch_size(), kernels, cols.data(), output);
  if (!bias) return;
#pragma omp parallel for schedule(static)
  for (index_t co = 0; co < static_cast<index_t>(g.out_channels); ++co) {
    double* row = output + co * spatial;
    const double bv = bias[co];
    for (std::size_t j = 0; j < spatial; ++j) row[j] += bv;
  }
}

void conv2d_backward(const ConvGeometry& g, const double* input, const double* kernels,
                     const double* grad_output, double* grad_input, double* grad_kernels,
                     double* grad_bias) {
  const std::size_t spatial = g.out_height() * g.out_width();
  const std::size_t patch = g.patch_size();
  if (grad_bias) {
#pragma omp parallel for schedule(static)
    for (index_t co = 0; co < static_cast<index_t>(g.out_channels); ++co) {
      const double* row = grad_output + co * spatial;
      double s = 0.0;
      for (std::size_t j = 0; j < spatial; ++j) s += row[j];
      grad_bias[co] += s;
    }
  }
  std::vector<double> cols(patch * spatial);
  if (grad_kernels) {
    im2col(g, input, cols.data());
    gemm_nt_acc(g.out_channels, patch, spatial, grad_output, cols.data(), grad_kernels);
  }
  if (grad_input) {
    std::fill(cols.begin(), cols.end(), 0.0);
    gemm_tn_acc(patch, spatial, g.out_channels, kernels, grad_output, cols.data());
    col2im_acc(g, cols.data(), grad_input);
  }
}

void maxpool2d_forward(const PoolGeometry& g, const double* input, double* output,
                       std::size_t* argmax) {
  const std::size_t oh = g.out_height(), ow = g.out_width();
#pragma omp parallel for schedule(static)
  for (index_t c = 0; c < static_cast<index_t>(g.channels); ++c) {
    for (std::size_t oy = 0; oy < oh; ++oy)
      for (std::size_t ox = 0; ox < ow; ++ox) {
        const std::size_t origin = (c * g.height + oy * g.stride) * g.width + ox * g.stride;
        double best = -std::numeric_limits<double>::infinity();
        std::size_t best_idx = origin;
        for (std::size_t ky = 0; ky < g.size; ++ky) {
          const std::size_t rowstart = origin + ky * g.width;
          for (std::size_t kx = 0; kx < g.size; ++kx)
            if (input[rowstart + kx] > best) {
              best = input[rowstart + kx];
              best_idx = rowstart + kx;
            }
        }
        const std::size_t o = (c * oh + oy) * ow + ox;
        output[o] = best;
        argmax[o] = best_idx;
      }
  }
}

void dense_forward(std::size_t out, std::size_t n, const double* x, const double* w,
                   const double* b, double* y) {
#pragma omp parallel for schedule(static)
  for (index_t i = 0; i < static_cast<index_t>(out); ++i) {
    const double* wrow = w + i * n;
    double s = 0.0;
#pragma omp simd reduction(+ : s)
    for (std::size_t j = 0; j < n; ++j) s += wrow[j] * x[j];
    y[i] = s + (b ? b[i] : 0.0);
  }
}

void dense_backward(std::size_t out, std::size_t n, const double* x, const double* w,
                    const double* grad_y, double* grad_x, double* grad_w, double* grad_b) {
  if (grad_b)
    for (std::size_t i = 0; i < out; ++i) grad_b[i] += grad_y[i];
  if (grad_w) {
#pragma omp parallel for schedule(static)
    for (index_t i = 0; i < static_cast<index_t>(out); ++i) {
      double* gw = grad_w + i * n;
      const double gy = grad_y[i];
#pragma omp simd
      for (std::size_t j = 0; j < n; ++j) gw[j] += gy * x[j];
    }
  }
  if (grad_x) {
    const index_t tiles = static_cast<index_t>((n + kColTile - 1) / kColTile);
#pragma omp parallel for schedule(static)
    for (index_t tile = 0; tile < tiles; ++tile) {
      const std::size_t j0 = tile * kColTile, j1 = std::min(n, j0 + kColTile);
      for (std::size_t i = 0; i < out; ++i) {
        const double gy = grad_y[i];
        const double* wrow = w + i * n;
#pragma omp simd
        for (std::size_t j = j0; j < j1; ++j) grad_x[j] += gy * wrow[j];
      }
    }
  }
}

}  // namespace biofuse::kernels::parallel
