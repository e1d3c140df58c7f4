#include "biofuse/ops.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "biofuse/errors.hpp"
#include "biofuse/kernels.hpp"

namespace biofuse::ops {

namespace kn = kernels::parallel;

namespace {

[[noreturn]] void mismatch(const char* op, const Shape& a, const Shape& b) {
  throw DimensionError(std::string(op) + ": incompatible shapes " + shape_to_string(a) + " and " +
                       shape_to_string(b));
}

void require_rank(const char* op, const Tensor& t, std::size_t rank) {
  if (t.rank() != rank)
    throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                         shape_to_string(t.shape()));
}

kernels::ConvGeometry conv_geometry(const Tensor& input, const Tensor& kernels, const Tensor& bias,
                                    std::size_t stride, std::size_t padding) {
  require_rank("conv2d input", input, 3);
  require_rank("conv2d kernels", kernels, 4);
  if (kernels.dim(1) != input.dim(0)) mismatch("conv2d", input.shape(), kernels.shape());
  if (bias.rank() != 1 || bias.dim(0) != kernels.dim(0)) mismatch("conv2d bias", kernels.shape(), bias.shape());
  if (stride == 0) throw ArgumentError("conv2d: stride must be positive");
  kernels::ConvGeometry g;
  g.in_channels = input.dim(0);
  g.height = input.dim(1);
  g.width = input.dim(2);
  g.out_channels = kernels.dim(0);
  g.kernel_h = kernels.dim(2);
  g.kernel_w = kernels.dim(3);
  g.stride = stride;
  g.padding = padding;
  if (g.height + 2 * padding < g.kernel_h || g.width + 2 * padding < g.kernel_w)
    throw DimensionError("conv2d: kernel " + shape_to_string(kernels.shape()) +
                         " larger than padded input " + shape_to_string(input.shape()));
  return g;
}

kernels::PoolGeometry pool_geometry(const Tensor& input, std::size_t size, std::size_t stride) {
  require_rank("maxpool2d", input, 3);
  if (size == 0 || stride == 0) throw ArgumentError("maxpool2d: size and stride must be positive");
  if (input.dim(1) < size || input.dim(2) < size)
    throw DimensionError("maxpool2d: window " + std::to_string(size) + " exceeds input " +
                         shape_to_string(input.shape()));
  return {input.dim(0), input.dim(1), input.dim(2), size, stride};
}

void check_dense(const Tensor& x, const Tensor& w, const Tensor& b) {
  require_rank("dense weight", w, 2);
  if (x.size() != w.dim(1)) mismatch("dense", w.shape(), x.shape());
  if (b.rank() != 1 || b.dim(0) != w.dim(0)) mismatch("dense bias", w.shape(), b.shape());
}

void check_elman(const Tensor& seq, const Tensor& wx, const Tensor& wh, const Tensor& b) {
  require_rank("elman sequence", seq, 2);
  require_rank("elman input weight", wx, 2);
  require_rank("elman recurrent weight", wh, 2);
  const std::size_t h = wh.dim(0);
  if (wh.dim(1) != h) mismatch("elman recurrent weight", wh.shape(), wh.shape());
  if (wx.dim(0) != h || wx.dim(1) != seq.dim(1)) mismatch("elman", seq.shape(), wx.shape());
  if (b.rank() != 1 || b.dim(0) != h) mismatch("elman bias", wh.shape(), b.shape());
}

// Hidden states h_0..h_T stacked as (T+1) x H.
std::vector<double> elman_states(const Tensor& seq, const Tensor& wx, const Tensor& wh,
                                 const Tensor& b) {
  const std::size_t steps = seq.dim(0), d = seq.dim(1), h = wh.dim(0);
  std::vector<double> states((steps + 1) * h, 0.0);
  for (std::size_t t = 0; t < steps; ++t) {
    const double* prev = states.data() + t * h;
    double* cur = states.data() + (t + 1) * h;
    const double* x = seq.ptr() + t * d;
    for (std::size_t i = 0; i < h; ++i) {
      double s = b[i];
      for (std::size_t j = 0; j < d; ++j) s += wx[i * d + j] * x[j];
      for (std::size_t j = 0; j < h; ++j) s += wh[i * h + j] * prev[j];
      cur[i] = std::tanh(s);
    }
  }
  return states;
}

double apply(Activation kind, double v) {
  switch (kind) {
    case Activation::relu: return v > 0.0 ? v : 0.0;
    case Activation::tanh: return std::tanh(v);
    case Activation::sigmoid: return 1.0 / (1.0 + std::exp(-v));
  }
  return v;
}

}  // namespace

std::size_t conv2d_param_count(std::size_t in_channels, std::size_t out_channels,
                               std::size_t kernel_h, std::size_t kernel_w) {
  return out_channels * (in_channels * kernel_h * kernel_w + 1);
}

std::size_t dense_param_count(std::size_t inputs, std::size_t outputs) {
  return outputs * inputs + outputs;
}

Shape conv2d_output_shape(const Shape& input, std::size_t out_channels, std::size_t kernel_h,
                          std::size_t kernel_w, std::size_t stride, std::size_t padding) {
  if (input.size() != 3) throw DimensionError("conv2d: expected C x H x W input, got " + shape_to_string(input));
  if (stride == 0) throw ArgumentError("conv2d: stride must be positive");
  if (input[1] + 2 * padding < kernel_h || input[2] + 2 * padding < kernel_w)
    throw DimensionError("conv2d: kernel larger than padded input " + shape_to_string(input));
  return {out_channels, (input[1] + 2 * padding - kernel_h) / stride + 1,
          (input[2] + 2 * padding - kernel_w) / stride + 1};
}

Shape maxpool2d_output_shape(const Shape& input, std::size_t size, std::size_t stride) {
  if (input.size() != 3) throw DimensionError("maxpool2d: expected C x H x W input, got " + shape_to_string(input));
  if (size == 0 || stride == 0) throw ArgumentError("maxpool2d: size and stride must be positive");
  if (input[1] < size || input[2] < size)
    throw DimensionError("maxpool2d: window exceeds input " + shape_to_string(input));
  return {input[0], (input[1] - size) / stride + 1, (input[2] - size) / stride + 1};
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank("matmul", a, 2);
  require_rank("matmul", b, 2);
  if (a.dim(1) != b.dim(0)) mismatch("matmul", a.shape(), b.shape());
  Tensor c({a.dim(0), b.dim(1)});
  kn::gemm_nn(a.dim(0), b.dim(1), a.dim(1), a.ptr(), b.ptr(), c.ptr());
  require_finite(c, "matmul");
  return c;
}

Tensor conv2d(const Tensor& input, const Tensor& kernels, const Tensor& bias, std::size_t stride,
              std::size_t padding) {
  const auto g = conv_geometry(input, kernels, bias, stride, padding);
  Tensor out({g.out_channels, g.out_height(), g.out_width()});
  kn::conv2d_forward(g, input.ptr(), kernels.ptr(), bias.ptr(), out.ptr());
  require_finite(out, "conv2d");
  return out;
}

Tensor maxpool2d(const Tensor& input, std::size_t size, std::size_t stride) {
  const auto g = pool_geometry(input, size, stride);
  Tensor out({g.channels, g.out_height(), g.out_width()});
  std::vector<std::size_t> argmax(out.size());
  kn::maxpool2d_forward(g, input.ptr(), out.ptr(), argmax.data());
  return out;
}

Tensor dense(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  check_dense(x, weight, bias);
  Tensor y({weight.dim(0)});
  kn::dense_forward(weight.dim(0), weight.dim(1), x.ptr(), weight.ptr(), bias.ptr(), y.ptr());
  require_finite(y, "dense");
  return y;
}

Tensor activation(const Tensor& x, Activation kind) {
  Tensor y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = apply(kind, x[i]);
  return y;
}

Tensor softmax(const Tensor& logits) {
  const double m = *std::max_element(logits.data().begin(), logits.data().end());
  Tensor p(logits.shape());
  double z = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) z += (p[i] = std::exp(logits[i] - m));
  for (std::size_t i = 0; i < p.size(); ++i) p[i] /= z;
  return p;
}

LossAndGrad softmax_cross_entropy(const Tensor& logits, std::size_t label) {
  if (label >= logits.size())
    throw IndexError("softmax_cross_entropy: label " + std::to_string(label) + " out of range for " +
                     std::to_string(logits.size()) + " classes");
  const double m = *std::max_element(logits.data().begin(), logits.data().end());
  double z = 0.0;
  for (double v : logits.data()) z += std::exp(v - m);
  LossAndGrad out;
  out.loss = m + std::log(z) - logits[label];
  out.grad = Tensor(logits.shape());
  for (std::size_t i = 0; i < logits.size(); ++i) out.grad[i] = std::exp(logits[i] - m) / z;
  out.grad[label] -= 1.0;
  return out;
}

Tensor elman(const Tensor& seq, const Tensor& wx, const Tensor& wh, const Tensor& bias) {
  check_elman(seq, wx, wh, bias);
  const std::size_t h = wh.dim(0);
  const auto states = elman_states(seq, wx, wh, bias);
  return Tensor({h}, std::vector<double>(states.end() - static_cast<std::ptrdiff_t>(h), states.end()));
}

Var matmul(Tape& tape, Var a, Var b) {
  Tensor c = matmul(tape.value(a), tape.value(b));
  return tape.record(std::move(c), {a, b}, [a, b](Tape& t, const Tensor& gc) {
    const Tensor& av = t.value(a);
    const Tensor& bv = t.value(b);
    const std::size_t m = av.dim(0), n = av.dim(1), p = bv.dim(1);
    if (t.requires_grad(a)) kn::gemm_nt_acc(m, n, p, gc.ptr(), bv.ptr(), t.grad_buffer(a).ptr());
    if (t.requires_grad(b)) kn::gemm_tn_acc(n, p, m, av.ptr(), gc.ptr(), t.grad_buffer(b).ptr());
  });
}

Var conv2d(Tape& tape, Var input, Var kernels, Var bias, std::size_t stride, std::size_t padding) {
  Tensor out = conv2d(tape.value(input), tape.value(kernels), tape.value(bias), stride, padding);
  return tape.record(std::move(out), {input, kernels, bias},
                     [=](Tape& t, const Tensor& g) {
                       const auto geo = conv_geometry(t.value(input), t.value(kernels),
                                                      t.value(bias), stride, padding);
                       kn::conv2d_backward(
                           geo, t.value(input).ptr(), t.value(kernels).ptr(), g.ptr(),
                           t.requires_grad(input) ? t.grad_buffer(input).ptr() : nullptr,
                           t.requires_grad(kernels) ? t.grad_buffer(kernels).ptr() : nullptr,
                           t.requires_grad(bias) ? t.grad_buffer(bias).ptr() : nullptr);
                     });
}

Var maxpool2d(Tape& tape, Var input, std::size_t size, std::size_t stride) {
  const Tensor& in = tape.value(input);
  const auto g = pool_geometry(in, size, stride);
  Tensor out({g.channels, g.out_height(), g.out_width()});
  std::vector<std::size_t> argmax(out.size());
  kn::maxpool2d_forward(g, in.ptr(), out.ptr(), argmax.data());
  return tape.record(std::move(out), {input},
                     [input, argmax = std::move(argmax)](Tape& t, const Tensor& gout) {
                       double* gi = t.grad_buffer(input).ptr();
                       for (std::size_t i = 0; i < argmax.size(); ++i) gi[argmax[i]] += gout[i];
                     });
}

Var dense(Tape& tape, Var x, Var weight, Var bias) {
  Tensor y = dense(tape.value(x), tape.value(weight), tape.value(bias));
  return tape.record(std::move(y), {x, weight, bias}, [=](Tape& t, const Tensor& gy) {
    const Tensor& w = t.value(weight);
    kn::dense_backward(w.dim(0), w.dim(1), t.value(x).ptr(), w.ptr(), gy.ptr(),
                       t.requires_grad(x) ? t.grad_buffer(x).ptr() : nullptr,
                       t.requires_grad(weight) ? t.grad_buffer(weight).ptr() : nullptr,
                       t.requires_grad(bias) ? t.grad_buffer(bias).ptr() : nullptr);
  });
}

Var activation(Tape& tape, Var x, Activation kind) {
  Tensor y = activation(tape.value(x), kind);
  return tape.record(std::move(y), {x}, [x, kind](Tape& t, const Tensor& gy) {
    const Tensor& xv = t.value(x);
    Tensor& gx = t.grad_buffer(x);
    for (std::size_t i = 0; i < gy.size(); ++i) {
      switch (kind) {
        case Activation::relu:
          gx[i] += xv[i] > 0.0 ? gy[i] : 0.0;
          break;
        case Activation::tanh: {
          const double y = std::tanh(xv[i]);
          gx[i] += gy[i] * (1.0 - y * y);
          break;
        }
        case Activation::sigmoid: {
          const double y = 1.0 / (1.0 + std::exp(-xv[i]));
          gx[i] += gy[i] * y * (1.0 - y);
          break;
        }
      }
    }
  });
}

Var softmax_cross_entropy(Tape& tape, Var logits, std::size_t label) {
  auto lg = softmax_cross_entropy(tape.value(logits), label);
  return tape.record(Tensor({1}, lg.loss), {logits},
                     [logits, grad = std::move(lg.grad)](Tape& t, const Tensor& g) {
                       Tensor& gl = t.grad_buffer(logits);
                       for (std::size_t i = 0; i < grad.size(); ++i) gl[i] += g[0] * grad[i];
                     });
}

Var elman(Tape& tape, Var seq, Var wx, Var wh, Var bias) {
  const Tensor& s = tape.value(seq);
  check_elman(s, tape.value(wx), tape.value(wh), tape.value(bias));
  auto states = elman_states(s, tape.value(wx), tape.value(wh), tape.value(bias));
  const std::size_t steps = s.dim(0), d = s.dim(1), h = tape.value(wh).dim(0);
  Tensor last({h}, std::vector<double>(states.end() - static_cast<std::ptrdiff_t>(h), states.end()));
  return tape.record(
      std::move(last), {seq, wx, wh, bias},
      [=, states = std::move(states)](Tape& t, const Tensor& g) {
        const Tensor& xs = t.value(seq);
        const Tensor& wxv = t.value(wx);
        const Tensor& whv = t.value(wh);
        double* gseq = t.requires_grad(seq) ? t.grad_buffer(seq).ptr() : nullptr;
        double* gwx = t.requires_grad(wx) ? t.grad_buffer(wx).ptr() : nullptr;
        double* gwh = t.requires_grad(wh) ? t.grad_buffer(wh).ptr() : nullptr;
        double* gb = t.requires_grad(bias) ? t.grad_buffer(bias).ptr() : nullptr;
        std::vector<double> dh(g.data().begin(), g.data().end());
        std::vector<double> da(h), next(h);
        for (std::size_t step = steps; step-- > 0;) {
          const double* cur = states.data() + (step + 1) * h;
          const double* prev = states.data() + step * h;
          const double* x = xs.ptr() + step * d;
          for (std::size_t i = 0; i < h; ++i) da[i] = dh[i] * (1.0 - cur[i] * cur[i]);
          std::fill(next.begin(), next.end(), 0.0);
          for (std::size_t i = 0; i < h; ++i) {
            if (gb) gb[i] += da[i];
            for (std::size_t j = 0; j < d; ++j) {
              if (gwx) gwx[i * d + j] += da[i] * x[j];
              if (gseq) gseq[step * d + j] += da[i] * wxv[i * d + j];
            }
            for (std::size_t j = 0; j < h; ++j) {
              if (gwh) gwh[i * h + j] += da[i] * prev[j];
              next[j] += da[i] * whv[i * h + j];
            }
          }
          dh.swap(next);
        }
      });
}

Var sum(Tape& tape, Var x) {
  double s = 0.0;
  for (double v : tape.value(x).data()) s += v;
  return tape.record(Tensor({1}, s), {x}, [x](Tape& t, const Tensor& g) {
    for (auto& v : t.grad_buffer(x).data()) v += g[0];
  });
}

Var add(Tape& tape, Var a, Var b) {
  const Tensor& av = tape.value(a);
  const Tensor& bv = tape.value(b);
  if (av.shape() != bv.shape()) mismatch("add", av.shape(), bv.shape());
  Tensor c(av.shape());
  for (std::size_t i = 0; i < c.size(); ++i) c[i] = av[i] + bv[i];
  return tape.record(std::move(c), {a, b}, [a, b](Tape& t, const Tensor& g) {
    for (Var v : {a, b}) {
      if (!t.requires_grad(v)) continue;
      Tensor& gv = t.grad_buffer(v);
      for (std::size_t i = 0; i < g.size(); ++i) gv[i] += g[i];
    }
  });
}

Var scale(Tape& tape, Var x, double factor) {
  Tensor y = tape.value(x);
  for (auto& v : y.data()) v *= factor;
  return tape.record(std::move(y), {x}, [x, factor](Tape& t, const Tensor& g) {
    Tensor& gx = t.grad_buffer(x);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += factor * g[i];
  });
}

Var flatten(Tape& tape, Var x) {
  const Tensor& xv = tape.value(x);
  return tape.record(xv.reshaped({xv.size()}), {x}, [x](Tape& t, const Tensor& g) {
    Tensor& gx = t.grad_buffer(x);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
  });
}

Var global_avg_pool(Tape& tape, Var x) {
  const Tensor& xv = tape.value(x);
  require_rank("global_avg_pool", xv, 3);
  const std::size_t c = xv.dim(0), plane = xv.dim(1) * xv.dim(2);
  Tensor y({c});
  for (std::size_t ch = 0; ch < c; ++ch) {
    double s = 0.0;
    for (std::size_t i = 0; i < plane; ++i) s += xv[ch * plane + i];
    y[ch] = s / static_cast<double>(plane);
  }
  return tape.record(std::move(y), {x}, [x, c, plane](Tape& t, const Tensor& g) {
    Tensor& gx = t.grad_buffer(x);
    for (std::size_t ch = 0; ch < c; ++ch) {
      const double share = g[ch] / static_cast<double>(plane);
      for (std::size_t i = 0; i < plane; ++i) gx[ch * plane + i] += share;
    }
  });
}

Var concat(Tape& tape, std::span<const Var> parts) {
  if (parts.empty()) throw ArgumentError("concat: no inputs");
  std::vector<double> out;
  std::vector<Var> ids(parts.begin(), parts.end());
  for (Var p : parts) {
    const auto d = tape.value(p).data();
    out.insert(out.end(), d.begin(), d.end());
  }
  const std::size_t n = out.size();
  Tensor value({n}, std::move(out));
  return tape.record(std::move(value), std::span<const Var>(ids), [ids](Tape& t, const Tensor& g) {
    std::size_t offset = 0;
    for (Var p : ids) {
      const std::size_t len = t.value(p).size();
      if (t.requires_grad(p)) {
        Tensor& gp = t.grad_buffer(p);
        for (std::size_t i = 0; i < len; ++i) gp[i] += g[offset + i];
      }
      offset += len;
    }
  });
}

}  // namespace biofuse::ops
