#pragma once

// Differentiable primitives. Each op exists as a pure forward over Tensors
// and as a taped version that records its backward rule.

#include <cstddef>
#include <span>

#include "biofuse/tape.hpp"
#include "biofuse/tensor.hpp"

namespace biofuse::ops {

enum class Activation { relu, tanh, sigmoid };

// Shape arithmetic and parameter accounting.
std::size_t conv2d_param_count(std::size_t in_channels, std::size_t out_channels,
                               std::size_t kernel_h, std::size_t kernel_w);
std::size_t dense_param_count(std::size_t inputs, std::size_t outputs);
Shape conv2d_output_shape(const Shape& input, std::size_t out_channels, std::size_t kernel_h,
                          std::size_t kernel_w, std::size_t stride, std::size_t padding);
Shape maxpool2d_output_shape(const Shape& input, std::size_t size, std::size_t stride);

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor conv2d(const Tensor& input, const Tensor& kernels, const Tensor& bias, std::size_t stride,
              std::size_t padding);
Tensor maxpool2d(const Tensor& input, std::size_t size, std::size_t stride);
Tensor dense(const Tensor& x, const Tensor& weight, const Tensor& bias);
Tensor activation(const Tensor& x, Activation kind);
Tensor softmax(const Tensor& logits);
/// Final hidden state of h_t = tanh(Wh h_{t-1} + Wx x_t + b), h_0 = 0, over rows of `seq`.
Tensor elman(const Tensor& seq, const Tensor& wx, const Tensor& wh, const Tensor& bias);

struct LossAndGrad {
  double loss = 0.0;
  Tensor grad;
};
LossAndGrad softmax_cross_entropy(const Tensor& logits, std::size_t label);

Var matmul(Tape& tape, Var a, Var b);
Var conv2d(Tape& tape, Var input, Var kernels, Var bias, std::size_t stride, std::size_t padding);
Var maxpool2d(Tape& tape, Var input, std::size_t size, std::size_t stride);
Var dense(Tape& tape, Var x, Var weight, Var bias);
Var activation(Tape& tape, Var x, Activation kind);
Var softmax_cross_entropy(Tape& tape, Var logits, std::size_t label);
Var elman(Tape& tape, Var seq, Var wx, Var wh, Var bias);

Var sum(Tape& tape, Var x);
Var add(Tape& tape, Var a, Var b);
Var scale(Tape& tape, Var x, double factor);
Var flatten(Tape& tape, Var x);
/// C x H x W -> C (mean over each channel plane).
Var global_avg_pool(Tape& tape, Var x);
/// Concatenates the flattened parts into one vector.
Var concat(Tape& tape, std::span<const Var> parts);

}  // namespace biofuse::ops
