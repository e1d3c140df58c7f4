#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <span>
#include <unordered_map>
#include <vector>

#include "biofuse/tensor.hpp"

namespace biofuse {

/// Handle to a value recorded on a Tape.
struct Var {
  std::size_t id = 0;
};

/// Reverse-mode gradient tape.
///
/// Every op appends one node holding its output and a backward closure.
/// `backward` walks the nodes in exact reverse recording order. Parameters are
/// bound by address, so a tensor used by several ops (shared weights) owns one
/// leaf and accumulates all of its gradient contributions there.
///
/// A tape belongs to a single thread. Bound parameters must outlive the tape
/// and must not be modified while it is alive.
class Tape {
 public:
  /// Receives the gradient flowing into the node's output.
  using BackwardFn = std::function<void(Tape&, const Tensor& grad_output)>;

  /// A tape built with track_gradients = false binds parameters as plain
  /// inputs, so no backward closures are recorded (inference).
  explicit Tape(bool track_gradients = true) : track_gradients_(track_gradients) {}

  Var constant(Tensor value);
  /// Non-owning constant; `storage` must outlive the tape.
  Var constant_ref(const Tensor& storage);
  Var variable(Tensor value);
  Var parameter(const Tensor& storage);
  Var record(Tensor value, std::span<const Var> inputs, BackwardFn backward);
  Var record(Tensor value, std::initializer_list<Var> inputs, BackwardFn backward) {
    return record(std::move(value), std::span<const Var>(inputs.begin(), inputs.size()),
                  std::move(backward));
  }

  const Tensor& value(Var v) const;
  bool requires_grad(Var v) const { return nodes_.at(v.id).requires_grad; }

  /// Gradient accumulation buffer for `v`, zero-initialised on first use.
  Tensor& grad_buffer(Var v);
  /// Gradient of the last backward pass w.r.t. `v` (zeros if none flowed).
  Tensor grad(Var v) const;
  /// Gradient w.r.t. a bound parameter; zeros if the tensor is not on the tape.
  Tensor grad_of(const Tensor& storage) const;

  /// Seeds d(loss)/d(loss) = 1 and propagates. `loss` must hold one element.
  void backward(Var loss);

  std::size_t size() const noexcept { return nodes_.size(); }

 private:
  struct Node {
    Tensor owned;
    const Tensor* external = nullptr;
    Tensor grad;
    bool requires_grad = false;
    BackwardFn backward;
  };

  Var push(Node node);

  bool track_gradients_ = true;
  std::vector<Node> nodes_;
  std::unordered_map<const Tensor*, std::size_t> parameter_index_;
};

}  // namespace biofuse
