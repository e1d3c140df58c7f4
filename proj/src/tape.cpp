#include "biofuse/tape.hpp"

#include "biofuse/errors.hpp"

namespace biofuse {

Var Tape::push(Node node) {
  nodes_.push_back(std::move(node));
  return Var{nodes_.size() - 1};
}

Var Tape::constant(Tensor value) {
  Node n;
  n.owned = std::move(value);
  return push(std::move(n));
}

Var Tape::constant_ref(const Tensor& storage) {
  Node n;
  n.external = &storage;
  return push(std::move(n));
}

Var Tape::variable(Tensor value) {
  Node n;
  n.owned = std::move(value);
  n.requires_grad = true;
  return push(std::move(n));
}

Var Tape::parameter(const Tensor& storage) {
  if (auto it = parameter_index_.find(&storage); it != parameter_index_.end()) return Var{it->second};
  Node n;
  n.external = &storage;
  n.requires_grad = track_gradients_;
  const Var v = push(std::move(n));
  parameter_index_.emplace(&storage, v.id);
  return v;
}

Var Tape::record(Tensor value, std::span<const Var> inputs, BackwardFn backward) {
  require_finite(value, "tape op");
  Node n;
  n.owned = std::move(value);
  for (Var in : inputs) n.requires_grad = n.requires_grad || requires_grad(in);
  if (n.requires_grad) n.backward = std::move(backward);
  return push(std::move(n));
}

const Tensor& Tape::value(Var v) const {
  const Node& n = nodes_.at(v.id);
  return n.external ? *n.external : n.owned;
}

Tensor& Tape::grad_buffer(Var v) {
  Node& n = nodes_.at(v.id);
  if (n.grad.empty()) n.grad = Tensor(value(v).shape());
  return n.grad;
}

Tensor Tape::grad(Var v) const {
  const Node& n = nodes_.at(v.id);
  if (n.grad.empty()) return Tensor(value(v).shape());
  return n.grad;
}

Tensor Tape::grad_of(const Tensor& storage) const {
  if (auto it = parameter_index_.find(&storage); it != parameter_index_.end())
    return grad(Var{it->second});
  return Tensor(storage.shape());
}

void Tape::backward(Var loss) {
  if (value(loss).size() != 1)
    throw ContractError("backward requires a scalar loss, got shape " +
                        shape_to_string(value(loss).shape()));
  for (auto& n : nodes_) n.grad = Tensor();
  grad_buffer(loss).fill(1.0);
  for (std::size_t id = loss.id + 1; id-- > 0;) {
    Node& n = nodes_[id];
    if (!n.backward || n.grad.empty()) continue;
    // Closures only write into earlier nodes' grads; nodes_ is not resized here.
    n.backward(*this, n.grad);
  }
}

}  // namespace biofuse
