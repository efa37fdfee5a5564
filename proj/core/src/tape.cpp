#include "conure/tape.hpp"

#include <utility>

#include "conure/errors.hpp"

namespace conure {

Var Tape::leaf(Tensor value) {
  const bool rg = value.requires_grad;
  return leaf(std::move(value), rg);
}

Var Tape::leaf(Tensor value, bool requires_grad) {
  Node n;
  n.requires_grad = requires_grad;
  if (requires_grad) n.grad = Tensor::zeros(value.shape);
  n.owned = std::move(value);
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

Var Tape::borrow(const Tensor& value) { return borrow(value, value.requires_grad); }

Var Tape::borrow(const Tensor& value, bool requires_grad) {
  Node n;
  n.view = &value;
  n.requires_grad = requires_grad;
  if (requires_grad) n.grad = Tensor::zeros(value.shape);
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

Var Tape::record(Tensor value, const std::vector<Var>& inputs, BackwardFn fn) {
  bool rg = false;
  for (Var in : inputs) {
    if (!in.valid() || in.id >= static_cast<int>(nodes_.size())) {
      throw ContractError("Tape::record: input var not on this tape");
    }
    rg = rg || nodes_[static_cast<std::size_t>(in.id)].requires_grad;
  }
  Node n;
  n.requires_grad = rg;
  if (rg) {
    n.grad = Tensor::zeros(value.shape);
    n.backward = std::move(fn);
  }
  n.owned = std::move(value);
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

const Tape::Node& Tape::node(Var v) const {
  if (!v.valid() || v.id >= static_cast<int>(nodes_.size())) {
    throw ContractError("invalid tape var id " + std::to_string(v.id));
  }
  return nodes_[static_cast<std::size_t>(v.id)];
}

Tape::Node& Tape::node(Var v) {
  return const_cast<Node&>(static_cast<const Tape*>(this)->node(v));
}

const Tensor& Tape::value(Var v) const {
  const Node& n = node(v);
  return n.view != nullptr ? *n.view : n.owned;
}

bool Tape::requires_grad(Var v) const { return node(v).requires_grad; }

const Tensor* Tape::gradient(Var v) const {
  const Node& n = node(v);
  return n.requires_grad ? &n.grad : nullptr;
}

Tensor* Tape::grad_if(Var v) {
  Node& n = node(v);
  return n.requires_grad ? &n.grad : nullptr;
}

void Tape::backward(Var loss) {
  if (backward_done_) throw ContractError("Tape::backward: already run on this tape");
  Node& top = node(loss);
  if (value(loss).numel() != 1) {
    throw ContractError("Tape::backward: loss must be scalar, got shape " + shape_str(value(loss).shape));
  }
  if (!top.requires_grad) {
    backward_done_ = true;
    return;
  }
  top.grad.data[0] = 1.0;
  for (int i = loss.id; i >= 0; --i) {
    Node& n = nodes_[static_cast<std::size_t>(i)];
    if (n.requires_grad && n.backward) n.backward(*this, Var{i});
  }
  backward_done_ = true;
}

}  // namespace conure
