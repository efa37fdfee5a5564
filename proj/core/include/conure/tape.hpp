#pragma once

#include <functional>
#include <vector>

#include "conure/tensor.hpp"

namespace conure {

class Tape;

// Handle to a node on a specific tape.
struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

// One operation record's reverse step. Receives the tape and the op's own
// output node so it can read the output gradient and accumulate into input
// gradients.
using BackwardFn = std::function<void(Tape&, Var)>;

// Append-only record of a forward computation. Creation order is topological
// by construction, and the single backward() sweep accumulates gradients in
// that fixed reverse order, so results are bit-reproducible.
class Tape {
 public:
  // Leaf owning a copy of the value.
  Var leaf(Tensor value);
  Var leaf(Tensor value, bool requires_grad);

  // Leaf aliasing caller storage. The caller must keep the tensor alive and
  // unmodified for the tape's lifetime (parameters are read-only snapshots
  // during a forward/backward pass).
  Var borrow(const Tensor& value);
  Var borrow(const Tensor& value, bool requires_grad);

  // Interior node. requires_grad is inherited from the inputs; `fn` runs in
  // the reverse sweep only when some input requires a gradient.
  Var record(Tensor value, const std::vector<Var>& inputs, BackwardFn fn);

  const Tensor& value(Var v) const;
  bool requires_grad(Var v) const;

  // Gradient of `v` after backward(); nullptr when the node does not require
  // a gradient (frozen tensors never appear in the gradient map).
  const Tensor* gradient(Var v) const;

  // Mutable gradient buffer for backward fns; nullptr when not required.
  Tensor* grad_if(Var v);

  // Reverse accumulation from a scalar loss. One shot per tape.
  void backward(Var loss);

  std::size_t size() const { return nodes_.size(); }
  bool backward_done() const { return backward_done_; }

 private:
  struct Node {
    Tensor owned;
    const Tensor* view = nullptr;
    Tensor grad;
    bool requires_grad = false;
    BackwardFn backward;
  };

  const Node& node(Var v) const;
  Node& node(Var v);

  std::vector<Node> nodes_;
  bool backward_done_ = false;
};

}  // namespace conure
