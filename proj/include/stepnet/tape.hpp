#pragma once

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "stepnet/errors.hpp"
#include "stepnet/tensor.hpp"

namespace stepnet {

template <class Real>
class Tape;

// Handle to a node on a tape. Cheap to copy; never outlives its tape.
template <class Real>
struct Var {
  Tape<Real>* tape = nullptr;
  int id = -1;

  bool valid() const { return tape != nullptr && id >= 0; }
  const Tensor<Real>& value() const;
  const Shape& shape() const { return value().shape(); }
};

// Reverse-mode tape. Nodes are appended in evaluation order, so the list is
// topologically sorted by construction. Every non-leaf node carries a replay
// closure (recomputes value from parents, same kernel as the original
// forward) and a backward closure (accumulates into parent grads). Both are
// pure functions of node values, which keeps replay and repeated backward
// passes bit-identical.
template <class Real>
class Tape {
 public:
  struct Node {
    Tensor<Real> value;
    Tensor<Real> grad;  // allocated by backward() for requires_grad nodes
    std::vector<int> parents;
    std::function<void(Tape&, int)> replay_fn;    // null for leaves
    std::function<void(Tape&, int)> backward_fn;  // null for leaves
    bool requires_grad = false;
  };

  Var<Real> leaf(Tensor<Real> value, bool requires_grad = false) {
    Node n;
    n.value = std::move(value);
    n.requires_grad = requires_grad;
    nodes_.push_back(std::move(n));
    return Var<Real>{this, static_cast<int>(nodes_.size()) - 1};
  }

  // Appends a node, then runs `compute` once to fill its value. The same
  // closure is stored for replay.
  Var<Real> emit(Tensor<Real> value_storage, std::vector<int> parents,
                 std::function<void(Tape&, int)> compute, std::function<void(Tape&, int)> backward) {
    Node n;
    n.value = std::move(value_storage);
    n.parents = std::move(parents);
    n.requires_grad = false;
    for (int p : n.parents) {
      if (nodes_[static_cast<size_t>(p)].requires_grad) n.requires_grad = true;
    }
    n.replay_fn = std::move(compute);
    n.backward_fn = std::move(backward);
    nodes_.push_back(std::move(n));
    const int id = static_cast<int>(nodes_.size()) - 1;
    nodes_[static_cast<size_t>(id)].replay_fn(*this, id);
    return Var<Real>{this, id};
  }

  Node& node(int id) { return nodes_[static_cast<size_t>(id)]; }
  const Node& node(int id) const { return nodes_[static_cast<size_t>(id)]; }
  int size() const { return static_cast<int>(nodes_.size()); }

  const Tensor<Real>& value(int id) const { return nodes_[static_cast<size_t>(id)].value; }
  Tensor<Real>& mutable_value(int id) { return nodes_[static_cast<size_t>(id)].value; }
  const Tensor<Real>& grad(int id) const { return nodes_[static_cast<size_t>(id)].grad; }

  // Ensures a grad buffer exists for accumulation during backward.
  Tensor<Real>& grad_buffer(int id) {
    Node& n = nodes_[static_cast<size_t>(id)];
    if (n.grad.numel() == 0) n.grad = Tensor<Real>::zeros(n.value.shape());
    return n.grad;
  }

  void zero_grads() {
    for (Node& n : nodes_) {
      if (n.grad.numel() != 0) n.grad.fill(Real(0));
    }
  }

  // Reverse-mode accumulation seeded at a scalar output.
  void backward(Var<Real> seed) {
    if (seed.tape != this) throw ShapeError("backward: seed var belongs to a different tape");
    if (value(seed.id).numel() != 1) {
      throw ShapeError("backward: seed must be scalar, got shape " + shape_str(value(seed.id).shape()));
    }
    Tensor<Real>& g = grad_buffer(seed.id);
    g[0] += Real(1);
    for (int id = seed.id; id >= 0; --id) {
      Node& n = nodes_[static_cast<size_t>(id)];
      if (!n.requires_grad || !n.backward_fn) continue;
      if (n.grad.numel() == 0) continue;  // not on the path from the seed
      n.backward_fn(*this, id);
    }
  }

  // Recomputes every non-leaf value in recorded order.
  void replay() {
    for (int id = 0; id < size(); ++id) {
      Node& n = nodes_[static_cast<size_t>(id)];
      if (n.replay_fn) n.replay_fn(*this, id);
    }
  }

 private:
  std::vector<Node> nodes_;
};

template <class Real>
const Tensor<Real>& Var<Real>::value() const {
  return tape->value(id);
}

}  // namespace stepnet
