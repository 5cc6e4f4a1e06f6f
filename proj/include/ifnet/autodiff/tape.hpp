#pragma once

#include <cstddef>
#include <cstdint>
#include <deque>
#include <functional>
#include <optional>
#include <string>
#include <utility>

#include "ifnet/autodiff/tensor.hpp"
#include "ifnet/core/error.hpp"

namespace ifnet::ad {

template <class T>
class Tape;

/// Handle to a tape node.
template <class T>
struct Var {
  Tape<T>* tape = nullptr;
  std::size_t id = 0;

  const Tensor<T>& value() const { return tape->value(id); }
  const Shape& shape() const { return tape->value(id).shape(); }
};

/// Linear record of executed operations. Nodes are appended in execution order and the
/// reverse sweep visits them in exactly the reverse order.
template <class T>
class Tape {
 public:
  /// Called during the reverse sweep with the node's own id; reads grad(id) and accumulates
  /// into the inputs through accumulate().
  using Backward = std::function<void(Tape&, std::size_t)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var<T> constant(Tensor<T> value) { return record_if(std::move(value), false, nullptr, "constant"); }

  /// Leaf whose gradient is wanted.
  Var<T> variable(Tensor<T> value) { return record_if(std::move(value), true, nullptr, "variable"); }

  /// Records an op result. The node needs a gradient only if some input does.
  Var<T> record(Tensor<T> value, std::initializer_list<Var<T>> inputs, Backward backward, const char* op) {
    bool needs = false;
    for (const auto& in : inputs) needs = needs || nodes_.at(in.id).requires_grad;
    return record_if(std::move(value), needs, std::move(backward), op);
  }

  Var<T> record_if(Tensor<T> value, bool requires_grad, Backward backward, const char* op) {
    if (!value.all_finite()) throw NumericalError(std::string(op) + ": non-finite value in output " + shape_string(value.shape()));
    return push(std::move(value), requires_grad, requires_grad ? std::move(backward) : nullptr, op);
  }

  /// Folds the discrete decisions of a non-smooth op (relu masks, pooling argmax) into a running
  /// signature. Two evaluations with equal signatures lie on the same smooth piece.
  void note_branches(std::uint64_t h) noexcept {
    branch_signature_ ^= h + 0x9e3779b97f4a7c15ULL + (branch_signature_ << 6) + (branch_signature_ >> 2);
  }
  std::uint64_t branch_signature() const noexcept { return branch_signature_; }

  const Tensor<T>& value(std::size_t id) const { return nodes_.at(id).value; }
  bool requires_grad(std::size_t id) const { return nodes_.at(id).requires_grad; }
  bool requires_grad(Var<T> v) const { return requires_grad(v.id); }
  const char* op_name(std::size_t id) const { return nodes_.at(id).op; }
  std::size_t size() const noexcept { return nodes_.size(); }

  /// Gradient buffer of a node, allocated as zeros on first use.
  Tensor<T>& accumulator(std::size_t id) {
    auto& n = nodes_.at(id);
    if (!n.grad) n.grad.emplace(n.value.shape(), T(0));
    return *n.grad;
  }

  /// Gradient reaching a node in the last sweep, or nullptr if none did.
  const Tensor<T>* grad(Var<T> v) const {
    const auto& n = nodes_.at(v.id);
    return n.grad ? &*n.grad : nullptr;
  }

  /// Seeds d(root)/d(root) = 1 for a single-element root and sweeps backwards.
  void backward(Var<T> root) {
    if (root.value().size() != 1) throw Error("backward: root must hold one element, got " + shape_string(root.shape()));
    backward(root, Tensor<T>(root.shape(), T(1)));
  }

  /// Sweep with an explicit output cotangent.
  void backward(Var<T> root, const Tensor<T>& seed) {
    if (seed.shape() != root.shape()) throw Error("backward: seed shape mismatch");
    for (auto& n : nodes_) n.grad.reset();
    accumulator(root.id) = seed;
    for (std::size_t id = root.id + 1; id-- > 0;) {
      auto& n = nodes_[id];
      if (n.backward && n.grad) n.backward(*this, id);
    }
  }

 private:
  struct Node {
    Tensor<T> value;
    std::optional<Tensor<T>> grad;
    Backward backward;
    bool requires_grad = false;
    const char* op = "";
  };

  Var<T> push(Tensor<T> value, bool requires_grad, Backward backward, const char* op) {
    nodes_.push_back(Node{std::move(value), std::nullopt, std::move(backward), requires_grad, op});
    return Var<T>{this, nodes_.size() - 1};
  }

  std::deque<Node> nodes_;
  std::uint64_t branch_signature_ = 0;  // stable references while recording
};

}  // namespace ifnet::ad
