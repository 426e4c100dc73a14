#pragma once

#include <deque>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "aerosdf/autodiff/tensor.hpp"

namespace aerosdf::ad {

template <typename T>
class Tape;

/// Handle to a node on a tape.
template <typename T>
class Var {
 public:
  Var() = default;

  bool valid() const { return tape_ != nullptr; }
  Tape<T>* tape() const { return tape_; }
  std::size_t id() const { return id_; }
  const Tensor<T>& value() const { return tape_->value(id_); }
  const Shape& shape() const { return value().shape(); }

 private:
  friend class Tape<T>;
  Var(Tape<T>* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape<T>* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Append-only record of operations. Backward walks the nodes in exact reverse
/// insertion order and may run once; recording after backward is an error.
template <typename T>
class Tape {
 public:
  /// Accumulates into the gradients of the node's inputs given the node's output gradient.
  using Backward = std::function<void(Tape&, const Tensor<T>& grad_out)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var<T> leaf(Tensor<T> value, bool requires_grad = false) {
    check_open();
    nodes_.push_back(Node{"leaf", std::move(value), {}, requires_grad, {}, std::nullopt});
    return Var<T>(this, nodes_.size() - 1);
  }

  Var<T> record(const char* op, Tensor<T> value, std::vector<Var<T>> inputs, Backward backward) {
    check_open();
    Node node{op, std::move(value), {}, false, {}, std::nullopt};
    for (const auto& in : inputs) {
      if (!in.valid()) continue;
      if (in.tape() != this) throw Error(std::string(op) + ": input belongs to a different tape");
      node.inputs.push_back(in.id());
      node.requires_grad = node.requires_grad || nodes_[in.id()].requires_grad;
    }
    if (node.requires_grad) node.backward = std::move(backward);
    nodes_.push_back(std::move(node));
    return Var<T>(this, nodes_.size() - 1);
  }

  const Tensor<T>& value(std::size_t id) const { return nodes_.at(id).value; }
  bool requires_grad(const Var<T>& v) const { return v.valid() && nodes_.at(v.id()).requires_grad; }
  const char* op(std::size_t id) const { return nodes_.at(id).op; }
  std::size_t size() const { return nodes_.size(); }

  /// Gradient buffer of `v` during backward, or nullptr when `v` needs no gradient.
  Tensor<T>* grad_sink(const Var<T>& v) {
    if (!requires_grad(v)) return nullptr;
    auto& node = nodes_[v.id()];
    if (!node.grad) node.grad.emplace(node.value.shape(), T(0));
    return &*node.grad;
  }

  void backward(const Var<T>& loss) {
    if (backward_done_) throw Error("stale tape: backward already ran");
    if (!loss.valid() || loss.tape() != this) throw Error("loss does not belong to this tape");
    if (loss.value().size() != 1) {
      throw ShapeError("backward needs a scalar loss, got shape " + shape_string(loss.shape()));
    }
    backward_done_ = true;
    if (!nodes_[loss.id()].requires_grad) return;
    (*grad_sink(loss))[0] = T(1);
    for (std::size_t id = loss.id() + 1; id-- > 0;) {
      auto& node = nodes_[id];
      if (!node.grad || !node.backward) continue;
      node.backward(*this, *node.grad);
    }
  }

  bool has_grad(const Var<T>& v) const { return v.valid() && nodes_.at(v.id()).grad.has_value(); }

  /// Gradient after backward; zeros for a requires-grad node the loss did not reach.
  Tensor<T> grad(const Var<T>& v) const {
    const auto& node = nodes_.at(v.id());
    if (!node.requires_grad) throw Error("gradient requested for a node that does not require grad");
    if (!backward_done_) throw Error("gradient requested before backward");
    return node.grad ? *node.grad : Tensor<T>(node.value.shape(), T(0));
  }

  bool backward_done() const { return backward_done_; }

  void reset() {
    nodes_.clear();
    backward_done_ = false;
  }

 private:
  struct Node {
    const char* op;
    Tensor<T> value;
    std::vector<std::size_t> inputs;
    bool requires_grad;
    Backward backward;
    std::optional<Tensor<T>> grad;
  };

  void check_open() const {
    if (backward_done_) throw Error("stale tape: cannot record after backward");
  }

  std::deque<Node> nodes_;
  bool backward_done_ = false;
};

}  // namespace aerosdf::ad
