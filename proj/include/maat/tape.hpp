#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "maat/error.hpp"
#include "maat/tensor.hpp"

namespace maat {

class Tape;

// Handle to a value recorded on a Tape. Cheap to copy; valid for the
// lifetime of the tape that issued it.
class Var {
 public:
  Var() = default;

  bool valid() const noexcept { return tape_ != nullptr; }
  Tape& tape() const;
  std::size_t id() const noexcept { return id_; }

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  bool requires_grad() const;

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

// Gradients produced by one reverse sweep. Nodes the sweep never reached
// (constants, detached values, branches not feeding the root) have none.
class Gradients {
 public:
  const Tensor* find(const Var& v) const {
    if (v.id() >= grads_.size() || !grads_[v.id()]) return nullptr;
    return &*grads_[v.id()];
  }

  bool has(const Var& v) const { return find(v) != nullptr; }

  // Gradient wrt `v`, zeros when nothing flowed into it.
  Tensor of(const Var& v) const {
    if (const Tensor* g = find(v)) return *g;
    return Tensor(v.shape(), 0.0);
  }

 private:
  friend class Tape;
  std::vector<std::optional<Tensor>> grads_;
};

class Tape {
 public:
  struct Node;

  // Accumulates the node's incoming gradient into its inputs' gradients.
  // grad_in[k] is null when input k does not require a gradient.
  using BackwardFn = std::function<void(const Tape& tape, const Node& node,
                                        const Tensor& grad_out,
                                        std::span<Tensor* const> grad_in)>;

  struct Node {
    Tensor value;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
    bool requires_grad = false;
  };

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;
  Tape(Tape&&) = delete;
  Tape& operator=(Tape&&) = delete;

  Var constant(Tensor value) { return push(Node{std::move(value), {}, {}, false}); }

  Var variable(Tensor value) { return push(Node{std::move(value), {}, {}, true}); }

  // Same value, no gradient path back to `v`.
  Var detach(const Var& v) { return constant(value(v)); }

  // Records an operation. When no input requires a gradient the node is
  // stored as a constant and `fn` is dropped.
  Var record(Tensor value, std::initializer_list<Var> inputs, BackwardFn fn) {
    return record(std::move(value), std::vector<Var>(inputs), std::move(fn));
  }

  Var record(Tensor value, const std::vector<Var>& inputs, BackwardFn fn) {
    if (!value.all_finite()) {
      throw DivergenceError("non-finite value produced on tape (shape " +
                            to_string(value.shape()) + ")");
    }
    Node node;
    node.value = std::move(value);
    node.inputs.reserve(inputs.size());
    for (const Var& in : inputs) {
      if (in.tape_ != this) throw ContractError("operands recorded on different tapes");
      node.inputs.push_back(in.id_);
      node.requires_grad = node.requires_grad || nodes_[in.id_].requires_grad;
    }
    if (node.requires_grad) node.backward = std::move(fn);
    return push(std::move(node));
  }

  const Tensor& value(const Var& v) const { return nodes_.at(v.id_).value; }
  const Tensor& value(std::size_t id) const { return nodes_.at(id).value; }
  const Node& node(std::size_t id) const { return nodes_.at(id); }
  std::size_t size() const noexcept { return nodes_.size(); }

  // Reverse sweep from a scalar root. Nodes are stored in creation order,
  // which is a topological order, so one backward pass over ids visits every
  // node once.
  Gradients backward(const Var& root) const {
    if (root.tape_ != this) throw ContractError("root belongs to another tape");
    if (value(root).size() != 1) {
      throw ContractError("backward() needs a scalar root, got shape " +
                          to_string(value(root).shape()));
    }
    Gradients out;
    out.grads_.resize(root.id_ + 1);
    if (!nodes_[root.id_].requires_grad) return out;
    out.grads_[root.id_] = Tensor(value(root).shape(), 1.0);

    std::vector<Tensor*> grad_in;
    for (std::size_t i = root.id_ + 1; i-- > 0;) {
      const Node& n = nodes_[i];
      if (!out.grads_[i] || !n.backward) continue;
      grad_in.assign(n.inputs.size(), nullptr);
      for (std::size_t k = 0; k < n.inputs.size(); ++k) {
        const std::size_t in = n.inputs[k];
        if (!nodes_[in].requires_grad) continue;
        if (!out.grads_[in]) out.grads_[in] = Tensor(nodes_[in].value.shape(), 0.0);
        grad_in[k] = &*out.grads_[in];
      }
      n.backward(*this, n, *out.grads_[i], grad_in);
    }
    return out;
  }

 private:
  friend class Var;

  Var push(Node node) {
    nodes_.push_back(std::move(node));
    return Var(this, nodes_.size() - 1);
  }

  std::vector<Node> nodes_;
};

inline Tape& Var::tape() const {
  if (!tape_) throw ContractError("use of an unbound Var");
  return *tape_;
}

inline const Tensor& Var::value() const { return tape().value(*this); }

inline bool Var::requires_grad() const { return tape().nodes_.at(id_).requires_grad; }

}  // namespace maat
