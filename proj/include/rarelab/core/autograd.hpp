#pragma once

#include <functional>
#include <memory>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "rarelab/core/tensor.hpp"

namespace rarelab::core {

template <typename Real>
struct Node {
  Tensor<Real> value;  // value.grad() holds the adjoint
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backprop;
  bool requires_grad = false;
  bool leaf = true;
};

/// Handle to a value in a recorded computation. Copies alias the same node.
template <typename Real>
class Var {
 public:
  using NodePtr = std::shared_ptr<Node<Real>>;

  Var() = default;
  explicit Var(NodePtr node) : node_(std::move(node)) {}

  /// A graph input. Gradients accumulate into it when `requires_grad`.
  static Var leaf(Tensor<Real> value, bool requires_grad = false) {
    auto node = std::make_shared<Node<Real>>();
    node->value = std::move(value);
    node->requires_grad = requires_grad;
    return Var(std::move(node));
  }

  static Var constant(Tensor<Real> value) { return leaf(std::move(value)); }

  bool defined() const { return static_cast<bool>(node_); }
  const Tensor<Real>& value() const { return node_->value; }
  Tensor<Real>& mutable_value() { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  std::size_t rows() const { return node_->value.rows(); }
  std::size_t cols() const { return node_->value.cols(); }
  std::size_t numel() const { return node_->value.numel(); }
  bool requires_grad() const { return node_->requires_grad; }
  Real item() const { return node_->value.item(); }

  NodePtr& node() { return node_; }
  const NodePtr& node() const { return node_; }

 private:
  NodePtr node_;
};

/// Records an operation. Inputs and the backward closure are kept only when
/// some input requires a gradient, so inference builds no graph.
template <typename Real, typename Backprop>
Var<Real> make_op(Tensor<Real> value, std::vector<Var<Real>> inputs,
                  Backprop&& backprop) {
  auto node = std::make_shared<Node<Real>>();
  node->value = std::move(value);
  node->leaf = false;
  for (const auto& in : inputs) {
    if (in.requires_grad()) {
      node->requires_grad = true;
      break;
    }
  }
  if (node->requires_grad) {
    node->inputs.reserve(inputs.size());
    for (auto& in : inputs) node->inputs.push_back(in.node());
    node->backprop = std::forward<Backprop>(backprop);
  }
  return Var<Real>(std::move(node));
}

/// Gradient accumulator for input `k` of `self`, or an empty span when that
/// input does not take gradients.
template <typename Real>
std::span<Real> input_grad(Node<Real>& self, std::size_t k) {
  auto& in = *self.inputs[k];
  if (!in.requires_grad) return {};
  in.value.ensure_grad();
  return in.value.grad();
}

/// Reverse-mode sweep from a scalar loss. Leaves that require gradients
/// accumulate into their slots; intermediate adjoints are reset first.
template <typename Real>
void backward(const Var<Real>& loss) {
  if (loss.numel() != 1) {
    throw DomainError("backward needs a scalar loss, got shape " +
                      shape_string(loss.shape()));
  }
  if (!loss.requires_grad()) return;

  std::vector<Node<Real>*> order;
  std::unordered_set<Node<Real>*> seen;
  std::vector<std::pair<Node<Real>*, std::size_t>> stack;
  stack.emplace_back(loss.node().get(), 0);
  seen.insert(loss.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      Node<Real>* child = node->inputs[next++].get();
      if (child->requires_grad && seen.insert(child).second) {
        stack.emplace_back(child, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  for (Node<Real>* node : order) {
    if (!node->leaf) {
      node->value.ensure_grad();
      node->value.zero_grad();
    }
  }
  loss.node()->value.ensure_grad();
  loss.node()->value.grad()[0] += Real{1};
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<Real>* node = *it;
    if (!node->leaf && node->backprop) node->backprop(*node);
  }
}

/// Named trainable tensor. Copying a parameter copies its storage.
template <typename Real>
class Parameter {
 public:
  Parameter() = default;
  Parameter(std::string name, Tensor<Real> value, bool frozen = false)
      : name_(std::move(name)),
        var_(Var<Real>::leaf(std::move(value), !frozen)),
        frozen_(frozen) {}

  Parameter(const Parameter& other)
      : name_(other.name_), frozen_(other.frozen_) {
    if (other.var_.defined()) {
      Tensor<Real> copy(other.value().shape(), other.value().values());
      var_ = Var<Real>::leaf(std::move(copy), !frozen_);
    }
  }
  Parameter& operator=(const Parameter& other) {
    if (this != &other) {
      Parameter tmp(other);
      *this = std::move(tmp);
    }
    return *this;
  }
  Parameter(Parameter&&) noexcept = default;
  Parameter& operator=(Parameter&&) noexcept = default;

  const std::string& name() const { return name_; }
  const Var<Real>& var() const { return var_; }
  const Tensor<Real>& value() const { return var_.value(); }
  Tensor<Real>& mutable_value() { return var_.node()->value; }

  bool frozen() const { return frozen_; }
  void set_frozen(bool frozen) {
    frozen_ = frozen;
    var_.node()->requires_grad = !frozen;
    if (frozen) var_.node()->value.clear_grad();
  }

  bool has_grad() const { return value().has_grad(); }
  std::span<const Real> grad() const { return value().grad(); }
  void zero_grad() { var_.node()->value.zero_grad(); }

 private:
  std::string name_;
  Var<Real> var_;
  bool frozen_ = false;
};

template <typename Real>
using ParameterList = std::vector<Parameter<Real>*>;

template <typename Real>
void set_frozen(const ParameterList<Real>& params, bool frozen) {
  for (auto* p : params) p->set_frozen(frozen);
}

template <typename Real>
void zero_grads(const ParameterList<Real>& params) {
  for (auto* p : params) p->zero_grad();
}

/// Copies values between parameter lists of matching layout, converting the
/// scalar type if needed.
template <typename To, typename From>
void copy_parameters(const std::vector<const Parameter<From>*>& src,
                     const ParameterList<To>& dst) {
  if (src.size() != dst.size()) {
    throw DimensionError("parameter lists differ in length");
  }
  for (std::size_t i = 0; i < src.size(); ++i) {
    const auto& from = src[i]->value();
    auto& to = dst[i]->mutable_value();
    if (from.shape() != to.shape()) {
      throw DimensionError("parameter " + src[i]->name() + " has shape " +
                           shape_string(from.shape()) + ", target " +
                           shape_string(to.shape()));
    }
    std::copy(from.values().begin(), from.values().end(), to.values().begin());
    dst[i]->set_frozen(src[i]->frozen());
  }
}

}  // namespace rarelab::core
