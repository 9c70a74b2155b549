#pragma once

// Reverse-mode tape. Every operator appends a node holding its value and a
// closure that propagates the node's gradient into its inputs. Nodes are
// processed in reverse creation order, which is a valid topological order.

#include <accear/autodiff/tensor.hpp>

#include <functional>
#include <limits>
#include <vector>

namespace accear::ad {

template <class T>
class Graph;

template <class T>
struct Var {
  Graph<T>* graph = nullptr;
  std::size_t id = std::numeric_limits<std::size_t>::max();

  bool valid() const { return graph != nullptr; }
  const Tensor<T>& value() const { return graph->value(*this); }
  const Shape& shape() const { return graph->value(*this).shape; }
  bool requires_grad() const { return graph->requires_grad(*this); }
};

template <class T>
class Graph {
 public:
  using Backward = std::function<void(Graph&, std::size_t)>;

  Var<T> constant(Tensor<T> v) { return push(std::move(v), false, nullptr, nullptr); }

  /// Leaf that needs a gradient without being a parameter (gradient checks).
  Var<T> leaf(Tensor<T> v) { return push(std::move(v), true, nullptr, nullptr); }

  /// When `trainable` is false the parameter enters as a constant and its
  /// gradient buffer is never touched.
  Var<T> parameter(Parameter<T>& p, bool trainable = true) {
    return push(p.value, trainable, nullptr, trainable ? &p : nullptr);
  }

  Var<T> emit(Tensor<T> value, bool requires_grad, Backward backward) {
    return push(std::move(value), requires_grad, requires_grad ? std::move(backward) : nullptr, nullptr);
  }

  const Tensor<T>& value(Var<T> v) const { return nodes_.at(v.id).value; }
  bool requires_grad(Var<T> v) const { return nodes_.at(v.id).requires_grad; }
  std::size_t size() const { return nodes_.size(); }

  const Tensor<T>& value(std::size_t id) const { return nodes_[id].value; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }

  /// Gradient buffer for node `id`, allocated on first use.
  Tensor<T>& grad(std::size_t id) {
    auto& node = nodes_[id];
    if (node.grad.shape != node.value.shape || node.grad.data.size() != node.value.data.size()) {
      node.grad = Tensor<T>(node.value.shape);
    }
    return node.grad;
  }
  Tensor<T>& grad(Var<T> v) { return grad(v.id); }

  /// Seeds d(root)/d(root) = 1 for a scalar root, runs the tape backwards and
  /// adds the resulting gradients into the trainable parameters.
  void backward(Var<T> root) {
    if (value(root).numel() != 1) throw ShapeError("backward needs a scalar root, got " + value(root).shape.str());
    if (!requires_grad(root)) return;
    grad(root.id).data[0] = T(1);
    for (std::size_t id = root.id + 1; id-- > 0;) {
      auto& node = nodes_[id];
      if (!node.requires_grad || node.grad.data.empty()) continue;
      if (node.backward) node.backward(*this, id);
      if (node.param != nullptr) {
        auto& pg = node.param->grad;
        if (pg.shape != node.value.shape) pg = Tensor<T>(node.value.shape);
        for (std::size_t i = 0; i < pg.data.size(); ++i) pg.data[i] += node.grad.data[i];
      }
    }
  }

 private:
  struct Node {
    Tensor<T> value;
    Tensor<T> grad;
    bool requires_grad = false;
    Backward backward;
    Parameter<T>* param = nullptr;
  };

  Var<T> push(Tensor<T> v, bool requires_grad, Backward backward, Parameter<T>* param) {
    nodes_.push_back(Node{std::move(v), {}, requires_grad, std::move(backward), param});
    return Var<T>{this, nodes_.size() - 1};
  }

  std::vector<Node> nodes_;
};

}  // namespace accear::ad
