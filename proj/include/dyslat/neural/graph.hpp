// SPDX-License-Identifier: Apache-2.0
/**
 * @file   graph.hpp
 * @brief  Tape-based reverse-mode automatic differentiation.
 *
 * A Graph records every operation applied to its Vars. Calling backward() on
 * a scalar Var walks the tape in reverse and runs each node's backward
 * closure, which adds into the gradients of its parents. Gradients are only
 * tracked for nodes that depend on a variable or a parameter leaf.
 *
 * A Graph is single-threaded; build one graph per worker.
 */
#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <dyslat/error.hpp>
#include <dyslat/neural/params.hpp>
#include <dyslat/neural/tensor.hpp>

namespace dyslat::nn {

enum class Mode { train, eval };

class Graph;

class Var {
public:
  Var() = default;
  Var(Graph *graph, std::size_t id) : graph_(graph), id_(id) {}

  const Tensor &value() const;
  const Shape &shape() const { return value().shape(); }
  std::size_t id() const noexcept { return id_; }
  Graph &graph() const { return *graph_; }
  bool valid() const noexcept { return graph_ != nullptr; }

private:
  Graph *graph_ = nullptr;
  std::size_t id_ = 0;
};

class Graph {
public:
  using Backward = std::function<void(Graph &, const Tensor &)>;

  /// With tracking disabled, parameter leaves carry no gradient and no
  /// backward closures are stored (inference).
  explicit Graph(bool track_gradients = true) : tracking_(track_gradients) {}
  Graph(const Graph &) = delete;
  Graph &operator=(const Graph &) = delete;

  Var constant(Tensor value) { return push(std::move(value), false, {}); }

  /// Leaf that receives a gradient (used for inputs under test).
  Var variable(Tensor value) { return push(std::move(value), true, {}); }

  /// Leaf bound to a named entry of a ParamStore. Repeated requests for the
  /// same name return the same Var so gradients accumulate in one place.
  Var parameter(const ParamStore &store, const std::string &name) {
    if (auto it = params_.find(name); it != params_.end())
      return Var(this, it->second);
    Var v = push(store.value(name), tracking_, {});
    params_.emplace(name, v.id());
    return v;
  }

  /// Records an op result. The backward closure is kept only when some parent
  /// needs a gradient.
  Var record(Tensor value, std::initializer_list<Var> parents, Backward fn) {
    bool needs = false;
    for (const Var &p : parents)
      needs = needs || requires_grad(p);
    return push(std::move(value), needs, needs ? std::move(fn) : Backward{});
  }

  Var record(Tensor value, const std::vector<Var> &parents, Backward fn) {
    bool needs = false;
    for (const Var &p : parents)
      needs = needs || requires_grad(p);
    return push(std::move(value), needs, needs ? std::move(fn) : Backward{});
  }

  const Tensor &value(Var v) const { return nodes_.at(v.id()).value; }
  const Tensor &value(std::size_t id) const { return nodes_.at(id).value; }

  bool requires_grad(Var v) const { return nodes_.at(v.id()).requires_grad; }
  bool requires_grad(std::size_t id) const {
    return nodes_.at(id).requires_grad;
  }

  /// Gradient buffer of a node, allocated as zeros on first use.
  Tensor &grad(std::size_t id) {
    Node &n = nodes_.at(id);
    if (n.grad.shape() != n.value.shape())
      n.grad = Tensor::zeros_like(n.value);
    return n.grad;
  }
  Tensor &grad(Var v) { return grad(v.id()); }

  bool has_grad(Var v) const {
    const Node &n = nodes_.at(v.id());
    return n.grad.shape() == n.value.shape() && !n.value.shape().empty();
  }

  /// Runs reverse accumulation from a scalar root with seed d(root) = 1.
  void backward(Var root) {
    require(value(root).size() == 1, ErrorCode::ShapeMismatch,
            "backward() needs a scalar root, got " +
              shape_str(value(root).shape()));
    backward(root, Tensor(value(root).shape(), 1.0));
  }

  void backward(Var root, const Tensor &seed) {
    require(seed.shape() == value(root).shape(), ErrorCode::ShapeMismatch,
            "backward seed shape mismatch");
    if (!requires_grad(root))
      return;
    grad(root) += seed;
    for (std::size_t i = root.id() + 1; i-- > 0;) {
      Node &n = nodes_[i];
      if (!n.requires_grad || !n.backward ||
          n.grad.shape() != n.value.shape())
        continue;
      n.backward(*this, n.grad);
    }
  }

  /// Adds gradients of parameter leaves into the store's gradient buffers.
  void accumulate_parameter_grads(ParamStore &store) {
    for (const auto &[name, id] : params_) {
      Node &n = nodes_[id];
      if (n.grad.shape() == n.value.shape())
        store.grad(name) += n.grad;
    }
  }

  std::size_t size() const noexcept { return nodes_.size(); }
  bool tracking() const noexcept { return tracking_; }

private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    Backward backward;
  };

  Var push(Tensor value, bool needs_grad, Backward fn) {
    nodes_.push_back(Node{std::move(value), Tensor(), needs_grad, std::move(fn)});
    return Var(this, nodes_.size() - 1);
  }

  std::deque<Node> nodes_;
  std::map<std::string, std::size_t> params_;
  bool tracking_ = true;
};

inline const Tensor &Var::value() const { return graph_->value(*this); }

} // namespace dyslat::nn
