#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "core/tensor.hpp"

namespace augdiff {

class Graph;
class Gradients;

/// Handle to a node of a Graph. Cheap to copy; valid while the graph lives.
class Var {
 public:
  Var() = default;
  Var(Graph* graph, std::size_t id) : graph_(graph), id_(id) {}

  Graph& graph() const { return *graph_; }
  std::size_t id() const noexcept { return id_; }
  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  bool requires_grad() const;

 private:
  Graph* graph_ = nullptr;
  std::size_t id_ = 0;
};

/// Everything an operation's backward rule may look at.
struct BackwardArgs {
  const Tensor& grad;                       // d(output scalar)/d(this node)
  const Tensor& output;                     // this node's forward value
  std::span<const Tensor* const> inputs;    // forward values of the inputs
  std::span<const char> needs;              // needs[i]: input i wants a gradient
  std::span<Tensor> input_grads;            // fill input_grads[i] when needs[i]
};

/// Reverse-mode tape. Nodes are appended in construction order, so every
/// node's inputs precede it and the tape is a topological order.
class Graph {
 public:
  using BackwardFn = std::function<void(const BackwardArgs&)>;

  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  /// Leaf that never receives a gradient (data, frozen weights).
  Var constant(Tensor value);
  /// Leaf that receives a gradient.
  Var parameter(Tensor value);

  /// Appends an interior node. `backward` is dropped when no input requires
  /// a gradient, so inference-only graphs hold no saved state.
  Var record(Tensor value, std::vector<Var> inputs, BackwardFn backward);

  /// True when at least one input requires a gradient; ops use this to skip
  /// saving backward state.
  static bool any_requires_grad(std::initializer_list<Var> inputs);

  const Tensor& value(std::size_t id) const { return nodes_.at(id).value; }
  bool requires_grad(std::size_t id) const { return nodes_.at(id).requires_grad; }
  std::size_t size() const noexcept { return nodes_.size(); }

 private:
  friend class Gradients;
  friend Gradients backward(const Graph& graph, Var output);

  struct Node {
    Tensor value;
    std::vector<std::size_t> inputs;
    bool requires_grad = false;
    BackwardFn backward;
  };
  std::vector<Node> nodes_;
};

/// Result of a backward pass. Only leaf gradients are retained.
class Gradients {
 public:
  bool has(Var v) const { return v.id() < grads_.size() && !grads_[v.id()].empty(); }
  /// Gradient w.r.t. leaf `v`; zeros when the output does not depend on it.
  Tensor of(Var v) const;

 private:
  friend Gradients backward(const Graph& graph, Var output);
  std::vector<Tensor> grads_;
};

/// Gradients of a one-element `output` w.r.t. every node that requires one.
/// Nodes are visited once each in reverse construction order, and
/// contributions are summed in that order, so results are deterministic.
Gradients backward(const Graph& graph, Var output);

}  // namespace augdiff
