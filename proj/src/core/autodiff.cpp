#include "core/autodiff.hpp"

#include "core/error.hpp"

namespace augdiff {

const Tensor& Var::value() const { return graph_->value(id_); }

bool Var::requires_grad() const { return graph_->requires_grad(id_); }

Var Graph::constant(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, false, {}});
  return Var(this, nodes_.size() - 1);
}

Var Graph::parameter(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, true, {}});
  return Var(this, nodes_.size() - 1);
}

bool Graph::any_requires_grad(std::initializer_list<Var> inputs) {
  for (const auto& v : inputs) {
    if (v.requires_grad()) return true;
  }
  return false;
}

Var Graph::record(Tensor value, std::vector<Var> inputs, BackwardFn backward) {
  Node node;
  node.value = std::move(value);
  for (const auto& in : inputs) {
    require(&in.graph() == this, ErrorCode::InvalidArgument, "input belongs to a different graph");
    require(in.id() < nodes_.size(), ErrorCode::InvalidArgument, "input node does not precede its consumer");
    node.inputs.push_back(in.id());
    node.requires_grad = node.requires_grad || nodes_[in.id()].requires_grad;
  }
  if (node.requires_grad) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Tensor Gradients::of(Var v) const {
  if (has(v)) return grads_[v.id()];
  return Tensor(v.shape());
}

Gradients backward(const Graph& graph, Var output) {
  require(&output.graph() == &graph, ErrorCode::InvalidArgument, "output belongs to a different graph");
  const auto& out_value = graph.value(output.id());
  require(out_value.numel() == 1, ErrorCode::ShapeMismatch,
          "backward requires a scalar output, got shape " + to_string(out_value.shape()));

  Gradients result;
  result.grads_.resize(graph.size());
  if (!graph.requires_grad(output.id())) return result;
  result.grads_[output.id()] = Tensor::full(out_value.shape(), 1.0);

  std::vector<const Tensor*> inputs;
  std::vector<char> needs;
  std::vector<Tensor> input_grads;
  for (std::size_t id = output.id() + 1; id-- > 0;) {
    const auto& node = graph.nodes_[id];
    if (!node.backward || result.grads_[id].empty()) continue;
    inputs.clear();
    needs.clear();
    for (auto in : node.inputs) {
      inputs.push_back(&graph.nodes_[in].value);
      needs.push_back(graph.nodes_[in].requires_grad ? 1 : 0);
    }
    input_grads.assign(node.inputs.size(), Tensor());
    node.backward(BackwardArgs{result.grads_[id], node.value, inputs, needs, input_grads});
    for (std::size_t k = 0; k < node.inputs.size(); ++k) {
      if (!needs[k] || input_grads[k].empty()) continue;
      auto& slot = result.grads_[node.inputs[k]];
      if (slot.empty()) {
        slot = std::move(input_grads[k]);
      } else {
        slot.accumulate(input_grads[k]);
      }
    }
    // Interior gradients are not part of the result; free them eagerly.
    if (!node.inputs.empty()) result.grads_[id] = Tensor();
  }
  return result;
}

}  // namespace augdiff
