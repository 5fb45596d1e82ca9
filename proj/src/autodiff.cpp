// SPDX-License-Identifier: Apache-2.0
#include "taylorgan/autodiff.hpp"

#include <optional>

namespace taylorgan {

Tensor GradientMap::param(const Parameter &p) const {
  auto it = params_.find(&p);
  if (it == params_.end())
    return Tensor(p.value.shape());
  return it->second;
}

const Tensor &GradientMap::tap(Var v) const {
  auto it = taps_.find(v.id());
  if (it == taps_.end())
    throw std::out_of_range("no gradient recorded for tap node " +
                            std::to_string(v.id()));
  return it->second;
}

Var Graph::constant(Tensor value) {
  if (!value.all_finite())
    throw NumericError("non-finite constant");
  nodes_.push_back(Node{"constant", std::move(value), {}, {}, false, nullptr});
  return Var(this, nodes_.size() - 1);
}

Var Graph::leaf(Tensor value) {
  if (!value.all_finite())
    throw NumericError("non-finite leaf");
  nodes_.push_back(
      Node{"leaf", std::move(value), {}, {}, grad_enabled(), nullptr});
  return Var(this, nodes_.size() - 1);
}

Var Graph::param(Parameter &p) {
  auto it = param_nodes_.find(&p);
  if (it != param_nodes_.end())
    return Var(this, it->second);
  if (!p.value.all_finite())
    throw NumericError("non-finite parameter '" + p.name + "'");
  nodes_.push_back(Node{"param:" + p.name, p.value, {}, {}, grad_enabled(), &p});
  param_nodes_[&p] = nodes_.size() - 1;
  return Var(this, nodes_.size() - 1);
}

Var Graph::record(std::string op, Tensor value, std::vector<Var> inputs,
                  BackwardFn backward) {
  if (!value.all_finite())
    throw NumericError("non-finite value produced by '" + op + "'");
  Node node;
  node.op = std::move(op);
  node.value = std::move(value);
  for (const Var &in : inputs) {
    if (&in.graph() != this)
      throw std::invalid_argument("input of '" + node.op +
                                  "' belongs to another graph");
    node.inputs.push_back(in.id());
    node.requires_grad = node.requires_grad || nodes_[in.id()].requires_grad;
  }
  node.requires_grad = node.requires_grad && grad_enabled() && backward;
  if (node.requires_grad)
    node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

GradientMap Graph::backward(Var output, std::span<const Var> taps) {
  if (&output.graph() != this)
    throw std::invalid_argument("backward output belongs to another graph");
  if (output.value().rank() != 0)
    throw ShapeError("backward needs a 0-dimensional output, got " +
                     shape_to_string(output.shape()));
  for (const Var &t : taps)
    if (&t.graph() != this || t.id() >= nodes_.size())
      throw std::out_of_range("tap node is not part of this graph");

  std::vector<std::optional<Tensor>> adj(nodes_.size());
  adj[output.id()] = Tensor::scalar(1.0);

  std::vector<Tensor *> slots;
  std::vector<const Tensor *> in_values;
  for (std::size_t i = output.id() + 1; i-- > 0;) {
    Node &node = nodes_[i];
    if (!adj[i] || !node.requires_grad || !node.backward)
      continue;
    slots.assign(node.inputs.size(), nullptr);
    in_values.assign(node.inputs.size(), nullptr);
    for (std::size_t k = 0; k < node.inputs.size(); ++k) {
      NodeId in = node.inputs[k];
      in_values[k] = &nodes_[in].value;
      if (!nodes_[in].requires_grad)
        continue;
      if (!adj[in])
        adj[in].emplace(nodes_[in].value.shape());
      slots[k] = &*adj[in];
    }
    node.backward(BackwardContext{node.value, *adj[i], in_values, slots});
  }

  GradientMap grads;
  for (const Var &t : taps) {
    const auto &a = adj[t.id()];
    grads.taps()[t.id()] = a ? *a : Tensor(nodes_[t.id()].value.shape());
  }
  for (auto &[param, id] : param_nodes_)
    grads.params()[param] = adj[id] ? std::move(*adj[id])
                                    : Tensor(nodes_[id].value.shape());
  return grads;
}

} // namespace taylorgan
