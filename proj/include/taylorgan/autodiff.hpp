// SPDX-License-Identifier: Apache-2.0
/**
 * @file   autodiff.hpp
 * @brief  Define-by-run reverse-mode differentiation tape.
 *
 * A Graph records operations in insertion order, which is also a valid
 * topological order. Every recorded value is checked for NaN/Inf. Parameters
 * live outside the graph; a graph holds one leaf per Parameter it touches so
 * repeated uses accumulate into a single gradient.
 */
#pragma once

#include <functional>
#include <map>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "taylorgan/tensor.hpp"

namespace taylorgan {

using NodeId = std::size_t;

struct Parameter {
  std::string name;
  Tensor value;
};

class Graph;

/// Handle to a node of a Graph. Cheap to copy; valid while the graph lives.
class Var {
public:
  Var() = default;
  Var(Graph *graph, NodeId id) : graph_(graph), id_(id) {}

  Graph &graph() const { return *graph_; }
  NodeId id() const { return id_; }
  const Tensor &value() const;
  const Shape &shape() const { return value().shape(); }
  bool valid() const { return graph_ != nullptr; }

private:
  Graph *graph_ = nullptr;
  NodeId id_ = 0;
};

/// Gradients produced by Graph::backward.
class GradientMap {
public:
  bool has(const Parameter &p) const { return params_.count(&p) > 0; }
  /// Gradient for a parameter; zeros of the parameter's shape when unused.
  Tensor param(const Parameter &p) const;
  const Tensor &tap(Var v) const;

  std::unordered_map<const Parameter *, Tensor> &params() { return params_; }
  std::map<NodeId, Tensor> &taps() { return taps_; }

private:
  std::unordered_map<const Parameter *, Tensor> params_;
  std::map<NodeId, Tensor> taps_;
};

enum class GradMode { kEnabled, kDisabled };

class Graph {
public:
  /// Adjoint rule of one node. `grad_in[k]` is null when input k does not
  /// need a gradient; otherwise the rule accumulates into it.
  struct BackwardContext {
    const Tensor &out;
    const Tensor &grad;
    std::span<const Tensor *const> in;
    std::span<Tensor *> grad_in;
  };
  using BackwardFn = std::function<void(const BackwardContext &)>;

  explicit Graph(GradMode mode = GradMode::kEnabled) : mode_(mode) {}
  Graph(const Graph &) = delete;
  Graph &operator=(const Graph &) = delete;

  Var constant(Tensor value);
  /// A differentiable input that is not a Parameter (a tap target).
  Var leaf(Tensor value);
  Var param(Parameter &p);

  Var record(std::string op, Tensor value, std::vector<Var> inputs,
             BackwardFn backward);

  const Tensor &value(NodeId id) const { return nodes_.at(id).value; }
  const std::string &op_name(NodeId id) const { return nodes_.at(id).op; }
  bool requires_grad(NodeId id) const { return nodes_.at(id).requires_grad; }
  std::size_t size() const { return nodes_.size(); }
  bool grad_enabled() const { return mode_ == GradMode::kEnabled; }

  /// Reverse sweep from a 0-dimensional output. Fills gradients for every
  /// Parameter reached and for each requested tap.
  GradientMap backward(Var output, std::span<const Var> taps = {});

private:
  struct Node {
    std::string op;
    Tensor value;
    std::vector<NodeId> inputs;
    BackwardFn backward;
    bool requires_grad = false;
    Parameter *parameter = nullptr;
  };

  GradMode mode_;
  std::vector<Node> nodes_;
  std::unordered_map<const Parameter *, NodeId> param_nodes_;
};

inline const Tensor &Var::value() const { return graph_->value(id_); }

} // namespace taylorgan
