#pragma once

#include <functional>
#include <optional>
#include <vector>

#include "lsnet/ops.hpp"
#include "lsnet/tensor.hpp"

namespace lsnet {

using NodeId = int;

/// Gradients produced by Graph::backward: one tensor per node that received
/// any gradient, shaped exactly like its primal value.
class GradMap {
 public:
  bool contains(NodeId id) const {
    return id >= 0 && id < static_cast<int>(grads_.size()) && grads_[id].has_value();
  }
  const Tensor& at(NodeId id) const;

 private:
  friend class Graph;
  std::vector<std::optional<Tensor>> grads_;
};

/// Reverse-mode tape. Every operation records its output value and a
/// vector-Jacobian closure; backward() replays the closures in reverse
/// insertion order (parents always precede children) and accumulates
/// gradients. A graph can be walked backward once; a second call throws.
class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  NodeId leaf(Tensor value);

  NodeId conv2d(NodeId input, NodeId weight, std::optional<NodeId> bias, const ConvSpec& spec);
  /// Training mode mutates the caller-owned running statistics.
  NodeId batch_norm(NodeId input, NodeId gamma, NodeId beta, Tensor& running_mean,
                    Tensor& running_var, float eps, float momentum, bool training);
  NodeId relu(NodeId input);
  NodeId prelu(NodeId input, float slope);
  NodeId sigmoid(NodeId input);
  NodeId global_avg_pool(NodeId input);
  NodeId avg_pool(NodeId input, int k);
  NodeId upsample_bilinear(NodeId input, int scale);
  NodeId concat_channels(const std::vector<NodeId>& inputs);
  NodeId add(NodeId a, NodeId b);
  NodeId abs_diff(NodeId a, NodeId b);
  NodeId scale_channels(NodeId x, NodeId gate);

  const Tensor& value(NodeId id) const { return nodes_.at(id).value; }
  int size() const { return static_cast<int>(nodes_.size()); }
  bool consumed() const { return consumed_; }

  /// Seed must match the root value's shape. Consumes the graph.
  GradMap backward(NodeId root, const Tensor& seed);

 private:
  using Vjp = std::function<std::vector<Tensor>(const Tensor& grad_out)>;

  struct Node {
    Tensor value;
    std::vector<NodeId> parents;
    Vjp vjp;  // empty for leaves
  };

  NodeId push(Tensor value, std::vector<NodeId> parents, Vjp vjp);
  const Tensor& val(NodeId id) const;

  std::vector<Node> nodes_;
  bool consumed_ = false;
};

}  // namespace lsnet
