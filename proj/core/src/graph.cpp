#include "lsnet/graph.hpp"

#include <stdexcept>
#include <string>

namespace lsnet {

const Tensor& GradMap::at(NodeId id) const {
  if (!contains(id)) {
    throw std::out_of_range("GradMap: no gradient recorded for node " + std::to_string(id));
  }
  return *grads_[id];
}

NodeId Graph::push(Tensor value, std::vector<NodeId> parents, Vjp vjp) {
  for (NodeId p : parents) {
    if (p < 0 || p >= static_cast<int>(nodes_.size())) {
      throw std::out_of_range("Graph: parent node " + std::to_string(p) + " does not exist");
    }
  }
  nodes_.push_back(Node{std::move(value), std::move(parents), std::move(vjp)});
  return static_cast<NodeId>(nodes_.size() - 1);
}

const Tensor& Graph::val(NodeId id) const { return nodes_.at(id).value; }

NodeId Graph::leaf(Tensor value) { return push(std::move(value), {}, nullptr); }

NodeId Graph::conv2d(NodeId input, NodeId weight, std::optional<NodeId> bias,
                     const ConvSpec& spec) {
  const Tensor* bias_t = bias ? &val(*bias) : nullptr;
  Tensor out = lsnet::conv2d(val(input), val(weight), bias_t, spec);
  std::vector<NodeId> parents{input, weight};
  if (bias) parents.push_back(*bias);
  auto vjp = [this, input, weight, has_bias = bias.has_value(), spec](const Tensor& g) {
    ConvGrads cg = conv2d_backward(g, val(input), val(weight), has_bias, spec);
    std::vector<Tensor> grads;
    grads.push_back(std::move(cg.input));
    grads.push_back(std::move(cg.weight));
    if (has_bias) grads.push_back(std::move(*cg.bias));
    return grads;
  };
  return push(std::move(out), std::move(parents), std::move(vjp));
}

NodeId Graph::batch_norm(NodeId input, NodeId gamma, NodeId beta, Tensor& running_mean,
                         Tensor& running_var, float eps, float momentum, bool training) {
  if (training) {
    BnBatchStats stats;
    Tensor out = lsnet::batch_norm(val(input), val(gamma), val(beta), running_mean, running_var,
                                   eps, momentum, true, &stats);
    auto vjp = [this, input, gamma, stats = std::move(stats), eps](const Tensor& g) {
      BnGrads bg = batch_norm_backward(g, val(input), val(gamma), stats, eps);
      return std::vector<Tensor>{std::move(bg.input), std::move(bg.gamma), std::move(bg.beta)};
    };
    return push(std::move(out), {input, gamma, beta}, std::move(vjp));
  }
  // Eval mode: running statistics are constants; capture them as of now.
  Tensor out = lsnet::batch_norm(val(input), val(gamma), val(beta), running_mean, running_var,
                                 eps, momentum, false, nullptr);
  auto vjp = [this, input, gamma, mean = running_mean, var = running_var,
              eps](const Tensor& g) {
    BnGrads bg = batch_norm_backward_eval(g, val(input), val(gamma), mean, var, eps);
    return std::vector<Tensor>{std::move(bg.input), std::move(bg.gamma), std::move(bg.beta)};
  };
  return push(std::move(out), {input, gamma, beta}, std::move(vjp));
}

NodeId Graph::relu(NodeId input) {
  Tensor out = lsnet::relu(val(input));
  auto vjp = [this, input](const Tensor& g) {
    return std::vector<Tensor>{relu_backward(g, val(input))};
  };
  return push(std::move(out), {input}, std::move(vjp));
}

NodeId Graph::prelu(NodeId input, float slope) {
  Tensor out = lsnet::prelu(val(input), slope);
  auto vjp = [this, input, slope](const Tensor& g) {
    return std::vector<Tensor>{prelu_backward(g, val(input), slope)};
  };
  return push(std::move(out), {input}, std::move(vjp));
}

NodeId Graph::sigmoid(NodeId input) {
  Tensor out = lsnet::sigmoid(val(input));
  NodeId id = push(std::move(out), {input}, nullptr);
  // The vjp reads this node's own output value.
  nodes_[id].vjp = [this, id](const Tensor& g) {
    return std::vector<Tensor>{sigmoid_backward(g, val(id))};
  };
  return id;
}

NodeId Graph::global_avg_pool(NodeId input) {
  Tensor out = lsnet::global_avg_pool(val(input));
  auto vjp = [shape = val(input).shape()](const Tensor& g) {
    return std::vector<Tensor>{global_avg_pool_backward(g, shape)};
  };
  return push(std::move(out), {input}, std::move(vjp));
}

NodeId Graph::avg_pool(NodeId input, int k) {
  Tensor out = lsnet::avg_pool(val(input), k);
  auto vjp = [shape = val(input).shape(), k](const Tensor& g) {
    return std::vector<Tensor>{avg_pool_backward(g, shape, k)};
  };
  return push(std::move(out), {input}, std::move(vjp));
}

NodeId Graph::upsample_bilinear(NodeId input, int scale) {
  Tensor out = lsnet::upsample_bilinear(val(input), scale);
  auto vjp = [shape = val(input).shape(), scale](const Tensor& g) {
    return std::vector<Tensor>{upsample_bilinear_backward(g, shape, scale)};
  };
  return push(std::move(out), {input}, std::move(vjp));
}

NodeId Graph::concat_channels(const std::vector<NodeId>& inputs) {
  std::vector<const Tensor*> tensors;
  std::vector<TensorShape> shapes;
  tensors.reserve(inputs.size());
  for (NodeId id : inputs) {
    tensors.push_back(&val(id));
    shapes.push_back(val(id).shape());
  }
  Tensor out = lsnet::concat_channels(tensors);
  auto vjp = [shapes = std::move(shapes)](const Tensor& g) {
    return concat_channels_backward(g, shapes);
  };
  return push(std::move(out), inputs, std::move(vjp));
}

NodeId Graph::add(NodeId a, NodeId b) {
  Tensor out = lsnet::add(val(a), val(b));
  auto vjp = [](const Tensor& g) { return std::vector<Tensor>{g, g}; };
  return push(std::move(out), {a, b}, std::move(vjp));
}

NodeId Graph::abs_diff(NodeId a, NodeId b) {
  Tensor out = lsnet::abs_diff(val(a), val(b));
  auto vjp = [this, a, b](const Tensor& g) {
    auto [ga, gb] = abs_diff_backward(g, val(a), val(b));
    return std::vector<Tensor>{std::move(ga), std::move(gb)};
  };
  return push(std::move(out), {a, b}, std::move(vjp));
}

NodeId Graph::scale_channels(NodeId x, NodeId gate) {
  Tensor out = lsnet::scale_channels(val(x), val(gate));
  auto vjp = [this, x, gate](const Tensor& g) {
    auto [gx, gg] = scale_channels_backward(g, val(x), val(gate));
    return std::vector<Tensor>{std::move(gx), std::move(gg)};
  };
  return push(std::move(out), {x, gate}, std::move(vjp));
}

GradMap Graph::backward(NodeId root, const Tensor& seed) {
  if (consumed_) {
    throw std::logic_error("Graph::backward: graph already consumed");
  }
  if (root < 0 || root >= static_cast<int>(nodes_.size())) {
    throw std::out_of_range("Graph::backward: unknown root node " + std::to_string(root));
  }
  if (seed.shape() != nodes_[root].value.shape()) {
    throw ShapeError("Graph::backward: seed shape " + seed.shape().str() +
                     " does not match root value " + nodes_[root].value.shape().str());
  }
  consumed_ = true;

  GradMap out;
  out.grads_.resize(nodes_.size());
  out.grads_[root] = seed;

  // Node ids are a topological order by construction, so a reverse sweep
  // visits every consumer before its producers.
  for (NodeId id = root; id >= 0; --id) {
    if (!out.grads_[id].has_value()) continue;
    Node& node = nodes_[id];
    if (!node.vjp) continue;  // leaf
    std::vector<Tensor> parent_grads = node.vjp(*out.grads_[id]);
    if (parent_grads.size() != node.parents.size()) {
      throw std::logic_error("Graph::backward: vjp arity mismatch");
    }
    for (std::size_t i = 0; i < node.parents.size(); ++i) {
      const NodeId p = node.parents[i];
      if (out.grads_[p].has_value()) {
        out.grads_[p] = lsnet::add(*out.grads_[p], parent_grads[i]);
      } else {
        out.grads_[p] = std::move(parent_grads[i]);
      }
    }
    // Interior gradients are only needed to feed parents.
    out.grads_[id].reset();
  }
  return out;
}

}  // namespace lsnet
