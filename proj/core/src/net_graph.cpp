#include "lsnet/net_graph.hpp"

#include <algorithm>
#include <stdexcept>

namespace lsnet {

int ParamStore::add_param(std::string name, Tensor t) {
  if (find_param(name) >= 0) {
    throw ValueError("ParamStore: duplicate parameter name '" + name + "'");
  }
  params.push_back(Entry{std::move(name), std::move(t)});
  return static_cast<int>(params.size() - 1);
}

int ParamStore::add_buffer(std::string name, Tensor t) {
  if (find_buffer(name) >= 0) {
    throw ValueError("ParamStore: duplicate buffer name '" + name + "'");
  }
  buffers.push_back(Entry{std::move(name), std::move(t)});
  return static_cast<int>(buffers.size() - 1);
}

int ParamStore::find_param(const std::string& name) const {
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].name == name) return static_cast<int>(i);
  }
  return -1;
}

int ParamStore::find_buffer(const std::string& name) const {
  for (std::size_t i = 0; i < buffers.size(); ++i) {
    if (buffers[i].name == name) return static_cast<int>(i);
  }
  return -1;
}

std::size_t ParamStore::param_count() const {
  std::size_t total = 0;
  for (const auto& e : params) total += e.tensor.numel();
  return total;
}

const char* layer_kind_name(LayerKind kind) {
  switch (kind) {
    case LayerKind::Input: return "input";
    case LayerKind::Conv: return "conv";
    case LayerKind::BatchNorm: return "batch_norm";
    case LayerKind::Relu: return "relu";
    case LayerKind::PRelu: return "prelu";
    case LayerKind::Sigmoid: return "sigmoid";
    case LayerKind::GlobalAvgPool: return "global_avg_pool";
    case LayerKind::AvgPool: return "avg_pool";
    case LayerKind::MaxPool: return "max_pool";
    case LayerKind::Upsample: return "upsample";
    case LayerKind::Concat: return "concat";
    case LayerKind::Add: return "add";
    case LayerKind::AbsDiff: return "abs_diff";
    case LayerKind::ScaleChannels: return "scale_channels";
  }
  return "?";
}

int NetGraph::add(LayerNode node) {
  for (int in : node.inputs) {
    if (in < 0 || in >= static_cast<int>(nodes.size())) {
      throw std::out_of_range("NetGraph: node '" + node.name + "' references missing input " +
                              std::to_string(in));
    }
  }
  if (node.kind == LayerKind::Input) {
    node.input_index = static_cast<int>(inputs.size());
    inputs.push_back(static_cast<int>(nodes.size()));
  }
  nodes.push_back(std::move(node));
  return static_cast<int>(nodes.size() - 1);
}

int NetGraph::tap_id(const std::string& name) const {
  auto it = taps.find(name);
  if (it == taps.end()) {
    throw std::out_of_range("NetGraph: no tap named '" + name + "'");
  }
  return it->second;
}

namespace {

TensorShape param_shape(const ParamStore& store, int id, const std::string& node) {
  if (id < 0 || id >= static_cast<int>(store.params.size())) {
    throw std::out_of_range("NetGraph: node '" + node + "' references missing param " +
                            std::to_string(id));
  }
  return store.params[id].tensor.shape();
}

}  // namespace

std::vector<TensorShape> infer_shapes(const NetGraph& net, const ParamStore& store,
                                      const std::vector<TensorShape>& input_shapes) {
  if (input_shapes.size() != net.inputs.size()) {
    throw ShapeError("infer_shapes: got " + std::to_string(input_shapes.size()) +
                     " input shapes, graph has " + std::to_string(net.inputs.size()) +
                     " inputs");
  }
  std::vector<TensorShape> shapes(net.nodes.size());
  for (std::size_t id = 0; id < net.nodes.size(); ++id) {
    const LayerNode& node = net.nodes[id];
    auto in = [&](std::size_t i) -> const TensorShape& { return shapes[node.inputs[i]]; };
    switch (node.kind) {
      case LayerKind::Input:
        shapes[id] = input_shapes[node.input_index];
        break;
      case LayerKind::Conv: {
        const TensorShape& x = in(0);
        if (x.c != node.conv.in_channels) {
          throw ShapeError("node '" + node.name + "': input has " + std::to_string(x.c) +
                           " channels, conv expects " + std::to_string(node.conv.in_channels));
        }
        const TensorShape w = param_shape(store, node.weight, node.name);
        if (w != node.conv.weight_shape()) {
          throw ShapeError("node '" + node.name + "': weight shape " + w.str() +
                           " does not match spec " + node.conv.weight_shape().str());
        }
        const int ho = node.conv.out_h(x.h);
        const int wo = node.conv.out_w(x.w);
        if (ho < 1 || wo < 1) {
          throw ShapeError("node '" + node.name + "': non-positive output size for input " +
                           x.str());
        }
        shapes[id] = TensorShape{x.n, node.conv.out_channels, ho, wo};
        break;
      }
      case LayerKind::BatchNorm:
      case LayerKind::Relu:
      case LayerKind::PRelu:
      case LayerKind::Sigmoid:
        shapes[id] = in(0);
        break;
      case LayerKind::GlobalAvgPool:
        shapes[id] = TensorShape{in(0).n, in(0).c, 1, 1};
        break;
      case LayerKind::AvgPool: {
        const TensorShape& x = in(0);
        if (x.h % node.pool != 0 || x.w % node.pool != 0) {
          throw ShapeError("node '" + node.name + "': avg_pool extent " + x.str() +
                           " not divisible by " + std::to_string(node.pool));
        }
        shapes[id] = TensorShape{x.n, x.c, x.h / node.pool, x.w / node.pool};
        break;
      }
      case LayerKind::MaxPool: {
        const TensorShape& x = in(0);
        const int ho = (x.h + 2 * node.pool_pad - node.pool) / node.pool_stride + 1;
        const int wo = (x.w + 2 * node.pool_pad - node.pool) / node.pool_stride + 1;
        shapes[id] = TensorShape{x.n, x.c, ho, wo};
        break;
      }
      case LayerKind::Upsample:
        shapes[id] = TensorShape{in(0).n, in(0).c, in(0).h * node.scale, in(0).w * node.scale};
        break;
      case LayerKind::Concat: {
        TensorShape s = in(0);
        for (std::size_t i = 1; i < node.inputs.size(); ++i) {
          const TensorShape& t = in(i);
          if (t.n != s.n || t.h != s.h || t.w != s.w) {
            throw ShapeError("node '" + node.name + "': concat input " + t.str() +
                             " does not match " + s.str() + " on (n, h, w)");
          }
          s.c += t.c;
        }
        shapes[id] = s;
        break;
      }
      case LayerKind::Add:
      case LayerKind::AbsDiff:
        if (in(0) != in(1)) {
          throw ShapeError("node '" + node.name + "': operand shapes " + in(0).str() + " vs " +
                           in(1).str());
        }
        shapes[id] = in(0);
        break;
      case LayerKind::ScaleChannels: {
        const TensorShape& x = in(0);
        const TensorShape& g = in(1);
        if (g != TensorShape{x.n, x.c, 1, 1}) {
          throw ShapeError("node '" + node.name + "': gate shape " + g.str() +
                           " incompatible with " + x.str());
        }
        shapes[id] = x;
        break;
      }
    }
  }
  return shapes;
}

const Tensor& RunResult::at(int id) const {
  if (id < 0 || id >= static_cast<int>(values.size()) || !values[id].has_value()) {
    throw std::out_of_range("RunResult: value of node " + std::to_string(id) +
                            " was not retained");
  }
  return *values[id];
}

namespace {

// Reachability of every node that feeds any of `roots`.
std::vector<char> reachable_set(const NetGraph& net, const std::vector<int>& roots) {
  std::vector<char> keep(net.nodes.size(), 0);
  std::vector<int> stack(roots);
  while (!stack.empty()) {
    const int id = stack.back();
    stack.pop_back();
    if (keep[id]) continue;
    keep[id] = 1;
    for (int in : net.nodes[id].inputs) stack.push_back(in);
  }
  return keep;
}

}  // namespace

RunResult run_net(const NetGraph& net, ParamStore& store, const std::vector<Tensor>& inputs,
                  const RunOptions& opts) {
  if (inputs.size() != net.inputs.size()) {
    throw ShapeError("run_net: got " + std::to_string(inputs.size()) + " inputs, graph has " +
                     std::to_string(net.inputs.size()));
  }

  std::vector<int> roots = opts.targets.empty() ? net.outputs : opts.targets;
  for (int id : opts.keep) roots.push_back(id);
  std::vector<char> active = reachable_set(net, roots);

  // Last consumer of each node among active nodes; values are freed past it.
  std::vector<int> last_use(net.nodes.size(), -1);
  for (std::size_t id = 0; id < net.nodes.size(); ++id) {
    if (!active[id]) continue;
    for (int in : net.nodes[id].inputs) last_use[in] = static_cast<int>(id);
  }
  std::vector<char> retain(net.nodes.size(), 0);
  for (int id : net.outputs) retain[id] = 1;
  for (int id : opts.keep) retain[id] = 1;
  for (int id : opts.targets) retain[id] = 1;
  for (const auto& [name, id] : net.taps) retain[id] = 1;

  RunResult result;
  result.values.resize(net.nodes.size());
  auto val = [&](int id) -> const Tensor& { return *result.values[id]; };
  if (opts.node_macs != nullptr) opts.node_macs->assign(net.nodes.size(), 0);

  for (std::size_t id = 0; id < net.nodes.size(); ++id) {
    if (!active[id]) continue;
    const LayerNode& node = net.nodes[id];
    std::optional<MacCounterScope> meter;
    if (opts.node_macs != nullptr) meter.emplace();
    Tensor out;
    switch (node.kind) {
      case LayerKind::Input:
        out = inputs[node.input_index];
        break;
      case LayerKind::Conv: {
        const Tensor* bias = node.bias >= 0 ? &store.params[node.bias].tensor : nullptr;
        out = conv2d(val(node.inputs[0]), store.params[node.weight].tensor, bias, node.conv);
        break;
      }
      case LayerKind::BatchNorm:
        out = batch_norm(val(node.inputs[0]), store.params[node.gamma].tensor,
                         store.params[node.beta].tensor, store.buffers[node.running_mean].tensor,
                         store.buffers[node.running_var].tensor, node.eps, node.momentum,
                         opts.training, nullptr);
        break;
      case LayerKind::Relu:
        out = relu(val(node.inputs[0]));
        break;
      case LayerKind::PRelu:
        out = prelu(val(node.inputs[0]), node.slope);
        break;
      case LayerKind::Sigmoid:
        out = sigmoid(val(node.inputs[0]));
        break;
      case LayerKind::GlobalAvgPool:
        out = global_avg_pool(val(node.inputs[0]));
        break;
      case LayerKind::AvgPool:
        out = avg_pool(val(node.inputs[0]), node.pool);
        break;
      case LayerKind::MaxPool:
        out = max_pool(val(node.inputs[0]), node.pool, node.pool_stride, node.pool_pad);
        break;
      case LayerKind::Upsample:
        out = upsample_bilinear(val(node.inputs[0]), node.scale);
        break;
      case LayerKind::Concat: {
        std::vector<const Tensor*> args;
        args.reserve(node.inputs.size());
        for (int in : node.inputs) args.push_back(&val(in));
        out = concat_channels(args);
        break;
      }
      case LayerKind::Add:
        out = add(val(node.inputs[0]), val(node.inputs[1]));
        break;
      case LayerKind::AbsDiff:
        out = abs_diff(val(node.inputs[0]), val(node.inputs[1]));
        break;
      case LayerKind::ScaleChannels:
        out = scale_channels(val(node.inputs[0]), val(node.inputs[1]));
        break;
    }
    result.values[id] = std::move(out);
    if (meter.has_value()) (*opts.node_macs)[id] = meter->macs();

    // Release tensors whose consumers have all run.
    for (int in : node.inputs) {
      if (!retain[in] && last_use[in] == static_cast<int>(id)) {
        result.values[in].reset();
      }
    }
    if (!retain[id] && last_use[id] < 0) result.values[id].reset();
  }
  return result;
}

TapeBinding run_net_on_tape(Graph& tape, const NetGraph& net, ParamStore& store,
                            const std::vector<Tensor>& inputs, bool training) {
  if (inputs.size() != net.inputs.size()) {
    throw ShapeError("run_net_on_tape: got " + std::to_string(inputs.size()) +
                     " inputs, graph has " + std::to_string(net.inputs.size()));
  }
  TapeBinding binding;
  binding.param_leaves.reserve(store.params.size());
  for (const auto& entry : store.params) {
    binding.param_leaves.push_back(tape.leaf(entry.tensor));
  }
  binding.input_leaves.reserve(inputs.size());
  for (const Tensor& t : inputs) binding.input_leaves.push_back(tape.leaf(t));

  binding.value_ids.assign(net.nodes.size(), -1);
  for (std::size_t id = 0; id < net.nodes.size(); ++id) {
    const LayerNode& node = net.nodes[id];
    auto in = [&](std::size_t i) { return binding.value_ids[node.inputs[i]]; };
    NodeId out = -1;
    switch (node.kind) {
      case LayerKind::Input:
        out = binding.input_leaves[node.input_index];
        break;
      case LayerKind::Conv: {
        std::optional<NodeId> bias;
        if (node.bias >= 0) bias = binding.param_leaves[node.bias];
        out = tape.conv2d(in(0), binding.param_leaves[node.weight], bias, node.conv);
        break;
      }
      case LayerKind::BatchNorm:
        out = tape.batch_norm(in(0), binding.param_leaves[node.gamma],
                              binding.param_leaves[node.beta],
                              store.buffers[node.running_mean].tensor,
                              store.buffers[node.running_var].tensor, node.eps, node.momentum,
                              training);
        break;
      case LayerKind::Relu:
        out = tape.relu(in(0));
        break;
      case LayerKind::PRelu:
        out = tape.prelu(in(0), node.slope);
        break;
      case LayerKind::Sigmoid:
        out = tape.sigmoid(in(0));
        break;
      case LayerKind::GlobalAvgPool:
        out = tape.global_avg_pool(in(0));
        break;
      case LayerKind::AvgPool:
        out = tape.avg_pool(in(0), node.pool);
        break;
      case LayerKind::MaxPool:
        throw std::logic_error("run_net_on_tape: max_pool has no tape support");
      case LayerKind::Upsample:
        out = tape.upsample_bilinear(in(0), node.scale);
        break;
      case LayerKind::Concat: {
        std::vector<NodeId> args;
        args.reserve(node.inputs.size());
        for (int i : node.inputs) args.push_back(binding.value_ids[i]);
        out = tape.concat_channels(args);
        break;
      }
      case LayerKind::Add:
        out = tape.add(in(0), in(1));
        break;
      case LayerKind::AbsDiff:
        out = tape.abs_diff(in(0), in(1));
        break;
      case LayerKind::ScaleChannels:
        out = tape.scale_channels(in(0), in(1));
        break;
    }
    binding.value_ids[id] = out;
  }
  return binding;
}

int net_add_input(NetGraph& net, const std::string& name) {
  LayerNode node;
  node.kind = LayerKind::Input;
  node.name = name;
  return net.add(std::move(node));
}

int net_add_conv(NetGraph& net, ParamStore& store, int x, const std::string& name,
                 const ConvSpec& spec) {
  spec.validate();
  LayerNode node;
  node.kind = LayerKind::Conv;
  node.name = name;
  node.inputs = {x};
  node.conv = spec;
  node.weight = store.add_param(name + ".w", Tensor(spec.weight_shape()));
  if (spec.has_bias) {
    node.bias = store.add_param(name + ".b", Tensor(TensorShape{1, spec.out_channels, 1, 1}));
  }
  return net.add(std::move(node));
}

int net_add_bn(NetGraph& net, ParamStore& store, int x, const std::string& name, int channels) {
  const TensorShape cs{1, channels, 1, 1};
  LayerNode node;
  node.kind = LayerKind::BatchNorm;
  node.name = name;
  node.inputs = {x};
  node.gamma = store.add_param(name + ".gamma", Tensor::full(cs, 1.0f));
  node.beta = store.add_param(name + ".beta", Tensor(cs));
  node.running_mean = store.add_buffer(name + ".mean", Tensor(cs));
  node.running_var = store.add_buffer(name + ".var", Tensor::full(cs, 1.0f));
  return net.add(std::move(node));
}

int net_add_unary(NetGraph& net, LayerKind kind, int x, const std::string& name) {
  LayerNode node;
  node.kind = kind;
  node.name = name;
  node.inputs = {x};
  return net.add(std::move(node));
}

int net_add_max_pool(NetGraph& net, int x, const std::string& name, int k, int stride, int pad) {
  LayerNode node;
  node.kind = LayerKind::MaxPool;
  node.name = name;
  node.inputs = {x};
  node.pool = k;
  node.pool_stride = stride;
  node.pool_pad = pad;
  return net.add(std::move(node));
}

int net_add_binary(NetGraph& net, LayerKind kind, int a, int b, const std::string& name) {
  LayerNode node;
  node.kind = kind;
  node.name = name;
  node.inputs = {a, b};
  return net.add(std::move(node));
}

}  // namespace lsnet
