#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "lsnet/graph.hpp"
#include "lsnet/ops.hpp"
#include "lsnet/tensor.hpp"

namespace lsnet {

/// Named parameter/buffer registry. Parameters are trainable tensors;
/// buffers hold batch-norm running statistics. Entry order is the canonical
/// order used by checkpoints, optimizers and gradient bindings.
struct ParamStore {
  struct Entry {
    std::string name;
    Tensor tensor;
  };

  std::vector<Entry> params;
  std::vector<Entry> buffers;

  int add_param(std::string name, Tensor t);
  int add_buffer(std::string name, Tensor t);
  int find_param(const std::string& name) const;
  int find_buffer(const std::string& name) const;
  std::size_t param_count() const;  // total trainable scalars
};

enum class LayerKind {
  Input,
  Conv,
  BatchNorm,
  Relu,
  PRelu,
  Sigmoid,
  GlobalAvgPool,
  AvgPool,
  MaxPool,
  Upsample,
  Concat,
  Add,
  AbsDiff,
  ScaleChannels,
};

const char* layer_kind_name(LayerKind kind);

/// One operation in a static network graph. Which fields are meaningful
/// depends on `kind`; parameter fields index into a ParamStore.
struct LayerNode {
  LayerKind kind = LayerKind::Input;
  std::string name;
  std::vector<int> inputs;  // producer node ids

  ConvSpec conv{};                          // Conv
  int weight = -1;                          // Conv: param id
  int bias = -1;                            // Conv: param id, -1 when absent
  int gamma = -1, beta = -1;                // BatchNorm: param ids
  int running_mean = -1, running_var = -1;  // BatchNorm: buffer ids
  float eps = 1e-5f;                        // BatchNorm
  float momentum = 0.1f;                    // BatchNorm
  float slope = 0.25f;                      // PRelu
  int pool = 1;                             // AvgPool / MaxPool kernel
  int pool_stride = 1, pool_pad = 0;        // MaxPool
  int scale = 2;                            // Upsample
  int input_index = -1;                     // Input: position in the run() argument list
};

/// A static operation DAG over a ParamStore. Nodes are stored in
/// topological order (producers before consumers); the same graph is
/// executed directly, executed onto an autograd tape, and walked
/// analytically by the cost profiler.
struct NetGraph {
  std::vector<LayerNode> nodes;
  std::vector<int> inputs;             // Input node ids, in argument order
  std::vector<int> outputs;            // final outputs
  std::map<std::string, int> taps;     // named intermediate nodes for inspection

  int add(LayerNode node);
  void mark_output(int id) { outputs.push_back(id); }
  void tap(const std::string& name, int id) { taps[name] = id; }
  int tap_id(const std::string& name) const;
};

/// Output shape of every node given per-argument input shapes.
/// Throws ShapeError when the graph and shapes are inconsistent.
std::vector<TensorShape> infer_shapes(const NetGraph& net, const ParamStore& store,
                                      const std::vector<TensorShape>& input_shapes);

struct RunOptions {
  bool training = false;          // BatchNorm mode; updates running stats
  std::vector<int> keep;          // extra node values to retain
  std::vector<int> targets;       // when non-empty, compute only these (and ancestors)
  std::vector<std::uint64_t>* node_macs = nullptr;  // per-node measured MACs
};

/// Values retained after a direct execution: graph outputs, requested taps,
/// and anything in RunOptions::keep. Intermediates are freed as soon as
/// their last consumer has run.
struct RunResult {
  std::vector<std::optional<Tensor>> values;
  const Tensor& at(int id) const;
};

RunResult run_net(const NetGraph& net, ParamStore& store, const std::vector<Tensor>& inputs,
                  const RunOptions& opts = {});

/// Tape execution for training. Leaves are created for every parameter (in
/// store order) and every graph input; `value_ids` maps net node -> tape node.
struct TapeBinding {
  std::vector<NodeId> param_leaves;  // parallel to store.params
  std::vector<NodeId> input_leaves;  // parallel to inputs argument
  std::vector<NodeId> value_ids;     // parallel to net.nodes
};

TapeBinding run_net_on_tape(Graph& tape, const NetGraph& net, ParamStore& store,
                            const std::vector<Tensor>& inputs, bool training);

// ---------------------------------------------------------------------------
// Plain builder helpers (zero-initialized parameters); used by cost-only
// specs and tests. Model construction uses its own initializing builders.
// ---------------------------------------------------------------------------

int net_add_input(NetGraph& net, const std::string& name = "input");
int net_add_conv(NetGraph& net, ParamStore& store, int x, const std::string& name,
                 const ConvSpec& spec);
int net_add_bn(NetGraph& net, ParamStore& store, int x, const std::string& name, int channels);
int net_add_unary(NetGraph& net, LayerKind kind, int x, const std::string& name);
int net_add_max_pool(NetGraph& net, int x, const std::string& name, int k, int stride, int pad);
int net_add_binary(NetGraph& net, LayerKind kind, int a, int b, const std::string& name);

}  // namespace lsnet
