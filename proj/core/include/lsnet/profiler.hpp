#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lsnet/net_graph.hpp"
#include "lsnet/tensor.hpp"

namespace lsnet {

/// Per-submodule cost line. `macs` counts convolution multiply-accumulates
/// only; normalization, activations, pooling and resampling are tracked
/// separately as `elem_ops` since published convolution budgets ignore
/// them. `buffers` counts non-trainable running statistics.
struct CostEntry {
  std::string name;
  std::uint64_t params = 0;
  std::uint64_t buffers = 0;
  std::uint64_t macs = 0;
  std::uint64_t elem_ops = 0;

  CostEntry& accumulate(const CostEntry& other);
};

/// Cost breakdown plus totals. GFLOPs are derived from MACs under two
/// conventions: `fma2` (one MAC = 2 FLOPs, the convention that matches the
/// published reference numbers) and `mac1` (one MAC = 1 FLOP). Both are
/// always reported.
struct CostReport {
  std::vector<CostEntry> entries;  // grouped by hierarchical name prefix
  CostEntry total;

  double gflops_fma2() const { return 2.0 * static_cast<double>(total.macs) / 1e9; }
  double gflops_mac1() const { return static_cast<double>(total.macs) / 1e9; }

  /// Sum of every entry whose group name equals `prefix` or starts with
  /// `prefix` + ".".
  CostEntry roll_up(const std::string& prefix) const;

  std::string to_table() const;
  std::string to_kv(const std::string& model, const std::string& input_desc) const;
};

/// Parameter count of a single convolution layer.
std::uint64_t conv_param_count(const ConvSpec& spec);
/// Multiply-accumulates of a single convolution layer on an in_h x in_w
/// input, per batch item.
std::uint64_t conv_mac_count(const ConvSpec& spec, int in_h, int in_w);

/// Analytical parameter count over a graph's store, grouped by the first
/// `depth` components of each parameter name.
CostReport count_params(const NetGraph& net, const ParamStore& store, int depth = 2);

/// Analytical parameter + MAC + elementary-op count for the given input
/// shapes. No execution happens; shapes are inferred node by node.
CostReport count_flops(const NetGraph& net, const ParamStore& store,
                       const std::vector<TensorShape>& input_shapes, int depth = 2);

/// Measured counterpart of count_flops: executes the graph with metered
/// kernels that count every convolution tap. Intended for small inputs;
/// must agree with count_flops exactly on conv layers.
CostReport count_flops_measured(const NetGraph& net, ParamStore& store,
                                const std::vector<TensorShape>& input_shapes, int depth = 2);

// ---------------------------------------------------------------------------
// Normalized efficiency indicators
// ---------------------------------------------------------------------------

struct EfficiencyEntry {
  std::string name;
  double f1 = 0.0;      // percent
  double params = 0.0;  // raw parameter count
  double gflops = 0.0;
};

struct EfficiencyRow {
  EfficiencyEntry entry;
  double f1_p = 0.0;
  double f1_g = 0.0;
  double f1_eff = 0.0;
};

struct EfficiencyReport {
  double max_params = 0.0;
  double max_gflops = 0.0;
  std::vector<EfficiencyRow> rows;  // ranked by f1_eff, best first

  std::string to_table() const;
  std::string to_kv() const;
};

/// F1-P = F1 / (params / max params), F1-G = F1 / (GFLOPs / max GFLOPs),
/// F1-Eff = (F1-P + F1-G) / 2, normalized by the maxima over the given
/// entries. Requires at least one entry and positive params/gflops.
EfficiencyReport efficiency_metrics(const std::vector<EfficiencyEntry>& entries);

/// Parses an entries file: one "name f1 params gflops" record per line,
/// '#' comments. Errors carry the offending line number.
std::vector<EfficiencyEntry> parse_efficiency_entries(const std::string& text,
                                                      const std::string& source);

}  // namespace lsnet
