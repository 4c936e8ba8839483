#include "lsnet/profiler.hpp"

#include <algorithm>
#include <map>
#include <sstream>

#include "lsnet/report.hpp"

namespace lsnet {

CostEntry& CostEntry::accumulate(const CostEntry& other) {
  params += other.params;
  buffers += other.buffers;
  macs += other.macs;
  elem_ops += other.elem_ops;
  return *this;
}

namespace {

std::string group_name(const std::string& name, int depth) {
  std::size_t pos = 0;
  for (int i = 0; i < depth; ++i) {
    const std::size_t dot = name.find('.', pos);
    if (dot == std::string::npos) return name;
    pos = dot + 1;
  }
  return name.substr(0, pos - 1);
}

CostReport finalize(std::map<std::string, CostEntry>&& groups) {
  CostReport report;
  report.total.name = "total";
  for (auto& [name, entry] : groups) {
    entry.name = name;
    report.total.accumulate(entry);
    report.entries.push_back(std::move(entry));
  }
  return report;
}

void add_store_params(const NetGraph&, const ParamStore& store, int depth,
                      std::map<std::string, CostEntry>& groups) {
  for (const auto& e : store.params) {
    groups[group_name(e.name, depth)].params += e.tensor.numel();
  }
  for (const auto& e : store.buffers) {
    groups[group_name(e.name, depth)].buffers += e.tensor.numel();
  }
}

}  // namespace

CostEntry CostReport::roll_up(const std::string& prefix) const {
  CostEntry out;
  out.name = prefix;
  for (const auto& e : entries) {
    if (e.name == prefix || e.name.rfind(prefix + ".", 0) == 0) out.accumulate(e);
  }
  return out;
}

std::uint64_t conv_param_count(const ConvSpec& spec) {
  std::uint64_t count = static_cast<std::uint64_t>(spec.out_channels) *
                        (spec.in_channels / spec.groups) * spec.kernel_h * spec.kernel_w;
  if (spec.has_bias) count += spec.out_channels;
  return count;
}

std::uint64_t conv_mac_count(const ConvSpec& spec, int in_h, int in_w) {
  const std::uint64_t out_positions =
      static_cast<std::uint64_t>(spec.out_h(in_h)) * spec.out_w(in_w);
  return out_positions * spec.out_channels * spec.kernel_h * spec.kernel_w *
         (spec.in_channels / spec.groups);
}

CostReport count_params(const NetGraph& net, const ParamStore& store, int depth) {
  std::map<std::string, CostEntry> groups;
  add_store_params(net, store, depth, groups);
  return finalize(std::move(groups));
}

CostReport count_flops(const NetGraph& net, const ParamStore& store,
                       const std::vector<TensorShape>& input_shapes, int depth) {
  const std::vector<TensorShape> shapes = infer_shapes(net, store, input_shapes);
  std::map<std::string, CostEntry> groups;
  add_store_params(net, store, depth, groups);

  for (std::size_t id = 0; id < net.nodes.size(); ++id) {
    const LayerNode& node = net.nodes[id];
    CostEntry& group = groups[group_name(node.name, depth)];
    const TensorShape& out = shapes[id];
    const std::uint64_t out_numel = out.numel();
    switch (node.kind) {
      case LayerKind::Input:
        break;
      case LayerKind::Conv: {
        const TensorShape& in = shapes[node.inputs[0]];
        group.macs += static_cast<std::uint64_t>(in.n) * conv_mac_count(node.conv, in.h, in.w);
        if (node.bias >= 0) group.elem_ops += out_numel;
        break;
      }
      case LayerKind::BatchNorm:
      case LayerKind::Relu:
      case LayerKind::PRelu:
      case LayerKind::Sigmoid:
      case LayerKind::Upsample:
      case LayerKind::Concat:
      case LayerKind::Add:
      case LayerKind::AbsDiff:
      case LayerKind::ScaleChannels:
        group.elem_ops += out_numel;
        break;
      case LayerKind::GlobalAvgPool:
      case LayerKind::AvgPool:
      case LayerKind::MaxPool:
        group.elem_ops += shapes[node.inputs[0]].numel();
        break;
    }
  }
  return finalize(std::move(groups));
}

CostReport count_flops_measured(const NetGraph& net, ParamStore& store,
                                const std::vector<TensorShape>& input_shapes, int depth) {
  std::vector<Tensor> inputs;
  inputs.reserve(input_shapes.size());
  for (const TensorShape& s : input_shapes) inputs.emplace_back(s);

  std::vector<std::uint64_t> node_macs;
  RunOptions opts;
  opts.node_macs = &node_macs;
  // Measure everything, not just what feeds the outputs.
  for (int id = 0; id < static_cast<int>(net.nodes.size()); ++id) opts.keep.push_back(id);
  run_net(net, store, inputs, opts);

  std::map<std::string, CostEntry> groups;
  add_store_params(net, store, depth, groups);
  for (std::size_t id = 0; id < net.nodes.size(); ++id) {
    groups[group_name(net.nodes[id].name, depth)].macs += node_macs[id];
  }
  return finalize(std::move(groups));
}

std::string CostReport::to_table() const {
  TextTable t({"module", "params", "buffers", "macs", "elem-ops"});
  for (const auto& e : entries) {
    t.add_row({e.name, format_count(e.params), format_count(e.buffers), format_count(e.macs),
               format_count(e.elem_ops)});
  }
  t.add_rule();
  t.add_row({"total", format_count(total.params), format_count(total.buffers),
             format_count(total.macs), format_count(total.elem_ops)});
  std::string out = t.str();
  out += "params (M): " + format_millions(static_cast<double>(total.params)) + "\n";
  out += "gflops (fma2 = 2*macs): " + format_float(gflops_fma2(), 4) + "\n";
  out += "gflops (mac1 = macs):   " + format_float(gflops_mac1(), 4) + "\n";
  return out;
}

std::string CostReport::to_kv(const std::string& model, const std::string& input_desc) const {
  KvWriter kv("cost");
  kv.add({"model", model});
  kv.add({"input", input_desc});
  for (const auto& e : entries) {
    kv.add({"entry", e.name, std::to_string(e.params), std::to_string(e.buffers),
            std::to_string(e.macs), std::to_string(e.elem_ops)});
  }
  kv.add({"total", "all", std::to_string(total.params), std::to_string(total.buffers),
          std::to_string(total.macs), std::to_string(total.elem_ops)});
  kv.add({"gflops", "fma2", format_float(gflops_fma2(), 6)});
  kv.add({"gflops", "mac1", format_float(gflops_mac1(), 6)});
  return kv.str();
}

EfficiencyReport efficiency_metrics(const std::vector<EfficiencyEntry>& entries) {
  if (entries.empty()) throw ValueError("efficiency_metrics: no entries");
  EfficiencyReport report;
  for (const auto& e : entries) {
    if (e.params <= 0.0 || e.gflops <= 0.0) {
      throw ValueError("efficiency_metrics: entry '" + e.name +
                       "' needs positive params and gflops");
    }
    report.max_params = std::max(report.max_params, e.params);
    report.max_gflops = std::max(report.max_gflops, e.gflops);
  }
  for (const auto& e : entries) {
    EfficiencyRow row;
    row.entry = e;
    row.f1_p = e.f1 / (e.params / report.max_params);
    row.f1_g = e.f1 / (e.gflops / report.max_gflops);
    row.f1_eff = (row.f1_p + row.f1_g) / 2.0;
    report.rows.push_back(row);
  }
  std::stable_sort(report.rows.begin(), report.rows.end(),
                   [](const EfficiencyRow& a, const EfficiencyRow& b) {
                     return a.f1_eff > b.f1_eff;
                   });
  return report;
}

std::vector<EfficiencyEntry> parse_efficiency_entries(const std::string& text,
                                                      const std::string& source) {
  std::vector<EfficiencyEntry> entries;
  std::istringstream stream(text);
  std::string line;
  int line_no = 0;
  while (std::getline(stream, line)) {
    ++line_no;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    std::istringstream ls(line);
    EfficiencyEntry e;
    if (!(ls >> e.name)) continue;  // blank line
    if (!(ls >> e.f1 >> e.params >> e.gflops)) {
      throw ValueError(source + ":" + std::to_string(line_no) +
                       ": expected 'name f1 params gflops'");
    }
    std::string extra;
    if (ls >> extra) {
      throw ValueError(source + ":" + std::to_string(line_no) + ": unexpected token '" + extra +
                       "'");
    }
    entries.push_back(std::move(e));
  }
  if (entries.empty()) {
    throw ValueError(source + ": no entries found");
  }
  return entries;
}

std::string EfficiencyReport::to_table() const {
  TextTable t({"rank", "model", "f1", "params (M)", "gflops", "f1-p", "f1-g", "f1-eff"});
  int rank = 1;
  for (const auto& r : rows) {
    t.add_row({std::to_string(rank++), r.entry.name, format_float(r.entry.f1, 2),
               format_millions(r.entry.params), format_float(r.entry.gflops, 4),
               format_float(r.f1_p, 2), format_float(r.f1_g, 2), format_float(r.f1_eff, 2)});
  }
  return t.str();
}

std::string EfficiencyReport::to_kv() const {
  KvWriter kv("efficiency");
  kv.add({"max_params", format_float(max_params, 1)});
  kv.add({"max_gflops", format_float(max_gflops, 6)});
  int rank = 1;
  for (const auto& r : rows) {
    kv.add({"entry", r.entry.name, std::to_string(rank++), format_float(r.entry.f1, 4),
            format_float(r.entry.params, 1), format_float(r.entry.gflops, 6),
            format_float(r.f1_p, 4), format_float(r.f1_g, 4), format_float(r.f1_eff, 4)});
  }
  return kv.str();
}

}  // namespace lsnet
