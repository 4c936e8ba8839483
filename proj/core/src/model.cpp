#include "lsnet/model.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

namespace lsnet {

namespace {

float uniform01(std::mt19937_64& rng) {
  // 24-bit mantissa draw; identical across platforms, unlike
  // std::uniform_real_distribution.
  return static_cast<float>(rng() >> 40) * 0x1p-24f;
}

Tensor kaiming_uniform(std::mt19937_64& rng, TensorShape shape, int fan_in) {
  const float bound = std::sqrt(6.0f / static_cast<float>(fan_in));
  Tensor t(shape);
  for (float& v : t.data()) v = (uniform01(rng) * 2.0f - 1.0f) * bound;
  return t;
}

enum class Init { Kaiming, Zeros, Ones };

int get_or_create_param(BuildCtx& ctx, const std::string& name, TensorShape shape, Init init,
                        int fan_in = 1) {
  const int existing = ctx.store.find_param(name);
  if (existing >= 0) return existing;
  switch (init) {
    case Init::Kaiming: return ctx.store.add_param(name, kaiming_uniform(ctx.rng, shape, fan_in));
    case Init::Zeros: return ctx.store.add_param(name, Tensor(shape));
    case Init::Ones: return ctx.store.add_param(name, Tensor::full(shape, 1.0f));
  }
  return -1;
}

int get_or_create_buffer(BuildCtx& ctx, const std::string& name, TensorShape shape, float fill) {
  const int existing = ctx.store.find_buffer(name);
  if (existing >= 0) return existing;
  return ctx.store.add_buffer(name, Tensor::full(shape, fill));
}

int add_conv(BuildCtx& ctx, int x, const std::string& name, const ConvSpec& spec) {
  spec.validate();
  const int fan_in = (spec.in_channels / spec.groups) * spec.kernel_h * spec.kernel_w;
  LayerNode node;
  node.kind = LayerKind::Conv;
  node.name = name;
  node.inputs = {x};
  node.conv = spec;
  node.weight = get_or_create_param(ctx, name + ".w", spec.weight_shape(), Init::Kaiming, fan_in);
  if (spec.has_bias) {
    node.bias = get_or_create_param(ctx, name + ".b", TensorShape{1, spec.out_channels, 1, 1},
                                    Init::Zeros);
  }
  return ctx.net.add(std::move(node));
}

int add_bn(BuildCtx& ctx, int x, const std::string& name, int channels) {
  const TensorShape cs{1, channels, 1, 1};
  LayerNode node;
  node.kind = LayerKind::BatchNorm;
  node.name = name;
  node.inputs = {x};
  node.gamma = get_or_create_param(ctx, name + ".gamma", cs, Init::Ones);
  node.beta = get_or_create_param(ctx, name + ".beta", cs, Init::Zeros);
  node.running_mean = get_or_create_buffer(ctx, name + ".mean", cs, 0.0f);
  node.running_var = get_or_create_buffer(ctx, name + ".var", cs, 1.0f);
  return ctx.net.add(std::move(node));
}

int add_simple(BuildCtx& ctx, LayerKind kind, int x, const std::string& name) {
  LayerNode node;
  node.kind = kind;
  node.name = name;
  node.inputs = {x};
  return ctx.net.add(std::move(node));
}

int add_prelu(BuildCtx& ctx, int x, const std::string& name) {
  LayerNode node;
  node.kind = LayerKind::PRelu;
  node.name = name;
  node.inputs = {x};
  node.slope = 0.25f;
  return ctx.net.add(std::move(node));
}

int conv_bn_prelu(BuildCtx& ctx, int x, const std::string& prefix, const ConvSpec& spec) {
  int id = add_conv(ctx, x, prefix + ".conv", spec);
  id = add_bn(ctx, id, prefix + ".bn", spec.out_channels);
  return add_prelu(ctx, id, prefix + ".act");
}

/// Brings `node` (on the plane of pyramid level `from`) onto the plane of
/// level `to`: bilinear upsampling from coarser planes, mean pooling from
/// finer ones. Levels l live at stride 2^(l+1).
int resample_to_level(BuildCtx& ctx, int node, int from, int to, const std::string& name) {
  if (from == to) return node;
  LayerNode ln;
  ln.name = name;
  ln.inputs = {node};
  if (from > to) {
    ln.kind = LayerKind::Upsample;
    ln.scale = 1 << (from - to);
  } else {
    ln.kind = LayerKind::AvgPool;
    ln.pool = 1 << (to - from);
  }
  return ctx.net.add(std::move(ln));
}

struct FusionArg {
  int node = -1;
  int level = 0;
  int channels = 0;
};

/// Channel width of a node's output, recovered from the producing conv
/// (following unary ops upward, summing across concats).
int node_width(const NetGraph& net, int id) {
  const LayerNode& ln = net.nodes[id];
  switch (ln.kind) {
    case LayerKind::Conv:
      return ln.conv.out_channels;
    case LayerKind::Concat: {
      int c = 0;
      for (int in : ln.inputs) c += node_width(net, in);
      return c;
    }
    case LayerKind::Input:
      throw std::logic_error("node_width: reached a graph input");
    default:
      return node_width(net, ln.inputs.at(0));
  }
}

/// concat(args resampled to `level`) -> 3x3 conv -> BN -> PReLU.
FusionBlock build_fusion(BuildCtx& ctx, const std::string& name, int level, int out_channels,
                         const std::vector<FusionArg>& args) {
  FusionBlock block;
  block.name = name;
  block.level = level;
  block.first_node = static_cast<int>(ctx.net.nodes.size());

  std::vector<int> resampled;
  int in_channels = 0;
  for (std::size_t i = 0; i < args.size(); ++i) {
    resampled.push_back(resample_to_level(ctx, args[i].node, args[i].level, level,
                                          name + ".resample" + std::to_string(i)));
    in_channels += args[i].channels;
  }
  int joined;
  if (resampled.size() == 1) {
    joined = resampled.front();
    block.concat_node = -1;
  } else {
    LayerNode cat;
    cat.kind = LayerKind::Concat;
    cat.name = name + ".concat";
    cat.inputs = resampled;
    joined = ctx.net.add(std::move(cat));
    block.concat_node = joined;
  }
  ConvSpec conv{in_channels, out_channels, 3, 3, /*stride=*/1, /*padding=*/1};
  block.result = conv_bn_prelu(ctx, joined, name, conv);
  block.last_node = static_cast<int>(ctx.net.nodes.size()) - 1;
  return block;
}

}  // namespace

// ---------------------------------------------------------------------------
// Spec validation
// ---------------------------------------------------------------------------

void CgbSpec::validate() const {
  if (channels <= 0 || channels % 2 != 0) {
    throw ValueError("CgbSpec: channels must be positive and even, got " +
                     std::to_string(channels));
  }
  if (in_channels <= 0) {
    throw ValueError("CgbSpec: in_channels must be positive, got " + std::to_string(in_channels));
  }
  if (!downsample && in_channels != channels) {
    throw ValueError("CgbSpec: residual block needs in_channels == channels, got " +
                     std::to_string(in_channels) + " vs " + std::to_string(channels));
  }
  if (dilation < 2) {
    throw ValueError("CgbSpec: surrounding dilation must be >= 2, got " +
                     std::to_string(dilation));
  }
  if (reduction < 1 || channels % reduction != 0) {
    throw ValueError("CgbSpec: reduction " + std::to_string(reduction) +
                     " must divide channels " + std::to_string(channels));
  }
}

void BackboneSpec::validate() const {
  if (in_channels <= 0) throw ValueError("BackboneSpec: in_channels must be positive");
  if (stem_kernel < 1 || stem_kernel % 2 == 0) {
    throw ValueError("BackboneSpec: stem kernel must be odd and >= 1, got " +
                     std::to_string(stem_kernel));
  }
  if (stem_stride < 1) throw ValueError("BackboneSpec: stem stride must be >= 1");
  for (int s = 0; s < 4; ++s) {
    if (stage_blocks[s] < 1) {
      throw ValueError("BackboneSpec: stage " + std::to_string(s) + " needs >= 1 block");
    }
    CgbSpec probe{stage_channels[s], stage_channels[s], stage_dilations[s], attention_reduction,
                  false};
    probe.validate();
  }
}

int BackboneSpec::level_count() const {
  int blocks = 0;
  for (int b : stage_blocks) blocks += b;
  return 2 * blocks;
}

const char* fpn_variant_name(FpnVariant v) { return v == FpnVariant::Dense ? "dense" : "diff"; }

FpnVariant fpn_variant_from_name(const std::string& name) {
  if (name == "dense") return FpnVariant::Dense;
  if (name == "diff") return FpnVariant::Diff;
  throw ValueError("unknown fpn variant '" + name + "' (expected dense|diff)");
}

void FpnSpec::validate() const {
  for (int c : fusion_channels) {
    if (c <= 0) throw ValueError("FpnSpec: fusion channels must be positive");
  }
  if (head_channels != 0 && head_channels != derived_head_channels()) {
    throw ValueError("FpnSpec: head_channels " + std::to_string(head_channels) +
                     " does not match derived " + std::to_string(derived_head_channels()));
  }
}

void ModelSpec::validate() const {
  backbone.validate();
  fpn.validate();
}

// ---------------------------------------------------------------------------
// Builders
// ---------------------------------------------------------------------------

int build_cgb(BuildCtx& ctx, int x, const CgbSpec& spec, const std::string& prefix) {
  spec.validate();
  const int half = spec.channels / 2;

  // Reduce: pointwise for residual blocks, strided 3x3 for stage entries.
  ConvSpec reduce{spec.in_channels, half, 1, 1, 1, 0};
  if (spec.downsample) reduce = ConvSpec{spec.in_channels, half, 3, 3, 2, 1};
  const int reduced = add_conv(ctx, x, prefix + ".reduce", reduce);

  ConvSpec local{half, half, 3, 3, 1, 1, /*dilation=*/1, /*groups=*/half};
  const int loc = add_conv(ctx, reduced, prefix + ".dw_local", local);

  ConvSpec surround{half, half, 3, 3, 1, spec.dilation, spec.dilation, half};
  const int sur = add_conv(ctx, reduced, prefix + ".dw_surround", surround);

  LayerNode cat;
  cat.kind = LayerKind::Concat;
  cat.name = prefix + ".join";
  cat.inputs = {loc, sur};
  int joint = ctx.net.add(std::move(cat));
  joint = add_bn(ctx, joint, prefix + ".bn", spec.channels);
  joint = add_prelu(ctx, joint, prefix + ".act");

  // Global-context gate: pooled vector through a two-layer bottleneck.
  const int squeezed = spec.channels / spec.reduction;
  int gate = add_simple(ctx, LayerKind::GlobalAvgPool, joint, prefix + ".att.pool");
  gate = add_conv(ctx, gate, prefix + ".att.fc1",
                  ConvSpec{spec.channels, squeezed, 1, 1, 1, 0, 1, 1, /*has_bias=*/true});
  gate = add_simple(ctx, LayerKind::Relu, gate, prefix + ".att.relu");
  gate = add_conv(ctx, gate, prefix + ".att.fc2",
                  ConvSpec{squeezed, spec.channels, 1, 1, 1, 0, 1, 1, /*has_bias=*/true});
  gate = add_simple(ctx, LayerKind::Sigmoid, gate, prefix + ".att.gate");

  LayerNode scaled;
  scaled.kind = LayerKind::ScaleChannels;
  scaled.name = prefix + ".gated";
  scaled.inputs = {joint, gate};
  const int gated = ctx.net.add(std::move(scaled));

  if (spec.downsample) return gated;
  LayerNode res;
  res.kind = LayerKind::Add;
  res.name = prefix + ".residual";
  res.inputs = {gated, x};
  return ctx.net.add(std::move(res));
}

std::array<int, 4> build_backbone_stream(BuildCtx& ctx, int input, const BackboneSpec& spec,
                                         const std::string& stream_tag) {
  spec.validate();
  ConvSpec stem{spec.in_channels, spec.stage_channels[0], spec.stem_kernel, spec.stem_kernel,
                spec.stem_stride, spec.stem_kernel / 2};
  int x = conv_bn_prelu(ctx, input, "backbone.stem", stem);

  std::array<int, 4> taps{};
  for (int s = 0; s < 4; ++s) {
    const int channels = spec.stage_channels[s];
    for (int b = 0; b < spec.stage_blocks[s]; ++b) {
      const bool down = (s > 0 && b == 0);
      CgbSpec block{down ? spec.stage_channels[s - 1] : channels, channels,
                    spec.stage_dilations[s], spec.attention_reduction, down};
      x = build_cgb(ctx, x, block,
                    "backbone.stage" + std::to_string(s) + ".block" + std::to_string(b));
    }
    taps[s] = x;
    ctx.net.tap(stream_tag + ".level" + std::to_string(s), x);
  }
  return taps;
}

FpnOutputs build_dense_fpn(BuildCtx& ctx, const std::array<int, 4>& pyr1,
                           const std::array<int, 4>& pyr2, const FpnSpec& spec) {
  spec.validate();
  const auto& F = spec.fusion_channels;
  // Backbone channel widths are read off the conv feeding each tap at
  // shape-inference time; the builder carries them explicitly.
  auto arg = [&](int node, int level, int channels) { return FusionArg{node, level, channels}; };

  FpnOutputs out;
  const std::array<int, 4>& t1 = pyr1;
  const std::array<int, 4>& t2 = pyr2;
  const std::array<int, 4> C{node_width(ctx.net, t1[0]), node_width(ctx.net, t1[1]),
                             node_width(ctx.net, t1[2]), node_width(ctx.net, t1[3])};

  // Intermediate column from the deeper pyramid levels.
  FusionBlock d11 = build_fusion(ctx, "fpn.d11", 2, F[2],
                                 {arg(t1[2], 2, C[2]), arg(t2[2], 2, C[2]),
                                  arg(t1[3], 3, C[3]), arg(t2[3], 3, C[3])});
  FusionBlock d01 = build_fusion(ctx, "fpn.d01", 1, F[1],
                                 {arg(t1[1], 1, C[1]), arg(t2[1], 1, C[1]),
                                  arg(d11.result, 2, F[2])});

  FusionBlock d00 = build_fusion(ctx, "fpn.d00", 0, F[0],
                                 {arg(t1[0], 0, C[0]), arg(t2[0], 0, C[0]),
                                  arg(t1[1], 1, C[1]), arg(t2[1], 1, C[1])});
  FusionBlock d10 = build_fusion(ctx, "fpn.d10", 1, F[1],
                                 {arg(t1[0], 0, C[0]), arg(t2[0], 0, C[0]),
                                  arg(d00.result, 0, F[0]), arg(d01.result, 1, F[1])});
  FusionBlock d20 = build_fusion(ctx, "fpn.d20", 2, F[2],
                                 {arg(t1[0], 0, C[0]), arg(t2[0], 0, C[0]),
                                  arg(d00.result, 0, F[0]), arg(d10.result, 1, F[1]),
                                  arg(d11.result, 2, F[2])});

  out.d00 = d00.result;
  out.d10 = d10.result;
  out.d20 = d20.result;
  out.blocks = {d11, d01, d00, d10, d20};
  return out;
}

FpnOutputs build_diff_fpn(BuildCtx& ctx, const std::array<int, 4>& pyr1,
                          const std::array<int, 4>& pyr2, const FpnSpec& spec) {
  spec.validate();
  const auto& F = spec.fusion_channels;
  auto arg = [&](int node, int level, int channels) { return FusionArg{node, level, channels}; };

  const std::array<int, 4>& t1 = pyr1;
  const std::array<int, 4>& t2 = pyr2;
  const std::array<int, 4> C{node_width(ctx.net, t1[0]), node_width(ctx.net, t1[1]),
                             node_width(ctx.net, t1[2]), node_width(ctx.net, t1[3])};

  // Per-level differential nodes: conv(concat(T1, T2, |T1 - T2|)).
  auto build_diff = [&](int level) {
    const std::string name = "fpn.diff" + std::to_string(level);
    FusionBlock block;
    block.name = name;
    block.level = level;
    block.first_node = static_cast<int>(ctx.net.nodes.size());
    LayerNode ad;
    ad.kind = LayerKind::AbsDiff;
    ad.name = name + ".absdiff";
    ad.inputs = {t1[level], t2[level]};
    const int diff = ctx.net.add(std::move(ad));
    ctx.net.tap(name + ".absdiff", diff);
    LayerNode cat;
    cat.kind = LayerKind::Concat;
    cat.name = name + ".concat";
    cat.inputs = {t1[level], t2[level], diff};
    const int joined = ctx.net.add(std::move(cat));
    block.concat_node = joined;
    ConvSpec conv{3 * C[level], F[level], 3, 3, 1, 1};
    block.result = conv_bn_prelu(ctx, joined, name, conv);
    block.last_node = static_cast<int>(ctx.net.nodes.size()) - 1;
    return block;
  };

  FusionBlock diff1 = build_diff(1);
  FusionBlock diff2 = build_diff(2);
  FusionBlock diff3 = build_diff(3);

  // Bottom-up fusion of the differential column (coarse to fine).
  FusionBlock d11 = build_fusion(ctx, "fpn.d11", 2, F[2],
                                 {arg(diff2.result, 2, F[2]), arg(diff3.result, 3, F[3])});
  FusionBlock d01 = build_fusion(ctx, "fpn.d01", 1, F[1],
                                 {arg(diff1.result, 1, F[1]), arg(d11.result, 2, F[2])});

  // Unary refinement of d01 before it joins the raw level-0 features.
  FusionBlock refine = build_fusion(ctx, "fpn.d01_refine", 1, F[1], {arg(d01.result, 1, F[1])});

  FusionBlock d00 = build_fusion(ctx, "fpn.d00", 0, F[0],
                                 {arg(t1[0], 0, C[0]), arg(t2[0], 0, C[0]),
                                  arg(refine.result, 1, F[1])});
  FusionBlock d10 = build_fusion(ctx, "fpn.d10", 1, F[1],
                                 {arg(d00.result, 0, F[0]), arg(d01.result, 1, F[1])});
  FusionBlock d20 = build_fusion(ctx, "fpn.d20", 2, F[2],
                                 {arg(d10.result, 1, F[1]), arg(d11.result, 2, F[2])});

  FpnOutputs out;
  out.d00 = d00.result;
  out.d10 = d10.result;
  out.d20 = d20.result;
  out.blocks = {diff1, diff2, diff3, d11, d01, refine, d00, d10, d20};
  return out;
}

int build_head(BuildCtx& ctx, int d00, int d10, int d20, const FpnSpec& spec) {
  const auto& F = spec.fusion_channels;
  const int up10 = resample_to_level(ctx, d10, 1, 0, "head.up_d10");
  const int up20 = resample_to_level(ctx, d20, 2, 0, "head.up_d20");
  LayerNode cat;
  cat.kind = LayerKind::Concat;
  cat.name = "head.concat";
  cat.inputs = {d00, up10, up20};
  int x = ctx.net.add(std::move(cat));
  const int in_ch = F[0] + F[1] + F[2];
  x = add_conv(ctx, x, "head.proj",
               ConvSpec{in_ch, 1, 1, 1, 1, 0, 1, 1, /*has_bias=*/true});
  x = add_simple(ctx, LayerKind::Sigmoid, x, "head.sigmoid");
  // Level 0 sits at stride 2; one 2x upsampling restores input resolution.
  LayerNode up;
  up.kind = LayerKind::Upsample;
  up.name = "head.upsample";
  up.scale = 2;
  up.inputs = {x};
  return ctx.net.add(std::move(up));
}

Tensor cgb_attention_gate(const Tensor& joint) { return sigmoid(global_avg_pool(joint)); }

// ---------------------------------------------------------------------------
// LsNet
// ---------------------------------------------------------------------------

LsNet::LsNet(ModelSpec spec) : spec_(std::move(spec)) {
  spec_.validate();
  BuildCtx ctx{net_, store_, std::mt19937_64(spec_.init_seed)};

  LayerNode in1;
  in1.kind = LayerKind::Input;
  in1.name = "t1";
  const int t1 = net_.add(std::move(in1));
  LayerNode in2;
  in2.kind = LayerKind::Input;
  in2.name = "t2";
  const int t2 = net_.add(std::move(in2));

  const auto pyr1 = build_backbone_stream(ctx, t1, spec_.backbone, "t1");
  const auto pyr2 = build_backbone_stream(ctx, t2, spec_.backbone, "t2");
  pyramids_[0] = pyr1;
  pyramids_[1] = pyr2;

  FpnOutputs fpn = spec_.fpn.variant == FpnVariant::Dense
                       ? build_dense_fpn(ctx, pyr1, pyr2, spec_.fpn)
                       : build_diff_fpn(ctx, pyr1, pyr2, spec_.fpn);
  d00_ = fpn.d00;
  d10_ = fpn.d10;
  d20_ = fpn.d20;
  fusion_blocks_ = std::move(fpn.blocks);
  net_.tap("fpn.d00", d00_);
  net_.tap("fpn.d10", d10_);
  net_.tap("fpn.d20", d20_);

  score_ = build_head(ctx, d00_, d10_, d20_, spec_.fpn);
  net_.tap("score", score_);
  net_.mark_output(score_);
}

Tensor LsNet::infer(const Tensor& t1, const Tensor& t2) {
  if (!t1.same_shape(t2)) {
    throw ShapeError("LsNet::infer: stream shapes differ, " + t1.shape().str() + " vs " +
                     t2.shape().str());
  }
  RunResult result = run_net(net_, store_, {t1, t2});
  return result.at(score_);
}

std::pair<FeaturePyramid, FeaturePyramid> LsNet::pyramids(const Tensor& t1, const Tensor& t2) {
  if (!t1.same_shape(t2)) {
    throw ShapeError("LsNet::pyramids: stream shapes differ, " + t1.shape().str() + " vs " +
                     t2.shape().str());
  }
  RunOptions opts;
  for (int s = 0; s < 2; ++s) {
    for (int l = 0; l < 4; ++l) opts.targets.push_back(pyramids_[s][l]);
  }
  RunResult result = run_net(net_, store_, {t1, t2}, opts);
  FeaturePyramid p1, p2;
  for (int l = 0; l < 4; ++l) {
    p1.levels[l] = result.at(pyramids_[0][l]);
    p2.levels[l] = result.at(pyramids_[1][l]);
  }
  return {std::move(p1), std::move(p2)};
}

// ---------------------------------------------------------------------------
// Audit
// ---------------------------------------------------------------------------

int FpnAudit::arity_of(const std::string& name) const {
  for (const auto& [n, a] : arity) {
    if (n == name) return a;
  }
  throw std::out_of_range("FpnAudit: no fusion block named '" + name + "'");
}

FpnAudit audit_fpn(const LsNet& model) {
  FpnAudit audit;
  const NetGraph& net = model.net();

  for (const FusionBlock& block : model.fusion_blocks()) {
    if (block.concat_node >= 0) {
      audit.arity.emplace_back(block.name,
                               static_cast<int>(net.nodes[block.concat_node].inputs.size()));
    }
    // A block consumes a pyramid feature when any node inside it reads the
    // feature's tap from outside the block.
    std::set<int> seen;
    for (int id = block.first_node; id <= block.last_node; ++id) {
      for (int in : net.nodes[id].inputs) {
        if (in >= block.first_node) continue;
        seen.insert(in);
      }
    }
    for (int stream = 0; stream < 2; ++stream) {
      for (int level = 0; level < 4; ++level) {
        if (seen.count(model.pyramid_node(stream, level)) > 0) {
          ++audit.pyramid_consumers[stream][level];
        }
      }
    }
  }
  return audit;
}

}  // namespace lsnet
