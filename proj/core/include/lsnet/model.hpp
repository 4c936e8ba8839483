#pragma once

#include <array>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "lsnet/net_graph.hpp"
#include "lsnet/tensor.hpp"

namespace lsnet {

/// Context guide block configuration. The block reduces to C/2 channels,
/// runs parallel local (dilation 1) and surrounding (dilation `dilation`)
/// depthwise 3x3 branches, joins them by concatenation + BN + PReLU, and
/// gates the joint feature with a global-context attention bottleneck
/// (C -> C/reduction -> C). Non-downsample blocks add the residual input.
struct CgbSpec {
  int in_channels = 0;  // equals channels for residual blocks
  int channels = 0;     // C; must be even
  int dilation = 2;     // surrounding-branch dilation, >= 2
  int reduction = 16;   // attention bottleneck ratio, divides C
  bool downsample = false;

  void validate() const;
};

/// Weight-shared two-stream backbone: a strided stem followed by four CGB
/// stages. Stage s emits its feature at stride 2^(s+1); each CGB counts as
/// two levels, so (3, 3, 8, 12) blocks give the canonical 52-level network.
struct BackboneSpec {
  std::array<int, 4> stage_blocks{3, 3, 8, 12};
  std::array<int, 4> stage_channels{32, 64, 128, 256};
  std::array<int, 4> stage_dilations{2, 2, 4, 4};
  int attention_reduction = 16;
  int in_channels = 3;
  int stem_kernel = 3;
  int stem_stride = 2;

  void validate() const;
  int level_count() const;  // 2 * sum(stage_blocks)
};

enum class FpnVariant { Dense, Diff };

const char* fpn_variant_name(FpnVariant v);
FpnVariant fpn_variant_from_name(const std::string& name);

/// Fusion graph configuration. fusion_channels[l] is the width of fusion
/// nodes sitting on the plane of pyramid level l. head_channels records the
/// width of the prediction head's concatenated input; 0 derives it as
/// fusion_channels[0] + fusion_channels[1] + fusion_channels[2].
struct FpnSpec {
  FpnVariant variant = FpnVariant::Diff;
  std::array<int, 4> fusion_channels{32, 32, 32, 32};
  int head_channels = 0;

  int derived_head_channels() const {
    return fusion_channels[0] + fusion_channels[1] + fusion_channels[2];
  }
  void validate() const;
};

struct ModelSpec {
  std::string name = "lsnet";
  BackboneSpec backbone;
  FpnSpec fpn;
  std::uint64_t init_seed = 42;

  void validate() const;
};

/// The four per-stage features of one temporal stream, strides 2/4/8/16.
struct FeaturePyramid {
  std::array<Tensor, 4> levels;
};

// ---------------------------------------------------------------------------
// Graph builders
// ---------------------------------------------------------------------------

/// Shared builder state. The RNG drives Kaiming-uniform weight init; a
/// parameter name that already exists in the store is reused instead of
/// recreated, which is how the second Siamese stream shares weights.
struct BuildCtx {
  NetGraph& net;
  ParamStore& store;
  std::mt19937_64 rng;
};

/// Appends one context guide block reading node `x`; returns its output id.
int build_cgb(BuildCtx& ctx, int x, const CgbSpec& spec, const std::string& prefix);

/// Appends a full backbone stream; returns the four stage tap node ids.
/// Parameters are created on the first call and shared on later ones.
std::array<int, 4> build_backbone_stream(BuildCtx& ctx, int input, const BackboneSpec& spec,
                                         const std::string& stream_tag);

/// One fusion block: resample-to-plane + concat + 3x3 conv + BN + PReLU.
struct FusionBlock {
  std::string name;
  int first_node = 0;  // node id range [first_node, last_node]
  int last_node = 0;
  int concat_node = -1;  // -1 for unary refinement blocks
  int result = -1;
  int level = 0;  // plane: stride 2^(level+1)
};

struct FpnOutputs {
  int d00 = -1, d10 = -1, d20 = -1;
  std::vector<FusionBlock> blocks;
};

FpnOutputs build_dense_fpn(BuildCtx& ctx, const std::array<int, 4>& pyr1,
                           const std::array<int, 4>& pyr2, const FpnSpec& spec);
FpnOutputs build_diff_fpn(BuildCtx& ctx, const std::array<int, 4>& pyr1,
                          const std::array<int, 4>& pyr2, const FpnSpec& spec);

/// Prediction head: upsample d10/d20 to the d00 plane, concat, 1x1 conv to
/// one channel, sigmoid, then bilinear upsample to input resolution.
int build_head(BuildCtx& ctx, int d00, int d10, int d20, const FpnSpec& spec);

/// Identity-f attention gate (test hook): sigmoid of the per-channel global
/// average, bypassing the bottleneck layers.
Tensor cgb_attention_gate(const Tensor& joint);

// ---------------------------------------------------------------------------
// Model
// ---------------------------------------------------------------------------

/// A fully built LSNet: two weight-shared backbone streams, one fusion
/// graph (dense or diff variant) and the score head, over a single
/// parameter store.
class LsNet {
 public:
  explicit LsNet(ModelSpec spec);

  const ModelSpec& spec() const { return spec_; }
  const NetGraph& net() const { return net_; }
  NetGraph& net() { return net_; }
  const ParamStore& store() const { return store_; }
  ParamStore& store() { return store_; }
  const std::vector<FusionBlock>& fusion_blocks() const { return fusion_blocks_; }

  int score_node() const { return score_; }
  int pyramid_node(int stream, int level) const { return pyramids_[stream][level]; }
  int fusion_output(int i) const { return i == 0 ? d00_ : (i == 1 ? d10_ : d20_); }

  /// Eval-mode change score map in (0, 1), shape (n, 1, H, W).
  Tensor infer(const Tensor& t1, const Tensor& t2);

  /// Eval-mode backbone features for both streams.
  std::pair<FeaturePyramid, FeaturePyramid> pyramids(const Tensor& t1, const Tensor& t2);

 private:
  ModelSpec spec_;
  NetGraph net_;
  ParamStore store_;
  std::array<std::array<int, 4>, 2> pyramids_{};
  std::vector<FusionBlock> fusion_blocks_;
  int d00_ = -1, d10_ = -1, d20_ = -1;
  int score_ = -1;
};

// ---------------------------------------------------------------------------
// Structural audit
// ---------------------------------------------------------------------------

/// Fan-out of each backbone feature into the fusion graph and the concat
/// arity of every fusion block; a block counts once per feature no matter
/// how many of its internal ops read it.
struct FpnAudit {
  std::array<std::array<int, 4>, 2> pyramid_consumers{};  // [stream][level]
  std::vector<std::pair<std::string, int>> arity;         // (block name, concat arity)

  int arity_of(const std::string& name) const;
};

FpnAudit audit_fpn(const LsNet& model);

}  // namespace lsnet
