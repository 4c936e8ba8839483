#pragma once

#include <atomic>
#include <cstdint>
#include <optional>
#include <vector>

#include "lsnet/tensor.hpp"

namespace lsnet {

/// 2-D convolution description.
///
/// Convolutions are cross-correlations (no kernel flip) with zero padding,
/// the usual deep-learning convention. Each output element accumulates in a
/// single float32 register over (in-channel, kernel-row, kernel-col) in
/// ascending order, so results are reproducible bit-for-bit regardless of
/// the thread count.
struct ConvSpec {
  int in_channels = 0;
  int out_channels = 0;
  int kernel_h = 1;
  int kernel_w = 1;
  int stride = 1;
  int padding = 0;
  int dilation = 1;
  int groups = 1;
  bool has_bias = false;

  /// Throws ValueError/ShapeError when the spec is malformed
  /// (non-divisible groups, non-positive stride/dilation, ...).
  void validate() const;

  bool is_depthwise() const {
    return groups == in_channels && groups == out_channels && groups > 1;
  }

  int out_dim(int in_dim) const {
    return (in_dim + 2 * padding - dilation * (kernel_h - 1) - 1) / stride + 1;
  }
  int out_h(int in_h) const {
    return (in_h + 2 * padding - dilation * (kernel_h - 1) - 1) / stride + 1;
  }
  int out_w(int in_w) const {
    return (in_w + 2 * padding - dilation * (kernel_w - 1) - 1) / stride + 1;
  }

  /// Expected weight shape: (Cy, Cx/groups, Hk, Wk).
  TensorShape weight_shape() const {
    return TensorShape{out_channels, in_channels / groups, kernel_h, kernel_w};
  }
};

// ---------------------------------------------------------------------------
// Multiply-accumulate metering
// ---------------------------------------------------------------------------

/// While a MacCounterScope is alive on a thread, every convolution kernel
/// invoked from that thread (any thread it spawns included) adds one count
/// per kernel tap, padding taps included. Used by the profiler's measured
/// cost oracle.
class MacCounterScope {
 public:
  MacCounterScope();
  ~MacCounterScope();
  MacCounterScope(const MacCounterScope&) = delete;
  MacCounterScope& operator=(const MacCounterScope&) = delete;

  std::uint64_t macs() const { return count_.load(std::memory_order_relaxed); }

 private:
  std::atomic<std::uint64_t>* prev_ = nullptr;
  std::atomic<std::uint64_t> count_{0};
};

namespace detail {
void add_macs(std::uint64_t n);
}

// ---------------------------------------------------------------------------
// Forward kernels
// ---------------------------------------------------------------------------

/// General grouped/dilated convolution. weight: (Cy, Cx/groups, Hk, Wk),
/// optional bias: (Cy). Output spatial size must be >= 1.
Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor* bias,
              const ConvSpec& spec);

/// Per-channel convolution, weight: (C, 1, Hk, Wk). Requires
/// groups == in_channels == out_channels; equal to conv2d with the
/// corresponding block-diagonal weight, bit for bit.
Tensor depthwise_conv2d(const Tensor& input, const Tensor& weight, const Tensor* bias,
                        const ConvSpec& spec);

/// Per-channel batch statistics captured by a training-mode forward pass;
/// needed again by the backward pass.
struct BnBatchStats {
  std::vector<float> mean;
  std::vector<float> var;  // biased (divide by N)
};

/// Batch normalization. In training mode normalizes with batch statistics
/// (biased variance) and updates running_mean/running_var in place by
/// `momentum`; in eval mode uses the running statistics. gamma/beta/
/// running_* all have length C.
Tensor batch_norm(const Tensor& input, const Tensor& gamma, const Tensor& beta,
                  Tensor& running_mean, Tensor& running_var, float eps, float momentum,
                  bool training, BnBatchStats* saved = nullptr);

Tensor relu(const Tensor& input);
Tensor prelu(const Tensor& input, float slope);
/// Elementwise logistic; outputs are clamped into (0, 1) so the open-range
/// invariant holds even where float rounding would saturate.
Tensor sigmoid(const Tensor& input);

/// (n, c, h, w) -> (n, c, 1, 1); each value is the mean over h*w.
Tensor global_avg_pool(const Tensor& input);

/// Non-overlapping k x k mean pooling (stride = k); requires h, w divisible by k.
Tensor avg_pool(const Tensor& input, int k);

/// Max pooling with explicit stride/padding (negative infinity padding).
Tensor max_pool(const Tensor& input, int k, int stride, int padding);

/// Bilinear upsampling by an integer factor >= 2, align_corners=false
/// (sample points at (i + 0.5)/scale - 0.5, clamped to the input extent).
Tensor upsample_bilinear(const Tensor& input, int scale);

/// Channel concatenation; inputs must agree on n, h, w.
Tensor concat_channels(const std::vector<const Tensor*>& inputs);

/// Channels [c0, c1) of the input as a new tensor.
Tensor slice_channels(const Tensor& input, int c0, int c1);

Tensor add(const Tensor& a, const Tensor& b);
Tensor abs_diff(const Tensor& a, const Tensor& b);

/// out[n,c,h,w] = x[n,c,h,w] * gate[n,c,0,0]; gate shape (n, c, 1, 1).
Tensor scale_channels(const Tensor& x, const Tensor& gate);

// ---------------------------------------------------------------------------
// Backward kernels (vector-Jacobian products)
// ---------------------------------------------------------------------------

struct ConvGrads {
  Tensor input;
  Tensor weight;
  std::optional<Tensor> bias;
};

ConvGrads conv2d_backward(const Tensor& grad_out, const Tensor& input, const Tensor& weight,
                          bool has_bias, const ConvSpec& spec);

struct BnGrads {
  Tensor input;
  Tensor gamma;
  Tensor beta;
};

BnGrads batch_norm_backward(const Tensor& grad_out, const Tensor& input, const Tensor& gamma,
                            const BnBatchStats& stats, float eps);

/// Eval-mode variant: running statistics are constants.
BnGrads batch_norm_backward_eval(const Tensor& grad_out, const Tensor& input, const Tensor& gamma,
                                 const Tensor& running_mean, const Tensor& running_var, float eps);

Tensor relu_backward(const Tensor& grad_out, const Tensor& input);
Tensor prelu_backward(const Tensor& grad_out, const Tensor& input, float slope);
/// `output` is the forward result (sigma(x)); grad = g * s * (1 - s).
Tensor sigmoid_backward(const Tensor& grad_out, const Tensor& output);

Tensor global_avg_pool_backward(const Tensor& grad_out, const TensorShape& in_shape);
Tensor avg_pool_backward(const Tensor& grad_out, const TensorShape& in_shape, int k);
Tensor upsample_bilinear_backward(const Tensor& grad_out, const TensorShape& in_shape, int scale);

/// Splits the gradient of a concatenation back into per-input slices.
std::vector<Tensor> concat_channels_backward(const Tensor& grad_out,
                                             const std::vector<TensorShape>& in_shapes);

/// d|a-b|/da = sign(a-b) (0 at a == b); the b gradient is its negation.
std::pair<Tensor, Tensor> abs_diff_backward(const Tensor& grad_out, const Tensor& a,
                                            const Tensor& b);

std::pair<Tensor, Tensor> scale_channels_backward(const Tensor& grad_out, const Tensor& x,
                                                  const Tensor& gate);

}  // namespace lsnet
