#include "lsnet/ops.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <string>

#include "lsnet/threading.hpp"

namespace lsnet {

namespace {

thread_local std::atomic<std::uint64_t>* t_mac_sink = nullptr;

// parallel_for that carries the calling thread's MAC sink into the workers.
void par_for(std::int64_t count, const std::function<void(std::int64_t, std::int64_t)>& fn) {
  std::atomic<std::uint64_t>* sink = t_mac_sink;
  parallel_for(count, [sink, &fn](std::int64_t b, std::int64_t e) {
    std::atomic<std::uint64_t>* prev = t_mac_sink;
    t_mac_sink = sink;
    fn(b, e);
    t_mac_sink = prev;
  });
}

int ceil_div(int a, int b) { return (a + b - 1) / b; }

void check_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) {
    throw ShapeError(std::string(op) + ": shape mismatch " + a.shape().str() + " vs " +
                     b.shape().str());
  }
}

// Largest float below 1; keeps sigmoid strictly inside (0, 1).
constexpr float kSigmoidMax = 1.0f - 0x1p-24f;
constexpr float kSigmoidMin = std::numeric_limits<float>::min();

float sigmoid_scalar(float x) {
  float y;
  if (x >= 0.0f) {
    y = 1.0f / (1.0f + std::exp(-x));
  } else {
    const float e = std::exp(x);
    y = e / (1.0f + e);
  }
  return std::clamp(y, kSigmoidMin, kSigmoidMax);
}

}  // namespace

MacCounterScope::MacCounterScope() : prev_(t_mac_sink) { t_mac_sink = &count_; }
MacCounterScope::~MacCounterScope() { t_mac_sink = prev_; }

namespace detail {
void add_macs(std::uint64_t n) {
  if (t_mac_sink != nullptr) t_mac_sink->fetch_add(n, std::memory_order_relaxed);
}
}  // namespace detail

void ConvSpec::validate() const {
  if (in_channels <= 0 || out_channels <= 0) {
    throw ValueError("conv: channel counts must be positive, got in=" +
                     std::to_string(in_channels) + " out=" + std::to_string(out_channels));
  }
  if (kernel_h <= 0 || kernel_w <= 0) {
    throw ValueError("conv: kernel extents must be positive, got " + std::to_string(kernel_h) +
                     "x" + std::to_string(kernel_w));
  }
  if (stride < 1) throw ValueError("conv: stride must be >= 1, got " + std::to_string(stride));
  if (dilation < 1) {
    throw ValueError("conv: dilation must be >= 1, got " + std::to_string(dilation));
  }
  if (padding < 0) throw ValueError("conv: padding must be >= 0, got " + std::to_string(padding));
  if (groups < 1) throw ValueError("conv: groups must be >= 1, got " + std::to_string(groups));
  if (in_channels % groups != 0) {
    throw ValueError("conv: in_channels " + std::to_string(in_channels) +
                     " not divisible by groups " + std::to_string(groups));
  }
  if (out_channels % groups != 0) {
    throw ValueError("conv: out_channels " + std::to_string(out_channels) +
                     " not divisible by groups " + std::to_string(groups));
  }
}

namespace {

void check_conv_args(const Tensor& input, const Tensor& weight, const Tensor* bias,
                     const ConvSpec& spec) {
  spec.validate();
  if (input.shape().c != spec.in_channels) {
    throw ShapeError("conv2d: input has " + std::to_string(input.shape().c) +
                     " channels, spec expects " + std::to_string(spec.in_channels));
  }
  if (weight.shape() != spec.weight_shape()) {
    throw ShapeError("conv2d: weight shape " + weight.shape().str() + " does not match spec " +
                     spec.weight_shape().str());
  }
  if (spec.has_bias) {
    if (bias == nullptr) throw ShapeError("conv2d: spec.has_bias set but no bias given");
    const TensorShape want{1, spec.out_channels, 1, 1};
    if (bias->numel() != static_cast<std::size_t>(spec.out_channels)) {
      throw ShapeError("conv2d: bias has " + std::to_string(bias->numel()) +
                       " values, expected " + std::to_string(spec.out_channels));
    }
    (void)want;
  } else if (bias != nullptr) {
    throw ShapeError("conv2d: bias given but spec.has_bias is false");
  }
}

}  // namespace

Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor* bias,
              const ConvSpec& spec) {
  check_conv_args(input, weight, bias, spec);
  const int N = input.shape().n;
  const int H = input.shape().h;
  const int W = input.shape().w;
  const int Ho = spec.out_h(H);
  const int Wo = spec.out_w(W);
  if (Ho < 1 || Wo < 1) {
    throw ShapeError("conv2d: non-positive output size " + std::to_string(Ho) + "x" +
                     std::to_string(Wo) + " for input " + input.shape().str());
  }
  const int Cy = spec.out_channels;
  const int Cg = spec.in_channels / spec.groups;   // input channels per group
  const int Kc = spec.out_channels / spec.groups;  // output channels per group
  const int Hk = spec.kernel_h;
  const int Wk = spec.kernel_w;
  const int s = spec.stride;
  const int p = spec.padding;
  const int d = spec.dilation;

  Tensor out(TensorShape{N, Cy, Ho, Wo});

  // Pointwise stride-1 convolution reduces to per-channel axpy.
  const bool pointwise = (Hk == 1 && Wk == 1 && s == 1 && p == 0);

  par_for(static_cast<std::int64_t>(N) * Cy, [&](std::int64_t b, std::int64_t e) {
    std::uint64_t taps = 0;
    for (std::int64_t item = b; item < e; ++item) {
      const int n = static_cast<int>(item / Cy);
      const int cy = static_cast<int>(item % Cy);
      const int g = cy / Kc;
      const float* wbase = weight.ptr() + static_cast<std::size_t>(cy) * Cg * Hk * Wk;
      float* oplane = out.plane(n, cy);

      if (pointwise) {
        const std::size_t hw = static_cast<std::size_t>(H) * W;
        for (int ci = 0; ci < Cg; ++ci) {
          const float wv = wbase[ci];
          const float* xp = input.plane(n, g * Cg + ci);
          for (std::size_t i = 0; i < hw; ++i) {
            ++taps;
            oplane[i] += wv * xp[i];
          }
        }
      } else {
        // Output columns whose full receptive field lies inside the image.
        const int ow_lo = std::min(Wo, std::max(0, ceil_div(p, s)));
        const int ow_hi = std::min(Wo, std::max(ow_lo, (W - 1 - (Wk - 1) * d + p) / s + 1));
        for (int oh = 0; oh < Ho; ++oh) {
          const int ih0 = oh * s - p;
          const bool oh_interior = ih0 >= 0 && ih0 + (Hk - 1) * d < H;
          float* orow = oplane + static_cast<std::size_t>(oh) * Wo;

          auto accum_checked = [&](int ow) {
            const int iw0 = ow * s - p;
            float acc = 0.0f;
            for (int ci = 0; ci < Cg; ++ci) {
              const float* xp = input.plane(n, g * Cg + ci);
              const float* wp = wbase + static_cast<std::size_t>(ci) * Hk * Wk;
              for (int kh = 0; kh < Hk; ++kh) {
                const int ih = ih0 + kh * d;
                const bool row_ok = static_cast<unsigned>(ih) < static_cast<unsigned>(H);
                const float* xrow = row_ok ? xp + static_cast<std::size_t>(ih) * W : nullptr;
                const float* wrow = wp + static_cast<std::size_t>(kh) * Wk;
                for (int kw = 0; kw < Wk; ++kw) {
                  ++taps;
                  const int iw = iw0 + kw * d;
                  if (row_ok && static_cast<unsigned>(iw) < static_cast<unsigned>(W)) {
                    acc += wrow[kw] * xrow[iw];
                  }
                }
              }
            }
            orow[ow] = acc;
          };

          if (!oh_interior) {
            for (int ow = 0; ow < Wo; ++ow) accum_checked(ow);
            continue;
          }
          for (int ow = 0; ow < ow_lo; ++ow) accum_checked(ow);
          for (int ow = ow_lo; ow < ow_hi; ++ow) {
            const int iw0 = ow * s - p;
            float acc = 0.0f;
            for (int ci = 0; ci < Cg; ++ci) {
              const float* xp = input.plane(n, g * Cg + ci) +
                                static_cast<std::size_t>(ih0) * W + iw0;
              const float* wp = wbase + static_cast<std::size_t>(ci) * Hk * Wk;
              for (int kh = 0; kh < Hk; ++kh) {
                const float* xrow = xp + static_cast<std::size_t>(kh) * d * W;
                const float* wrow = wp + static_cast<std::size_t>(kh) * Wk;
                for (int kw = 0; kw < Wk; ++kw) {
                  ++taps;
                  acc += wrow[kw] * xrow[kw * d];
                }
              }
            }
            orow[ow] = acc;
          }
          for (int ow = ow_hi; ow < Wo; ++ow) accum_checked(ow);
        }
      }

      if (spec.has_bias) {
        const float bv = bias->ptr()[cy];
        const std::size_t hw = static_cast<std::size_t>(Ho) * Wo;
        for (std::size_t i = 0; i < hw; ++i) oplane[i] += bv;
      }
    }
    detail::add_macs(taps);
  });
  return out;
}

Tensor depthwise_conv2d(const Tensor& input, const Tensor& weight, const Tensor* bias,
                        const ConvSpec& spec) {
  if (!(spec.groups == spec.in_channels && spec.groups == spec.out_channels)) {
    throw ValueError("depthwise_conv2d: requires groups == in_channels == out_channels, got "
                     "groups=" + std::to_string(spec.groups) +
                     " in=" + std::to_string(spec.in_channels) +
                     " out=" + std::to_string(spec.out_channels));
  }
  // With one input channel per group the general kernel is exactly the
  // per-channel loop, so the two entry points match bit for bit.
  return conv2d(input, weight, bias, spec);
}

ConvGrads conv2d_backward(const Tensor& grad_out, const Tensor& input, const Tensor& weight,
                          bool has_bias, const ConvSpec& spec) {
  spec.validate();
  const int N = input.shape().n;
  const int H = input.shape().h;
  const int W = input.shape().w;
  const int Ho = spec.out_h(H);
  const int Wo = spec.out_w(W);
  const int Cy = spec.out_channels;
  const int Cx = spec.in_channels;
  const int Cg = Cx / spec.groups;
  const int Kc = Cy / spec.groups;
  const int Hk = spec.kernel_h;
  const int Wk = spec.kernel_w;
  const int s = spec.stride;
  const int p = spec.padding;
  const int d = spec.dilation;
  if (grad_out.shape() != TensorShape{N, Cy, Ho, Wo}) {
    throw ShapeError("conv2d_backward: grad shape " + grad_out.shape().str() +
                     " does not match forward output " + TensorShape{N, Cy, Ho, Wo}.str());
  }

  ConvGrads grads;
  grads.weight = Tensor(weight.shape());
  grads.input = Tensor(input.shape());
  if (has_bias) grads.bias = Tensor(TensorShape{1, Cy, 1, 1});

  // Weight (and bias) gradient: one worker per output channel so each
  // accumulator has a single writer iterating (n, oh, ow) in order.
  par_for(Cy, [&](std::int64_t b, std::int64_t e) {
    for (int cy = static_cast<int>(b); cy < static_cast<int>(e); ++cy) {
      const int g = cy / Kc;
      float* wg = grads.weight.ptr() + static_cast<std::size_t>(cy) * Cg * Hk * Wk;
      double bias_acc = 0.0;
      for (int n = 0; n < N; ++n) {
        const float* gplane = grad_out.plane(n, cy);
        for (int oh = 0; oh < Ho; ++oh) {
          const int ih0 = oh * s - p;
          for (int ow = 0; ow < Wo; ++ow) {
            const float gv = gplane[static_cast<std::size_t>(oh) * Wo + ow];
            bias_acc += gv;
            if (gv == 0.0f) continue;
            const int iw0 = ow * s - p;
            for (int ci = 0; ci < Cg; ++ci) {
              const float* xp = input.plane(n, g * Cg + ci);
              float* wrow = wg + static_cast<std::size_t>(ci) * Hk * Wk;
              for (int kh = 0; kh < Hk; ++kh) {
                const int ih = ih0 + kh * d;
                if (static_cast<unsigned>(ih) >= static_cast<unsigned>(H)) continue;
                const float* xrow = xp + static_cast<std::size_t>(ih) * W;
                for (int kw = 0; kw < Wk; ++kw) {
                  const int iw = iw0 + kw * d;
                  if (static_cast<unsigned>(iw) >= static_cast<unsigned>(W)) continue;
                  wrow[static_cast<std::size_t>(kh) * Wk + kw] += gv * xrow[iw];
                }
              }
            }
          }
        }
      }
      if (has_bias) grads.bias->ptr()[cy] = static_cast<float>(bias_acc);
    }
  });

  // Input gradient in gather form: each input element sums the output
  // positions its value contributed to.
  par_for(static_cast<std::int64_t>(N) * Cx, [&](std::int64_t b, std::int64_t e) {
    for (std::int64_t item = b; item < e; ++item) {
      const int n = static_cast<int>(item / Cx);
      const int cx = static_cast<int>(item % Cx);
      const int g = cx / Cg;
      const int ci = cx % Cg;
      float* iplane = grads.input.plane(n, cx);
      for (int ih = 0; ih < H; ++ih) {
        for (int iw = 0; iw < W; ++iw) {
          float acc = 0.0f;
          for (int kc = 0; kc < Kc; ++kc) {
            const int cy = g * Kc + kc;
            const float* gplane = grad_out.plane(n, cy);
            const float* wp = weight.ptr() +
                              (static_cast<std::size_t>(cy) * Cg + ci) * Hk * Wk;
            for (int kh = 0; kh < Hk; ++kh) {
              const int th = ih + p - kh * d;
              if (th < 0 || th % s != 0) continue;
              const int oh = th / s;
              if (oh >= Ho) continue;
              for (int kw = 0; kw < Wk; ++kw) {
                const int tw = iw + p - kw * d;
                if (tw < 0 || tw % s != 0) continue;
                const int ow = tw / s;
                if (ow >= Wo) continue;
                acc += gplane[static_cast<std::size_t>(oh) * Wo + ow] *
                       wp[static_cast<std::size_t>(kh) * Wk + kw];
              }
            }
          }
          iplane[static_cast<std::size_t>(ih) * W + iw] = acc;
        }
      }
    }
  });

  return grads;
}

Tensor batch_norm(const Tensor& input, const Tensor& gamma, const Tensor& beta,
                  Tensor& running_mean, Tensor& running_var, float eps, float momentum,
                  bool training, BnBatchStats* saved) {
  const int N = input.shape().n;
  const int C = input.shape().c;
  const int H = input.shape().h;
  const int W = input.shape().w;
  auto check_c = [&](const Tensor& t, const char* what) {
    if (t.numel() != static_cast<std::size_t>(C)) {
      throw ShapeError(std::string("batch_norm: ") + what + " has " +
                       std::to_string(t.numel()) + " values, expected C=" + std::to_string(C));
    }
  };
  check_c(gamma, "gamma");
  check_c(beta, "beta");
  check_c(running_mean, "running_mean");
  check_c(running_var, "running_var");

  Tensor out(input.shape());
  if (saved != nullptr) {
    saved->mean.assign(C, 0.0f);
    saved->var.assign(C, 0.0f);
  }
  const std::size_t plane_sz = static_cast<std::size_t>(H) * W;
  const double count = static_cast<double>(N) * plane_sz;

  par_for(C, [&](std::int64_t b, std::int64_t e) {
    for (int c = static_cast<int>(b); c < static_cast<int>(e); ++c) {
      float mean, var;
      if (training) {
        double sum = 0.0, sum_sq = 0.0;
        for (int n = 0; n < N; ++n) {
          const float* xp = input.plane(n, c);
          for (std::size_t i = 0; i < plane_sz; ++i) {
            sum += xp[i];
            sum_sq += static_cast<double>(xp[i]) * xp[i];
          }
        }
        const double m = sum / count;
        const double v = std::max(0.0, sum_sq / count - m * m);
        mean = static_cast<float>(m);
        var = static_cast<float>(v);
        running_mean.ptr()[c] = (1.0f - momentum) * running_mean.ptr()[c] + momentum * mean;
        running_var.ptr()[c] = (1.0f - momentum) * running_var.ptr()[c] + momentum * var;
        if (saved != nullptr) {
          saved->mean[c] = mean;
          saved->var[c] = var;
        }
      } else {
        mean = running_mean.ptr()[c];
        var = running_var.ptr()[c];
      }
      const float inv_std = 1.0f / std::sqrt(var + eps);
      const float gscale = gamma.ptr()[c] * inv_std;
      const float shift = beta.ptr()[c] - gscale * mean;
      for (int n = 0; n < N; ++n) {
        const float* xp = input.plane(n, c);
        float* op = out.plane(n, c);
        for (std::size_t i = 0; i < plane_sz; ++i) op[i] = gscale * xp[i] + shift;
      }
    }
  });
  return out;
}

BnGrads batch_norm_backward(const Tensor& grad_out, const Tensor& input, const Tensor& gamma,
                            const BnBatchStats& stats, float eps) {
  check_same_shape("batch_norm_backward", grad_out, input);
  const int N = input.shape().n;
  const int C = input.shape().c;
  const std::size_t plane_sz = static_cast<std::size_t>(input.shape().h) * input.shape().w;
  const double count = static_cast<double>(N) * plane_sz;

  BnGrads grads;
  grads.input = Tensor(input.shape());
  grads.gamma = Tensor(TensorShape{1, C, 1, 1});
  grads.beta = Tensor(TensorShape{1, C, 1, 1});

  par_for(C, [&](std::int64_t b, std::int64_t e) {
    for (int c = static_cast<int>(b); c < static_cast<int>(e); ++c) {
      const float mean = stats.mean[c];
      const float inv_std = 1.0f / std::sqrt(stats.var[c] + eps);
      double sum_g = 0.0, sum_gx = 0.0;
      for (int n = 0; n < N; ++n) {
        const float* gp = grad_out.plane(n, c);
        const float* xp = input.plane(n, c);
        for (std::size_t i = 0; i < plane_sz; ++i) {
          sum_g += gp[i];
          sum_gx += static_cast<double>(gp[i]) * ((xp[i] - mean) * inv_std);
        }
      }
      grads.beta.ptr()[c] = static_cast<float>(sum_g);
      grads.gamma.ptr()[c] = static_cast<float>(sum_gx);
      const float gscale = gamma.ptr()[c] * inv_std;
      const float mg = static_cast<float>(sum_g / count);
      const float mgx = static_cast<float>(sum_gx / count);
      for (int n = 0; n < N; ++n) {
        const float* gp = grad_out.plane(n, c);
        const float* xp = input.plane(n, c);
        float* ip = grads.input.plane(n, c);
        for (std::size_t i = 0; i < plane_sz; ++i) {
          const float xhat = (xp[i] - mean) * inv_std;
          ip[i] = gscale * (gp[i] - mg - xhat * mgx);
        }
      }
    }
  });
  return grads;
}

BnGrads batch_norm_backward_eval(const Tensor& grad_out, const Tensor& input, const Tensor& gamma,
                                 const Tensor& running_mean, const Tensor& running_var,
                                 float eps) {
  check_same_shape("batch_norm_backward_eval", grad_out, input);
  const int N = input.shape().n;
  const int C = input.shape().c;
  const std::size_t plane_sz = static_cast<std::size_t>(input.shape().h) * input.shape().w;

  BnGrads grads;
  grads.input = Tensor(input.shape());
  grads.gamma = Tensor(TensorShape{1, C, 1, 1});
  grads.beta = Tensor(TensorShape{1, C, 1, 1});

  par_for(C, [&](std::int64_t b, std::int64_t e) {
    for (int c = static_cast<int>(b); c < static_cast<int>(e); ++c) {
      const float mean = running_mean.ptr()[c];
      const float inv_std = 1.0f / std::sqrt(running_var.ptr()[c] + eps);
      const float gscale = gamma.ptr()[c] * inv_std;
      double sum_g = 0.0, sum_gx = 0.0;
      for (int n = 0; n < N; ++n) {
        const float* gp = grad_out.plane(n, c);
        const float* xp = input.plane(n, c);
        float* ip = grads.input.plane(n, c);
        for (std::size_t i = 0; i < plane_sz; ++i) {
          sum_g += gp[i];
          sum_gx += static_cast<double>(gp[i]) * ((xp[i] - mean) * inv_std);
          ip[i] = gp[i] * gscale;
        }
      }
      grads.beta.ptr()[c] = static_cast<float>(sum_g);
      grads.gamma.ptr()[c] = static_cast<float>(sum_gx);
    }
  });
  return grads;
}

Tensor relu(const Tensor& input) {
  Tensor out(input.shape());
  auto x = input.data();
  auto y = out.data();
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] > 0.0f ? x[i] : 0.0f;
  return out;
}

Tensor prelu(const Tensor& input, float slope) {
  Tensor out(input.shape());
  auto x = input.data();
  auto y = out.data();
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] > 0.0f ? x[i] : slope * x[i];
  return out;
}

Tensor sigmoid(const Tensor& input) {
  Tensor out(input.shape());
  auto x = input.data();
  auto y = out.data();
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = sigmoid_scalar(x[i]);
  return out;
}

Tensor relu_backward(const Tensor& grad_out, const Tensor& input) {
  check_same_shape("relu_backward", grad_out, input);
  Tensor out(input.shape());
  auto g = grad_out.data();
  auto x = input.data();
  auto y = out.data();
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] > 0.0f ? g[i] : 0.0f;
  return out;
}

Tensor prelu_backward(const Tensor& grad_out, const Tensor& input, float slope) {
  check_same_shape("prelu_backward", grad_out, input);
  Tensor out(input.shape());
  auto g = grad_out.data();
  auto x = input.data();
  auto y = out.data();
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] > 0.0f ? g[i] : slope * g[i];
  return out;
}

Tensor sigmoid_backward(const Tensor& grad_out, const Tensor& output) {
  check_same_shape("sigmoid_backward", grad_out, output);
  Tensor out(output.shape());
  auto g = grad_out.data();
  auto s = output.data();
  auto y = out.data();
  for (std::size_t i = 0; i < s.size(); ++i) y[i] = g[i] * s[i] * (1.0f - s[i]);
  return out;
}

Tensor global_avg_pool(const Tensor& input) {
  const auto& sh = input.shape();
  if (sh.h < 1 || sh.w < 1) {
    throw ShapeError("global_avg_pool: empty spatial extent " + sh.str());
  }
  Tensor out(TensorShape{sh.n, sh.c, 1, 1});
  const std::size_t plane_sz = static_cast<std::size_t>(sh.h) * sh.w;
  const float inv = 1.0f / static_cast<float>(plane_sz);
  for (int n = 0; n < sh.n; ++n) {
    for (int c = 0; c < sh.c; ++c) {
      const float* xp = input.plane(n, c);
      double sum = 0.0;
      for (std::size_t i = 0; i < plane_sz; ++i) sum += xp[i];
      out.at(n, c, 0, 0) = static_cast<float>(sum) * inv;
    }
  }
  return out;
}

Tensor global_avg_pool_backward(const Tensor& grad_out, const TensorShape& in_shape) {
  Tensor out(in_shape);
  const std::size_t plane_sz = static_cast<std::size_t>(in_shape.h) * in_shape.w;
  const float inv = 1.0f / static_cast<float>(plane_sz);
  for (int n = 0; n < in_shape.n; ++n) {
    for (int c = 0; c < in_shape.c; ++c) {
      const float g = grad_out.at(n, c, 0, 0) * inv;
      float* op = out.plane(n, c);
      for (std::size_t i = 0; i < plane_sz; ++i) op[i] = g;
    }
  }
  return out;
}

Tensor avg_pool(const Tensor& input, int k) {
  const auto& sh = input.shape();
  if (k < 1) throw ValueError("avg_pool: kernel must be >= 1, got " + std::to_string(k));
  if (sh.h % k != 0 || sh.w % k != 0) {
    throw ShapeError("avg_pool: spatial extent " + sh.str() + " not divisible by k=" +
                     std::to_string(k));
  }
  const int Ho = sh.h / k;
  const int Wo = sh.w / k;
  Tensor out(TensorShape{sh.n, sh.c, Ho, Wo});
  const float inv = 1.0f / static_cast<float>(k * k);
  for (int n = 0; n < sh.n; ++n) {
    for (int c = 0; c < sh.c; ++c) {
      const float* xp = input.plane(n, c);
      float* op = out.plane(n, c);
      for (int oh = 0; oh < Ho; ++oh) {
        for (int ow = 0; ow < Wo; ++ow) {
          float acc = 0.0f;
          for (int kh = 0; kh < k; ++kh) {
            const float* xrow = xp + (static_cast<std::size_t>(oh) * k + kh) * sh.w +
                                static_cast<std::size_t>(ow) * k;
            for (int kw = 0; kw < k; ++kw) acc += xrow[kw];
          }
          op[static_cast<std::size_t>(oh) * Wo + ow] = acc * inv;
        }
      }
    }
  }
  return out;
}

Tensor avg_pool_backward(const Tensor& grad_out, const TensorShape& in_shape, int k) {
  Tensor out(in_shape);
  const int Ho = in_shape.h / k;
  const int Wo = in_shape.w / k;
  const float inv = 1.0f / static_cast<float>(k * k);
  for (int n = 0; n < in_shape.n; ++n) {
    for (int c = 0; c < in_shape.c; ++c) {
      const float* gp = grad_out.plane(n, c);
      float* op = out.plane(n, c);
      for (int oh = 0; oh < Ho; ++oh) {
        for (int ow = 0; ow < Wo; ++ow) {
          const float g = gp[static_cast<std::size_t>(oh) * Wo + ow] * inv;
          for (int kh = 0; kh < k; ++kh) {
            float* orow = op + (static_cast<std::size_t>(oh) * k + kh) * in_shape.w +
                          static_cast<std::size_t>(ow) * k;
            for (int kw = 0; kw < k; ++kw) orow[kw] = g;
          }
        }
      }
    }
  }
  return out;
}

Tensor max_pool(const Tensor& input, int k, int stride, int padding) {
  const auto& sh = input.shape();
  const int Ho = (sh.h + 2 * padding - k) / stride + 1;
  const int Wo = (sh.w + 2 * padding - k) / stride + 1;
  if (Ho < 1 || Wo < 1) throw ShapeError("max_pool: non-positive output size");
  Tensor out(TensorShape{sh.n, sh.c, Ho, Wo});
  for (int n = 0; n < sh.n; ++n) {
    for (int c = 0; c < sh.c; ++c) {
      const float* xp = input.plane(n, c);
      float* op = out.plane(n, c);
      for (int oh = 0; oh < Ho; ++oh) {
        for (int ow = 0; ow < Wo; ++ow) {
          float best = -std::numeric_limits<float>::infinity();
          for (int kh = 0; kh < k; ++kh) {
            const int ih = oh * stride - padding + kh;
            if (static_cast<unsigned>(ih) >= static_cast<unsigned>(sh.h)) continue;
            for (int kw = 0; kw < k; ++kw) {
              const int iw = ow * stride - padding + kw;
              if (static_cast<unsigned>(iw) >= static_cast<unsigned>(sh.w)) continue;
              best = std::max(best, xp[static_cast<std::size_t>(ih) * sh.w + iw]);
            }
          }
          op[static_cast<std::size_t>(oh) * Wo + ow] = best;
        }
      }
    }
  }
  return out;
}

namespace {

struct LinearTap {
  int i0, i1;
  float w1;  // out = (1 - w1) * in[i0] + w1 * in[i1]
};

// align_corners=false source taps for one axis.
std::vector<LinearTap> bilinear_taps(int out_dim, int in_dim, int scale) {
  std::vector<LinearTap> taps(out_dim);
  for (int i = 0; i < out_dim; ++i) {
    const float src = (static_cast<float>(i) + 0.5f) / static_cast<float>(scale) - 0.5f;
    const float clamped = std::clamp(src, 0.0f, static_cast<float>(in_dim - 1));
    const int i0 = static_cast<int>(std::floor(clamped));
    const int i1 = std::min(i0 + 1, in_dim - 1);
    taps[i] = LinearTap{i0, i1, clamped - static_cast<float>(i0)};
  }
  return taps;
}

}  // namespace

Tensor upsample_bilinear(const Tensor& input, int scale) {
  if (scale < 2) throw ValueError("upsample_bilinear: scale must be >= 2, got " +
                                  std::to_string(scale));
  const auto& sh = input.shape();
  const int Ho = sh.h * scale;
  const int Wo = sh.w * scale;
  Tensor out(TensorShape{sh.n, sh.c, Ho, Wo});
  const auto ty = bilinear_taps(Ho, sh.h, scale);
  const auto tx = bilinear_taps(Wo, sh.w, scale);

  par_for(static_cast<std::int64_t>(sh.n) * sh.c, [&](std::int64_t b, std::int64_t e) {
    for (std::int64_t item = b; item < e; ++item) {
      const int n = static_cast<int>(item / sh.c);
      const int c = static_cast<int>(item % sh.c);
      const float* xp = input.plane(n, c);
      float* op = out.plane(n, c);
      for (int oh = 0; oh < Ho; ++oh) {
        const auto& y = ty[oh];
        const float* r0 = xp + static_cast<std::size_t>(y.i0) * sh.w;
        const float* r1 = xp + static_cast<std::size_t>(y.i1) * sh.w;
        float* orow = op + static_cast<std::size_t>(oh) * Wo;
        for (int ow = 0; ow < Wo; ++ow) {
          const auto& x = tx[ow];
          const float top = (1.0f - x.w1) * r0[x.i0] + x.w1 * r0[x.i1];
          const float bot = (1.0f - x.w1) * r1[x.i0] + x.w1 * r1[x.i1];
          orow[ow] = (1.0f - y.w1) * top + y.w1 * bot;
        }
      }
    }
  });
  return out;
}

Tensor upsample_bilinear_backward(const Tensor& grad_out, const TensorShape& in_shape,
                                  int scale) {
  Tensor out(in_shape);
  const int Ho = in_shape.h * scale;
  const int Wo = in_shape.w * scale;
  const auto ty = bilinear_taps(Ho, in_shape.h, scale);
  const auto tx = bilinear_taps(Wo, in_shape.w, scale);

  par_for(static_cast<std::int64_t>(in_shape.n) * in_shape.c,
          [&](std::int64_t b, std::int64_t e) {
            for (std::int64_t item = b; item < e; ++item) {
              const int n = static_cast<int>(item / in_shape.c);
              const int c = static_cast<int>(item % in_shape.c);
              const float* gp = grad_out.plane(n, c);
              float* op = out.plane(n, c);
              for (int oh = 0; oh < Ho; ++oh) {
                const auto& y = ty[oh];
                for (int ow = 0; ow < Wo; ++ow) {
                  const auto& x = tx[ow];
                  const float g = gp[static_cast<std::size_t>(oh) * Wo + ow];
                  op[static_cast<std::size_t>(y.i0) * in_shape.w + x.i0] +=
                      (1.0f - y.w1) * (1.0f - x.w1) * g;
                  op[static_cast<std::size_t>(y.i0) * in_shape.w + x.i1] +=
                      (1.0f - y.w1) * x.w1 * g;
                  op[static_cast<std::size_t>(y.i1) * in_shape.w + x.i0] +=
                      y.w1 * (1.0f - x.w1) * g;
                  op[static_cast<std::size_t>(y.i1) * in_shape.w + x.i1] += y.w1 * x.w1 * g;
                }
              }
            }
          });
  return out;
}

Tensor concat_channels(const std::vector<const Tensor*>& inputs) {
  if (inputs.empty()) throw ValueError("concat_channels: no inputs");
  const auto& first = inputs.front()->shape();
  int c_total = 0;
  for (const Tensor* t : inputs) {
    const auto& sh = t->shape();
    if (sh.n != first.n || sh.h != first.h || sh.w != first.w) {
      throw ShapeError("concat_channels: input " + sh.str() + " does not match " + first.str() +
                       " on (n, h, w)");
    }
    c_total += sh.c;
  }
  Tensor out(TensorShape{first.n, c_total, first.h, first.w});
  const std::size_t plane_sz = static_cast<std::size_t>(first.h) * first.w;
  for (int n = 0; n < first.n; ++n) {
    int c_off = 0;
    for (const Tensor* t : inputs) {
      for (int c = 0; c < t->shape().c; ++c) {
        std::copy_n(t->plane(n, c), plane_sz, out.plane(n, c_off + c));
      }
      c_off += t->shape().c;
    }
  }
  return out;
}

Tensor slice_channels(const Tensor& input, int c0, int c1) {
  const auto& sh = input.shape();
  if (c0 < 0 || c1 > sh.c || c0 >= c1) {
    throw ShapeError("slice_channels: range [" + std::to_string(c0) + ", " + std::to_string(c1) +
                     ") invalid for " + std::to_string(sh.c) + " channels");
  }
  Tensor out(TensorShape{sh.n, c1 - c0, sh.h, sh.w});
  const std::size_t plane_sz = static_cast<std::size_t>(sh.h) * sh.w;
  for (int n = 0; n < sh.n; ++n) {
    for (int c = c0; c < c1; ++c) {
      std::copy_n(input.plane(n, c), plane_sz, out.plane(n, c - c0));
    }
  }
  return out;
}

std::vector<Tensor> concat_channels_backward(const Tensor& grad_out,
                                             const std::vector<TensorShape>& in_shapes) {
  std::vector<Tensor> grads;
  grads.reserve(in_shapes.size());
  int c_off = 0;
  for (const auto& sh : in_shapes) {
    grads.push_back(slice_channels(grad_out, c_off, c_off + sh.c));
    c_off += sh.c;
  }
  return grads;
}

Tensor add(const Tensor& a, const Tensor& b) {
  check_same_shape("add", a, b);
  Tensor out(a.shape());
  auto pa = a.data();
  auto pb = b.data();
  auto po = out.data();
  for (std::size_t i = 0; i < pa.size(); ++i) po[i] = pa[i] + pb[i];
  return out;
}

Tensor abs_diff(const Tensor& a, const Tensor& b) {
  check_same_shape("abs_diff", a, b);
  Tensor out(a.shape());
  auto pa = a.data();
  auto pb = b.data();
  auto po = out.data();
  for (std::size_t i = 0; i < pa.size(); ++i) po[i] = std::fabs(pa[i] - pb[i]);
  return out;
}

std::pair<Tensor, Tensor> abs_diff_backward(const Tensor& grad_out, const Tensor& a,
                                            const Tensor& b) {
  check_same_shape("abs_diff_backward", a, b);
  check_same_shape("abs_diff_backward", grad_out, a);
  Tensor ga(a.shape());
  Tensor gb(b.shape());
  auto g = grad_out.data();
  auto pa = a.data();
  auto pb = b.data();
  auto pga = ga.data();
  auto pgb = gb.data();
  for (std::size_t i = 0; i < pa.size(); ++i) {
    const float diff = pa[i] - pb[i];
    const float sign = diff > 0.0f ? 1.0f : (diff < 0.0f ? -1.0f : 0.0f);
    pga[i] = g[i] * sign;
    pgb[i] = -g[i] * sign;
  }
  return {std::move(ga), std::move(gb)};
}

Tensor scale_channels(const Tensor& x, const Tensor& gate) {
  const auto& sh = x.shape();
  if (gate.shape() != TensorShape{sh.n, sh.c, 1, 1}) {
    throw ShapeError("scale_channels: gate shape " + gate.shape().str() + " must be (" +
                     std::to_string(sh.n) + ", " + std::to_string(sh.c) + ", 1, 1)");
  }
  Tensor out(sh);
  const std::size_t plane_sz = static_cast<std::size_t>(sh.h) * sh.w;
  for (int n = 0; n < sh.n; ++n) {
    for (int c = 0; c < sh.c; ++c) {
      const float g = gate.at(n, c, 0, 0);
      const float* xp = x.plane(n, c);
      float* op = out.plane(n, c);
      for (std::size_t i = 0; i < plane_sz; ++i) op[i] = xp[i] * g;
    }
  }
  return out;
}

std::pair<Tensor, Tensor> scale_channels_backward(const Tensor& grad_out, const Tensor& x,
                                                  const Tensor& gate) {
  check_same_shape("scale_channels_backward", grad_out, x);
  Tensor gx(x.shape());
  Tensor gg(gate.shape());
  const auto& sh = x.shape();
  const std::size_t plane_sz = static_cast<std::size_t>(sh.h) * sh.w;
  for (int n = 0; n < sh.n; ++n) {
    for (int c = 0; c < sh.c; ++c) {
      const float g = gate.at(n, c, 0, 0);
      const float* gp = grad_out.plane(n, c);
      const float* xp = x.plane(n, c);
      float* gxp = gx.plane(n, c);
      double acc = 0.0;
      for (std::size_t i = 0; i < plane_sz; ++i) {
        gxp[i] = gp[i] * g;
        acc += static_cast<double>(gp[i]) * xp[i];
      }
      gg.at(n, c, 0, 0) = static_cast<float>(acc);
    }
  }
  return {std::move(gx), std::move(gg)};
}

}  // namespace lsnet
