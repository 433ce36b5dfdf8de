#pragma once

#include <string>

#include "tunes/params.hpp"

namespace tunes {

inline int ceil_div(int a, int b) { return (a + b - 1) / b; }

/// Dilated 1D convolution along time, length-preserving.
///
/// Causal mode left-pads by (kernel-1)*dilation zeros so output[t] sees only
/// inputs at t, t-d, ..., t-(k-1)d. Acausal mode pads symmetrically and
/// requires an odd kernel.
template <typename Scalar>
struct TemporalConv {
  int in_channels = 0;
  int out_channels = 0;
  int kernel = 0;
  int dilation = 1;
  CausalityMode mode = CausalityMode::causal;
  Parameter<Scalar>* weight = nullptr;  // (kernel*in) x out
  Parameter<Scalar>* bias = nullptr;    // 1 x out

  TemporalConv() = default;
  TemporalConv(ParamStore<Scalar>& params, const std::string& name, int in,
               int out, int k, int d, CausalityMode m)
      : in_channels(in), out_channels(out), kernel(k), dilation(d), mode(m) {
    if (k < 1 || d < 1) throw ConfigError(name + ": kernel and dilation must be >= 1");
    if (m == CausalityMode::acausal && k % 2 == 0) {
      throw ConfigError(name + ": acausal convolution requires an odd kernel");
    }
    const Scalar limit = Scalar(1) / std::sqrt(Scalar(k * in));
    weight = params.add_uniform(name + ".weight", k * in, out, limit);
    bias = params.add_uniform(name + ".bias", 1, out, limit);
  }

  int apply(Graph<Scalar>& g, int x) const {
    if (g.val(x).cols() != in_channels) {
      throw ShapeError("TemporalConv: expected " + std::to_string(in_channels) +
                       " channels, got " + std::to_string(g.val(x).cols()));
    }
    const int T = static_cast<int>(g.val(x).rows());
    const int pad = mode == CausalityMode::causal ? (kernel - 1) * dilation
                                                  : (kernel - 1) / 2 * dilation;
    const int cols = g.im2col(x, kernel, dilation, /*stride=*/1, pad, T);
    return g.add_bias(g.matmul(cols, g.param(*weight)), g.param(*bias));
  }
};

/// Strided 1D convolution with kernel = stride = factor, halving/thirding
/// the sequence. Causal mode shifts the input right by factor-1 so output
/// element s (1-based) depends on inputs with index <= (s-1)*factor + 1;
/// acausal mode covers the window ((s-1)*factor, s*factor].
template <typename Scalar>
struct Downsample {
  int channels = 0;
  int factor = 0;
  CausalityMode mode = CausalityMode::causal;
  Parameter<Scalar>* weight = nullptr;  // (factor*ch) x ch
  Parameter<Scalar>* bias = nullptr;

  Downsample() = default;
  Downsample(ParamStore<Scalar>& params, const std::string& name, int ch,
             int f, CausalityMode m)
      : channels(ch), factor(f), mode(m) {
    if (f < 2) throw ConfigError(name + ": downsample factor must be >= 2");
    const Scalar limit = Scalar(1) / std::sqrt(Scalar(f * ch));
    weight = params.add_uniform(name + ".weight", f * ch, ch, limit);
    bias = params.add_uniform(name + ".bias", 1, ch, limit);
  }

  int apply(Graph<Scalar>& g, int x) const {
    if (g.val(x).cols() != channels) throw ShapeError("Downsample: channel mismatch");
    const int T = static_cast<int>(g.val(x).rows());
    const int out_rows = ceil_div(T, factor);
    const int pad = mode == CausalityMode::causal ? factor - 1 : 0;
    const int cols = g.im2col(x, factor, /*dilation=*/1, /*stride=*/factor, pad, out_rows);
    return g.add_bias(g.matmul(cols, g.param(*weight)), g.param(*bias));
  }
};

/// Transposed 1D convolution with kernel = stride = factor; output element t
/// depends only on input element ceil(t/factor), so causality of the input
/// sequence is preserved.
template <typename Scalar>
struct Upsample {
  int channels = 0;
  int factor = 0;
  Parameter<Scalar>* weight = nullptr;  // ch x (factor*ch)
  Parameter<Scalar>* bias = nullptr;

  Upsample() = default;
  Upsample(ParamStore<Scalar>& params, const std::string& name, int ch, int f)
      : channels(ch), factor(f) {
    if (f < 2) throw ConfigError(name + ": upsample factor must be >= 2");
    const Scalar limit = Scalar(1) / std::sqrt(Scalar(ch));
    weight = params.add_uniform(name + ".weight", ch, f * ch, limit);
    bias = params.add_uniform(name + ".bias", 1, ch, limit);
  }

  int apply(Graph<Scalar>& g, int x) const {
    if (g.val(x).cols() != channels) throw ShapeError("Upsample: channel mismatch");
    return g.add_bias(g.expand_rows(g.matmul(x, g.param(*weight)), factor),
                      g.param(*bias));
  }
};

/// Residual unit: x + pointwise(GELU(dilated_conv(x))).
/// Length and channel count preserved.
template <typename Scalar>
struct ConvBlock {
  TemporalConv<Scalar> dconv;
  TemporalConv<Scalar> pointwise;

  ConvBlock() = default;
  ConvBlock(ParamStore<Scalar>& params, const std::string& name, int ch,
            int kernel, int dilation, CausalityMode m)
      : dconv(params, name + ".dconv", ch, ch, kernel, dilation, m),
        pointwise(params, name + ".pw", ch, ch, 1, 1, m) {}

  int apply(Graph<Scalar>& g, int x) const {
    if (g.val(x).cols() != dconv.in_channels) {
      throw ShapeError("ConvBlock: channel mismatch");
    }
    return g.add(x, pointwise.apply(g, g.gelu(dconv.apply(g, x))));
  }
};

}  // namespace tunes
