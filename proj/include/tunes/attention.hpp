#pragma once

#include <string>
#include <vector>

#include "tunes/temporal_ops.hpp"

namespace tunes {

enum class MaskKind { none, causal, anticausal, local };

inline const char* to_string(MaskKind k) {
  switch (k) {
    case MaskKind::none: return "none";
    case MaskKind::causal: return "causal";
    case MaskKind::anticausal: return "anticausal";
    case MaskKind::local: return "local";
  }
  return "?";
}

/// S x T attention mask. allowed(s, t) == true means query s may attend to
/// key t. The diagonal is always allowed: a token attends to itself under
/// every kind, so no query row is ever fully masked in self-attention.
struct AttentionMask {
  MaskKind kind = MaskKind::none;
  int window = 0;
  MaskMatrix allowed;

  static AttentionMask make(MaskKind kind, int S, int T, int window = 0) {
    AttentionMask m;
    m.kind = kind;
    m.window = window;
    m.allowed = MaskMatrix::Constant(S, T, true);
    switch (kind) {
      case MaskKind::none:
        break;
      case MaskKind::causal:
        for (int s = 0; s < S; ++s)
          for (int t = s + 1; t < T; ++t) m.allowed(s, t) = false;
        break;
      case MaskKind::anticausal:
        for (int s = 0; s < S; ++s)
          for (int t = 0; t < std::min(s, T); ++t) m.allowed(s, t) = false;
        break;
      case MaskKind::local:
        if (window < 0) throw ConfigError("local mask: window must be >= 0");
        for (int s = 0; s < S; ++s)
          for (int t = 0; t < T; ++t)
            if (std::abs(t - s) > window) m.allowed(s, t) = false;
        break;
    }
    return m;
  }

  static AttentionMask intersect(const AttentionMask& a, const AttentionMask& b) {
    if (a.allowed.rows() != b.allowed.rows() || a.allowed.cols() != b.allowed.cols()) {
      throw ShapeError("mask intersect: shape mismatch");
    }
    AttentionMask m;
    m.kind = MaskKind::none;
    m.allowed = a.allowed && b.allowed;
    return m;
  }

  void validate() const {
    for (Eigen::Index s = 0; s < allowed.rows(); ++s) {
      if (!allowed.row(s).any()) {
        throw std::invalid_argument("attention mask: query row " +
                                    std::to_string(s) + " is fully masked");
      }
    }
  }
};

/// Bottleneck token sequence. With boundary tokens, rows 0 and S-1 are the
/// learned start/end embeddings.
template <typename Scalar>
struct TokenSequence {
  Matrix<Scalar> tokens;
  bool has_boundary_tokens = false;
};

/// softmax(Q K^T / sqrt(dim)) V with masked weights exactly zero.
template <typename Scalar>
inline int scaled_dot_attention(Graph<Scalar>& g, int q, int k, int v,
                                const AttentionMask& mask) {
  const Eigen::Index dim = g.val(q).cols();
  if (g.val(k).cols() != dim) throw ShapeError("attention: Q/K dim mismatch");
  if (g.val(k).rows() != g.val(v).rows()) throw ShapeError("attention: K/V length mismatch");
  if (mask.allowed.rows() != g.val(q).rows() || mask.allowed.cols() != g.val(k).rows()) {
    throw ShapeError("attention: mask shape mismatch");
  }
  mask.validate();
  const int scores = g.scale(g.matmul_nt(q, k), Scalar(1) / std::sqrt(Scalar(dim)));
  return g.matmul(g.masked_softmax(scores, mask.allowed), v);
}

/// Per head: learned projections to head_dim-wide Q/K/V, masked attention,
/// head concatenation, learned projection back to dim. Each head is as
/// wide as the model (dim channels).
template <typename Scalar>
struct MultiHeadAttention {
  int dim = 0;
  int heads = 1;
  std::vector<Linear<Scalar>> proj_q, proj_k, proj_v;
  Linear<Scalar> proj_out;

  MultiHeadAttention() = default;
  MultiHeadAttention(ParamStore<Scalar>& params, const std::string& name,
                     int dim_, int heads_)
      : dim(dim_), heads(heads_) {
    if (heads < 1) throw ConfigError(name + ": heads must be >= 1");
    for (int h = 0; h < heads; ++h) {
      const std::string hn = name + ".head" + std::to_string(h);
      proj_q.emplace_back(params, hn + ".q", dim, dim);
      proj_k.emplace_back(params, hn + ".k", dim, dim);
      proj_v.emplace_back(params, hn + ".v", dim, dim);
    }
    proj_out = Linear<Scalar>(params, name + ".out", heads * dim, dim);
  }

  int apply(Graph<Scalar>& g, int x, const AttentionMask& mask) const {
    std::vector<int> outs;
    outs.reserve(heads);
    for (int h = 0; h < heads; ++h) {
      const int q = proj_q[h].apply(g, x);
      const int k = proj_k[h].apply(g, x);
      const int v = proj_v[h].apply(g, x);
      outs.push_back(scaled_dot_attention(g, q, k, v, mask));
    }
    const int cat = heads == 1 ? outs[0] : g.concat_cols(outs);
    return proj_out.apply(g, cat);
  }
};

/// Transformer block: a convolutional block provides local temporal
/// structure in place of positional encodings, then residual attention,
/// then a residual two-layer GELU feedforward. No normalization layers.
template <typename Scalar>
struct TransformerBlock {
  bool use_conv = true;
  bool use_attention = true;
  ConvBlock<Scalar> conv;
  MultiHeadAttention<Scalar> attn;
  Linear<Scalar> ff1, ff2;

  TransformerBlock() = default;
  TransformerBlock(ParamStore<Scalar>& params, const std::string& name, int dim,
                   int heads, int ffn_dim, int kernel, CausalityMode conv_mode,
                   bool with_conv, bool with_attention)
      : use_conv(with_conv), use_attention(with_attention) {
    if (with_conv) {
      conv = ConvBlock<Scalar>(params, name + ".conv", dim, kernel, 1, conv_mode);
    }
    if (with_attention) {
      attn = MultiHeadAttention<Scalar>(params, name + ".attn", dim, heads);
      ff1 = Linear<Scalar>(params, name + ".ff1", dim, ffn_dim);
      ff2 = Linear<Scalar>(params, name + ".ff2", ffn_dim, dim);
    }
  }

  int apply(Graph<Scalar>& g, int x, const AttentionMask& mask) const {
    int y = use_conv ? conv.apply(g, x) : x;
    if (use_attention) {
      y = g.add(y, attn.apply(g, y, mask));
      y = g.add(y, ff2.apply(g, g.gelu(ff1.apply(g, y))));
    }
    return y;
  }
};

}  // namespace tunes
