#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <random>
#include <set>

#include "doctest.h"
#include "tunes/attention.hpp"

using tunes::AttentionMask;
using tunes::CausalityMode;
using tunes::Graph;
using tunes::MaskKind;
using tunes::MultiHeadAttention;
using tunes::ParamStore;
using tunes::TransformerBlock;
using tunes::scaled_dot_attention;
using Mat = tunes::Matrix<double>;

namespace {

Mat randm(int r, int c, std::mt19937_64& rng) {
  std::normal_distribution<double> d(0.0, 1.0);
  Mat m(r, c);
  for (int j = 0; j < c; ++j) {
    for (int i = 0; i < r; ++i) m(i, j) = d(rng);
  }
  return m;
}

bool close(double a, double b, double tol = 1e-9) { return std::abs(a - b) <= tol; }

}  // namespace

TEST_CASE("two-key attention weights by hand") {
  // q = (1,0); keys (1,0) and (0,1); scores/sqrt(2) = (1/sqrt2, 0), so the
  // first weight is sigmoid(1/sqrt2) = 0.669751...
  Graph<double> g;
  Mat q(1, 2), k(2, 2), v(2, 2);
  q << 1, 0;
  k << 1, 0, 0, 1;
  v << 10, 0, 0, 10;
  const auto mask = AttentionMask::make(MaskKind::none, 1, 2);
  const int out = scaled_dot_attention(g, g.leaf(q), g.leaf(k), g.leaf(v), mask);
  const double w = 1.0 / (1.0 + std::exp(-1.0 / std::sqrt(2.0)));
  CHECK(close(w, 0.6697615493266569));
  CHECK(close(g.val(out)(0, 0), 10 * w));
  CHECK(close(g.val(out)(0, 1), 10 * (1 - w)));
}

TEST_CASE("identical keys average the values") {
  std::mt19937_64 rng(31);
  Graph<double> g;
  const Mat q = randm(3, 4, rng);
  const Mat k = Mat::Ones(5, 4);
  const Mat v = randm(5, 4, rng);
  const auto mask = AttentionMask::make(MaskKind::none, 3, 5);
  const int out = scaled_dot_attention(g, g.leaf(q), g.leaf(k), g.leaf(v), mask);
  const Mat want = v.colwise().mean().replicate(3, 1);
  CHECK((g.val(out) - want).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("causal first row copies the first value exactly") {
  std::mt19937_64 rng(32);
  Graph<double> g;
  const Mat x = randm(4, 3, rng);
  const auto mask = AttentionMask::make(MaskKind::causal, 4, 4);
  const int out =
      scaled_dot_attention(g, g.leaf(x), g.leaf(x), g.leaf(x), mask);
  CHECK((g.val(out).row(0) - x.row(0)).isZero(0));
}

TEST_CASE("unmasked attention is permutation symmetric in the keys") {
  std::mt19937_64 rng(33);
  const Mat q = randm(2, 3, rng);
  const Mat k = randm(5, 3, rng);
  const Mat v = randm(5, 3, rng);
  std::vector<int> perm{3, 0, 4, 1, 2};
  Mat kp(5, 3), vp(5, 3);
  for (int i = 0; i < 5; ++i) {
    kp.row(i) = k.row(perm[i]);
    vp.row(i) = v.row(perm[i]);
  }
  const auto mask = AttentionMask::make(MaskKind::none, 2, 5);
  Graph<double> g1, g2;
  const int a = scaled_dot_attention(g1, g1.leaf(q), g1.leaf(k), g1.leaf(v), mask);
  const int b = scaled_dot_attention(g2, g2.leaf(q), g2.leaf(kp), g2.leaf(vp), mask);
  CHECK((g1.val(a) - g2.val(b)).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("causal and anticausal intersect to the diagonal") {
  const auto c = AttentionMask::make(MaskKind::causal, 4, 4);
  const auto a = AttentionMask::make(MaskKind::anticausal, 4, 4);
  const auto d = AttentionMask::intersect(c, a);
  for (int s = 0; s < 4; ++s) {
    for (int t = 0; t < 4; ++t) CHECK(d.allowed(s, t) == (s == t));
  }

  std::mt19937_64 rng(34);
  Graph<double> g;
  const Mat x = randm(4, 3, rng);
  const Mat v = randm(4, 3, rng);
  const int out = scaled_dot_attention(g, g.leaf(x), g.leaf(x), g.leaf(v), d);
  CHECK((g.val(out) - v).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("local mask width") {
  const auto m = AttentionMask::make(MaskKind::local, 6, 6, 2);
  for (int s = 0; s < 6; ++s) {
    for (int t = 0; t < 6; ++t) CHECK(m.allowed(s, t) == (std::abs(s - t) <= 2));
  }
  CHECK_THROWS_AS(AttentionMask::make(MaskKind::local, 3, 3, -1), tunes::ConfigError);
}

TEST_CASE("masked weights are exactly zero and so are their gradients") {
  std::mt19937_64 rng(35);
  ParamStore<double> ps(36);
  MultiHeadAttention<double> mha(ps, "a", 4, 1);
  const Mat x = randm(6, 4, rng);
  const auto mask = AttentionMask::make(MaskKind::causal, 6, 6);

  Graph<double> g;
  const int in = g.leaf(x, true);
  const int out = mha.apply(g, in, mask);
  Mat seed = Mat::Zero(6, 4);
  seed.row(2).setOnes();  // query 2 may only see tokens 0..2
  g.backward({{out, seed}});
  const Mat din = g.grad_or_zero(in);
  for (int r = 3; r < 6; ++r) CHECK(din.row(r).isZero(0));
  CHECK(!din.row(0).isZero(0));
}

TEST_CASE("a fully masked query row throws instead of producing NaN") {
  // anticausal mask with more queries than keys leaves the last row empty
  const auto bad = AttentionMask::make(MaskKind::anticausal, 3, 2);
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);

  std::mt19937_64 rng(36);
  Graph<double> g;
  const Mat q = randm(3, 2, rng);
  const Mat kv = randm(2, 2, rng);
  CHECK_THROWS_AS(scaled_dot_attention(g, g.leaf(q), g.leaf(kv), g.leaf(kv), bad),
                  std::invalid_argument);
}

TEST_CASE("multi-head attention concatenates full-width heads") {
  std::mt19937_64 rng(37);
  ParamStore<double> ps(38);
  MultiHeadAttention<double> mha(ps, "a", 4, 3);
  // per head q, k, v projections of 4*4+4, plus output (12*4+4)
  CHECK(ps.count_scalars() == 3 * 3 * 20 + 52);

  const Mat x = randm(5, 4, rng);
  Graph<double> g;
  const int out = mha.apply(g, g.leaf(x), AttentionMask::make(MaskKind::none, 5, 5));
  CHECK(g.val(out).rows() == 5);
  CHECK(g.val(out).cols() == 4);
}

TEST_CASE("transformer block records no normalization-like op") {
  std::mt19937_64 rng(39);
  ParamStore<double> ps(40);
  TransformerBlock<double> block(ps, "b", 4, 1, 8, 3, CausalityMode::causal, true, true);
  Graph<double> g;
  block.apply(g, g.leaf(randm(6, 4, rng), true), AttentionMask::make(MaskKind::causal, 6, 6));

  const std::set<std::string> allowed{
      "leaf",        "param",       "matmul",     "matmul_nt", "add",
      "add_bias",    "scale",       "scale_by",   "gelu",      "im2col",
      "expand_rows", "concat_rows", "slice_rows", "concat_cols",
      "masked_softmax", "replace_rows"};
  for (const std::string& k : g.kinds()) CHECK(allowed.count(k) == 1);
}

TEST_CASE("transformer block ablations") {
  std::mt19937_64 rng(41);
  const Mat x = randm(6, 4, rng);
  const auto mask = AttentionMask::make(MaskKind::causal, 6, 6);

  ParamStore<double> ps1(42);
  TransformerBlock<double> conv_only(ps1, "b", 4, 1, 8, 3, CausalityMode::causal,
                                     true, false);
  ParamStore<double> ps2(42);
  TransformerBlock<double> full(ps2, "b", 4, 1, 8, 3, CausalityMode::causal, true, true);
  CHECK(ps1.count_scalars() < ps2.count_scalars());

  // without attention the block is exactly its convolutional part
  Graph<double> g1, g2;
  const int a = conv_only.apply(g1, g1.leaf(x), mask);
  const int b = conv_only.conv.apply(g2, g2.leaf(x));
  CHECK((g1.val(a) - g2.val(b)).isZero(0));

  ParamStore<double> ps3(42);
  TransformerBlock<double> no_conv(ps3, "b", 4, 1, 8, 3, CausalityMode::causal,
                                   false, true);
  Graph<double> g3;
  const int c = no_conv.apply(g3, g3.leaf(x), mask);
  CHECK(g3.val(c).rows() == 6);
  CHECK(g3.kinds().count("im2col") == 0);
}

TEST_CASE("causal transformer block never attends forward") {
  std::mt19937_64 rng(43);
  ParamStore<double> ps(44);
  TransformerBlock<double> block(ps, "b", 4, 1, 8, 3, CausalityMode::causal, true, true);
  const Mat x = randm(8, 4, rng);
  Graph<double> g;
  const int in = g.leaf(x, true);
  const int out = block.apply(g, in, AttentionMask::make(MaskKind::causal, 8, 8));
  Mat seed = Mat::Zero(8, 4);
  seed.row(3).setOnes();
  g.backward({{out, seed}});
  const Mat din = g.grad_or_zero(in);
  for (int r = 4; r < 8; ++r) CHECK(din.row(r).isZero(0));
}
