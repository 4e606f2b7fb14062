#include <algorithm>
#include <cmath>
#include <numeric>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "tokenwarp/attention.hpp"
#include "tokenwarp/errors.hpp"
#include "tokenwarp/warp.hpp"

using namespace tokenwarp;

namespace {

oracle::Vec doubles(std::span<const float> x) { return oracle::Vec(x.begin(), x.end()); }

double max_abs_diff(std::span<const float> a, std::span<const float> b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::fabs(double(a[i]) - b[i]));
  return m;
}

double max_abs_diff(std::span<const float> a, const oracle::Vec& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::fabs(a[i] - b[i]));
  return m;
}

oracle::Vec brute_attention(const TokenGrid& q, const TokenGrid& k, const TokenGrid& v, int heads) {
  return oracle::attention(doubles(q.values()), q.tokens(), doubles(k.values()), doubles(v.values()),
                           k.tokens(), q.channels(), heads);
}

AttentionConfig no_anchor() {
  AttentionConfig cfg;
  cfg.use_anchor = false;
  return cfg;
}

}  // namespace

TEST(ProjectQkv, IdentityAndZeroWeights) {
  oracle::Gen gen(1);
  const TokenGrid z = gen.grid(3, 4, 5);
  const QKV id = project_qkv(z, ProjectionWeights::identity(5));
  EXPECT_EQ(id.q, z);
  EXPECT_EQ(id.k, z);
  EXPECT_EQ(id.v, z);
  const QKV zero = project_qkv(z, ProjectionWeights::zeros(5, 8));
  for (float x : zero.q.values()) EXPECT_EQ(x, 0.0f);
  for (float x : zero.v.values()) EXPECT_EQ(x, 0.0f);
  EXPECT_EQ(zero.k.channels(), 8);
}

TEST(ProjectQkv, RandomWeightsMatchTripleLoop) {
  oracle::Gen gen(2);
  const TokenGrid z = gen.grid(3, 4, 5);
  ProjectionWeights w;
  w.d_in = 5;
  w.d_model = 8;
  w.heads = 2;
  w.wq = gen.floats(40);
  w.wk = gen.floats(40);
  w.wv = gen.floats(40);
  const QKV out = project_qkv(z, w);
  const auto zv = doubles(z.values());
  EXPECT_LE(max_abs_diff(out.q.values(), oracle::matmul(zv, 12, 5, doubles(w.wq), 8)), 1e-5);
  EXPECT_LE(max_abs_diff(out.k.values(), oracle::matmul(zv, 12, 5, doubles(w.wk), 8)), 1e-5);
  EXPECT_LE(max_abs_diff(out.v.values(), oracle::matmul(zv, 12, 5, doubles(w.wv), 8)), 1e-5);
  EXPECT_THROW(project_qkv(gen.grid(2, 2, 4), w), ParameterError);
}

TEST(ProjectionWeights, ValidatesHeadsAndSizes) {
  EXPECT_THROW(ProjectionWeights::zeros(4, 6, 4), ParameterError);
  ProjectionWeights w = ProjectionWeights::zeros(4, 8, 2);
  w.wk.pop_back();
  EXPECT_THROW(w.validate(), ParameterError);
}

TEST(SeededOrthogonal, ColumnsAreOrthonormalAndDeterministic) {
  const auto m = seeded_orthogonal(12, 5, 42);
  EXPECT_EQ(m, seeded_orthogonal(12, 5, 42));
  EXPECT_NE(m, seeded_orthogonal(12, 5, 43));
  for (int a = 0; a < 5; ++a)
    for (int b = 0; b < 5; ++b) {
      double dot = 0.0;
      for (int r = 0; r < 12; ++r) dot += double(m[r * 5 + a]) * m[r * 5 + b];
      EXPECT_NEAR(dot, a == b ? 1.0 : 0.0, 1e-5);
    }
}

TEST(ScaledDotAttention, SingleKeyReturnsItsValue) {
  oracle::Gen gen(3);
  const TokenGrid q = gen.grid(3, 3, 4);
  const TokenGrid k = gen.grid(1, 1, 4), v = gen.grid(1, 1, 4);
  const TokenGrid out = scaled_dot_attention(q, k, v, 2);
  for (int i = 0; i < q.tokens(); ++i)
    for (int c = 0; c < 4; ++c) EXPECT_NEAR(out.token(i)[c], v.values()[c], 1e-6);
}

TEST(ScaledDotAttention, UniformWeightsAverageValues) {
  const TokenGrid q = TokenGrid::zeros(2, 2, 1);
  const TokenGrid k(1, 2, 1, {1.0f, 1.0f});
  const TokenGrid v(1, 2, 1, {0.0f, 2.0f});
  const TokenGrid out = scaled_dot_attention(q, k, v, 1);
  for (float x : out.values()) EXPECT_NEAR(x, 1.0f, 1e-6);
}

TEST(ScaledDotAttention, TwoKeyScalarExample) {
  const TokenGrid q(1, 1, 1, {1.0f});
  const TokenGrid k(1, 2, 1, {1.0f, 3.0f});
  const TokenGrid v(1, 2, 1, {10.0f, 20.0f});
  const double w1 = std::exp(1.0) / (std::exp(1.0) + std::exp(3.0));
  EXPECT_NEAR(scaled_dot_attention(q, k, v, 1).values()[0], w1 * 10 + (1 - w1) * 20, 1e-5);
}

TEST(ScaledDotAttention, MatchesBruteForceOracle) {
  oracle::Gen gen(4);
  for (int trial = 0; trial < 30; ++trial) {
    const int heads = gen.integer(1, 4);
    const int d = heads * gen.integer(1, 4);
    const TokenGrid q = gen.grid(gen.integer(1, 5), gen.integer(1, 5), d, -2, 2);
    const int nk = gen.integer(1, 40);
    const TokenGrid k = gen.grid(1, nk, d, -2, 2), v = gen.grid(1, nk, d);
    EXPECT_LE(max_abs_diff(scaled_dot_attention(q, k, v, heads).values(), brute_attention(q, k, v, heads)),
              1e-5);
  }
}

TEST(ScaledDotAttention, HandlesLargeLogitRanges) {
  const TokenGrid q(1, 1, 1, {30.0f});
  const TokenGrid k(1, 3, 1, {-10.0f, 0.0f, 10.0f});
  const TokenGrid v(1, 3, 1, {1.0f, 2.0f, 3.0f});
  EXPECT_NEAR(scaled_dot_attention(q, k, v, 1).values()[0], 3.0f, 1e-6);
}

TEST(ScaledDotAttention, RejectsBadHeadsAndShapes) {
  const TokenGrid a = TokenGrid::zeros(2, 2, 6);
  EXPECT_THROW(scaled_dot_attention(a, a, a, 4), ParameterError);
  EXPECT_THROW(scaled_dot_attention(a, TokenGrid::zeros(2, 2, 4), a, 2), ParameterError);
  EXPECT_THROW(scaled_dot_attention(a, a, TokenGrid::zeros(1, 3, 6), 2), ParameterError);
}

TEST(ScaledDotAttention, SoftmaxRowsSumToOne) {
  oracle::Gen gen(5);
  const TokenGrid q = gen.grid(4, 4, 8, -3, 3), k = gen.grid(1, 37, 8, -3, 3), v = gen.grid(1, 37, 8);
  AttentionProbe probe;
  probe.record_weights = true;
  scaled_dot_attention(q, k, v, 2, &probe);
  ASSERT_EQ(probe.weights.size(), 2u * 16 * 37);
  for (int h = 0; h < 2; ++h)
    for (int i = 0; i < 16; ++i) {
      double s = 0.0;
      for (int j = 0; j < 37; ++j) s += probe.weight(h, i, j);
      EXPECT_NEAR(s, 1.0, 1e-6);
    }
}

TEST(ScaledDotAttention, InvariantToJointKeyPermutation) {
  oracle::Gen gen(6);
  const TokenGrid q = gen.grid(3, 3, 4), k = gen.grid(1, 11, 4), v = gen.grid(1, 11, 4);
  std::vector<int> perm(11);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), std::mt19937(7));
  std::vector<float> kp, vp;
  for (int j : perm) {
    kp.insert(kp.end(), k.token(j).begin(), k.token(j).end());
    vp.insert(vp.end(), v.token(j).begin(), v.token(j).end());
  }
  EXPECT_LE(max_abs_diff(scaled_dot_attention(q, k, v, 2).values(),
                         scaled_dot_attention(q, TokenGrid(1, 11, 4, kp), TokenGrid(1, 11, 4, vp), 2).values()),
            1e-5);
}

TEST(ScaledDotAttention, InvariantToLogitShift) {
  oracle::Gen gen(8);
  const TokenGrid q = gen.grid(3, 3, 4), k = gen.grid(1, 9, 4), v = gen.grid(1, 9, 4);
  const TokenGrid base = scaled_dot_attention(q, k, v, 2);
  for (float offset : {-20.0f, 3.5f, 40.0f}) {
    AttentionProbe probe;
    probe.logit_offset = offset;
    EXPECT_LE(max_abs_diff(base.values(), scaled_dot_attention(q, k, v, 2, &probe).values()), 1e-5);
  }
}

TEST(ScaledDotAttention, ArgmaxInvariantToPositiveValueScaling) {
  oracle::Gen gen(9);
  const TokenGrid q = gen.grid(3, 3, 4), k = gen.grid(1, 9, 4), v = gen.grid(1, 9, 4);
  std::vector<float> scaled(v.values().begin(), v.values().end());
  for (float& x : scaled) x *= 3.7f;
  AttentionProbe a, b;
  a.record_weights = b.record_weights = true;
  scaled_dot_attention(q, k, v, 2, &a);
  scaled_dot_attention(q, k, TokenGrid(1, 9, 4, scaled), 2, &b);
  for (int h = 0; h < 2; ++h)
    for (int i = 0; i < 9; ++i) {
      auto row_a = a.weights.begin() + (h * 9 + i) * 9;
      auto row_b = b.weights.begin() + (h * 9 + i) * 9;
      EXPECT_EQ(std::max_element(row_a, row_a + 9) - row_a, std::max_element(row_b, row_b + 9) - row_b);
    }
}

TEST(CrossFrameAttention, ReducesToSelfAttentionWithOwnAnchor) {
  oracle::Gen gen(10);
  const TokenGrid q = gen.grid(3, 4, 4), k = gen.grid(3, 4, 4), v = gen.grid(3, 4, 4);
  EXPECT_LE(max_abs_diff(cross_frame_attention(q, k, v, 2).values(),
                         scaled_dot_attention(q, k, v, 2).values()),
            1e-6);
  const TokenGrid ka = gen.grid(1, 1, 4), va = gen.grid(1, 1, 4);
  const TokenGrid one = cross_frame_attention(q, ka, va, 2);
  for (int i = 0; i < q.tokens(); ++i)
    for (int c = 0; c < 4; ++c) EXPECT_NEAR(one.token(i)[c], va.values()[c], 1e-6);
  const TokenGrid ka2 = gen.grid(2, 3, 4), va2 = gen.grid(2, 3, 4);
  EXPECT_EQ(cross_frame_attention(q, ka2, va2, 2), scaled_dot_attention(q, ka2, va2, 2));
}

TEST(FlowGuidedAttention, OccludedWithoutAnchorIsSelfAttention) {
  oracle::Gen gen(11);
  for (int trial = 0; trial < 10; ++trial) {
    const TokenGrid q = gen.grid(4, 4, 8), k = gen.grid(4, 4, 8), v = gen.grid(4, 4, 8);
    const LayerTokens prev{gen.grid(4, 4, 8), gen.grid(4, 4, 8), gen.grid(4, 4, 8)};
    const AnchorTokens anchor{gen.grid(4, 4, 8), gen.grid(4, 4, 8)};
    const TokenGrid out = flow_guided_attention(q, k, v, prev, anchor, gen.flow(4, 4, 2),
                                                OcclusionMask::zeros(4, 4), no_anchor(), 2);
    EXPECT_EQ(out, scaled_dot_attention(q, k, v, 2));
  }
}

TEST(FlowGuidedAttention, DuplicatedAnchorRenormalizesToSelfAttention) {
  oracle::Gen gen(12);
  const TokenGrid q = gen.grid(4, 4, 8), k = gen.grid(4, 4, 8), v = gen.grid(4, 4, 8);
  const LayerTokens prev{gen.grid(4, 4, 8), gen.grid(4, 4, 8), gen.grid(4, 4, 8)};
  const TokenGrid out = flow_guided_attention(q, k, v, prev, AnchorTokens{k, v}, gen.flow(4, 4, 2),
                                              OcclusionMask::zeros(4, 4), AttentionConfig{}, 2);
  EXPECT_LE(max_abs_diff(out.values(), scaled_dot_attention(q, k, v, 2).values()), 1e-5);
}

TEST(FlowGuidedAttention, MatchesComposedOracles) {
  oracle::Gen gen(13);
  for (int trial = 0; trial < 10; ++trial) {
    const TokenGrid q = gen.grid(4, 4, 8), k = gen.grid(4, 4, 8), v = gen.grid(4, 4, 8);
    const LayerTokens prev{gen.grid(4, 4, 8), gen.grid(4, 4, 8), gen.grid(4, 4, 8)};
    const AnchorTokens anchor{gen.grid(4, 4, 8), gen.grid(4, 4, 8)};
    const FlowField f = gen.flow(4, 4, 2);
    const OcclusionMask m = gen.mask(4, 4);
    const auto fq = oracle::fuse(oracle::warp(oracle::from(prev.q), f), oracle::from(q), m);
    const auto fk = oracle::fuse(oracle::warp(oracle::from(prev.k), f), oracle::from(k), m);
    const auto fv = oracle::fuse(oracle::warp(oracle::from(prev.v), f), oracle::from(v), m);
    oracle::Vec keys = doubles(anchor.k.values()), vals = doubles(anchor.v.values());
    keys.insert(keys.end(), fk.v.begin(), fk.v.end());
    vals.insert(vals.end(), fv.v.begin(), fv.v.end());
    const oracle::Vec ref = oracle::attention(fq.v, 16, keys, vals, 32, 8, 2);
    LayerTokens fused;
    const TokenGrid out =
        flow_guided_attention(q, k, v, prev, anchor, f, m, AttentionConfig{}, 2, nullptr, &fused);
    EXPECT_LE(max_abs_diff(out.values(), ref), 1e-5);
    EXPECT_LE(max_abs_diff(fused.q.values(), fq.v), 1e-5);
  }
}

TEST(FlowGuidedAttention, WarpFlagsGateQueryAndKeyValue) {
  oracle::Gen gen(14);
  const TokenGrid q = gen.grid(3, 3, 4), k = gen.grid(3, 3, 4), v = gen.grid(3, 3, 4);
  const LayerTokens prev{gen.grid(3, 3, 4), gen.grid(3, 3, 4), gen.grid(3, 3, 4)};
  const FlowField f = gen.flow(3, 3, 1);
  const OcclusionMask m = gen.mask(3, 3);
  AttentionConfig cfg;
  cfg.warp_q = true;
  cfg.warp_kv = false;
  LayerTokens a = fuse_previous_tokens(q, k, v, prev, f, m, cfg);
  EXPECT_NE(a.q, q);
  EXPECT_EQ(a.k, k);
  EXPECT_EQ(a.v, v);
  cfg.warp_q = false;
  cfg.warp_kv = true;
  LayerTokens b = fuse_previous_tokens(q, k, v, prev, f, m, cfg);
  EXPECT_EQ(b.q, q);
  EXPECT_EQ(b.k, fuse_tokens(backward_warp(prev.k, f), k, m));
  EXPECT_EQ(b.v, fuse_tokens(backward_warp(prev.v, f), v, m));
}

TEST(FlowGuidedAttention, KeyValueWarpingWithFullMaskAttendsPreviousAndAnchor) {
  oracle::Gen gen(15);
  const TokenGrid q = gen.grid(3, 3, 4), k = gen.grid(3, 3, 4), v = gen.grid(3, 3, 4);
  const LayerTokens prev{gen.grid(3, 3, 4), gen.grid(3, 3, 4), gen.grid(3, 3, 4)};
  const AnchorTokens anchor{gen.grid(3, 3, 4), gen.grid(3, 3, 4)};
  AttentionConfig cfg;
  cfg.warp_q = false;
  const TokenGrid out = flow_guided_attention(q, k, v, prev, anchor, FlowField::zeros(3, 3),
                                              OcclusionMask::ones(3, 3), cfg, 2);
  const TokenGrid ref = scaled_dot_attention(q, concat_tokens(anchor.k, prev.k),
                                             concat_tokens(anchor.v, prev.v), 2);
  EXPECT_LE(max_abs_diff(out.values(), ref.values()), 1e-6);
}

TEST(FlowGuidedAttention, WithoutWarpingAttendsAnchorAndCurrentTokens) {
  oracle::Gen gen(16);
  const TokenGrid q = gen.grid(3, 3, 4), k = gen.grid(3, 3, 4), v = gen.grid(3, 3, 4);
  const LayerTokens prev{gen.grid(3, 3, 4), gen.grid(3, 3, 4), gen.grid(3, 3, 4)};
  const AnchorTokens anchor{gen.grid(3, 3, 4), gen.grid(3, 3, 4)};
  AttentionConfig cfg;
  cfg.warp_q = cfg.warp_kv = false;
  const TokenGrid out = flow_guided_attention(q, k, v, prev, anchor, gen.flow(3, 3, 1), gen.mask(3, 3), cfg, 2);
  const TokenGrid ref =
      cross_frame_attention(q, concat_tokens(anchor.k, k), concat_tokens(anchor.v, v), 2);
  EXPECT_LE(max_abs_diff(out.values(), ref.values()), 1e-6);
}

TEST(FlowGuidedAttention, RejectsFlowAtWrongResolution) {
  const TokenGrid t = TokenGrid::zeros(4, 4, 4);
  const LayerTokens prev{t, t, t};
  const AnchorTokens anchor{t, t};
  try {
    flow_guided_attention(t, t, t, prev, anchor, FlowField::zeros(8, 8), OcclusionMask::ones(8, 8),
                          AttentionConfig{}, 2);
    FAIL() << "expected a parameter error";
  } catch (const ParameterError& e) {
    EXPECT_NE(std::string(e.what()).find("resize"), std::string::npos);
  }
  const LayerTokens bad{TokenGrid::zeros(4, 3, 4), t, t};
  EXPECT_THROW(flow_guided_attention(t, t, t, bad, anchor, FlowField::zeros(4, 4),
                                     OcclusionMask::ones(4, 4), AttentionConfig{}, 2),
               ParameterError);
}

TEST(FirstFrameAttention, IsSelfAttentionAndReturnsInputsAsAnchor) {
  oracle::Gen gen(17);
  const TokenGrid q = gen.grid(3, 3, 4), k = gen.grid(3, 3, 4), v = gen.grid(3, 3, 4);
  const FirstFrameResult r = first_frame_attention(q, k, v, 2);
  EXPECT_EQ(r.output, scaled_dot_attention(q, k, v, 2));
  EXPECT_EQ(r.anchor.k, k);
  EXPECT_EQ(r.anchor.v, v);
}

TEST(FirstFrameAttention, IdenticalSecondFrameReproducesFirstOutput) {
  oracle::Gen gen(18);
  const TokenGrid q = gen.grid(4, 4, 8), k = gen.grid(4, 4, 8), v = gen.grid(4, 4, 8);
  const FirstFrameResult first = first_frame_attention(q, k, v, 2);
  const LayerTokens prev{q, k, v};
  const TokenGrid second = flow_guided_attention(q, k, v, prev, first.anchor, FlowField::zeros(4, 4),
                                                 OcclusionMask::ones(4, 4), AttentionConfig{}, 2);
  EXPECT_LE(max_abs_diff(second.values(), first.output.values()), 1e-5);
}

TEST(AttentionConfig, ValidationAndLayerSelection) {
  AttentionConfig cfg;
  cfg.mechanism = Mechanism::cross_frame;
  cfg.use_anchor = false;
  EXPECT_THROW(cfg.validate(), ParameterError);
  AttentionConfig sel;
  sel.layers = std::set<int>{0, 2};
  EXPECT_EQ(sel.mechanism_for(0), Mechanism::flow_guided);
  EXPECT_EQ(sel.mechanism_for(1), Mechanism::self);
  EXPECT_EQ(sel.mechanism_for(2), Mechanism::flow_guided);
  AttentionConfig all;
  EXPECT_EQ(all.mechanism_for(5), Mechanism::flow_guided);
}
