#include "tokenwarp/attention.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <limits>
#include <cmath>
#include <string>

#include "tokenwarp/errors.hpp"
#include "tokenwarp/rng.hpp"
#include "tokenwarp/warp.hpp"

namespace tokenwarp {
namespace {

// Orthonormalizes the `count` vectors of length `len` stored at `base` with
// stride `stride` between vectors and `step` between components.
void gram_schmidt(std::vector<double>& m, int count, int len, int stride, int step) {
  auto at = [&](int vec, int comp) -> double& {
    return m[static_cast<std::size_t>(vec) * stride + static_cast<std::size_t>(comp) * step];
  };
  for (int i = 0; i < count; ++i) {
    for (int j = 0; j < i; ++j) {
      double dot = 0.0;
      for (int c = 0; c < len; ++c) dot += at(i, c) * at(j, c);
      for (int c = 0; c < len; ++c) at(i, c) -= dot * at(j, c);
    }
    double norm = 0.0;
    for (int c = 0; c < len; ++c) norm += at(i, c) * at(i, c);
    norm = std::sqrt(norm);
    if (norm < 1e-12) continue;
    for (int c = 0; c < len; ++c) at(i, c) /= norm;
  }
}

std::vector<float> random_matrix(int rows, int cols, Rng& rng) {
  std::vector<double> m(static_cast<std::size_t>(rows) * cols);
  for (double& x : m) x = rng.normal();
  if (rows <= cols) {
    gram_schmidt(m, rows, cols, cols, 1);
  } else {
    gram_schmidt(m, cols, rows, 1, cols);
  }
  return std::vector<float>(m.begin(), m.end());
}

TokenGrid project(const TokenGrid& z, const std::vector<float>& weights, int d_model) {
  const int d_in = z.channels();
  const int n = z.tokens();
  std::vector<float> out(static_cast<std::size_t>(n) * d_model, 0.0f);
  const auto in = z.values();
  for (int t = 0; t < n; ++t) {
    float* dst = &out[static_cast<std::size_t>(t) * d_model];
    for (int i = 0; i < d_in; ++i) {
      const float zi = in[static_cast<std::size_t>(t) * d_in + i];
      const float* row = &weights[static_cast<std::size_t>(i) * d_model];
      for (int o = 0; o < d_model; ++o) dst[o] += zi * row[o];
    }
  }
  return TokenGrid(z.height(), z.width(), d_model, std::move(out));
}

void require_layout(const TokenGrid& a, const TokenGrid& b, const char* what) {
  if (!a.same_shape(b)) {
    throw ParameterError(std::string(what) + ": token grid shape mismatch");
  }
}

// exp(x) for x <= 0, accurate to about 2 ulp. Branch-free so the softmax
// loop vectorizes; inputs are clamped at -87 (exp(-87) is still a normal float).
inline float softmax_exp(float x) {
  constexpr float kLog2e = 1.44269504088896341f;
  constexpr float kLn2Hi = 0.693359375f;
  constexpr float kLn2Lo = -2.12194440e-4f;
  constexpr float kRound = 12582912.0f;  // 1.5 * 2^23
  const float clamped = std::max(x, -87.0f);
  const float n = (clamped * kLog2e + kRound) - kRound;
  const float r = clamped - n * kLn2Hi - n * kLn2Lo;
  float p = 1.9875691500e-4f;
  p = p * r + 1.3981999507e-3f;
  p = p * r + 8.3334519073e-3f;
  p = p * r + 4.1665795894e-2f;
  p = p * r + 1.6666665459e-1f;
  p = p * r + 5.0000001201e-1f;
  p = p * r * r + r + 1.0f;
  const std::int32_t bits = (static_cast<std::int32_t>(n) + 127) << 23;
  const float scale = std::bit_cast<float>(bits);
  return p * scale;
}

constexpr int kLanes = 8;

float lane_max(const float* x, int n) {
  std::array<float, kLanes> m;
  m.fill(-std::numeric_limits<float>::infinity());
  int j = 0;
  for (; j + kLanes <= n; j += kLanes) {
    for (int l = 0; l < kLanes; ++l) m[l] = std::max(m[l], x[j + l]);
  }
  for (; j < n; ++j) m[0] = std::max(m[0], x[j]);
  return *std::max_element(m.begin(), m.end());
}

float lane_sum(const float* x, int n) {
  std::array<float, kLanes> s{};
  int j = 0;
  for (; j + kLanes <= n; j += kLanes) {
    for (int l = 0; l < kLanes; ++l) s[l] += x[j + l];
  }
  for (; j < n; ++j) s[0] += x[j];
  float total = 0.0f;
  for (float v : s) total += v;
  return total;
}

float lane_dot(const float* a, const float* b, int n) {
  std::array<float, kLanes> s{};
  int j = 0;
  for (; j + kLanes <= n; j += kLanes) {
    for (int l = 0; l < kLanes; ++l) s[l] += a[j + l] * b[j + l];
  }
  for (; j < n; ++j) s[0] += a[j] * b[j];
  float total = 0.0f;
  for (float v : s) total += v;
  return total;
}

}  // namespace

std::vector<float> seeded_orthogonal(int rows, int cols, std::uint64_t seed) {
  if (rows <= 0 || cols <= 0) throw ParameterError("seeded_orthogonal: dimensions must be positive");
  Rng rng(seed);
  return random_matrix(rows, cols, rng);
}

void ProjectionWeights::validate() const {
  if (d_in <= 0 || d_model <= 0 || heads <= 0) {
    throw ParameterError("ProjectionWeights: dimensions must be positive");
  }
  if (d_model % heads != 0) {
    throw ParameterError("ProjectionWeights: heads " + std::to_string(heads) +
                         " does not divide d_model " + std::to_string(d_model));
  }
  const auto n = static_cast<std::size_t>(d_in) * d_model;
  for (const auto* m : {&wq, &wk, &wv}) {
    if (m->size() != n) throw ParameterError("ProjectionWeights: matrix size mismatch");
    if (std::any_of(m->begin(), m->end(), [](float x) { return !std::isfinite(x); })) {
      throw ParameterError("ProjectionWeights: non-finite weight");
    }
  }
}

ProjectionWeights ProjectionWeights::identity(int d, int heads) {
  ProjectionWeights w = zeros(d, d, heads);
  for (int i = 0; i < d; ++i) {
    const auto k = static_cast<std::size_t>(i) * d + i;
    w.wq[k] = w.wk[k] = w.wv[k] = 1.0f;
  }
  return w;
}

ProjectionWeights ProjectionWeights::zeros(int d_in, int d_model, int heads) {
  ProjectionWeights w;
  w.d_in = d_in;
  w.d_model = d_model;
  w.heads = heads;
  const auto n = static_cast<std::size_t>(std::max(d_in, 0)) * std::max(d_model, 0);
  w.wq.assign(n, 0.0f);
  w.wk.assign(n, 0.0f);
  w.wv.assign(n, 0.0f);
  w.validate();
  return w;
}

ProjectionWeights ProjectionWeights::random(int d_in, int d_model, int heads,
                                            std::uint64_t seed) {
  ProjectionWeights w = zeros(d_in, d_model, heads);
  Rng rng(seed);
  w.wq = random_matrix(d_in, d_model, rng);
  w.wk = random_matrix(d_in, d_model, rng);
  w.wv = random_matrix(d_in, d_model, rng);
  return w;
}

void AttentionConfig::validate() const {
  if (mechanism == Mechanism::cross_frame && !use_anchor) {
    throw ParameterError("AttentionConfig: cross_frame attention requires use_anchor");
  }
  if (layers) {
    for (int l : *layers) {
      if (l < 0) throw ParameterError("AttentionConfig: negative layer index");
    }
  }
}

Mechanism AttentionConfig::mechanism_for(int layer) const {
  if (mechanism != Mechanism::flow_guided) return mechanism;
  if (layers && !layers->contains(layer)) return Mechanism::self;
  return Mechanism::flow_guided;
}

QKV project_qkv(const TokenGrid& z, const ProjectionWeights& w) {
  w.validate();
  if (z.channels() != w.d_in) {
    throw ParameterError("project_qkv: token channels " + std::to_string(z.channels()) +
                         " != d_in " + std::to_string(w.d_in));
  }
  return QKV{project(z, w.wq, w.d_model), project(z, w.wk, w.d_model),
             project(z, w.wv, w.d_model)};
}

TokenGrid scaled_dot_attention(const TokenGrid& q, const TokenGrid& k, const TokenGrid& v,
                               int heads, AttentionProbe* probe) {
  const int d = q.channels();
  if (k.channels() != d || v.channels() != d) {
    throw ParameterError("scaled_dot_attention: Q/K/V channel mismatch");
  }
  if (k.tokens() != v.tokens()) {
    throw ParameterError("scaled_dot_attention: key and value token counts differ");
  }
  if (heads <= 0 || d % heads != 0) {
    throw ParameterError("scaled_dot_attention: heads " + std::to_string(heads) +
                         " does not divide " + std::to_string(d));
  }
  const int nq = q.tokens();
  const int nk = k.tokens();
  const int dh = d / heads;
  const float scale = 1.0f / std::sqrt(static_cast<float>(dh));
  const float offset = probe ? probe->logit_offset : 0.0f;
  if (probe && probe->record_weights) {
    probe->heads = heads;
    probe->queries = nq;
    probe->keys = nk;
    probe->weights.assign(static_cast<std::size_t>(heads) * nq * nk, 0.0f);
  }

  const auto qv = q.values();
  const auto kv = k.values();
  const auto vv = v.values();
  std::vector<float> out(static_cast<std::size_t>(nq) * d, 0.0f);
  std::vector<float> kt(static_cast<std::size_t>(dh) * nk);
  std::vector<float> vt(static_cast<std::size_t>(dh) * nk);
  std::vector<float> logits(static_cast<std::size_t>(nk));

  for (int h = 0; h < heads; ++h) {
    const int c0 = h * dh;
    for (int j = 0; j < nk; ++j) {
      for (int c = 0; c < dh; ++c) {
        kt[static_cast<std::size_t>(c) * nk + j] = kv[static_cast<std::size_t>(j) * d + c0 + c];
        vt[static_cast<std::size_t>(c) * nk + j] = vv[static_cast<std::size_t>(j) * d + c0 + c];
      }
    }
    for (int i = 0; i < nq; ++i) {
      const float* qi = &qv[static_cast<std::size_t>(i) * d + c0];
      std::fill(logits.begin(), logits.end(), 0.0f);
      for (int c = 0; c < dh; ++c) {
        const float qc = qi[c] * scale;
        const float* row = &kt[static_cast<std::size_t>(c) * nk];
        for (int j = 0; j < nk; ++j) logits[j] += qc * row[j];
      }
      if (offset != 0.0f) {
        for (float& l : logits) l += offset;
      }
      const float peak = lane_max(logits.data(), nk);
      for (float& l : logits) l = softmax_exp(l - peak);
      const float inv = 1.0f / lane_sum(logits.data(), nk);
      float* dst = &out[static_cast<std::size_t>(i) * d + c0];
      for (int c = 0; c < dh; ++c) {
        dst[c] = lane_dot(logits.data(), &vt[static_cast<std::size_t>(c) * nk], nk) * inv;
      }
      if (probe && probe->record_weights) {
        float* w = &probe->weights[(static_cast<std::size_t>(h) * nq + i) * nk];
        for (int j = 0; j < nk; ++j) w[j] = logits[j] * inv;
      }
    }
  }
  return TokenGrid(q.height(), q.width(), d, std::move(out));
}

TokenGrid cross_frame_attention(const TokenGrid& q, const TokenGrid& anchor_k,
                                const TokenGrid& anchor_v, int heads, AttentionProbe* probe) {
  return scaled_dot_attention(q, anchor_k, anchor_v, heads, probe);
}

LayerTokens fuse_previous_tokens(const TokenGrid& q, const TokenGrid& k, const TokenGrid& v,
                                 const LayerTokens& prev, const FlowField& flow,
                                 const OcclusionMask& mask, const AttentionConfig& cfg) {
  require_layout(q, k, "flow_guided_attention");
  require_layout(q, v, "flow_guided_attention");
  if (!cfg.warp_q && !cfg.warp_kv) return LayerTokens{q, k, v};
  if (flow.height() != q.height() || flow.width() != q.width() ||
      mask.height() != q.height() || mask.width() != q.width()) {
    throw ParameterError("flow_guided_attention: flow/mask are " + std::to_string(flow.height()) +
                         "x" + std::to_string(flow.width()) + " but tokens are " +
                         std::to_string(q.height()) + "x" + std::to_string(q.width()) +
                         "; resize the flow first");
  }
  LayerTokens fused;
  if (cfg.warp_q) {
    require_layout(q, prev.q, "flow_guided_attention (previous Q)");
    fused.q = fuse_tokens(backward_warp(prev.q, flow), q, mask);
  } else {
    fused.q = q;
  }
  if (cfg.warp_kv) {
    require_layout(k, prev.k, "flow_guided_attention (previous K)");
    require_layout(v, prev.v, "flow_guided_attention (previous V)");
    fused.k = fuse_tokens(backward_warp(prev.k, flow), k, mask);
    fused.v = fuse_tokens(backward_warp(prev.v, flow), v, mask);
  } else {
    fused.k = k;
    fused.v = v;
  }
  return fused;
}

TokenGrid flow_guided_attention(const TokenGrid& q, const TokenGrid& k, const TokenGrid& v,
                                const LayerTokens& prev, const AnchorTokens& anchor,
                                const FlowField& flow, const OcclusionMask& mask,
                                const AttentionConfig& cfg, int heads, AttentionProbe* probe,
                                LayerTokens* fused_out) {
  LayerTokens fused = fuse_previous_tokens(q, k, v, prev, flow, mask, cfg);
  TokenGrid out;
  if (!cfg.use_anchor) {
    out = scaled_dot_attention(fused.q, fused.k, fused.v, heads, probe);
  } else {
    if (anchor.k.channels() != k.channels() || anchor.v.channels() != v.channels() ||
        anchor.k.tokens() != anchor.v.tokens()) {
      throw ParameterError("flow_guided_attention: anchor tokens do not match key/value channels");
    }
    out = scaled_dot_attention(fused.q, concat_tokens(anchor.k, fused.k),
                               concat_tokens(anchor.v, fused.v), heads, probe);
  }
  if (fused_out) *fused_out = std::move(fused);
  return out;
}

FirstFrameResult first_frame_attention(const TokenGrid& q, const TokenGrid& k,
                                       const TokenGrid& v, int heads) {
  return FirstFrameResult{scaled_dot_attention(q, k, v, heads), AnchorTokens{k, v}};
}

}  // namespace tokenwarp
