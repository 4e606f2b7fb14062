#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <vector>

#include "tokenwarp/types.hpp"

namespace tokenwarp {

/// Query/key/value projections, each a d_in x d_model matrix stored
/// row-major (input channel major). `heads` must divide d_model.
struct ProjectionWeights {
  int d_in = 0;
  int d_model = 0;
  int heads = 1;
  std::vector<float> wq;
  std::vector<float> wk;
  std::vector<float> wv;

  void validate() const;

  static ProjectionWeights identity(int d, int heads = 1);
  static ProjectionWeights zeros(int d_in, int d_model, int heads = 1);
  /// Seeded near-orthogonal matrices (Gram-Schmidt on Gaussian draws).
  static ProjectionWeights random(int d_in, int d_model, int heads, std::uint64_t seed);
};

/// rows x cols matrix (row-major) with orthonormal rows or columns,
/// whichever count is smaller, drawn from a seeded Gaussian.
std::vector<float> seeded_orthogonal(int rows, int cols, std::uint64_t seed);

struct QKV {
  TokenGrid q;
  TokenGrid k;
  TokenGrid v;
};

enum class Mechanism { self, cross_frame, flow_guided };

struct AttentionConfig {
  Mechanism mechanism = Mechanism::flow_guided;
  bool use_anchor = true;
  bool warp_q = true;
  bool warp_kv = true;
  /// Layers that run flow-guided attention; unset means every layer.
  /// Unselected layers fall back to plain self-attention.
  std::optional<std::set<int>> layers;

  void validate() const;
  /// The attention actually used by `layer` for frames after the first.
  Mechanism mechanism_for(int layer) const;
};

/// Optional instrumentation for scaled_dot_attention. `logit_offset` is
/// added to every logit before the softmax; with `record_weights` the
/// normalized weights are kept as [heads][queries][keys].
struct AttentionProbe {
  bool record_weights = false;
  float logit_offset = 0.0f;
  int heads = 0;
  int queries = 0;
  int keys = 0;
  std::vector<float> weights;

  float weight(int head, int query, int key) const {
    return weights[(static_cast<std::size_t>(head) * queries + query) * keys + key];
  }
};

/// Per-token matrix product z * W for each of W^Q, W^K, W^V.
QKV project_qkv(const TokenGrid& z, const ProjectionWeights& w);

/// Multi-head softmax(Q K^T / sqrt(d_h)) V. Keys and values are token
/// lists (their grid layout is ignored) and may hold a different number of
/// tokens than Q; the output has Q's layout.
TokenGrid scaled_dot_attention(const TokenGrid& q, const TokenGrid& k, const TokenGrid& v,
                               int heads, AttentionProbe* probe = nullptr);

/// Queries of the current frame against the anchor frame's keys/values.
TokenGrid cross_frame_attention(const TokenGrid& q, const TokenGrid& anchor_k,
                                const TokenGrid& anchor_v, int heads,
                                AttentionProbe* probe = nullptr);

/// Flow-guided attention for frame i.
///
/// The previous frame's tokens are backward-warped with `flow` and fused
/// with the current ones through `mask`; `cfg.warp_q` gates the query,
/// `cfg.warp_kv` the key/value pair. With `cfg.use_anchor` the anchor tokens
/// are prepended to the key/value lists along the token axis. `flow` and
/// `mask` must already be at token resolution. When `fused_out` is given it
/// receives the fused Q^f, K^f, V^f (without the anchor).
TokenGrid flow_guided_attention(const TokenGrid& q, const TokenGrid& k, const TokenGrid& v,
                                const LayerTokens& prev, const AnchorTokens& anchor,
                                const FlowField& flow, const OcclusionMask& mask,
                                const AttentionConfig& cfg, int heads,
                                AttentionProbe* probe = nullptr,
                                LayerTokens* fused_out = nullptr);

/// The fused Q^f, K^f, V^f that flow_guided_attention attends with.
LayerTokens fuse_previous_tokens(const TokenGrid& q, const TokenGrid& k, const TokenGrid& v,
                                 const LayerTokens& prev, const FlowField& flow,
                                 const OcclusionMask& mask, const AttentionConfig& cfg);

struct FirstFrameResult {
  TokenGrid output;
  AnchorTokens anchor;
};

/// Plain self-attention on the first frame; its keys/values become the anchor.
FirstFrameResult first_frame_attention(const TokenGrid& q, const TokenGrid& k,
                                       const TokenGrid& v, int heads);

}  // namespace tokenwarp
