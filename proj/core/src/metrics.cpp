#include "tokenwarp/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <string>

#include "tokenwarp/errors.hpp"
#include "tokenwarp/warp.hpp"

namespace tokenwarp {
namespace {

// Fractional overlap of input cells with output bin j when n cells are
// pooled into `bins` bins.
std::vector<std::vector<std::pair<int, double>>> pooling_bins(int n, int bins) {
  std::vector<std::vector<std::pair<int, double>>> out(static_cast<std::size_t>(bins));
  const double scale = static_cast<double>(n) / bins;
  for (int j = 0; j < bins; ++j) {
    const double lo = j * scale;
    const double hi = (j + 1) * scale;
    for (int i = static_cast<int>(std::floor(lo)); i < n && i < hi; ++i) {
      const double overlap = std::min<double>(i + 1, hi) - std::max<double>(i, lo);
      if (overlap > 0.0) out[j].emplace_back(i, overlap / scale);
    }
  }
  return out;
}

}  // namespace

double warp_error(const VideoTensor& video, std::span<const FlowField> bwd_flows,
                  std::span<const OcclusionMask> masks, bool masked) {
  const int n = video.frames();
  if (static_cast<int>(bwd_flows.size()) != n - 1) {
    throw ParameterError("warp_error: expected " + std::to_string(n - 1) + " flows, got " +
                         std::to_string(bwd_flows.size()));
  }
  if (masked && static_cast<int>(masks.size()) != n - 1) {
    throw ParameterError("warp_error: expected " + std::to_string(n - 1) + " masks, got " +
                         std::to_string(masks.size()));
  }
  const int h = video.height();
  const int w = video.width();
  const int c = video.channels();
  double total = 0.0;
  int pairs = 0;
  for (int i = 1; i < n; ++i) {
    const FlowField& flow = bwd_flows[i - 1];
    if (flow.height() != h || flow.width() != w) {
      throw ParameterError("warp_error: flow " + std::to_string(i) + " is not at pixel resolution");
    }
    if (masked && (masks[i - 1].height() != h || masks[i - 1].width() != w)) {
      throw ParameterError("warp_error: mask " + std::to_string(i) + " shape mismatch");
    }
    const TokenGrid warped = backward_warp(video.frame(i - 1), flow);
    const auto cur = video.frame_values(i);
    const auto prev = warped.values();
    double sum = 0.0;
    std::size_t count = 0;
    for (int p = 0; p < h * w; ++p) {
      if (masked && !(masks[i - 1].values()[p] > 0.5f)) continue;
      for (int ch = 0; ch < c; ++ch) {
        const std::size_t k = static_cast<std::size_t>(p) * c + ch;
        const double d = static_cast<double>(cur[k]) - prev[k];
        sum += d * d;
      }
      count += c;
    }
    if (count == 0) continue;
    total += sum / static_cast<double>(count);
    ++pairs;
  }
  return pairs == 0 ? 0.0 : total / pairs;
}

std::vector<double> frame_embedding(const VideoTensor& video, int frame) {
  const int h = video.height();
  const int w = video.width();
  const int c = video.channels();
  const auto rows = pooling_bins(h, kEmbeddingGrid);
  const auto cols = pooling_bins(w, kEmbeddingGrid);
  const auto px = video.frame_values(frame);
  std::vector<double> emb(static_cast<std::size_t>(kEmbeddingGrid) * kEmbeddingGrid * c, 0.0);
  for (int by = 0; by < kEmbeddingGrid; ++by) {
    for (int bx = 0; bx < kEmbeddingGrid; ++bx) {
      for (auto [y, wy] : rows[by]) {
        for (auto [x, wx] : cols[bx]) {
          const double weight = wy * wx;
          for (int ch = 0; ch < c; ++ch) {
            emb[(static_cast<std::size_t>(by) * kEmbeddingGrid + bx) * c + ch] +=
                weight * px[(static_cast<std::size_t>(y) * w + x) * c + ch];
          }
        }
      }
    }
  }
  return emb;
}

double temporal_consistency(const VideoTensor& video) {
  if (video.frames() < 2) throw ParameterError("temporal_consistency: need at least 2 frames");
  std::vector<double> prev = frame_embedding(video, 0);
  double total = 0.0;
  for (int i = 1; i < video.frames(); ++i) {
    std::vector<double> cur = frame_embedding(video, i);
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t k = 0; k < cur.size(); ++k) {
      dot += prev[k] * cur[k];
      na += prev[k] * prev[k];
      nb += cur[k] * cur[k];
    }
    if (na == 0.0 || nb == 0.0) {
      total += (na == 0.0 && nb == 0.0) ? 1.0 : 0.0;
    } else {
      total += dot / (std::sqrt(na) * std::sqrt(nb));
    }
    prev = std::move(cur);
  }
  return total / (video.frames() - 1);
}

std::vector<AblationVariant> canonical_variants() {
  std::vector<AblationVariant> v;
  AttentionConfig baseline;
  baseline.mechanism = Mechanism::cross_frame;
  baseline.use_anchor = true;
  baseline.warp_q = false;
  baseline.warp_kv = false;
  v.push_back({"baseline", baseline});

  AttentionConfig fg;
  fg.mechanism = Mechanism::flow_guided;
  fg.use_anchor = true;
  fg.warp_q = true;
  fg.warp_kv = false;
  v.push_back({"q_warp", fg});
  fg.warp_q = false;
  fg.warp_kv = true;
  v.push_back({"kv_warp", fg});
  fg.warp_q = true;
  v.push_back({"full", fg});
  return v;
}

std::vector<AblationVariant> block_variants(int blocks) {
  if (blocks < 1 || blocks > 16) throw ParameterError("block_variants: unsupported block count");
  std::vector<AblationVariant> v;
  for (unsigned subset = 1; subset < (1u << blocks); ++subset) {
    AblationVariant variant;
    variant.name = "blocks";
    std::set<int> layers;
    for (int b = 0; b < blocks; ++b) {
      if (subset & (1u << b)) {
        layers.insert(b);
        variant.name += "_" + std::to_string(b + 1);
      }
    }
    variant.attention.layers = std::move(layers);
    v.push_back(std::move(variant));
  }
  return v;
}

std::vector<AblationRow> ablation_report(const SceneBundle& bundle,
                                         const ToyDenoiserOptions& denoiser_options,
                                         std::span<const AblationVariant> variants,
                                         const TranslationConfig& cfg) {
  if (variants.empty()) throw ParameterError("ablation_report: no variants");
  const VideoTensor& video = bundle.video;
  std::vector<TokenGrid> latents;
  for (int i = 0; i < video.frames(); ++i) latents.push_back(video.frame(i));
  const ToyAttentionDenoiser denoiser(video.channels(), cfg.schedule, denoiser_options);

  std::vector<AblationRow> rows;
  for (const AblationVariant& variant : variants) {
    TranslationConfig run_cfg = cfg;
    run_cfg.attention = variant.attention;
    TranslationResult result =
        translate_video(latents, bundle.bwd_flows, bundle.occlusion, denoiser, run_cfg);
    const VideoTensor out = VideoTensor::from_frames(result.frames);
    AblationRow row;
    row.variant = variant.name;
    row.warp_err = warp_error(out, bundle.bwd_flows, bundle.occlusion, /*masked=*/true);
    row.tem_con = out.frames() >= 2 ? temporal_consistency(out) : 1.0;
    rows.push_back(std::move(row));
  }
  return rows;
}

void write_report_csv(std::ostream& out, std::span<const AblationRow> rows) {
  out << "variant,warp_err,tem_con\n";
  char buf[64];
  for (const AblationRow& row : rows) {
    std::snprintf(buf, sizeof(buf), "%.6f,%.6f", row.warp_err, row.tem_con);
    out << row.variant << ',' << buf << '\n';
  }
}

}  // namespace tokenwarp
