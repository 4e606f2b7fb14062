#pragma once

#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "tokenwarp/attention.hpp"
#include "tokenwarp/diffusion.hpp"
#include "tokenwarp/synth.hpp"
#include "tokenwarp/types.hpp"

namespace tokenwarp {

/// Mean over consecutive pairs of the mean squared difference between frame
/// i and frame i-1 backward-warped by bwd_flows[i-1]. With `masked`, only
/// pixels whose mask exceeds 0.5 count (masks may be empty otherwise);
/// pairs without any such pixel are skipped.
double warp_error(const VideoTensor& video, std::span<const FlowField> bwd_flows,
                  std::span<const OcclusionMask> masks, bool masked);

/// Side of the pooled grid used as the frame embedding.
inline constexpr int kEmbeddingGrid = 16;

/// Frame embedding: area-average pooling to a 16x16 grid per channel,
/// flattened.
std::vector<double> frame_embedding(const VideoTensor& video, int frame);

/// Mean cosine similarity of consecutive frame embeddings. Requires n >= 2.
double temporal_consistency(const VideoTensor& video);

struct AblationVariant {
  std::string name;
  AttentionConfig attention;
};

struct AblationRow {
  std::string variant;
  double warp_err = 0.0;
  double tem_con = 0.0;
};

/// Cross-frame baseline, Q warping, KV warping and the full mechanism,
/// all with anchor tokens.
std::vector<AblationVariant> canonical_variants();

/// Full flow-guided attention restricted to every non-empty subset of the
/// denoiser's blocks; names list 1-based block numbers, e.g. "blocks_1_3".
std::vector<AblationVariant> block_variants(int blocks);

/// Translates the scene once per variant with identical seeds and reports
/// masked Warp-Err and Tem-Con of each result.
std::vector<AblationRow> ablation_report(const SceneBundle& bundle,
                                         const ToyDenoiserOptions& denoiser,
                                         std::span<const AblationVariant> variants,
                                         const TranslationConfig& cfg);

/// CSV with header "variant,warp_err,tem_con" and six fractional digits.
void write_report_csv(std::ostream& out, std::span<const AblationRow> rows);

}  // namespace tokenwarp
