#pragma once

#include "tokenwarp/types.hpp"

namespace tokenwarp {

/// Forward-backward consistency thresholds. A pixel is consistent when
/// |r|^2 < alpha * (|f_bwd|^2 + |f_fwd|^2) + beta.
struct OcclusionParams {
  double alpha = 0.01;
  double beta = 0.5;
  bool soft = false;
};

struct BlockMatchParams {
  int block = 9;   ///< odd patch side
  int radius = 8;  ///< search radius in full-resolution pixels
  int levels = 3;  ///< pyramid levels, each halving the resolution
};

/// Resamples a flow field to (target_h, target_w): area averaging along an
/// axis that shrinks, bilinear along an axis that grows. Displacements are
/// rescaled so they are expressed in target-grid pixels.
FlowField resize_flow(const FlowField& flow, int target_h, int target_w);

/// Same resampling as resize_flow without any value scaling.
OcclusionMask resize_mask(const OcclusionMask& mask, int target_h, int target_w);

/// Bilinear gather of `grid` at (x + u, y + v) with border clamping.
/// Channels are interpolated independently.
TokenGrid backward_warp(const TokenGrid& grid, const FlowField& flow);

/// m * warped + (1 - m) * current, with the mask broadcast over channels.
TokenGrid fuse_tokens(const TokenGrid& warped, const TokenGrid& current,
                      const OcclusionMask& mask);

/// Forward-backward consistency check. `backward` is f_{i=>i-1} defined on
/// frame i, `forward` is f_{i-1=>i} defined on frame i-1; the result lives
/// on frame i and is 0 where the backward correspondence is unreliable.
OcclusionMask estimate_occlusion(const FlowField& backward, const FlowField& forward,
                                 const OcclusionParams& params = {});

/// Coarse-to-fine SAD block matching. Returns the backward flow next=>prev
/// in integer pixels. Costs are summed over channels; ties go to the
/// smallest displacement magnitude, then to the smallest (v, u).
FlowField block_match_flow(const TokenGrid& prev, const TokenGrid& next,
                           const BlockMatchParams& params = {});

}  // namespace tokenwarp
