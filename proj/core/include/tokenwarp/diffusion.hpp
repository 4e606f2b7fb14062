#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "tokenwarp/attention.hpp"
#include "tokenwarp/types.hpp"

namespace tokenwarp {

/// Everything a denoiser may look at besides z_t and t. A null `prev`
/// marks the first frame of a video (plain self-attention everywhere).
struct DenoiseContext {
  const TokenGrid* condition = nullptr;  ///< structure guidance (the source latent)
  const std::vector<LayerTokens>* prev = nullptr;
  const std::vector<AnchorTokens>* anchor = nullptr;
  const FlowField* flow = nullptr;
  const OcclusionMask* mask = nullptr;
  AttentionConfig attention;
};

/// Noise predictor eps(z_t, t). Must be deterministic and shape-preserving.
class Denoiser {
 public:
  virtual ~Denoiser() = default;
  virtual TokenGrid predict(const TokenGrid& z_t, int t, const DenoiseContext* ctx) const = 0;
};

/// eps = c * z_t. Keeps sampling bounded while |c| < 1 / max_t sqrt(1 - alpha_bar_t).
class LinearDenoiser final : public Denoiser {
 public:
  explicit LinearDenoiser(double c) : c_(c) {}
  TokenGrid predict(const TokenGrid& z_t, int t, const DenoiseContext* ctx) const override;
  double coefficient() const noexcept { return c_; }

 private:
  double c_;
};

struct ToyDenoiserOptions {
  int blocks = 3;
  int d_model = 16;
  int heads = 2;
  std::uint64_t seed = 0;
  /// Multiplies W^Q and W^K; larger values sharpen the attention maps.
  float qk_gain = 4.0f;
  /// Weight of the attention stream in the clean-latent estimate.
  float style_gain = 1.0f;
};

/// Attention-only stand-in for the U-Net: an input embedding (latent,
/// condition, timestep), `blocks` residual attention blocks and an output
/// head. The head produces a clean-latent estimate x0 = condition + style,
/// which is turned into an eps prediction through the schedule.
class ToyAttentionDenoiser final : public Denoiser {
 public:
  ToyAttentionDenoiser(int channels, DiffusionSchedule schedule, ToyDenoiserOptions options = {});

  struct Prediction {
    TokenGrid eps;
    /// Per block, the Q/K/V the block attended with (fused when flow-guided).
    std::vector<LayerTokens> tokens;
  };

  Prediction run(const TokenGrid& z_t, int t, const DenoiseContext& ctx) const;
  TokenGrid predict(const TokenGrid& z_t, int t, const DenoiseContext* ctx) const override;

  int channels() const noexcept { return channels_; }
  int blocks() const noexcept { return options_.blocks; }
  const ToyDenoiserOptions& options() const noexcept { return options_; }
  const DiffusionSchedule& schedule() const noexcept { return schedule_; }

 private:
  struct Block {
    ProjectionWeights qkv;
    std::vector<float> out;  // d_model x d_model
  };

  int channels_;
  DiffusionSchedule schedule_;
  ToyDenoiserOptions options_;
  std::vector<float> w_in_;    // channels x d_model
  std::vector<float> w_cond_;  // channels x d_model
  std::vector<float> t_scale_;
  std::vector<float> t_bias_;
  std::vector<Block> blocks_;
  std::vector<float> w_head_;  // d_model x channels
};

enum class NoiseMode { shared_seed, per_frame_seed };

struct TranslationConfig {
  int steps = 50;
  DiffusionSchedule schedule = default_schedule();
  NoiseMode noise_mode = NoiseMode::per_frame_seed;
  CacheMode cache_mode = CacheMode::final_step;
  int clip_len = 8;
  AttentionConfig attention;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Sampling timesteps T, T - s, ..., T - (steps-1) s with s = floor(T / steps).
std::vector<int> sampling_timesteps(int T, int steps);

/// Deterministic DDIM update (eta = 0) from t to t_prev; t_prev = 0 is the
/// terminal step with alpha_bar = 1.
TokenGrid ddim_step(const TokenGrid& z_t, const TokenGrid& eps, int t, int t_prev,
                    const DiffusionSchedule& s);

/// Algebraic inverse of ddim_step for the same eps: recovers z_t from z_{t_prev}.
TokenGrid ddim_invert_step(const TokenGrid& z_prev, const TokenGrid& eps, int t_prev, int t,
                           const DiffusionSchedule& s);

/// Runs the sampler from z_T to z_0 with `ctx` handed to every call.
TokenGrid sample_frame(const TokenGrid& z_T, const Denoiser& denoiser,
                       const TranslationConfig& cfg, const DenoiseContext* ctx = nullptr);

struct InversionOptions {
  /// Extra evaluations of eps at the current estimate of the target latent.
  /// 0 is plain inversion with eps taken at the source latent of each step.
  int refinements = 1;
};

/// DDIM inversion z_0 -> z_T over the reversed sampling timesteps.
TokenGrid invert_frame(const TokenGrid& z_0, const Denoiser& denoiser,
                       const TranslationConfig& cfg, const DenoiseContext* ctx = nullptr,
                       InversionOptions options = {});

/// Seeded standard-normal latent.
TokenGrid gaussian_latent(int h, int w, int d, std::uint64_t seed);

struct TranslationResult {
  std::vector<TokenGrid> frames;
  TokenCache cache;
};

/// Frame-by-frame translation. Frame 0 runs plain self-attention and seeds
/// the cache (previous tokens and anchor); every later frame attends per
/// `cfg.attention` using flows[i-1] / masks[i-1] (frame i => frame i-1, at
/// token resolution). `latents` are the structure conditions of the frames.
TranslationResult translate_video(std::span<const TokenGrid> latents,
                                  std::span<const FlowField> flows,
                                  std::span<const OcclusionMask> masks,
                                  const ToyAttentionDenoiser& denoiser,
                                  const TranslationConfig& cfg);

/// Translates frames [begin, end) starting from `cache` (empty when begin
/// is 0). This is the unit of work of clip-by-clip translation.
TranslationResult translate_range(std::span<const TokenGrid> latents,
                                  std::span<const FlowField> flows,
                                  std::span<const OcclusionMask> masks,
                                  const ToyAttentionDenoiser& denoiser,
                                  const TranslationConfig& cfg, int begin, int end,
                                  TokenCache cache);

struct ClipRun {
  std::vector<TokenGrid> frames;
  /// Size (in floats) of the state handed across each clip boundary.
  std::vector<std::size_t> handoff_sizes;
};

/// Clip-by-clip translation with cfg.clip_len frames per clip; only the
/// token cache crosses clip boundaries.
ClipRun translate_clips(std::span<const TokenGrid> latents, std::span<const FlowField> flows,
                        std::span<const OcclusionMask> masks,
                        const ToyAttentionDenoiser& denoiser, const TranslationConfig& cfg);

}  // namespace tokenwarp
