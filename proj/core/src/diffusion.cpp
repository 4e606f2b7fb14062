#include "tokenwarp/diffusion.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "tokenwarp/errors.hpp"
#include "tokenwarp/rng.hpp"

namespace tokenwarp {
namespace {

// out[t] += in[t] * W for a (in_dim x out_dim) row-major W.
void accumulate_product(std::span<const float> in, int in_dim, const std::vector<float>& w,
                        int out_dim, std::vector<float>& out) {
  const std::size_t n = in.size() / in_dim;
  for (std::size_t t = 0; t < n; ++t) {
    float* dst = &out[t * out_dim];
    for (int i = 0; i < in_dim; ++i) {
      const float x = in[t * in_dim + i];
      const float* row = &w[static_cast<std::size_t>(i) * out_dim];
      for (int o = 0; o < out_dim; ++o) dst[o] += x * row[o];
    }
  }
}

void check_order(int t, int t_prev, const DiffusionSchedule& s, const char* what) {
  if (!(t_prev >= 0 && t_prev < t && t <= s.steps())) {
    throw ParameterError(std::string(what) + ": need 0 <= t_prev < t <= T, got t=" +
                         std::to_string(t) + ", t_prev=" + std::to_string(t_prev) +
                         ", T=" + std::to_string(s.steps()));
  }
}

void check_same(const TokenGrid& a, const TokenGrid& b, const char* what) {
  if (!a.same_shape(b)) throw ParameterError(std::string(what) + ": latent/eps shape mismatch");
}

TokenGrid checked_predict(const Denoiser& denoiser, const TokenGrid& z, int t,
                          const DenoiseContext* ctx) {
  TokenGrid eps = denoiser.predict(z, t, ctx);
  if (!eps.same_shape(z)) {
    throw ContractError("denoiser returned a " + std::to_string(eps.height()) + "x" +
                        std::to_string(eps.width()) + "x" + std::to_string(eps.channels()) +
                        " prediction for a " + std::to_string(z.height()) + "x" +
                        std::to_string(z.width()) + "x" + std::to_string(z.channels()) +
                        " latent");
  }
  return eps;
}

std::uint64_t frame_seed(const TranslationConfig& cfg, int frame) {
  return cfg.noise_mode == NoiseMode::shared_seed ? cfg.seed
                                                  : cfg.seed + static_cast<std::uint64_t>(frame);
}

}  // namespace

TokenGrid LinearDenoiser::predict(const TokenGrid& z_t, int, const DenoiseContext*) const {
  std::vector<float> out(z_t.values().begin(), z_t.values().end());
  for (float& x : out) x = static_cast<float>(c_ * x);
  return TokenGrid(z_t.height(), z_t.width(), z_t.channels(), std::move(out));
}

ToyAttentionDenoiser::ToyAttentionDenoiser(int channels, DiffusionSchedule schedule,
                                           ToyDenoiserOptions options)
    : channels_(channels), schedule_(std::move(schedule)), options_(options) {
  if (channels <= 0) throw ParameterError("ToyAttentionDenoiser: channels must be positive");
  if (options.blocks <= 0) throw ParameterError("ToyAttentionDenoiser: blocks must be positive");
  if (options.d_model <= 0 || options.heads <= 0 || options.d_model % options.heads != 0) {
    throw ParameterError("ToyAttentionDenoiser: heads must divide d_model");
  }
  if (schedule_.steps() == 0) throw ParameterError("ToyAttentionDenoiser: empty schedule");
  const int dm = options.d_model;
  const std::uint64_t base = options.seed * 0x9E3779B97F4A7C15ull;
  w_in_ = seeded_orthogonal(channels, dm, base + 1);
  w_cond_ = seeded_orthogonal(channels, dm, base + 2);
  Rng rng(base + 3);
  t_scale_.resize(dm);
  t_bias_.resize(dm);
  for (int o = 0; o < dm; ++o) {
    t_scale_[o] = static_cast<float>(0.5 * rng.normal());
    t_bias_[o] = static_cast<float>(0.1 * rng.normal());
  }
  for (int b = 0; b < options.blocks; ++b) {
    Block block;
    block.qkv = ProjectionWeights::random(dm, dm, options.heads, base + 100 + 2 * b);
    for (float& x : block.qkv.wq) x *= options.qk_gain;
    for (float& x : block.qkv.wk) x *= options.qk_gain;
    block.out = seeded_orthogonal(dm, dm, base + 101 + 2 * b);
    blocks_.push_back(std::move(block));
  }
  w_head_ = seeded_orthogonal(dm, channels, base + 4);
}

ToyAttentionDenoiser::Prediction ToyAttentionDenoiser::run(const TokenGrid& z_t, int t,
                                                           const DenoiseContext& ctx) const {
  if (z_t.channels() != channels_) {
    throw ParameterError("ToyAttentionDenoiser: latent has " + std::to_string(z_t.channels()) +
                         " channels, expected " + std::to_string(channels_));
  }
  if (t < 1 || t > schedule_.steps()) throw ParameterError("ToyAttentionDenoiser: bad timestep");
  const int dm = options_.d_model;
  const int n = z_t.tokens();
  const bool first = ctx.prev == nullptr;
  if (!first) {
    if (static_cast<int>(ctx.prev->size()) != options_.blocks ||
        !ctx.anchor || static_cast<int>(ctx.anchor->size()) != options_.blocks) {
      throw ParameterError("ToyAttentionDenoiser: cache does not match block count");
    }
  }

  std::vector<float> h(static_cast<std::size_t>(n) * dm, 0.0f);
  accumulate_product(z_t.values(), channels_, w_in_, dm, h);
  if (ctx.condition) {
    if (!ctx.condition->same_shape(z_t)) {
      throw ParameterError("ToyAttentionDenoiser: condition shape mismatch");
    }
    accumulate_product(ctx.condition->values(), channels_, w_cond_, dm, h);
  }
  const float tt = static_cast<float>(t) / static_cast<float>(schedule_.steps());
  for (int i = 0; i < n; ++i) {
    for (int o = 0; o < dm; ++o) h[static_cast<std::size_t>(i) * dm + o] += tt * t_scale_[o] + t_bias_[o];
  }

  Prediction pred;
  pred.tokens.reserve(blocks_.size());
  for (int b = 0; b < options_.blocks; ++b) {
    const Block& block = blocks_[b];
    TokenGrid hidden(z_t.height(), z_t.width(), dm, h);
    QKV qkv = project_qkv(hidden, block.qkv);
    const Mechanism mech = first ? Mechanism::self : ctx.attention.mechanism_for(b);
    TokenGrid attended;
    LayerTokens used;
    switch (mech) {
      case Mechanism::self:
        attended = scaled_dot_attention(qkv.q, qkv.k, qkv.v, options_.heads);
        used = LayerTokens{std::move(qkv.q), std::move(qkv.k), std::move(qkv.v)};
        break;
      case Mechanism::cross_frame:
        attended = cross_frame_attention(qkv.q, (*ctx.anchor)[b].k, (*ctx.anchor)[b].v,
                                         options_.heads);
        used = LayerTokens{std::move(qkv.q), std::move(qkv.k), std::move(qkv.v)};
        break;
      case Mechanism::flow_guided:
        if (!ctx.flow || !ctx.mask) {
          throw ParameterError("ToyAttentionDenoiser: flow-guided attention needs flow and mask");
        }
        attended = flow_guided_attention(qkv.q, qkv.k, qkv.v, (*ctx.prev)[b], (*ctx.anchor)[b],
                                         *ctx.flow, *ctx.mask, ctx.attention, options_.heads,
                                         nullptr, &used);
        break;
    }
    accumulate_product(attended.values(), dm, block.out, dm, h);
    pred.tokens.push_back(std::move(used));
  }

  std::vector<float> style(static_cast<std::size_t>(n) * channels_, 0.0f);
  accumulate_product(h, dm, w_head_, channels_, style);

  const double ab = schedule_.alpha_bar(t);
  const double sqrt_ab = std::sqrt(ab);
  const double sqrt_one_minus = std::sqrt(1.0 - ab);
  const auto z = z_t.values();
  std::vector<float> eps(z.size(), 0.0f);
  if (sqrt_one_minus > 1e-12) {
    const auto cond = ctx.condition ? ctx.condition->values() : std::span<const float>{};
    for (std::size_t i = 0; i < z.size(); ++i) {
      const double x0 = (cond.empty() ? 0.0 : cond[i]) + options_.style_gain * style[i];
      eps[i] = static_cast<float>((z[i] - sqrt_ab * x0) / sqrt_one_minus);
    }
  }
  pred.eps = TokenGrid(z_t.height(), z_t.width(), channels_, std::move(eps));
  return pred;
}

TokenGrid ToyAttentionDenoiser::predict(const TokenGrid& z_t, int t,
                                        const DenoiseContext* ctx) const {
  static const DenoiseContext kEmpty{};
  return run(z_t, t, ctx ? *ctx : kEmpty).eps;
}

void TranslationConfig::validate() const {
  if (steps < 1 || steps > schedule.steps()) {
    throw ParameterError("TranslationConfig: steps must be in [1, T], got " +
                         std::to_string(steps));
  }
  if (clip_len < 1) throw ParameterError("TranslationConfig: clip_len must be at least 1");
  attention.validate();
}

std::vector<int> sampling_timesteps(int T, int steps) {
  if (steps < 1 || steps > T) {
    throw ParameterError("sampling_timesteps: need 1 <= steps <= T");
  }
  const int stride = T / steps;
  std::vector<int> ts(static_cast<std::size_t>(steps));
  for (int k = 0; k < steps; ++k) ts[k] = T - k * stride;
  return ts;
}

TokenGrid ddim_step(const TokenGrid& z_t, const TokenGrid& eps, int t, int t_prev,
                    const DiffusionSchedule& s) {
  check_order(t, t_prev, s, "ddim_step");
  check_same(z_t, eps, "ddim_step");
  const double a_t = s.alpha_bar(t);
  const double a_p = s.alpha_bar(t_prev);
  const double ratio = std::sqrt(a_p) / std::sqrt(a_t);
  const double noise_t = std::sqrt(1.0 - a_t);
  const double noise_p = std::sqrt(1.0 - a_p);
  const auto z = z_t.values();
  const auto e = eps.values();
  std::vector<float> out(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) {
    if (a_t == a_p) {
      out[i] = z[i];
    } else {
      out[i] = static_cast<float>(ratio * (z[i] - noise_t * e[i]) + noise_p * e[i]);
    }
  }
  return TokenGrid(z_t.height(), z_t.width(), z_t.channels(), std::move(out));
}

TokenGrid ddim_invert_step(const TokenGrid& z_prev, const TokenGrid& eps, int t_prev, int t,
                           const DiffusionSchedule& s) {
  check_order(t, t_prev, s, "ddim_invert_step");
  check_same(z_prev, eps, "ddim_invert_step");
  const double a_t = s.alpha_bar(t);
  const double a_p = s.alpha_bar(t_prev);
  const double ratio = std::sqrt(a_t) / std::sqrt(a_p);
  const double noise_t = std::sqrt(1.0 - a_t);
  const double noise_p = std::sqrt(1.0 - a_p);
  const auto z = z_prev.values();
  const auto e = eps.values();
  std::vector<float> out(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) {
    if (a_t == a_p) {
      out[i] = z[i];
    } else {
      out[i] = static_cast<float>(ratio * (z[i] - noise_p * e[i]) + noise_t * e[i]);
    }
  }
  return TokenGrid(z_prev.height(), z_prev.width(), z_prev.channels(), std::move(out));
}

TokenGrid sample_frame(const TokenGrid& z_T, const Denoiser& denoiser,
                       const TranslationConfig& cfg, const DenoiseContext* ctx) {
  cfg.validate();
  const std::vector<int> ts = sampling_timesteps(cfg.schedule.steps(), cfg.steps);
  TokenGrid z = z_T;
  for (std::size_t k = 0; k < ts.size(); ++k) {
    const int t_prev = k + 1 < ts.size() ? ts[k + 1] : 0;
    const TokenGrid eps = checked_predict(denoiser, z, ts[k], ctx);
    z = ddim_step(z, eps, ts[k], t_prev, cfg.schedule);
  }
  return z;
}

TokenGrid invert_frame(const TokenGrid& z_0, const Denoiser& denoiser,
                       const TranslationConfig& cfg, const DenoiseContext* ctx,
                       InversionOptions options) {
  cfg.validate();
  if (options.refinements < 0) throw ParameterError("invert_frame: negative refinements");
  const std::vector<int> ts = sampling_timesteps(cfg.schedule.steps(), cfg.steps);
  TokenGrid z = z_0;
  int t_prev = 0;
  for (auto it = ts.rbegin(); it != ts.rend(); ++it) {
    const int t = *it;
    TokenGrid next = ddim_invert_step(z, checked_predict(denoiser, z, t, ctx), t_prev, t,
                                      cfg.schedule);
    for (int r = 0; r < options.refinements; ++r) {
      next = ddim_invert_step(z, checked_predict(denoiser, next, t, ctx), t_prev, t,
                              cfg.schedule);
    }
    z = std::move(next);
    t_prev = t;
  }
  return z;
}

TokenGrid gaussian_latent(int h, int w, int d, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<float> data(static_cast<std::size_t>(h) * w * d);
  for (float& x : data) x = static_cast<float>(rng.normal());
  return TokenGrid(h, w, d, std::move(data));
}

TranslationResult translate_range(std::span<const TokenGrid> latents,
                                  std::span<const FlowField> flows,
                                  std::span<const OcclusionMask> masks,
                                  const ToyAttentionDenoiser& denoiser,
                                  const TranslationConfig& cfg, int begin, int end,
                                  TokenCache cache) {
  cfg.validate();
  const int n = static_cast<int>(latents.size());
  if (n == 0) throw ParameterError("translate: no frames");
  if (static_cast<int>(flows.size()) != n - 1 || static_cast<int>(masks.size()) != n - 1) {
    throw ParameterError("translate: expected " + std::to_string(n - 1) +
                         " flows and masks, got " + std::to_string(flows.size()) + " and " +
                         std::to_string(masks.size()));
  }
  if (begin < 0 || end > n || begin >= end) throw ParameterError("translate: bad frame range");
  if (begin == 0 && !cache.empty()) throw ParameterError("translate: frame 0 needs an empty cache");
  if (begin > 0 && (cache.empty() || cache.frame_index != begin - 1)) {
    throw ParameterError("translate: range starting at frame " + std::to_string(begin) +
                         " needs the cache of frame " + std::to_string(begin - 1));
  }
  if (!cache.empty() && cache.mode != cfg.cache_mode) {
    throw ParameterError("translate: cache mode differs from configuration");
  }
  const TokenGrid& first = latents.front();
  for (const TokenGrid& l : latents) {
    if (!l.same_shape(first)) throw ParameterError("translate: latent shape mismatch");
  }
  for (int i = 0; i + 1 < n; ++i) {
    if (flows[i].height() != first.height() || flows[i].width() != first.width() ||
        masks[i].height() != first.height() || masks[i].width() != first.width()) {
      throw ParameterError("translate: flow/mask " + std::to_string(i + 1) +
                           " is not at token resolution");
    }
  }

  const std::vector<int> ts = sampling_timesteps(cfg.schedule.steps(), cfg.steps);
  const bool per_step = cfg.cache_mode == CacheMode::per_timestep;
  cache.mode = cfg.cache_mode;

  TranslationResult result;
  for (int i = begin; i < end; ++i) {
    const bool first_frame = cache.empty();
    DenoiseContext ctx;
    ctx.condition = &latents[i];
    ctx.attention = cfg.attention;
    if (!first_frame) {
      ctx.flow = &flows[i - 1];
      ctx.mask = &masks[i - 1];
    }
    std::vector<std::vector<LayerTokens>> stored;
    TokenGrid z = gaussian_latent(first.height(), first.width(), first.channels(),
                                  frame_seed(cfg, i));
    for (std::size_t k = 0; k < ts.size(); ++k) {
      const std::size_t slot = per_step ? k : 0;
      if (!first_frame) {
        ctx.prev = &cache.prev[slot];
        ctx.anchor = &cache.anchor[slot];
      }
      ToyAttentionDenoiser::Prediction pred = denoiser.run(z, ts[k], ctx);
      if (!pred.eps.same_shape(z)) throw ContractError("denoiser changed the latent shape");
      if (per_step || k + 1 == ts.size()) stored.push_back(std::move(pred.tokens));
      const int t_prev = k + 1 < ts.size() ? ts[k + 1] : 0;
      z = ddim_step(z, pred.eps, ts[k], t_prev, cfg.schedule);
    }
    result.frames.push_back(std::move(z));
    if (first_frame) {
      cache.anchor.clear();
      for (const auto& slot : stored) {
        std::vector<AnchorTokens> anchors;
        for (const LayerTokens& layer : slot) anchors.push_back(AnchorTokens{layer.k, layer.v});
        cache.anchor.push_back(std::move(anchors));
      }
    }
    cache.prev = std::move(stored);
    cache.frame_index = i;
  }
  result.cache = std::move(cache);
  return result;
}

TranslationResult translate_video(std::span<const TokenGrid> latents,
                                  std::span<const FlowField> flows,
                                  std::span<const OcclusionMask> masks,
                                  const ToyAttentionDenoiser& denoiser,
                                  const TranslationConfig& cfg) {
  return translate_range(latents, flows, masks, denoiser, cfg, 0,
                         static_cast<int>(latents.size()), TokenCache{});
}

ClipRun translate_clips(std::span<const TokenGrid> latents, std::span<const FlowField> flows,
                        std::span<const OcclusionMask> masks,
                        const ToyAttentionDenoiser& denoiser, const TranslationConfig& cfg) {
  cfg.validate();
  const int n = static_cast<int>(latents.size());
  ClipRun run;
  TokenCache cache;
  for (int begin = 0; begin < n; begin += cfg.clip_len) {
    const int end = std::min(n, begin + cfg.clip_len);
    TranslationResult clip =
        translate_range(latents, flows, masks, denoiser, cfg, begin, end, std::move(cache));
    for (TokenGrid& f : clip.frames) run.frames.push_back(std::move(f));
    cache = std::move(clip.cache);
    if (end < n) run.handoff_sizes.push_back(cache.value_count());
  }
  return run;
}

}  // namespace tokenwarp
