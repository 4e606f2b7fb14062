#pragma once

#include <cstddef>
#include <span>
#include <utility>
#include <vector>

namespace tokenwarp {

/// One frame's token field: h rows, w columns, d channels, stored row-major
/// as (y, x, channel). Holds latents as well as query/key/value patches.
///
/// Values are validated on construction (length and finiteness) and are
/// read-only afterwards. A default-constructed grid is empty (0x0x0) and
/// only serves as a placeholder.
class TokenGrid {
 public:
  TokenGrid() = default;
  TokenGrid(int h, int w, int d, std::vector<float> data);

  static TokenGrid zeros(int h, int w, int d);
  static TokenGrid filled(int h, int w, int d, float value);

  int height() const noexcept { return h_; }
  int width() const noexcept { return w_; }
  int channels() const noexcept { return d_; }
  int tokens() const noexcept { return h_ * w_; }
  bool empty() const noexcept { return data_.empty(); }

  std::size_t index(int y, int x, int c) const noexcept {
    return (static_cast<std::size_t>(y) * w_ + x) * d_ + c;
  }
  float at(int y, int x, int c) const noexcept { return data_[index(y, x, c)]; }

  std::span<const float> values() const noexcept { return data_; }
  std::span<const float> token(int i) const noexcept {
    return std::span<const float>(data_).subspan(static_cast<std::size_t>(i) * d_, d_);
  }

  bool same_shape(const TokenGrid& o) const noexcept {
    return h_ == o.h_ && w_ == o.w_ && d_ == o.d_;
  }
  bool same_layout(const TokenGrid& o) const noexcept { return h_ == o.h_ && w_ == o.w_; }

  /// Moves the storage out, leaving the grid empty.
  std::vector<float> release() && { return std::exchange(data_, {}); }

  friend bool operator==(const TokenGrid&, const TokenGrid&) = default;

 private:
  int h_ = 0;
  int w_ = 0;
  int d_ = 0;
  std::vector<float> data_;
};

/// Concatenates the tokens of `a` and `b` (in that order) into a 1 x (na+nb)
/// grid. Channel counts must agree.
TokenGrid concat_tokens(const TokenGrid& a, const TokenGrid& b);

/// Backward flow f_{i=>i-1} on an h x w grid. The source of target pixel
/// (x, y) lives at (x + u, y + v) in the previous frame. Units are pixels of
/// this field's own grid.
class FlowField {
 public:
  FlowField() = default;
  FlowField(int h, int w, std::vector<float> u, std::vector<float> v);

  static FlowField zeros(int h, int w);
  static FlowField constant(int h, int w, float u, float v);

  int height() const noexcept { return h_; }
  int width() const noexcept { return w_; }
  bool empty() const noexcept { return u_.empty(); }

  float u(int y, int x) const noexcept { return u_[static_cast<std::size_t>(y) * w_ + x]; }
  float v(int y, int x) const noexcept { return v_[static_cast<std::size_t>(y) * w_ + x]; }
  std::span<const float> u_values() const noexcept { return u_; }
  std::span<const float> v_values() const noexcept { return v_; }

  friend bool operator==(const FlowField&, const FlowField&) = default;

 private:
  int h_ = 0;
  int w_ = 0;
  std::vector<float> u_;
  std::vector<float> v_;
};

/// Per-pixel validity of the backward correspondence. 1 = the token may come
/// from the previous frame, 0 = occluded (token must come from the current
/// frame). Values in [0, 1].
class OcclusionMask {
 public:
  OcclusionMask() = default;
  OcclusionMask(int h, int w, std::vector<float> m);

  static OcclusionMask filled(int h, int w, float value);
  static OcclusionMask ones(int h, int w) { return filled(h, w, 1.0f); }
  static OcclusionMask zeros(int h, int w) { return filled(h, w, 0.0f); }

  int height() const noexcept { return h_; }
  int width() const noexcept { return w_; }
  bool empty() const noexcept { return m_.empty(); }

  float at(int y, int x) const noexcept { return m_[static_cast<std::size_t>(y) * w_ + x]; }
  std::span<const float> values() const noexcept { return m_; }

  friend bool operator==(const OcclusionMask&, const OcclusionMask&) = default;

 private:
  int h_ = 0;
  int w_ = 0;
  std::vector<float> m_;
};

/// n frames of h x w x c, frame-major then row-major.
class VideoTensor {
 public:
  VideoTensor() = default;
  VideoTensor(int n, int h, int w, int c, std::vector<float> data);

  static VideoTensor from_frames(std::span<const TokenGrid> frames);

  int frames() const noexcept { return n_; }
  int height() const noexcept { return h_; }
  int width() const noexcept { return w_; }
  int channels() const noexcept { return c_; }

  std::size_t frame_size() const noexcept { return static_cast<std::size_t>(h_) * w_ * c_; }
  std::span<const float> values() const noexcept { return data_; }
  std::span<const float> frame_values(int i) const noexcept {
    return std::span<const float>(data_).subspan(static_cast<std::size_t>(i) * frame_size(),
                                                 frame_size());
  }
  TokenGrid frame(int i) const;

  friend bool operator==(const VideoTensor&, const VideoTensor&) = default;

 private:
  int n_ = 0;
  int h_ = 0;
  int w_ = 0;
  int c_ = 0;
  std::vector<float> data_;
};

enum class BetaSpacing { linear, scaled_linear };

/// Noise schedule over timesteps 1..T. alpha_bar(0) is the terminal value 1.
class DiffusionSchedule {
 public:
  DiffusionSchedule() = default;

  /// Builds the cumulative products from explicit betas, each in [0, 1).
  static DiffusionSchedule from_betas(std::vector<double> beta);
  /// All-zero betas: every alpha_bar is exactly 1.
  static DiffusionSchedule zero_noise(int steps);

  int steps() const noexcept { return static_cast<int>(beta_.size()); }
  /// beta_t for t in [1, T].
  double beta(int t) const { return beta_.at(static_cast<std::size_t>(t - 1)); }
  /// alpha_bar_t for t in [0, T]; t = 0 gives 1.
  double alpha_bar(int t) const {
    return t == 0 ? 1.0 : alpha_bar_.at(static_cast<std::size_t>(t - 1));
  }
  std::span<const double> betas() const noexcept { return beta_; }
  std::span<const double> alpha_bars() const noexcept { return alpha_bar_; }

 private:
  std::vector<double> beta_;
  std::vector<double> alpha_bar_;
};

/// T >= 1 and 0 < beta_start <= beta_end < 1.
DiffusionSchedule make_schedule(int steps, double beta_start, double beta_end,
                                BetaSpacing spacing);

/// Latent-diffusion defaults: scaled_linear, 0.00085 .. 0.012, T = 1000.
DiffusionSchedule default_schedule();

struct LayerTokens {
  TokenGrid q;
  TokenGrid k;
  TokenGrid v;
};

struct AnchorTokens {
  TokenGrid k;
  TokenGrid v;
};

/// Which denoising step the previous-frame tokens are taken from.
enum class CacheMode {
  final_step,    ///< one slot, tokens of the last sampling step reused at every step
  per_timestep,  ///< one slot per sampling step, matched by step index
};

/// Cross-frame state of the translation loop: per attention layer the
/// previous frame's Q/K/V plus the first frame's K/V. Slots are indexed
/// [slot][layer]; there is one slot in final_step mode and one per sampling
/// step in per_timestep mode.
struct TokenCache {
  CacheMode mode = CacheMode::final_step;
  int frame_index = -1;
  std::vector<std::vector<LayerTokens>> prev;
  std::vector<std::vector<AnchorTokens>> anchor;

  bool empty() const noexcept { return prev.empty(); }
  int layers() const noexcept { return prev.empty() ? 0 : static_cast<int>(prev.front().size()); }
  /// Total number of stored floats; the memory footprint of the cache.
  std::size_t value_count() const noexcept;
};

}  // namespace tokenwarp
