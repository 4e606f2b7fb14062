#include "tokenwarp/types.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "tokenwarp/errors.hpp"

namespace tokenwarp {
namespace {

void require_positive(int value, const char* what) {
  if (value <= 0) {
    throw ParameterError(std::string(what) + " must be positive, got " + std::to_string(value));
  }
}

void require_length(std::size_t got, std::size_t want, const char* what) {
  if (got != want) {
    throw ParameterError(std::string(what) + ": expected " + std::to_string(want) +
                         " values, got " + std::to_string(got));
  }
}

void require_finite(std::span<const float> values, const char* what) {
  auto bad = std::find_if(values.begin(), values.end(), [](float x) { return !std::isfinite(x); });
  if (bad != values.end()) {
    throw ParameterError(std::string(what) + ": non-finite value at index " +
                         std::to_string(bad - values.begin()));
  }
}

}  // namespace

TokenGrid::TokenGrid(int h, int w, int d, std::vector<float> data)
    : h_(h), w_(w), d_(d), data_(std::move(data)) {
  require_positive(h, "TokenGrid height");
  require_positive(w, "TokenGrid width");
  require_positive(d, "TokenGrid channels");
  require_length(data_.size(), static_cast<std::size_t>(h) * w * d, "TokenGrid");
  require_finite(data_, "TokenGrid");
}

TokenGrid TokenGrid::zeros(int h, int w, int d) { return filled(h, w, d, 0.0f); }

TokenGrid TokenGrid::filled(int h, int w, int d, float value) {
  require_positive(h, "TokenGrid height");
  require_positive(w, "TokenGrid width");
  require_positive(d, "TokenGrid channels");
  return TokenGrid(h, w, d, std::vector<float>(static_cast<std::size_t>(h) * w * d, value));
}

TokenGrid concat_tokens(const TokenGrid& a, const TokenGrid& b) {
  if (a.channels() != b.channels()) {
    throw ParameterError("concat_tokens: channel mismatch " + std::to_string(a.channels()) +
                         " vs " + std::to_string(b.channels()));
  }
  std::vector<float> out;
  out.reserve(a.values().size() + b.values().size());
  out.insert(out.end(), a.values().begin(), a.values().end());
  out.insert(out.end(), b.values().begin(), b.values().end());
  return TokenGrid(1, a.tokens() + b.tokens(), a.channels(), std::move(out));
}

FlowField::FlowField(int h, int w, std::vector<float> u, std::vector<float> v)
    : h_(h), w_(w), u_(std::move(u)), v_(std::move(v)) {
  require_positive(h, "FlowField height");
  require_positive(w, "FlowField width");
  const auto n = static_cast<std::size_t>(h) * w;
  require_length(u_.size(), n, "FlowField u");
  require_length(v_.size(), n, "FlowField v");
  require_finite(u_, "FlowField u");
  require_finite(v_, "FlowField v");
}

FlowField FlowField::zeros(int h, int w) { return constant(h, w, 0.0f, 0.0f); }

FlowField FlowField::constant(int h, int w, float u, float v) {
  require_positive(h, "FlowField height");
  require_positive(w, "FlowField width");
  const auto n = static_cast<std::size_t>(h) * w;
  return FlowField(h, w, std::vector<float>(n, u), std::vector<float>(n, v));
}

OcclusionMask::OcclusionMask(int h, int w, std::vector<float> m)
    : h_(h), w_(w), m_(std::move(m)) {
  require_positive(h, "OcclusionMask height");
  require_positive(w, "OcclusionMask width");
  require_length(m_.size(), static_cast<std::size_t>(h) * w, "OcclusionMask");
  auto bad = std::find_if(m_.begin(), m_.end(),
                          [](float x) { return !(x >= 0.0f && x <= 1.0f); });
  if (bad != m_.end()) {
    throw ParameterError("OcclusionMask: value outside [0,1] at index " +
                         std::to_string(bad - m_.begin()));
  }
}

OcclusionMask OcclusionMask::filled(int h, int w, float value) {
  require_positive(h, "OcclusionMask height");
  require_positive(w, "OcclusionMask width");
  return OcclusionMask(h, w, std::vector<float>(static_cast<std::size_t>(h) * w, value));
}

VideoTensor::VideoTensor(int n, int h, int w, int c, std::vector<float> data)
    : n_(n), h_(h), w_(w), c_(c), data_(std::move(data)) {
  require_positive(n, "VideoTensor frames");
  require_positive(h, "VideoTensor height");
  require_positive(w, "VideoTensor width");
  require_positive(c, "VideoTensor channels");
  require_length(data_.size(), static_cast<std::size_t>(n) * h * w * c, "VideoTensor");
  require_finite(data_, "VideoTensor");
}

VideoTensor VideoTensor::from_frames(std::span<const TokenGrid> frames) {
  if (frames.empty()) throw ParameterError("VideoTensor::from_frames: no frames");
  const TokenGrid& first = frames.front();
  std::vector<float> data;
  data.reserve(first.values().size() * frames.size());
  for (const TokenGrid& f : frames) {
    if (!f.same_shape(first)) throw ParameterError("VideoTensor::from_frames: frame shape mismatch");
    data.insert(data.end(), f.values().begin(), f.values().end());
  }
  return VideoTensor(static_cast<int>(frames.size()), first.height(), first.width(),
                     first.channels(), std::move(data));
}

TokenGrid VideoTensor::frame(int i) const {
  if (i < 0 || i >= n_) throw ParameterError("VideoTensor::frame: index out of range");
  auto span = frame_values(i);
  return TokenGrid(h_, w_, c_, std::vector<float>(span.begin(), span.end()));
}

DiffusionSchedule DiffusionSchedule::from_betas(std::vector<double> beta) {
  if (beta.empty()) throw ParameterError("DiffusionSchedule: at least one timestep required");
  DiffusionSchedule s;
  s.alpha_bar_.reserve(beta.size());
  double running = 1.0;
  for (std::size_t i = 0; i < beta.size(); ++i) {
    if (!(beta[i] >= 0.0 && beta[i] < 1.0)) {
      throw ParameterError("DiffusionSchedule: beta[" + std::to_string(i + 1) +
                           "] outside [0,1)");
    }
    running *= 1.0 - beta[i];
    s.alpha_bar_.push_back(running);
  }
  s.beta_ = std::move(beta);
  return s;
}

DiffusionSchedule DiffusionSchedule::zero_noise(int steps) {
  require_positive(steps, "DiffusionSchedule steps");
  return from_betas(std::vector<double>(static_cast<std::size_t>(steps), 0.0));
}

DiffusionSchedule make_schedule(int steps, double beta_start, double beta_end,
                                BetaSpacing spacing) {
  require_positive(steps, "make_schedule steps");
  if (!(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0)) {
    throw ParameterError("make_schedule: need 0 < beta_start <= beta_end < 1");
  }
  std::vector<double> beta(static_cast<std::size_t>(steps));
  for (int i = 0; i < steps; ++i) {
    const double frac = steps == 1 ? 0.0 : static_cast<double>(i) / (steps - 1);
    if (spacing == BetaSpacing::linear) {
      beta[i] = beta_start + frac * (beta_end - beta_start);
    } else {
      const double root = std::sqrt(beta_start) + frac * (std::sqrt(beta_end) - std::sqrt(beta_start));
      beta[i] = root * root;
    }
  }
  return DiffusionSchedule::from_betas(std::move(beta));
}

DiffusionSchedule default_schedule() {
  return make_schedule(1000, 0.00085, 0.012, BetaSpacing::scaled_linear);
}

std::size_t TokenCache::value_count() const noexcept {
  std::size_t total = 0;
  for (const auto& slot : prev) {
    for (const LayerTokens& t : slot) {
      total += t.q.values().size() + t.k.values().size() + t.v.values().size();
    }
  }
  for (const auto& slot : anchor) {
    for (const AnchorTokens& t : slot) total += t.k.values().size() + t.v.values().size();
  }
  return total;
}

}  // namespace tokenwarp
