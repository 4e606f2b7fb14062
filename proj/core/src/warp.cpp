#include "tokenwarp/warp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "tokenwarp/errors.hpp"

namespace tokenwarp {
namespace {

// Sparse 1-D resampling matrix: out[j] = sum_k weights[j][k].second * in[weights[j][k].first].
using Taps = std::vector<std::vector<std::pair<int, double>>>;

Taps resample_taps(int in, int out) {
  Taps taps(static_cast<std::size_t>(out));
  if (out <= in) {
    const double scale = static_cast<double>(in) / out;
    for (int j = 0; j < out; ++j) {
      const double lo = j * scale;
      const double hi = (j + 1) * scale;
      for (int i = static_cast<int>(std::floor(lo)); i < in && i < hi; ++i) {
        const double overlap = std::min<double>(i + 1, hi) - std::max<double>(i, lo);
        if (overlap > 0.0) taps[j].emplace_back(i, overlap / scale);
      }
    }
  } else {
    const double scale = static_cast<double>(in) / out;
    for (int j = 0; j < out; ++j) {
      const double src = std::clamp((j + 0.5) * scale - 0.5, 0.0, static_cast<double>(in - 1));
      const int i0 = static_cast<int>(std::floor(src));
      const int i1 = std::min(i0 + 1, in - 1);
      const double f = src - i0;
      taps[j].emplace_back(i0, 1.0 - f);
      if (f > 0.0) taps[j].emplace_back(i1, f);
    }
  }
  return taps;
}

std::vector<float> resample_plane(std::span<const float> plane, int h, int w, const Taps& rows,
                                  const Taps& cols, double gain) {
  const int th = static_cast<int>(rows.size());
  const int tw = static_cast<int>(cols.size());
  std::vector<double> tmp(static_cast<std::size_t>(h) * tw, 0.0);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < tw; ++x) {
      double acc = 0.0;
      for (auto [i, wt] : cols[x]) acc += wt * plane[static_cast<std::size_t>(y) * w + i];
      tmp[static_cast<std::size_t>(y) * tw + x] = acc;
    }
  }
  std::vector<float> out(static_cast<std::size_t>(th) * tw);
  for (int y = 0; y < th; ++y) {
    for (int x = 0; x < tw; ++x) {
      double acc = 0.0;
      for (auto [i, wt] : rows[y]) acc += wt * tmp[static_cast<std::size_t>(i) * tw + x];
      out[static_cast<std::size_t>(y) * tw + x] = static_cast<float>(acc * gain);
    }
  }
  return out;
}

struct Bilinear {
  int x0, x1, y0, y1;
  float fx, fy;
};

Bilinear bilinear_at(float sx, float sy, int h, int w) {
  sx = std::clamp(sx, 0.0f, static_cast<float>(w - 1));
  sy = std::clamp(sy, 0.0f, static_cast<float>(h - 1));
  Bilinear b;
  b.x0 = static_cast<int>(std::floor(sx));
  b.y0 = static_cast<int>(std::floor(sy));
  b.x1 = std::min(b.x0 + 1, w - 1);
  b.y1 = std::min(b.y0 + 1, h - 1);
  b.fx = sx - static_cast<float>(b.x0);
  b.fy = sy - static_cast<float>(b.y0);
  return b;
}

void require_same_layout(int h1, int w1, int h2, int w2, const char* what) {
  if (h1 != h2 || w1 != w2) {
    throw ParameterError(std::string(what) + ": shape mismatch " + std::to_string(h1) + "x" +
                         std::to_string(w1) + " vs " + std::to_string(h2) + "x" +
                         std::to_string(w2));
  }
}

// Single-channel-per-pixel pyramid level used by the block matcher.
struct Plane {
  int h = 0;
  int w = 0;
  int c = 0;
  std::vector<float> data;

  float at(int y, int x, int ch) const {
    y = std::clamp(y, 0, h - 1);
    x = std::clamp(x, 0, w - 1);
    return data[(static_cast<std::size_t>(y) * w + x) * c + ch];
  }
};

Plane downsample(const Plane& p) {
  Plane out{p.h / 2, p.w / 2, p.c, {}};
  out.data.resize(static_cast<std::size_t>(out.h) * out.w * out.c);
  for (int y = 0; y < out.h; ++y) {
    for (int x = 0; x < out.w; ++x) {
      for (int ch = 0; ch < p.c; ++ch) {
        const float s = p.at(2 * y, 2 * x, ch) + p.at(2 * y, 2 * x + 1, ch) +
                        p.at(2 * y + 1, 2 * x, ch) + p.at(2 * y + 1, 2 * x + 1, ch);
        out.data[(static_cast<std::size_t>(y) * out.w + x) * out.c + ch] = 0.25f * s;
      }
    }
  }
  return out;
}

double block_sad(const Plane& prev, const Plane& next, int y, int x, int dv, int du, int half) {
  double sad = 0.0;
  for (int by = -half; by <= half; ++by) {
    for (int bx = -half; bx <= half; ++bx) {
      for (int ch = 0; ch < next.c; ++ch) {
        sad += std::abs(static_cast<double>(next.at(y + by, x + bx, ch)) -
                        prev.at(y + dv + by, x + du + bx, ch));
      }
    }
  }
  return sad;
}

// Candidate ordering: cost, then |d|^2, then (v, u).
bool better(double cost, int dv, int du, double best_cost, int best_v, int best_u) {
  if (cost != best_cost) return cost < best_cost;
  const int mag = dv * dv + du * du;
  const int best_mag = best_v * best_v + best_u * best_u;
  if (mag != best_mag) return mag < best_mag;
  if (dv != best_v) return dv < best_v;
  return du < best_u;
}

}  // namespace

FlowField resize_flow(const FlowField& flow, int target_h, int target_w) {
  if (target_h < 1 || target_w < 1) {
    throw ParameterError("resize_flow: target size must be positive, got " +
                         std::to_string(target_h) + "x" + std::to_string(target_w));
  }
  const int h = flow.height();
  const int w = flow.width();
  const Taps rows = resample_taps(h, target_h);
  const Taps cols = resample_taps(w, target_w);
  auto u = resample_plane(flow.u_values(), h, w, rows, cols, static_cast<double>(target_w) / w);
  auto v = resample_plane(flow.v_values(), h, w, rows, cols, static_cast<double>(target_h) / h);
  return FlowField(target_h, target_w, std::move(u), std::move(v));
}

OcclusionMask resize_mask(const OcclusionMask& mask, int target_h, int target_w) {
  if (target_h < 1 || target_w < 1) {
    throw ParameterError("resize_mask: target size must be positive, got " +
                         std::to_string(target_h) + "x" + std::to_string(target_w));
  }
  const Taps rows = resample_taps(mask.height(), target_h);
  const Taps cols = resample_taps(mask.width(), target_w);
  auto m = resample_plane(mask.values(), mask.height(), mask.width(), rows, cols, 1.0);
  for (float& x : m) x = std::clamp(x, 0.0f, 1.0f);
  return OcclusionMask(target_h, target_w, std::move(m));
}

TokenGrid backward_warp(const TokenGrid& grid, const FlowField& flow) {
  require_same_layout(grid.height(), grid.width(), flow.height(), flow.width(), "backward_warp");
  const int h = grid.height();
  const int w = grid.width();
  const int d = grid.channels();
  const auto src = grid.values();
  std::vector<float> out(src.size());
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const Bilinear b = bilinear_at(static_cast<float>(x) + flow.u(y, x),
                                     static_cast<float>(y) + flow.v(y, x), h, w);
      const float* p00 = &src[grid.index(b.y0, b.x0, 0)];
      const float* p01 = &src[grid.index(b.y0, b.x1, 0)];
      const float* p10 = &src[grid.index(b.y1, b.x0, 0)];
      const float* p11 = &src[grid.index(b.y1, b.x1, 0)];
      float* dst = &out[grid.index(y, x, 0)];
      for (int c = 0; c < d; ++c) {
        const float top = (1.0f - b.fx) * p00[c] + b.fx * p01[c];
        const float bottom = (1.0f - b.fx) * p10[c] + b.fx * p11[c];
        dst[c] = (1.0f - b.fy) * top + b.fy * bottom;
      }
    }
  }
  return TokenGrid(h, w, d, std::move(out));
}

TokenGrid fuse_tokens(const TokenGrid& warped, const TokenGrid& current,
                      const OcclusionMask& mask) {
  if (!warped.same_shape(current)) throw ParameterError("fuse_tokens: token grid shape mismatch");
  require_same_layout(warped.height(), warped.width(), mask.height(), mask.width(), "fuse_tokens");
  const int d = warped.channels();
  const auto a = warped.values();
  const auto b = current.values();
  const auto m = mask.values();
  std::vector<float> out(a.size());
  for (std::size_t t = 0; t < m.size(); ++t) {
    const float keep = m[t];
    const float take = 1.0f - keep;
    for (int c = 0; c < d; ++c) {
      const std::size_t i = t * d + c;
      out[i] = keep * a[i] + take * b[i];
    }
  }
  return TokenGrid(warped.height(), warped.width(), d, std::move(out));
}

OcclusionMask estimate_occlusion(const FlowField& backward, const FlowField& forward,
                                 const OcclusionParams& params) {
  require_same_layout(backward.height(), backward.width(), forward.height(), forward.width(),
                      "estimate_occlusion");
  if (!(std::isfinite(params.alpha) && std::isfinite(params.beta) && params.alpha >= 0.0 &&
        params.beta >= 0.0)) {
    throw ParameterError("estimate_occlusion: alpha and beta must be finite and non-negative");
  }
  const int h = backward.height();
  const int w = backward.width();
  std::vector<float> m(static_cast<std::size_t>(h) * w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double bu = backward.u(y, x);
      const double bv = backward.v(y, x);
      const Bilinear s = bilinear_at(static_cast<float>(x + bu), static_cast<float>(y + bv), h, w);
      auto sample = [&](auto component) {
        const double top = (1.0 - s.fx) * component(s.y0, s.x0) + s.fx * component(s.y0, s.x1);
        const double bottom = (1.0 - s.fx) * component(s.y1, s.x0) + s.fx * component(s.y1, s.x1);
        return (1.0 - s.fy) * top + s.fy * bottom;
      };
      const double fu = sample([&](int yy, int xx) { return forward.u(yy, xx); });
      const double fv = sample([&](int yy, int xx) { return forward.v(yy, xx); });
      const double ru = bu + fu;
      const double rv = bv + fv;
      const double residual = ru * ru + rv * rv;
      const double bound = params.alpha * (bu * bu + bv * bv + fu * fu + fv * fv) + params.beta;
      float value;
      if (!params.soft) {
        value = residual < bound ? 1.0f : 0.0f;
      } else if (bound > 0.0) {
        value = static_cast<float>(std::clamp(std::exp(-residual / bound), 0.0, 1.0));
      } else {
        value = residual == 0.0 ? 1.0f : 0.0f;
      }
      m[static_cast<std::size_t>(y) * w + x] = value;
    }
  }
  return OcclusionMask(h, w, std::move(m));
}

FlowField block_match_flow(const TokenGrid& prev, const TokenGrid& next,
                           const BlockMatchParams& params) {
  if (!prev.same_shape(next)) throw ParameterError("block_match_flow: frame shape mismatch");
  if (params.block < 1 || params.block % 2 == 0) {
    throw ParameterError("block_match_flow: block must be an odd positive integer");
  }
  if (params.radius < 1 || params.levels < 1) {
    throw ParameterError("block_match_flow: radius and levels must be at least 1");
  }
  if (prev.height() < params.block || prev.width() < params.block) {
    throw ParameterError("block_match_flow: frame " + std::to_string(prev.height()) + "x" +
                         std::to_string(prev.width()) + " smaller than block " +
                         std::to_string(params.block));
  }

  std::vector<Plane> prev_pyr{Plane{prev.height(), prev.width(), prev.channels(),
                                    std::vector<float>(prev.values().begin(), prev.values().end())}};
  std::vector<Plane> next_pyr{Plane{next.height(), next.width(), next.channels(),
                                    std::vector<float>(next.values().begin(), next.values().end())}};
  // Coarser levels are only kept while they can still hold a block.
  for (int l = 1; l < params.levels; ++l) {
    Plane p = downsample(prev_pyr.back());
    if (p.h < params.block || p.w < params.block) break;
    prev_pyr.push_back(std::move(p));
    next_pyr.push_back(downsample(next_pyr.back()));
  }

  const int half = params.block / 2;
  const int top = static_cast<int>(prev_pyr.size()) - 1;
  std::vector<int> fu;
  std::vector<int> fv;
  int fh = 0;
  int fw = 0;

  for (int level = top; level >= 0; --level) {
    const Plane& p = prev_pyr[level];
    const Plane& n = next_pyr[level];
    const int level_radius = (params.radius + (1 << level) - 1) >> level;
    std::vector<int> nu(static_cast<std::size_t>(n.h) * n.w);
    std::vector<int> nv(nu.size());
    for (int y = 0; y < n.h; ++y) {
      for (int x = 0; x < n.w; ++x) {
        int cu = 0;
        int cv = 0;
        int window = level_radius;
        if (level != top) {
          const int py = std::min(y / 2, fh - 1);
          const int px = std::min(x / 2, fw - 1);
          cu = 2 * fu[static_cast<std::size_t>(py) * fw + px];
          cv = 2 * fv[static_cast<std::size_t>(py) * fw + px];
          window = 2;
        }
        double best_cost = std::numeric_limits<double>::infinity();
        int best_u = 0;
        int best_v = 0;
        for (int dv = cv - window; dv <= cv + window; ++dv) {
          if (std::abs(dv) > level_radius) continue;
          for (int du = cu - window; du <= cu + window; ++du) {
            if (std::abs(du) > level_radius) continue;
            const double cost = block_sad(p, n, y, x, dv, du, half);
            if (better(cost, dv, du, best_cost, best_v, best_u)) {
              best_cost = cost;
              best_u = du;
              best_v = dv;
            }
          }
        }
        nu[static_cast<std::size_t>(y) * n.w + x] = best_u;
        nv[static_cast<std::size_t>(y) * n.w + x] = best_v;
      }
    }
    fu = std::move(nu);
    fv = std::move(nv);
    fh = n.h;
    fw = n.w;
  }

  std::vector<float> u(fu.begin(), fu.end());
  std::vector<float> v(fv.begin(), fv.end());
  return FlowField(fh, fw, std::move(u), std::move(v));
}

}  // namespace tokenwarp
