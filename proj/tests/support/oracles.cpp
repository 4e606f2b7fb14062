#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace oracle {

Grid from(const tokenwarp::TokenGrid& g) {
  Grid o{g.height(), g.width(), g.channels(), {}};
  o.v.assign(g.values().begin(), g.values().end());
  return o;
}

double bilinear(const Grid& g, double sx, double sy, int c) {
  sx = std::min(std::max(sx, 0.0), g.w - 1.0);
  sy = std::min(std::max(sy, 0.0), g.h - 1.0);
  const int x0 = static_cast<int>(sx);
  const int y0 = static_cast<int>(sy);
  const int x1 = x0 + 1 < g.w ? x0 + 1 : x0;
  const int y1 = y0 + 1 < g.h ? y0 + 1 : y0;
  const double ax = sx - x0;
  const double ay = sy - y0;
  return (1 - ay) * ((1 - ax) * g.at(y0, x0, c) + ax * g.at(y0, x1, c)) +
         ay * ((1 - ax) * g.at(y1, x0, c) + ax * g.at(y1, x1, c));
}

Grid warp(const Grid& g, const tokenwarp::FlowField& f) {
  Grid o{g.h, g.w, g.d, Vec(g.v.size())};
  for (int y = 0; y < g.h; ++y)
    for (int x = 0; x < g.w; ++x)
      for (int c = 0; c < g.d; ++c)
        o.v[(static_cast<std::size_t>(y) * g.w + x) * g.d + c] =
            bilinear(g, x + static_cast<double>(f.u(y, x)), y + static_cast<double>(f.v(y, x)), c);
  return o;
}

Grid fuse(const Grid& warped, const Grid& current, const tokenwarp::OcclusionMask& m) {
  Grid o = current;
  for (int y = 0; y < o.h; ++y)
    for (int x = 0; x < o.w; ++x)
      for (int c = 0; c < o.d; ++c) {
        const std::size_t i = (static_cast<std::size_t>(y) * o.w + x) * o.d + c;
        o.v[i] = m.at(y, x) * warped.v[i] + (1.0 - m.at(y, x)) * current.v[i];
      }
  return o;
}

Vec matmul(const Vec& a, int rows, int inner, const Vec& b, int cols) {
  Vec out(static_cast<std::size_t>(rows) * cols, 0.0);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) {
      double s = 0.0;
      for (int k = 0; k < inner; ++k) s += a[r * inner + k] * b[k * cols + c];
      out[r * cols + c] = s;
    }
  return out;
}

Vec attention(const Vec& q, int nq, const Vec& k, const Vec& v, int nk, int d, int heads) {
  const int dh = d / heads;
  Vec out(static_cast<std::size_t>(nq) * d, 0.0);
  for (int h = 0; h < heads; ++h) {
    for (int i = 0; i < nq; ++i) {
      Vec logits(nk);
      for (int j = 0; j < nk; ++j) {
        double s = 0.0;
        for (int c = 0; c < dh; ++c) s += q[i * d + h * dh + c] * k[j * d + h * dh + c];
        logits[j] = s / std::sqrt(static_cast<double>(dh));
      }
      const double mx = *std::max_element(logits.begin(), logits.end());
      double z = 0.0;
      for (double& l : logits) z += (l = std::exp(l - mx));
      for (int c = 0; c < dh; ++c) {
        double s = 0.0;
        for (int j = 0; j < nk; ++j) s += logits[j] / z * v[j * d + h * dh + c];
        out[i * d + h * dh + c] = s;
      }
    }
  }
  return out;
}

long double alpha_bar_product(const std::vector<double>& betas, int t) {
  long double p = 1.0L;
  for (int s = 0; s < t; ++s) p *= 1.0L - static_cast<long double>(betas[s]);
  return p;
}

double ddim(double z, double eps, double ab_t, double ab_prev) {
  const double x0 = (z - std::sqrt(1.0 - ab_t) * eps) / std::sqrt(ab_t);
  return std::sqrt(ab_prev) * x0 + std::sqrt(1.0 - ab_prev) * eps;
}

double warp_error(const tokenwarp::VideoTensor& video, const std::vector<tokenwarp::FlowField>& flows,
                  const std::vector<tokenwarp::OcclusionMask>& masks, bool masked) {
  double total = 0.0;
  int pairs = 0;
  for (int i = 1; i < video.frames(); ++i) {
    const Grid prev = from(video.frame(i - 1));
    const Grid cur = from(video.frame(i));
    double sum = 0.0;
    long count = 0;
    for (int y = 0; y < video.height(); ++y)
      for (int x = 0; x < video.width(); ++x) {
        if (masked && masks[i - 1].at(y, x) <= 0.5f) continue;
        for (int c = 0; c < video.channels(); ++c) {
          const double w = bilinear(prev, x + static_cast<double>(flows[i - 1].u(y, x)),
                                    y + static_cast<double>(flows[i - 1].v(y, x)), c);
          sum += (cur.at(y, x, c) - w) * (cur.at(y, x, c) - w);
          ++count;
        }
      }
    if (count == 0) continue;
    total += sum / count;
    ++pairs;
  }
  return pairs ? total / pairs : 0.0;
}

Vec pooled_embedding(const tokenwarp::VideoTensor& video, int frame) {
  constexpr int kBins = 16;
  const int h = video.height(), w = video.width(), c = video.channels();
  const int sh = std::lcm(h, kBins), sw = std::lcm(w, kBins);
  const Grid g = from(video.frame(frame));
  Vec emb(static_cast<std::size_t>(kBins) * kBins * c, 0.0);
  const int per_bin_y = sh / kBins, per_bin_x = sw / kBins;
  for (int by = 0; by < kBins; ++by)
    for (int bx = 0; bx < kBins; ++bx)
      for (int ch = 0; ch < c; ++ch) {
        double s = 0.0;
        for (int yy = by * per_bin_y; yy < (by + 1) * per_bin_y; ++yy)
          for (int xx = bx * per_bin_x; xx < (bx + 1) * per_bin_x; ++xx)
            s += g.at(yy / (sh / h), xx / (sw / w), ch);
        emb[(by * kBins + bx) * c + ch] = s / (per_bin_y * per_bin_x);
      }
  return emb;
}

double temporal_consistency(const tokenwarp::VideoTensor& video) {
  double total = 0.0;
  for (int i = 1; i < video.frames(); ++i) {
    const Vec a = pooled_embedding(video, i - 1);
    const Vec b = pooled_embedding(video, i);
    const double dot = std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
    const double na = std::sqrt(std::inner_product(a.begin(), a.end(), a.begin(), 0.0));
    const double nb = std::sqrt(std::inner_product(b.begin(), b.end(), b.begin(), 0.0));
    if (na == 0.0 || nb == 0.0) {
      total += (na == 0.0 && nb == 0.0) ? 1.0 : 0.0;
    } else {
      total += dot / (na * nb);
    }
  }
  return total / (video.frames() - 1);
}

std::vector<float> Gen::floats(std::size_t n, double lo, double hi) {
  std::vector<float> out(n);
  for (float& x : out) x = static_cast<float>(uniform(lo, hi));
  return out;
}

tokenwarp::TokenGrid Gen::grid(int h, int w, int d, double lo, double hi) {
  return tokenwarp::TokenGrid(h, w, d, floats(static_cast<std::size_t>(h) * w * d, lo, hi));
}

tokenwarp::FlowField Gen::flow(int h, int w, double mag) {
  const auto n = static_cast<std::size_t>(h) * w;
  return tokenwarp::FlowField(h, w, floats(n, -mag, mag), floats(n, -mag, mag));
}

tokenwarp::OcclusionMask Gen::mask(int h, int w) {
  return tokenwarp::OcclusionMask(h, w, floats(static_cast<std::size_t>(h) * w, 0.0, 1.0));
}

tokenwarp::VideoTensor Gen::video(int n, int h, int w, int c) {
  return tokenwarp::VideoTensor(n, h, w, c, floats(static_cast<std::size_t>(n) * h * w * c, 0.0, 1.0));
}

}  // namespace oracle
