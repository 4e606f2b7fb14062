#include "tokenwarp/synth.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <string>

#include "tokenwarp/errors.hpp"
#include "tokenwarp/rng.hpp"

namespace tokenwarp {
namespace {

constexpr double kPure = 1e-6;
constexpr int kCheckerCell = 4;
constexpr int kDiscSamples = 8;

struct Position {
  double x;
  double y;
};

double rect_coverage(double left, double top, double size, int px, int py) {
  const double ox = std::min<double>(px + 1, left + size) - std::max<double>(px, left);
  const double oy = std::min<double>(py + 1, top + size) - std::max<double>(py, top);
  return ox > 0.0 && oy > 0.0 ? ox * oy : 0.0;
}

double disc_coverage(double left, double top, double size, int px, int py) {
  const double r = 0.5 * size;
  const double cx = left + r;
  const double cy = top + r;
  // Skip pixels clearly outside the bounding box.
  if (px + 1 <= left || px >= left + size || py + 1 <= top || py >= top + size) return 0.0;
  int inside = 0;
  for (int sy = 0; sy < kDiscSamples; ++sy) {
    for (int sx = 0; sx < kDiscSamples; ++sx) {
      const double x = px + (sx + 0.5) / kDiscSamples - cx;
      const double y = py + (sy + 0.5) / kDiscSamples - cy;
      if (x * x + y * y <= r * r) ++inside;
    }
  }
  return static_cast<double>(inside) / (kDiscSamples * kDiscSamples);
}

// Per-frame rendering plus the bookkeeping needed for analytic masks.
struct FrameLayers {
  std::vector<float> pixels;
  std::vector<int> label;  // -1 background, else object index of the dominant surface
  std::vector<char> pure;  // a single surface contributes (almost) all of the pixel
};

std::vector<float> background_pixels(const SceneSpec& spec) {
  Rng rng(spec.seed);
  std::vector<float> a(spec.channels);
  std::vector<float> b(spec.channels);
  for (int c = 0; c < spec.channels; ++c) {
    a[c] = static_cast<float>(rng.uniform(0.15, 0.35));
    b[c] = static_cast<float>(rng.uniform(0.55, 0.75));
  }
  std::vector<float> bg(static_cast<std::size_t>(spec.height) * spec.width * spec.channels);
  for (int y = 0; y < spec.height; ++y) {
    for (int x = 0; x < spec.width; ++x) {
      double t = 0.0;
      switch (spec.background) {
        case Background::flat:
          t = 0.0;
          break;
        case Background::gradient:
          t = static_cast<double>(x + y) / std::max(1, spec.width + spec.height - 2);
          break;
        case Background::checker:
          t = ((x / kCheckerCell) + (y / kCheckerCell)) % 2 == 0 ? 0.0 : 1.0;
          break;
      }
      for (int c = 0; c < spec.channels; ++c) {
        bg[(static_cast<std::size_t>(y) * spec.width + x) * spec.channels + c] =
            static_cast<float>((1.0 - t) * a[c] + t * b[c]);
      }
    }
  }
  return bg;
}

Position position_at(const SceneSpec& spec, const SceneObject& obj, int frame) {
  Position p{obj.x + frame * obj.vx, obj.y + frame * obj.vy};
  if (spec.clamp_to_canvas) {
    p.x = std::clamp(p.x, 0.0, spec.width - obj.size);
    p.y = std::clamp(p.y, 0.0, spec.height - obj.size);
  }
  return p;
}

FrameLayers render(const SceneSpec& spec, const std::vector<float>& background,
                   const std::vector<Position>& positions) {
  const int h = spec.height;
  const int w = spec.width;
  const int ch = spec.channels;
  FrameLayers f;
  f.pixels = background;
  f.label.assign(static_cast<std::size_t>(h) * w, -1);
  f.pure.assign(static_cast<std::size_t>(h) * w, 0);
  const int nobj = static_cast<int>(spec.objects.size());
  std::vector<double> cover(nobj);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const std::size_t p = static_cast<std::size_t>(y) * w + x;
      for (int k = 0; k < nobj; ++k) {
        const SceneObject& o = spec.objects[k];
        cover[k] = o.shape == ShapeKind::rect
                       ? rect_coverage(positions[k].x, positions[k].y, o.size, x, y)
                       : disc_coverage(positions[k].x, positions[k].y, o.size, x, y);
      }
      // Visible weight of each surface after front-to-back compositing.
      double remaining = 1.0;
      double best = -1.0;
      int best_label = -1;
      for (int k = nobj - 1; k >= 0; --k) {
        const double weight = cover[k] * remaining;
        if (weight > best) {
          best = weight;
          best_label = k;
        }
        remaining *= 1.0 - cover[k];
      }
      if (remaining > best) {
        best = remaining;
        best_label = -1;
      }
      f.label[p] = best_label;
      f.pure[p] = best >= 1.0 - kPure ? 1 : 0;
      for (int k = 0; k < nobj; ++k) {
        if (cover[k] <= 0.0) continue;
        const auto& color = spec.objects[k].color;
        for (int c = 0; c < ch; ++c) {
          float& px = f.pixels[p * ch + c];
          px = static_cast<float>((1.0 - cover[k]) * px + cover[k] * color[c]);
        }
      }
    }
  }
  return f;
}

}  // namespace

void SceneSpec::validate() const {
  if (height <= 0 || width <= 0 || frames <= 0 || channels <= 0) {
    throw ParameterError("SceneSpec: dimensions and frame count must be positive");
  }
  for (std::size_t k = 0; k < objects.size(); ++k) {
    const SceneObject& o = objects[k];
    const std::string name = "SceneSpec: object " + std::to_string(k);
    if (!(o.size > 0.0) || !std::isfinite(o.size)) throw ParameterError(name + " has no size");
    if (static_cast<int>(o.color.size()) != channels) {
      throw ParameterError(name + " color has " + std::to_string(o.color.size()) +
                           " channels, scene has " + std::to_string(channels));
    }
    for (int f = 0; f < frames; ++f) {
      const double x = o.x + f * o.vx;
      const double y = o.y + f * o.vy;
      const bool inside = x >= -1e-9 && y >= -1e-9 && x + o.size <= width + 1e-9 &&
                          y + o.size <= height + 1e-9;
      if (!inside && (f == 0 || !clamp_to_canvas)) {
        throw ParameterError(name + " leaves the canvas at frame " + std::to_string(f));
      }
    }
  }
}

SceneBundle gen_scene(const SceneSpec& spec) {
  spec.validate();
  const int h = spec.height;
  const int w = spec.width;
  const std::vector<float> background = background_pixels(spec);

  std::vector<std::vector<Position>> positions(spec.frames);
  std::vector<FrameLayers> layers;
  layers.reserve(spec.frames);
  for (int f = 0; f < spec.frames; ++f) {
    for (const SceneObject& o : spec.objects) positions[f].push_back(position_at(spec, o, f));
    layers.push_back(render(spec, background, positions[f]));
  }

  SceneBundle bundle;
  std::vector<float> video;
  video.reserve(static_cast<std::size_t>(spec.frames) * h * w * spec.channels);
  for (const FrameLayers& l : layers) video.insert(video.end(), l.pixels.begin(), l.pixels.end());
  bundle.video = VideoTensor(spec.frames, h, w, spec.channels, std::move(video));

  for (int f = 1; f < spec.frames; ++f) {
    const FrameLayers& prev = layers[f - 1];
    const FrameLayers& cur = layers[f];
    const auto n = static_cast<std::size_t>(h) * w;
    std::vector<float> bu(n, 0.0f), bv(n, 0.0f), fu(n, 0.0f), fv(n, 0.0f), m(n, 0.0f);
    for (std::size_t p = 0; p < n; ++p) {
      if (const int k = cur.label[p]; k >= 0) {
        bu[p] = static_cast<float>(positions[f - 1][k].x - positions[f][k].x);
        bv[p] = static_cast<float>(positions[f - 1][k].y - positions[f][k].y);
      }
      if (const int k = prev.label[p]; k >= 0) {
        fu[p] = static_cast<float>(positions[f][k].x - positions[f - 1][k].x);
        fv[p] = static_cast<float>(positions[f][k].y - positions[f - 1][k].y);
      }
    }
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const std::size_t p = static_cast<std::size_t>(y) * w + x;
        if (!cur.pure[p]) continue;
        const double sx = std::clamp(x + static_cast<double>(bu[p]), 0.0, w - 1.0);
        const double sy = std::clamp(y + static_cast<double>(bv[p]), 0.0, h - 1.0);
        const int x0 = static_cast<int>(std::floor(sx));
        const int y0 = static_cast<int>(std::floor(sy));
        const int xs[2] = {x0, sx > x0 ? std::min(x0 + 1, w - 1) : x0};
        const int ys[2] = {y0, sy > y0 ? std::min(y0 + 1, h - 1) : y0};
        bool valid = true;
        for (int yy : ys) {
          for (int xx : xs) {
            const std::size_t q = static_cast<std::size_t>(yy) * w + xx;
            valid = valid && prev.pure[q] && prev.label[q] == cur.label[p];
          }
        }
        m[p] = valid ? 1.0f : 0.0f;
      }
    }
    bundle.bwd_flows.emplace_back(h, w, std::move(bu), std::move(bv));
    bundle.fwd_flows.emplace_back(h, w, std::move(fu), std::move(fv));
    bundle.occlusion.emplace_back(h, w, std::move(m));
  }
  return bundle;
}

SceneSpec default_scene() {
  SceneSpec spec;
  spec.height = 32;
  spec.width = 32;
  spec.frames = 16;
  spec.channels = 3;
  spec.background = Background::checker;
  SceneObject square;
  square.shape = ShapeKind::rect;
  square.size = 10.0;
  square.color = {0.9f, 0.2f, 0.1f};
  square.x = 4.0;
  square.y = 4.0;
  square.vx = 1.0;
  square.vy = 1.0;
  spec.objects.push_back(square);
  spec.seed = 1;
  return spec;
}

SceneSpec static_scene(int height, int width, int frames) {
  SceneSpec spec;
  spec.height = height;
  spec.width = width;
  spec.frames = frames;
  SceneObject square;
  square.size = std::max(1, std::min(height, width) / 3);
  square.x = 1.0;
  square.y = 1.0;
  spec.objects.push_back(square);
  return spec;
}

}  // namespace tokenwarp
