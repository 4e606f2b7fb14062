#pragma once

#include <cstdint>
#include <vector>

#include "tokenwarp/types.hpp"

namespace tokenwarp {

enum class Background { flat, gradient, checker };
enum class ShapeKind { rect, disc };

/// A moving object. (x, y) is the top-left corner of its bounding box at
/// frame 0; it moves by (vx, vy) pixels per frame.
struct SceneObject {
  ShapeKind shape = ShapeKind::rect;
  double size = 8.0;
  std::vector<float> color{0.9f, 0.2f, 0.1f};
  double x = 0.0;
  double y = 0.0;
  double vx = 0.0;
  double vy = 0.0;
};

struct SceneSpec {
  int height = 32;
  int width = 32;
  int frames = 16;
  int channels = 3;
  Background background = Background::checker;
  std::vector<SceneObject> objects;
  std::uint64_t seed = 0;
  /// Clamp objects to the canvas instead of rejecting escaping motion.
  bool clamp_to_canvas = false;

  void validate() const;
};

/// Rendered video with analytic motion. Flow and mask lists have frames-1
/// entries; entry i-1 relates frame i to frame i-1.
struct SceneBundle {
  VideoTensor video;
  std::vector<FlowField> fwd_flows;   ///< f_{i-1=>i}, defined on frame i-1
  std::vector<FlowField> bwd_flows;   ///< f_{i=>i-1}, defined on frame i
  std::vector<OcclusionMask> occlusion;  ///< on frame i, aligned with bwd_flows
};

/// Renders the scene. Objects are composited in list order with exact area
/// coverage for rectangles and 8x8 supersampling for discs. The mask is 0
/// wherever frame i content has no clean ancestor in frame i-1: revealed
/// background, samples landing on a different object, and pixels whose
/// value mixes several surfaces.
SceneBundle gen_scene(const SceneSpec& spec);

/// 32x32, 16 frames, checkerboard background, one 10 px square moving
/// (1, 1) px per frame.
SceneSpec default_scene();

/// A scene with no moving objects.
SceneSpec static_scene(int height = 32, int width = 32, int frames = 4);

}  // namespace tokenwarp
