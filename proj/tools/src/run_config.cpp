#include "run_config.hpp"

#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "tokenwarp/errors.hpp"

namespace tokenwarp::cli {
namespace {

using nlohmann::json;

// Reads the members of one JSON object and rejects any it did not ask for.
class Section {
 public:
  Section(const json& node, std::string where) : node_(node), where_(std::move(where)) {
    if (!node_.is_object()) fail("expected an object");
  }

  const json* find(const std::string& key) {
    seen_.insert(key);
    auto it = node_.find(key);
    return it == node_.end() ? nullptr : &*it;
  }

  void read(const std::string& key, int& out) {
    if (const json* v = find(key)) {
      if (!v->is_number_integer()) fail(key + ": expected an integer");
      const auto x = v->get<long long>();
      if (x < std::numeric_limits<int>::min() || x > std::numeric_limits<int>::max()) {
        fail(key + ": out of range");
      }
      out = static_cast<int>(x);
    }
  }

  void read(const std::string& key, std::uint64_t& out) {
    if (const json* v = find(key)) {
      if (!v->is_number_unsigned()) fail(key + ": expected a non-negative integer");
      out = v->get<std::uint64_t>();
    }
  }

  void read(const std::string& key, double& out) {
    if (const json* v = find(key)) {
      if (!v->is_number()) fail(key + ": expected a number");
      out = v->get<double>();
    }
  }

  void read(const std::string& key, float& out) {
    double x = out;
    read(key, x);
    out = static_cast<float>(x);
  }

  void read(const std::string& key, bool& out) {
    if (const json* v = find(key)) {
      if (!v->is_boolean()) fail(key + ": expected true or false");
      out = v->get<bool>();
    }
  }

  template <typename E>
  void read_enum(const std::string& key, E& out,
                 std::initializer_list<std::pair<const char*, E>> names) {
    const json* v = find(key);
    if (!v) return;
    if (!v->is_string()) fail(key + ": expected a string");
    const auto s = v->get<std::string>();
    for (const auto& [name, value] : names) {
      if (s == name) {
        out = value;
        return;
      }
    }
    std::string allowed;
    for (const auto& [name, value] : names) allowed += (allowed.empty() ? "" : ", ") + std::string(name);
    fail(key + ": unknown value \"" + s + "\" (expected one of " + allowed + ")");
  }

  void read_path(const std::string& key, std::optional<std::filesystem::path>& out) {
    if (const json* v = find(key)) {
      if (!v->is_string()) fail(key + ": expected a string");
      out = v->get<std::string>();
    }
  }

  /// Rejects keys that were never asked for.
  void finish() const {
    for (auto it = node_.begin(); it != node_.end(); ++it) {
      if (!seen_.contains(it.key())) fail("unknown key \"" + it.key() + "\"");
    }
  }

  [[noreturn]] void fail(const std::string& what) const {
    throw ConfigError("config " + where_ + ": " + what);
  }

 private:
  const json& node_;
  std::string where_;
  std::set<std::string> seen_;
};

void read_schedule(const json& node, DiffusionSchedule& out) {
  Section s(node, "translation.schedule");
  int T = 1000;
  double beta_start = 0.00085;
  double beta_end = 0.012;
  BetaSpacing spacing = BetaSpacing::scaled_linear;
  s.read("T", T);
  s.read("beta_start", beta_start);
  s.read("beta_end", beta_end);
  s.read_enum("spacing", spacing,
              {{"linear", BetaSpacing::linear}, {"scaled_linear", BetaSpacing::scaled_linear}});
  s.finish();
  try {
    out = make_schedule(T, beta_start, beta_end, spacing);
  } catch (const ParameterError& e) {
    s.fail(e.what());
  }
}

void read_translation(const json& node, TranslationConfig& out) {
  Section s(node, "translation");
  s.read("steps", out.steps);
  s.read("clip_len", out.clip_len);
  s.read_enum("noise_mode", out.noise_mode,
              {{"per_frame_seed", NoiseMode::per_frame_seed},
               {"shared_seed", NoiseMode::shared_seed}});
  s.read_enum("cache_mode", out.cache_mode,
              {{"final_step", CacheMode::final_step}, {"per_timestep", CacheMode::per_timestep}});
  if (const json* sched = s.find("schedule")) read_schedule(*sched, out.schedule);
  s.finish();
}

void read_attention(const json& node, AttentionConfig& out) {
  Section s(node, "attention");
  s.read_enum("mechanism", out.mechanism,
              {{"self", Mechanism::self},
               {"cross_frame", Mechanism::cross_frame},
               {"flow_guided", Mechanism::flow_guided}});
  s.read("use_anchor", out.use_anchor);
  s.read("warp_q", out.warp_q);
  s.read("warp_kv", out.warp_kv);
  if (const json* blocks = s.find("blocks")) {
    if (!blocks->is_array()) s.fail("blocks: expected an array of 1-based block numbers");
    std::set<int> layers;
    for (const json& b : *blocks) {
      if (!b.is_number_integer() || b.get<long long>() < 1 || b.get<long long>() > 64) {
        s.fail("blocks: entries must be integers >= 1");
      }
      layers.insert(static_cast<int>(b.get<long long>()) - 1);
    }
    out.layers = std::move(layers);
  }
  s.finish();
}

void read_denoiser(const json& node, ToyDenoiserOptions& out) {
  Section s(node, "denoiser");
  s.read("blocks", out.blocks);
  s.read("d_model", out.d_model);
  s.read("heads", out.heads);
  s.read("seed", out.seed);
  s.read("qk_gain", out.qk_gain);
  s.read("style_gain", out.style_gain);
  s.finish();
  if (out.blocks < 1) s.fail("blocks must be >= 1");
  if (out.d_model < 1 || out.heads < 1 || out.d_model % out.heads != 0) {
    s.fail("heads must be positive and divide d_model");
  }
}

void read_object(const json& node, const std::string& where, SceneObject& out) {
  Section s(node, where);
  s.read_enum("shape", out.shape, {{"rect", ShapeKind::rect}, {"disc", ShapeKind::disc}});
  s.read("size", out.size);
  s.read("x", out.x);
  s.read("y", out.y);
  s.read("vx", out.vx);
  s.read("vy", out.vy);
  if (const json* color = s.find("color")) {
    if (!color->is_array()) s.fail("color: expected an array of numbers");
    out.color.clear();
    for (const json& c : *color) {
      if (!c.is_number()) s.fail("color: expected an array of numbers");
      out.color.push_back(c.get<float>());
    }
  }
  s.finish();
}

void read_scene(const json& node, SceneSpec& out) {
  Section s(node, "scene");
  s.read("height", out.height);
  s.read("width", out.width);
  s.read("frames", out.frames);
  s.read("channels", out.channels);
  s.read("seed", out.seed);
  s.read("clamp_to_canvas", out.clamp_to_canvas);
  s.read_enum("background", out.background,
              {{"flat", Background::flat},
               {"gradient", Background::gradient},
               {"checker", Background::checker}});
  if (const json* objects = s.find("objects")) {
    if (!objects->is_array()) s.fail("objects: expected an array");
    out.objects.clear();
    for (std::size_t i = 0; i < objects->size(); ++i) {
      SceneObject o;
      read_object((*objects)[i], "scene.objects[" + std::to_string(i) + "]", o);
      out.objects.push_back(std::move(o));
    }
  }
  s.finish();
  try {
    out.validate();
  } catch (const ParameterError& e) {
    s.fail(e.what());
  }
}

void read_occlusion(const json& node, OcclusionParams& out) {
  Section s(node, "occlusion");
  s.read("alpha", out.alpha);
  s.read("beta", out.beta);
  s.read("soft", out.soft);
  s.finish();
  if (!(out.alpha >= 0.0) || !(out.beta >= 0.0)) s.fail("alpha and beta must be >= 0");
}

void read_paths(const json& node, RunPaths& out) {
  Section s(node, "paths");
  s.read_path("video", out.video);
  s.read_path("flows_dir", out.flows_dir);
  s.read_path("masks_dir", out.masks_dir);
  s.read_path("out", out.out);
  s.read_path("out_dir", out.out_dir);
  s.finish();
}

}  // namespace

RunConfig parse_config(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config: invalid JSON: ") + e.what());
  }
  RunConfig config;
  Section root(doc, "root");
  std::uint64_t seed = 0;
  if (root.find("seed")) {
    root.read("seed", seed);
    config.seed = seed;
  }
  if (const json* n = root.find("translation")) read_translation(*n, config.translation);
  if (const json* n = root.find("attention")) read_attention(*n, config.translation.attention);
  if (const json* n = root.find("denoiser")) read_denoiser(*n, config.denoiser);
  if (const json* n = root.find("scene")) read_scene(*n, config.scene);
  if (const json* n = root.find("occlusion")) read_occlusion(*n, config.occlusion);
  if (const json* n = root.find("paths")) read_paths(*n, config.paths);
  root.finish();
  config.translation.seed = config.seed.value_or(0);
  try {
    config.translation.validate();
  } catch (const ParameterError& e) {
    throw ConfigError(std::string("config translation: ") + e.what());
  }
  return config;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open config " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  return parse_config(text.str());
}

std::uint64_t require_seed(const RunConfig& config, const std::string& command) {
  if (!config.seed) throw ConfigError("config: \"seed\" is required for " + command);
  return *config.seed;
}

}  // namespace tokenwarp::cli
