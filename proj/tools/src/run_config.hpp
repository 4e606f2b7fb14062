#pragma once

#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>

#include "tokenwarp/diffusion.hpp"
#include "tokenwarp/synth.hpp"
#include "tokenwarp/warp.hpp"

namespace tokenwarp::cli {

/// Malformed or inconsistent configuration document.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct RunPaths {
  std::optional<std::filesystem::path> video;
  std::optional<std::filesystem::path> flows_dir;
  std::optional<std::filesystem::path> masks_dir;
  std::optional<std::filesystem::path> out;
  std::optional<std::filesystem::path> out_dir;
};

struct RunConfig {
  std::optional<std::uint64_t> seed;
  TranslationConfig translation;
  ToyDenoiserOptions denoiser;
  SceneSpec scene = default_scene();
  OcclusionParams occlusion;
  RunPaths paths;
};

/// Parses a JSON config. Every key is optional except where a command
/// demands it; unknown keys, wrong types and out-of-range values raise
/// ConfigError.
RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::filesystem::path& path);

/// Throws ConfigError when the config carries no seed.
std::uint64_t require_seed(const RunConfig& config, const std::string& command);

}  // namespace tokenwarp::cli
