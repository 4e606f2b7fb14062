#include "commands.hpp"

#include <cstdio>
#include <fstream>
#include <ostream>
#include <sstream>
#include <vector>

#include "run_config.hpp"
#include "tokenwarp/container.hpp"
#include "tokenwarp/errors.hpp"
#include "tokenwarp/metrics.hpp"

namespace tokenwarp::cli {
namespace {

Path resolve(const OptPath& flag, const OptPath& from_config, const char* name) {
  if (flag) return *flag;
  if (from_config) return *from_config;
  throw UsageError(std::string("missing ") + name + " (pass the flag or set it under \"paths\")");
}

void require_file(const Path& p) {
  if (!std::filesystem::is_regular_file(p)) throw IoError("no such file: " + p.string());
}

void require_dir(const Path& p) {
  if (!std::filesystem::is_directory(p)) throw IoError("no such directory: " + p.string());
}

Tensor read_input(const Path& p) {
  require_file(p);
  return read_container(p);
}

// Accepts a [h,w,c] token grid or a single-frame [1,h,w,c] video.
TokenGrid read_frame(const Path& p) {
  Tensor t = read_input(p);
  if (t.dims.size() == 4 && t.dims[0] == 1) return as_video(t).frame(0);
  return as_tokens(t);
}

void write_text(const Path& path, const std::string& text) {
  Path tmp = path;
  tmp += ".partial";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
    out << text;
    if (!out) throw IoError("failed writing " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move " + tmp.string() + " to " + path.string());
}

void ensure_parent(const Path& out) {
  const Path parent = out.parent_path();
  if (!parent.empty() && !std::filesystem::is_directory(parent)) {
    throw IoError("output directory does not exist: " + parent.string());
  }
}

std::vector<FlowField> read_flows(const Path& dir, int count, int h, int w) {
  std::vector<FlowField> flows;
  for (int i = 1; i <= count; ++i) {
    FlowField f = as_flow(read_input(numbered_file(dir, "bwd", i)));
    if (f.height() != h || f.width() != w) f = resize_flow(f, h, w);
    flows.push_back(std::move(f));
  }
  return flows;
}

std::vector<OcclusionMask> read_masks(const Path& dir, int count, int h, int w) {
  std::vector<OcclusionMask> masks;
  for (int i = 1; i <= count; ++i) {
    OcclusionMask m = as_mask(read_input(numbered_file(dir, "occ", i)));
    if (m.height() != h || m.width() != w) m = resize_mask(m, h, w);
    masks.push_back(std::move(m));
  }
  return masks;
}

std::string csv(std::span<const AblationRow> rows) {
  std::ostringstream out;
  write_report_csv(out, rows);
  return out.str();
}

}  // namespace

Path numbered_file(const Path& dir, const std::string& prefix, int index) {
  char name[32];
  std::snprintf(name, sizeof name, "_%03d.tkwp", index);
  return dir / (prefix + name);
}

void run_synth(const Path& config_path, const OptPath& out_dir_flag) {
  const RunConfig config = load_config(config_path);
  const Path out_dir = resolve(out_dir_flag, config.paths.out_dir, "--out-dir");
  const SceneBundle bundle = gen_scene(config.scene);
  std::filesystem::create_directories(out_dir);
  write_container(out_dir / "video.tkwp", to_tensor(bundle.video));
  for (std::size_t i = 0; i < bundle.bwd_flows.size(); ++i) {
    const int n = static_cast<int>(i) + 1;
    write_container(numbered_file(out_dir, "fwd", n), to_tensor(bundle.fwd_flows[i]));
    write_container(numbered_file(out_dir, "bwd", n), to_tensor(bundle.bwd_flows[i]));
    write_container(numbered_file(out_dir, "occ", n), to_tensor(bundle.occlusion[i]));
  }
}

void run_flow(const Path& prev, const Path& next, const BlockMatchParams& params,
              const Path& out) {
  ensure_parent(out);
  const TokenGrid a = read_frame(prev);
  const TokenGrid b = read_frame(next);
  write_container(out, to_tensor(block_match_flow(a, b, params)));
}

void run_occl(const Path& fwd, const Path& bwd, const OcclusionParams& params, const Path& out) {
  ensure_parent(out);
  const FlowField f = as_flow(read_input(fwd));
  const FlowField b = as_flow(read_input(bwd));
  write_container(out, to_tensor(estimate_occlusion(b, f, params)));
}

void run_translate(const Path& config_path, const OptPath& video_flag, const OptPath& flows_flag,
                   const OptPath& masks_flag, const OptPath& out_flag) {
  const RunConfig config = load_config(config_path);
  require_seed(config, "translate");
  const Path video_path = resolve(video_flag, config.paths.video, "--video");
  const Path flows_dir = resolve(flows_flag, config.paths.flows_dir, "--flows-dir");
  const Path masks_dir = resolve(masks_flag, config.paths.masks_dir, "--masks-dir");
  const Path out = resolve(out_flag, config.paths.out, "--out");
  require_dir(flows_dir);
  require_dir(masks_dir);
  ensure_parent(out);

  const VideoTensor video = as_video(read_input(video_path));
  const int n = video.frames();
  const int h = video.height();
  const int w = video.width();
  std::vector<TokenGrid> latents;
  for (int i = 0; i < n; ++i) latents.push_back(video.frame(i));
  const auto flows = read_flows(flows_dir, n - 1, h, w);
  const auto masks = read_masks(masks_dir, n - 1, h, w);

  const ToyAttentionDenoiser denoiser(video.channels(), config.translation.schedule,
                                      config.denoiser);
  ClipRun run = translate_clips(latents, flows, masks, denoiser, config.translation);
  write_container(out, to_tensor(VideoTensor::from_frames(run.frames)));
}

void run_eval(const Path& video_path, const Path& flows_dir, const OptPath& masks_dir, bool masked,
              const Path& out) {
  if (masked && !masks_dir) throw UsageError("--masked needs --masks-dir");
  require_dir(flows_dir);
  if (masks_dir) require_dir(*masks_dir);
  ensure_parent(out);

  const VideoTensor video = as_video(read_input(video_path));
  const int pairs = video.frames() - 1;
  std::vector<FlowField> flows;
  for (int i = 1; i <= pairs; ++i) flows.push_back(as_flow(read_input(numbered_file(flows_dir, "bwd", i))));
  std::vector<OcclusionMask> masks;
  if (masked) {
    for (int i = 1; i <= pairs; ++i) masks.push_back(as_mask(read_input(numbered_file(*masks_dir, "occ", i))));
  }
  AblationRow row;
  row.variant = video_path.stem().string();
  row.warp_err = warp_error(video, flows, masks, masked);
  row.tem_con = temporal_consistency(video);
  write_text(out, csv(std::span<const AblationRow>(&row, 1)));
}

void run_ablate(const Path& config_path, const OptPath& out_flag) {
  const RunConfig config = load_config(config_path);
  require_seed(config, "ablate");
  const Path out = resolve(out_flag, config.paths.out, "--out");
  ensure_parent(out);

  std::vector<AblationVariant> variants = canonical_variants();
  for (auto& v : block_variants(config.denoiser.blocks)) variants.push_back(std::move(v));
  const SceneBundle bundle = gen_scene(config.scene);
  const auto rows = ablation_report(bundle, config.denoiser, variants, config.translation);
  write_text(out, csv(rows));
}

int report_current_exception(std::ostream& err) {
  try {
    throw;
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << '\n';
    return kUsage;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kConfig;
  } catch (const IoError& e) {
    err << "io error: " << e.what() << '\n';
    return kIo;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "io error: " << e.what() << '\n';
    return kIo;
  } catch (const FormatError& e) {
    err << "format error: " << e.what() << '\n';
    return kFormat;
  } catch (const ParameterError& e) {
    err << "parameter error: " << e.what() << '\n';
    return kParameter;
  } catch (const ContractError& e) {
    err << "parameter error: " << e.what() << '\n';
    return kParameter;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kParameter;
  }
}

}  // namespace tokenwarp::cli
