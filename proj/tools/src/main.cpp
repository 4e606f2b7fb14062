#include <iostream>

#include <CLI11.hpp>

#include "commands.hpp"

namespace cli = tokenwarp::cli;

int main(int argc, char** argv) {
  CLI::App app{"Flow-guided token warping toolkit"};
  app.require_subcommand(1);

  std::string config;
  cli::OptPath out_dir, video, flows_dir, masks_dir, out;
  std::string prev, next, fwd, bwd, out_req, eval_video, eval_flows;
  tokenwarp::BlockMatchParams bm;
  tokenwarp::OcclusionParams occ;
  bool masked = false;

  auto* synth = app.add_subcommand("synth", "render a synthetic scene with flows and masks");
  synth->add_option("--config", config, "JSON run config")->required();
  synth->add_option("--out-dir", out_dir, "output directory");

  auto* flow = app.add_subcommand("flow", "block-matching backward flow between two frames");
  flow->add_option("--prev", prev)->required();
  flow->add_option("--next", next)->required();
  flow->add_option("--block", bm.block, "odd patch side")->capture_default_str();
  flow->add_option("--radius", bm.radius, "search radius in pixels")->capture_default_str();
  flow->add_option("--levels", bm.levels, "pyramid levels")->capture_default_str();
  flow->add_option("--out", out_req)->required();

  auto* occl = app.add_subcommand("occl", "forward-backward occlusion mask");
  occl->add_option("--fwd", fwd)->required();
  occl->add_option("--bwd", bwd)->required();
  occl->add_option("--alpha", occ.alpha)->capture_default_str();
  occl->add_option("--beta", occ.beta)->capture_default_str();
  occl->add_flag("--soft", occ.soft, "soft exponential mask");
  occl->add_option("--out", out_req)->required();

  auto* translate = app.add_subcommand("translate", "translate a video clip by clip");
  translate->add_option("--config", config)->required();
  translate->add_option("--video", video);
  translate->add_option("--flows-dir", flows_dir);
  translate->add_option("--masks-dir", masks_dir);
  translate->add_option("--out", out);

  auto* eval = app.add_subcommand("eval", "Warp-Err and Tem-Con of a video");
  eval->add_option("--video", eval_video)->required();
  eval->add_option("--flows-dir", eval_flows)->required();
  eval->add_option("--masks-dir", masks_dir);
  eval->add_flag("--masked", masked, "only count pixels with mask > 0.5");
  eval->add_option("--out", out_req)->required();

  auto* ablate = app.add_subcommand("ablate", "attention and block-placement ablations");
  ablate->add_option("--config", config)->required();
  ablate->add_option("--out", out);

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return cli::kUsage;
  }

  try {
    if (*synth) cli::run_synth(config, out_dir);
    if (*flow) cli::run_flow(prev, next, bm, out_req);
    if (*occl) cli::run_occl(fwd, bwd, occ, out_req);
    if (*translate) cli::run_translate(config, video, flows_dir, masks_dir, out);
    if (*eval) cli::run_eval(eval_video, eval_flows, masks_dir, masked, out_req);
    if (*ablate) cli::run_ablate(config, out);
  } catch (...) {
    return cli::report_current_exception(std::cerr);
  }
  return cli::kOk;
}
