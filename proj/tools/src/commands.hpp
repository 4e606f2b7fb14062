#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include "tokenwarp/warp.hpp"

namespace tokenwarp::cli {

// Process exit codes.
enum ExitCode : int {
  kOk = 0,
  kUsage = 1,      // bad or missing command-line flags
  kConfig = 2,     // unreadable JSON, unknown keys, missing seed, bad values
  kIo = 3,         // missing input file, unwritable output
  kFormat = 4,     // malformed container
  kParameter = 5,  // shape mismatch or invalid parameter
};

/// Command-line misuse that CLI11 cannot detect on its own.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using Path = std::filesystem::path;
using OptPath = std::optional<Path>;

/// "<dir>/<prefix>_<NNN>.tkwp" with a three-digit, 1-based index.
Path numbered_file(const Path& dir, const std::string& prefix, int index);

void run_synth(const Path& config, const OptPath& out_dir);
void run_flow(const Path& prev, const Path& next, const BlockMatchParams& params, const Path& out);
void run_occl(const Path& fwd, const Path& bwd, const OcclusionParams& params, const Path& out);
void run_translate(const Path& config, const OptPath& video, const OptPath& flows_dir,
                   const OptPath& masks_dir, const OptPath& out);
void run_eval(const Path& video, const Path& flows_dir, const OptPath& masks_dir, bool masked,
              const Path& out);
void run_ablate(const Path& config, const OptPath& out);

/// Maps the exception in flight to an exit code and writes a one-line
/// diagnostic. Call from inside a catch block.
int report_current_exception(std::ostream& err);

}  // namespace tokenwarp::cli
