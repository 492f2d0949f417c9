#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace trajdiff::cli {

enum ExitCode : int { kOk = 0, kUsage = 2, kData = 3, kNumeric = 4, kInternal = 1 };

enum class LogLevel { error, info, debug };

/// Reads TRAJDIFF_LOG (unset means info). Throws ConfigError on other values.
LogLevel log_level_from_env();

/// Runs one subcommand. `args` excludes the program name. Every successful
/// command writes `<primary output>.manifest.json` next to its outputs.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Re-executes the command recorded in a manifest. Output paths are moved
/// into `out_dir` when it is non-empty; inputs must still hash to the
/// recorded digests. Returns the exit code; a digest mismatch of any output
/// is a data error.
int replay(const std::filesystem::path& manifest, const std::filesystem::path& out_dir, std::ostream& out,
           std::ostream& err);

}  // namespace trajdiff::cli
