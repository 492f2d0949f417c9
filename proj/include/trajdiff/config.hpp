#pragma once

#include "trajdiff/diffusion.hpp"
#include "trajdiff/schedules.hpp"
#include "trajdiff/score_net.hpp"
#include "trajdiff/trainer.hpp"

#include <filesystem>
#include <map>
#include <string>
#include <string_view>

namespace trajdiff {

/// Every tunable of a run. Serialized as a flat `key = value` document with
/// dotted keys (schedule.*, model.*, diffusion.*, train.*).
struct RunConfig {
  ScheduleSpec schedule;
  ArchConfig arch;
  DiffusionConfig diffusion;
  TrainConfig train;
  bool schedule_s_set = false;

  /// Applies one setting. Throws ConfigError on an unknown key or a value
  /// that does not parse.
  void set(std::string_view key, std::string_view value);
  /// Parses `key = value` lines; '#' starts a comment.
  void apply_text(std::string_view text, const std::string& source = "<config>");
  /// Parses a `key=value` override.
  void apply_override(std::string_view assignment);

  /// Canonical form: sorted keys, doubles printed to round-trip exactly.
  std::map<std::string, std::string> to_map() const;
  std::string to_text() const;

  /// The schedule the run uses (the sqrt kind defaults its offset to 1e-4).
  ScheduleSpec effective_schedule() const;
  void validate() const;
};

RunConfig load_config(const std::filesystem::path& path);

}  // namespace trajdiff
