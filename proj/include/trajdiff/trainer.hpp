#pragma once

#include "trajdiff/diffusion.hpp"
#include "trajdiff/schedules.hpp"
#include "trajdiff/score_net.hpp"
#include "trajdiff/types.hpp"

#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace trajdiff {

struct TrainConfig {
  int batch_size = 64;
  int total_steps = 10000;
  double lr_start = 3e-4;
  double lr_end = 1e-5;
  double adam_b1 = 0.9;
  double adam_b2 = 0.99;
  double adam_eps = 1e-8;
  double weight_decay = 1e-8;
  double val_fraction = 0.05;
  std::uint64_t rng_seed = 0;
  int eval_every = 200;
  int patience = 5;
  double min_rel_improvement = 1e-3;
  int val_mc = 1;

  void validate() const;
};

/// Linear from lr_start at step 1 to lr_end at step total_steps, constant
/// afterwards.
double lr_schedule(int step, const TrainConfig& cfg);

struct AdamMoments {
  ParamSet m;
  ParamSet v;
};

AdamMoments zero_moments(const ParamSet& like);

/// Decoupled-weight-decay Adam update for 1-based `step`, followed by
/// re-normalization of the embedding rows. Throws NumericError on a
/// non-finite gradient or update.
void adamw_step(ScoreNetParams& params, const ParamSet& grads, AdamMoments& moments, int step,
                const TrainConfig& cfg);

/// Plain-vector variant used by tests: no embedding handling.
void adamw_update(std::span<double> params, std::span<const double> grads, std::span<double> m,
                  std::span<double> v, int step, double lr, const TrainConfig& cfg);

struct DataSplit {
  std::vector<Trajectory> train;
  std::vector<Trajectory> val;
};

/// Seeded disjoint partition. Datasets with fewer than two examples get no
/// validation part.
DataSplit split_dataset(const std::vector<Trajectory>& data, double val_fraction, std::uint64_t seed);

/// Monte-Carlo estimate of the negated variational objective averaged over
/// the validation set; `n_mc` draws per example from substreams of `seed`.
double validate(const ScoreNetParams& params, const std::vector<Trajectory>& valset,
                const NoiseSchedule& sched, const DiffusionConfig& cfg, int n_mc, std::uint64_t seed);

/// Everything needed to continue training bit-exactly.
struct TrainState {
  ScoreNetParams params;
  AdamMoments moments;
  int step = 0;  // completed steps
  double best_val = std::numeric_limits<double>::infinity();
  int best_step = 0;
  int stale_evals = 0;
  bool stopped = false;
  ScoreNetParams best_params;
};

TrainState initial_state(const ArchConfig& arch, std::uint64_t seed);

struct LogRow {
  int step = 0;
  double loss = 0.0;
  double lr = 0.0;
  std::optional<double> val_objective;
};

void write_log_csv(std::ostream& os, const std::vector<LogRow>& log);

struct TrainOptions {
  /// Continue from this state instead of a fresh initialization.
  const TrainState* resume = nullptr;
  /// Stop after this many completed steps (counted from step 0); -1 for no limit.
  int halt_after = -1;
  std::function<void(const LogRow&)> on_log;
};

struct TrainResult {
  TrainState state;  // last state; state.best_params is the best-validation model
  std::vector<LogRow> log;
  DataSplit split;
};

TrainResult train(const std::vector<Trajectory>& dataset, const ArchConfig& arch, const TrainConfig& tcfg,
                  const DiffusionConfig& dcfg, const NoiseSchedule& sched, const TrainOptions& opts = {});

/// One ablation cell.
struct AblationCell {
  std::string group;
  int embed_dim = 16;
  Parameterization parameterization = Parameterization::z0;
  bool self_conditioning = true;
  ScheduleKind schedule = ScheduleKind::cosine;
  int time_embed_dim = 256;
};

struct AblationRow {
  AblationCell cell;
  double val_objective = 0.0;
  double rel_objective = 0.0;
};

/// Main grid (embedding dim x parameterization x self-conditioning) plus the
/// schedule and time-embedding sweeps at the base configuration.
std::vector<AblationCell> ablation_grid(const ArchConfig& base_arch, const DiffusionConfig& base_diff,
                                        const ScheduleSpec& base_sched,
                                        const std::vector<int>& embed_dims = {8, 16, 32, 64},
                                        const std::vector<int>& time_dims = {64, 128, 256});

/// Trains and validates every cell. rel_objective is val_objective divided by
/// the minimum within the cell's group, so each group's best is exactly 1.
std::vector<AblationRow> ablate(const std::vector<Trajectory>& dataset, const std::vector<AblationCell>& cells,
                                const ArchConfig& base_arch, const TrainConfig& tcfg,
                                const DiffusionConfig& base_diff, const ScheduleSpec& base_sched,
                                const std::function<void(const AblationRow&)>& progress = {});

void normalize_ablation(std::vector<AblationRow>& rows);
void write_ablation_csv(std::ostream& os, const std::vector<AblationRow>& rows);

}  // namespace trajdiff
