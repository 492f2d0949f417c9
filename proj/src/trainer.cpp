#include "trajdiff/trainer.hpp"

#include "trajdiff/embedding.hpp"
#include "trajdiff/io.hpp"
#include "trajdiff/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace trajdiff {

void TrainConfig::validate() const {
  auto fail = [](const std::string& m) { throw ConfigError("train: " + m); };
  if (batch_size < 1) fail("batch_size must be >= 1");
  if (total_steps < 1) fail("total_steps must be >= 1");
  if (!(lr_end > 0.0) || !(lr_end <= lr_start)) fail("need 0 < lr_end <= lr_start");
  if (!(adam_b1 >= 0.0 && adam_b1 < 1.0) || !(adam_b2 >= 0.0 && adam_b2 < 1.0)) fail("adam betas must lie in [0, 1)");
  if (!(adam_eps > 0.0)) fail("adam_eps must be > 0");
  if (!(weight_decay >= 0.0)) fail("weight_decay must be >= 0");
  if (!(val_fraction > 0.0 && val_fraction < 1.0)) fail("val_fraction must lie in (0, 1)");
  if (eval_every < 1) fail("eval_every must be >= 1");
  if (patience < 1) fail("patience must be >= 1");
  if (!(min_rel_improvement >= 0.0)) fail("min_rel_improvement must be >= 0");
  if (val_mc < 1) fail("val_mc must be >= 1");
}

double lr_schedule(int step, const TrainConfig& cfg) {
  if (step < 1) throw std::invalid_argument("lr_schedule: step must be >= 1");
  if (step >= cfg.total_steps) return cfg.lr_end;
  const double frac = static_cast<double>(step - 1) / static_cast<double>(cfg.total_steps - 1);
  return cfg.lr_start + (cfg.lr_end - cfg.lr_start) * frac;
}

AdamMoments zero_moments(const ParamSet& like) { return {like.zeros_like(), like.zeros_like()}; }

void adamw_update(std::span<double> params, std::span<const double> grads, std::span<double> m,
                  std::span<double> v, int step, double lr, const TrainConfig& cfg) {
  if (step < 1) throw std::invalid_argument("adamw: step must be >= 1");
  if (grads.size() != params.size() || m.size() != params.size() || v.size() != params.size())
    throw std::invalid_argument("adamw: size mismatch");
  const double b1 = cfg.adam_b1, b2 = cfg.adam_b2;
  const double c1 = 1.0 - std::pow(b1, step);
  const double c2 = 1.0 - std::pow(b2, step);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    if (!std::isfinite(g)) throw NumericError("adamw: non-finite gradient");
    m[i] = b1 * m[i] + (1.0 - b1) * g;
    v[i] = b2 * v[i] + (1.0 - b2) * g * g;
    const double mhat = m[i] / c1;
    const double vhat = v[i] / c2;
    params[i] -= lr * (mhat / (std::sqrt(vhat) + cfg.adam_eps) + cfg.weight_decay * params[i]);
    if (!std::isfinite(params[i])) throw NumericError("adamw: non-finite parameter after update");
  }
}

void adamw_step(ScoreNetParams& params, const ParamSet& grads, AdamMoments& moments, int step,
                const TrainConfig& cfg) {
  if (!grads.same_layout(params.weights) || !moments.m.same_layout(params.weights) ||
      !moments.v.same_layout(params.weights))
    throw std::invalid_argument("adamw: layout mismatch");
  adamw_update(params.weights.values(), grads.values(), moments.m.values(), moments.v.values(), step,
               lr_schedule(step, cfg), cfg);
  normalize_rows(params.embedding());
}

DataSplit split_dataset(const std::vector<Trajectory>& data, double val_fraction, std::uint64_t seed) {
  DataSplit s;
  if (data.size() < 2) {
    s.train = data;
    return s;
  }
  std::vector<std::size_t> idx(data.size());
  std::iota(idx.begin(), idx.end(), 0);
  auto eng = rng::stream(seed, "split");
  for (std::size_t i = idx.size() - 1; i > 0; --i)
    std::swap(idx[i], idx[static_cast<std::size_t>(rng::uniform_int(eng, 0, static_cast<int>(i)))]);
  std::size_t n_val = static_cast<std::size_t>(std::round(val_fraction * static_cast<double>(data.size())));
  n_val = std::clamp<std::size_t>(n_val, 1, data.size() - 1);
  std::vector<std::size_t> val_idx(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_val));
  std::vector<std::size_t> train_idx(idx.begin() + static_cast<std::ptrdiff_t>(n_val), idx.end());
  // keep corpus order inside each part
  std::sort(val_idx.begin(), val_idx.end());
  std::sort(train_idx.begin(), train_idx.end());
  for (auto i : train_idx) s.train.push_back(data[i]);
  for (auto i : val_idx) s.val.push_back(data[i]);
  return s;
}

namespace {

constexpr std::size_t kValChunk = 64;

void check_dataset(const std::vector<Trajectory>& data, const ArchConfig& arch) {
  if (data.empty()) throw DataError("training data is empty");
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (static_cast<int>(data[i].size()) != arch.seq_len)
      throw DataError("trajectory " + std::to_string(i) + " has length " + std::to_string(data[i].size()) +
                      ", expected " + std::to_string(arch.seq_len));
    check_tokens(data[i], arch.vocab_size);
  }
}

std::vector<std::size_t> batch_indices(std::uint64_t seed, int step, std::size_t n, int batch) {
  auto eng = rng::stream(seed, "batch", static_cast<std::uint64_t>(step));
  std::vector<std::size_t> out;
  const auto B = static_cast<std::size_t>(batch);
  if (B <= n) {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    for (std::size_t k = 0; k < B; ++k) {
      const auto j = static_cast<std::size_t>(rng::uniform_int(eng, static_cast<int>(k), static_cast<int>(n - 1)));
      std::swap(idx[k], idx[j]);
      out.push_back(idx[k]);
    }
  } else {
    for (std::size_t k = 0; k < B; ++k)
      out.push_back(static_cast<std::size_t>(rng::uniform_int(eng, 0, static_cast<int>(n - 1))));
  }
  return out;
}

}  // namespace

double validate(const ScoreNetParams& params, const std::vector<Trajectory>& valset, const NoiseSchedule& sched,
                const DiffusionConfig& cfg, int n_mc, std::uint64_t seed) {
  if (n_mc < 1) throw std::invalid_argument("validate: n_mc must be >= 1");
  if (valset.empty()) throw std::invalid_argument("validate: empty validation set");
  const int N = params.arch.seq_len, P = params.arch.embed_dim;
  double total = 0.0;
  std::size_t count = 0;
  for (int r = 0; r < n_mc; ++r) {
    auto eng = rng::stream(seed, "validate", static_cast<std::uint64_t>(r));
    for (std::size_t begin = 0; begin < valset.size(); begin += kValChunk) {
      const std::size_t end = std::min(valset.size(), begin + kValChunk);
      std::vector<TrainingDraw> draws;
      for (std::size_t i = begin; i < end; ++i) {
        TrainingDraw d = draw_training(eng, N, P, cfg, sched);
        d.drop_conditioning = false;
        draws.push_back(std::move(d));
      }
      const std::span<const Trajectory> part(valset.data() + begin, end - begin);
      total += variational_objective(params, part, draws, cfg, sched) * static_cast<double>(end - begin);
      count += end - begin;
    }
  }
  return total / static_cast<double>(count);
}

TrainState initial_state(const ArchConfig& arch, std::uint64_t seed) {
  TrainState s;
  s.params = init_params(arch, seed);
  s.moments = zero_moments(s.params.weights);
  s.best_params = s.params;
  return s;
}

void write_log_csv(std::ostream& os, const std::vector<LogRow>& log) {
  os << "step,loss,lr,val_objective\n";
  for (const auto& r : log) {
    os << r.step << ',' << io::format_double(r.loss) << ',' << io::format_double(r.lr) << ',';
    if (r.val_objective) os << io::format_double(*r.val_objective);
    os << '\n';
  }
}

TrainResult train(const std::vector<Trajectory>& dataset, const ArchConfig& arch, const TrainConfig& tcfg,
                  const DiffusionConfig& dcfg, const NoiseSchedule& sched, const TrainOptions& opts) {
  arch.validate();
  tcfg.validate();
  dcfg.validate();
  check_dataset(dataset, arch);
  if (sched.steps() < 2) throw ConfigError("training needs a schedule with T >= 2");

  TrainResult result;
  result.split = split_dataset(dataset, tcfg.val_fraction, tcfg.rng_seed);
  const auto& train_set = result.split.train;
  const auto& val_set = result.split.val;

  if (opts.resume) {
    result.state = *opts.resume;
    if (!result.state.params.weights.same_layout(init_params(arch, 0).weights))
      throw ConfigError("resume state does not match the architecture");
  } else {
    result.state = initial_state(arch, rng::substream_seed(tcfg.rng_seed, "init-params"));
  }
  TrainState& st = result.state;
  const std::uint64_t val_seed = rng::substream_seed(tcfg.rng_seed, "val-draws");

  auto evaluate = [&](LogRow& row) {
    const double v = validate(st.params, val_set, sched, dcfg, tcfg.val_mc, val_seed);
    row.val_objective = v;
    const bool improved_enough = v < st.best_val * (1.0 - tcfg.min_rel_improvement) ||
                                 !std::isfinite(st.best_val);
    if (v < st.best_val) {
      st.best_val = v;
      st.best_step = st.step;
      st.best_params = st.params;
    }
    st.stale_evals = improved_enough ? 0 : st.stale_evals + 1;
    if (st.stale_evals >= tcfg.patience) st.stopped = true;
  };

  ParamSet grads = st.params.weights.zeros_like();
  while (!st.stopped && st.step < tcfg.total_steps) {
    if (opts.halt_after >= 0 && st.step >= opts.halt_after) break;
    const int step = st.step + 1;
    const auto idx = batch_indices(tcfg.rng_seed, step, train_set.size(), tcfg.batch_size);
    std::vector<Trajectory> batch;
    batch.reserve(idx.size());
    for (auto i : idx) batch.push_back(train_set[i]);
    auto eng = rng::stream(tcfg.rng_seed, "draws", static_cast<std::uint64_t>(step));
    std::vector<TrainingDraw> draws;
    draws.reserve(batch.size());
    for (std::size_t b = 0; b < batch.size(); ++b)
      draws.push_back(draw_training(eng, arch.seq_len, arch.embed_dim, dcfg, sched));

    grads.set_zero();
    const BatchLoss bl = batch_loss(st.params, batch, draws, dcfg, sched, &grads);
    if (!std::isfinite(bl.loss)) throw NumericError("training diverged at step " + std::to_string(step));
    const double lr = lr_schedule(step, tcfg);
    adamw_step(st.params, grads, st.moments, step, tcfg);
    st.step = step;

    LogRow row{step, bl.loss, lr, std::nullopt};
    const bool last = st.step == tcfg.total_steps;
    if (!val_set.empty() && (step % tcfg.eval_every == 0 || last)) evaluate(row);
    result.log.push_back(row);
    if (opts.on_log) opts.on_log(row);
  }
  if (val_set.empty() && (st.step == tcfg.total_steps || st.stopped)) {
    st.best_params = st.params;
    st.best_step = st.step;
  }
  return result;
}

std::vector<AblationCell> ablation_grid(const ArchConfig& base_arch, const DiffusionConfig& base_diff,
                                        const ScheduleSpec& base_sched, const std::vector<int>& embed_dims,
                                        const std::vector<int>& time_dims) {
  std::vector<AblationCell> cells;
  for (int P : embed_dims)
    for (auto param : {Parameterization::z0, Parameterization::eps})
      for (bool sc : {true, false})
        cells.push_back({"main", P, param, sc, base_sched.kind, base_arch.time_embed_dim});
  for (auto kind : {ScheduleKind::linear, ScheduleKind::sqrt, ScheduleKind::cosine})
    cells.push_back({"schedule", base_arch.embed_dim, base_diff.parameterization, base_diff.self_conditioning, kind,
                     base_arch.time_embed_dim});
  for (int td : time_dims)
    cells.push_back({"time_embed", base_arch.embed_dim, base_diff.parameterization, base_diff.self_conditioning,
                     base_sched.kind, td});
  return cells;
}

void normalize_ablation(std::vector<AblationRow>& rows) {
  for (auto& r : rows) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& o : rows)
      if (o.cell.group == r.cell.group) best = std::min(best, o.val_objective);
    r.rel_objective = r.val_objective == best ? 1.0 : r.val_objective / best;
  }
}

std::vector<AblationRow> ablate(const std::vector<Trajectory>& dataset, const std::vector<AblationCell>& cells,
                                const ArchConfig& base_arch, const TrainConfig& tcfg,
                                const DiffusionConfig& base_diff, const ScheduleSpec& base_sched,
                                const std::function<void(const AblationRow&)>& progress) {
  if (dataset.size() < 2) throw DataError("ablation needs at least two trajectories");
  std::vector<AblationRow> rows;
  for (const auto& cell : cells) {
    ArchConfig arch = base_arch;
    arch.embed_dim = cell.embed_dim;
    arch.time_embed_dim = cell.time_embed_dim;
    DiffusionConfig dcfg = base_diff;
    dcfg.parameterization = cell.parameterization;
    dcfg.self_conditioning = cell.self_conditioning;
    ScheduleSpec sspec = base_sched;
    if (cell.schedule != sspec.kind) {
      sspec.kind = cell.schedule;
      sspec.s = cell.schedule == ScheduleKind::sqrt ? 1e-4 : 0.008;
    }
    const NoiseSchedule sched = make_schedule(sspec);
    TrainResult tr = train(dataset, arch, tcfg, dcfg, sched);
    // the objective is always measured on the best model, with common draws
    const double v = validate(tr.state.best_params, tr.split.val, sched, dcfg, tcfg.val_mc,
                              rng::substream_seed(tcfg.rng_seed, "ablation-eval"));
    rows.push_back({cell, v, 0.0});
    if (progress) progress(rows.back());
  }
  normalize_ablation(rows);
  return rows;
}

void write_ablation_csv(std::ostream& os, const std::vector<AblationRow>& rows) {
  os << "group,embed_dim,parameterization,self_conditioning,schedule,time_embed_dim,val_objective,rel_objective\n";
  for (const auto& r : rows) {
    os << r.cell.group << ',' << r.cell.embed_dim << ',' << to_string(r.cell.parameterization) << ','
       << (r.cell.self_conditioning ? "on" : "off") << ',' << to_string(r.cell.schedule) << ','
       << r.cell.time_embed_dim << ',' << io::format_double(r.val_objective) << ','
       << io::format_double(r.rel_objective) << '\n';
  }
}

}  // namespace trajdiff
