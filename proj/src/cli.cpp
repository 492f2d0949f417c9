#include "trajdiff/cli.hpp"

#include "trajdiff/baselines.hpp"
#include "trajdiff/checkpoint.hpp"
#include "trajdiff/config.hpp"
#include "trajdiff/datapipe.hpp"
#include "trajdiff/io.hpp"
#include "trajdiff/metrics.hpp"
#include "trajdiff/trainer.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <ctime>
#include <optional>
#include <ostream>
#include <sstream>

namespace trajdiff::cli {

namespace fs = std::filesystem;
using nlohmann::json;

LogLevel log_level_from_env() {
  const char* v = std::getenv("TRAJDIFF_LOG");
  if (!v || !*v) return LogLevel::info;
  const std::string s(v);
  if (s == "error") return LogLevel::error;
  if (s == "info") return LogLevel::info;
  if (s == "debug") return LogLevel::debug;
  throw ConfigError("TRAJDIFF_LOG must be one of error, info, debug (got '" + s + "')");
}

namespace {

struct Log {
  LogLevel level;
  std::ostream& os;
  void info(const std::string& m) const {
    if (level != LogLevel::error) os << "[info] " << m << '\n';
  }
  void debug(const std::string& m) const {
    if (level == LogLevel::debug) os << "[debug] " << m << '\n';
  }
};

/// Everything a command produced, written only after it succeeded.
struct Run {
  std::string command;
  std::vector<std::string> argv;
  json config = json::object();
  json seeds = json::object();
  json summary = json::object();
  std::vector<fs::path> inputs;
  std::vector<std::pair<fs::path, std::string>> outputs;

  void input(const fs::path& p) { inputs.push_back(p); }
  void output(const fs::path& p, std::string bytes) { outputs.emplace_back(p, std::move(bytes)); }
};

std::string iso_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void commit(const Run& run, double seconds, const std::string& started) {
  if (run.outputs.empty()) return;
  json j;
  j["version"] = 1;
  j["command"] = run.command;
  j["argv"] = run.argv;
  j["cwd"] = fs::current_path().string();
  j["config"] = run.config;
  j["seeds"] = run.seeds;
  j["inputs"] = json::array();
  for (const auto& p : run.inputs) j["inputs"].push_back({{"path", p.string()}, {"sha256", io::sha256_file(p)}});
  j["outputs"] = json::array();
  for (const auto& [p, bytes] : run.outputs) {
    io::atomic_write(p, bytes);
    j["outputs"].push_back({{"path", p.string()}, {"sha256", io::sha256_hex(bytes)}, {"bytes", bytes.size()}});
  }
  if (!run.summary.empty()) j["summary"] = run.summary;
  j["started_at"] = started;
  j["wall_clock_s"] = seconds;
  fs::path manifest = run.outputs.front().first;
  manifest += ".manifest.json";
  io::atomic_write(manifest, j.dump(2) + "\n");
}

std::string csv_of(const std::function<void(std::ostream&)>& f) {
  std::ostringstream os;
  f(os);
  return os.str();
}

std::vector<int> parse_int_list(const std::string& s, const std::string& what) {
  std::vector<int> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stoi(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw ConfigError(what + ": not an integer list: '" + s + "'");
    }
  }
  if (out.empty()) throw ConfigError(what + ": empty list");
  return out;
}

int max_token(const std::vector<Trajectory>& trajs) {
  int m = -1;
  for (const auto& t : trajs)
    for (int y : t) m = std::max(m, y);
  return m;
}

// ---- shared config handling ----

struct ConfigOpts {
  std::string config;
  std::vector<std::string> sets;
};

void add_config_opts(CLI::App* sub, ConfigOpts& o) {
  sub->add_option("--config", o.config, "flat key = value config file");
  sub->add_option("--set", o.sets, "override, key=value (repeatable; wins over --config)")->allow_extra_args(false);
}

void apply_config(RunConfig& cfg, const ConfigOpts& o, Run& run) {
  if (!o.config.empty()) {
    cfg = load_config(o.config);
    run.input(o.config);
  }
  for (const auto& s : o.sets) cfg.apply_override(s);
}

// ---- train ----

struct TrainOpts {
  ConfigOpts cfg;
  std::string data, out, resume;
  std::optional<std::uint64_t> rng_seed;
  std::optional<int> steps;
  int halt_after = -1;
};

void cmd_train(const TrainOpts& o, Run& run, const Log& log) {
  std::optional<Checkpoint> ckpt;
  RunConfig cfg;
  if (!o.resume.empty()) {
    ckpt = load_checkpoint(o.resume);
    run.input(o.resume);
    cfg = ckpt->config;
  }
  apply_config(cfg, o.cfg, run);
  if (o.rng_seed) cfg.train.rng_seed = *o.rng_seed;
  if (o.steps) cfg.train.total_steps = *o.steps;

  const auto data = io::tokens_of(io::read_jsonl(o.data));
  run.input(o.data);
  if (cfg.arch.vocab_size == 0) cfg.arch.vocab_size = max_token(data) + 1;
  cfg.validate();

  const NoiseSchedule sched = make_schedule(cfg.effective_schedule());
  TrainOptions topts;
  if (ckpt) topts.resume = &ckpt->state;
  topts.halt_after = o.halt_after;
  topts.on_log = [&](const LogRow& r) {
    std::ostringstream m;
    m << "step " << r.step << " loss " << r.loss << " lr " << r.lr;
    if (r.val_objective) {
      m << " val " << *r.val_objective;
      log.info(m.str());
    } else {
      log.debug(m.str());
    }
  };
  log.info("training on " + std::to_string(data.size()) + " trajectories, " +
           std::to_string(cfg.train.total_steps) + " steps");
  const TrainResult res = train(data, cfg.arch, cfg.train, cfg.diffusion, sched, topts);

  run.output(o.out, serialize_checkpoint({cfg, res.state}));
  run.output(o.out + ".log.csv", csv_of([&](std::ostream& os) { write_log_csv(os, res.log); }));
  for (const auto& [k, v] : cfg.to_map()) run.config[k] = v;
  run.seeds["train.rng_seed"] = cfg.train.rng_seed;
  run.summary = {{"steps", res.state.step},
                 {"best_step", res.state.best_step},
                 {"best_val", std::isfinite(res.state.best_val) ? json(res.state.best_val) : json(nullptr)},
                 {"train_size", res.split.train.size()},
                 {"val_size", res.split.val.size()}};
  log.info("finished at step " + std::to_string(res.state.step) + ", best step " +
           std::to_string(res.state.best_step));
}

// ---- sample ----

struct SampleOpts {
  std::string checkpoint, seed_file, out;
  std::vector<std::string> sets;
  int count = 0;
  bool unconditional = false;
  std::optional<double> guidance_w;
  std::uint64_t rng_seed = 0;
  int chunks = 0;
};

void cmd_sample(const SampleOpts& o, Run& run, const Log& log) {
  const Checkpoint ckpt = load_checkpoint(o.checkpoint);
  run.input(o.checkpoint);
  RunConfig cfg = ckpt.config;
  for (const auto& s : o.sets) cfg.apply_override(s);
  if (o.guidance_w) {
    cfg.diffusion.guidance = true;
    cfg.diffusion.guidance_w = *o.guidance_w;
  }
  cfg.validate();
  if (o.unconditional == !o.seed_file.empty())
    throw ConfigError("sample: give exactly one of --seed-file and --unconditional");
  if (o.count < 0 || o.chunks < 0) throw ConfigError("sample: --count and --chunks must be >= 0");

  const int N = cfg.arch.seq_len;
  const int D = cfg.arch.vocab_size;
  std::vector<Trajectory> prefixes;
  if (!o.seed_file.empty()) {
    prefixes = io::tokens_of(io::read_jsonl(o.seed_file));
    run.input(o.seed_file);
    if (prefixes.empty()) throw DataError("seed file '" + o.seed_file + "' has no records");
    const int want_max = o.chunks > 0 ? N / 2 : N;
    for (std::size_t i = 0; i < prefixes.size(); ++i) {
      const auto& p = prefixes[i];
      if (p.empty() || static_cast<int>(p.size()) > want_max)
        throw DataError(o.seed_file + ": seed " + std::to_string(i) + " has length " + std::to_string(p.size()) +
                        ", expected 1.." + std::to_string(want_max));
      if (o.chunks > 0 && static_cast<int>(p.size()) != N / 2)
        throw DataError(o.seed_file + ": chunked generation needs seeds of length " + std::to_string(N / 2));
      for (int y : p)
        if (y < 0 || y >= D) throw DataError(o.seed_file + ": seed " + std::to_string(i) + " has token out of range");
    }
  }
  const int count = o.count > 0 ? o.count : static_cast<int>(prefixes.size());
  if (count == 0) throw ConfigError("sample: --count is required with --unconditional");

  const ScoreNetParams params = best_model(ckpt);
  const NoiseSchedule sched = make_schedule(cfg.effective_schedule());
  std::vector<Trajectory> out;
  if (o.chunks > 0) {
    std::vector<Trajectory> init;
    for (int i = 0; i < count; ++i) {
      if (o.unconditional) {
        auto eng = rng::stream(o.rng_seed, "ar-init", static_cast<std::uint64_t>(i));
        init.push_back(random_seed_tokens(eng, N / 2, D));
      } else {
        init.push_back(prefixes[static_cast<std::size_t>(i) % prefixes.size()]);
      }
    }
    out = autoregressive_generate(params, init, o.chunks, cfg.diffusion, o.rng_seed, sched);
  } else {
    std::vector<SampleRequest> reqs;
    for (int i = 0; i < count; ++i) {
      SampleRequest r;
      r.stream = rng::substream_seed(o.rng_seed, "sample", static_cast<std::uint64_t>(i));
      if (o.unconditional) {
        r.mask.assign(static_cast<std::size_t>(N), 0);
      } else {
        const auto& p = prefixes[static_cast<std::size_t>(i) % prefixes.size()];
        r.mask = prefix_mask(N, static_cast<int>(p.size()));
        r.seed = p;
        r.seed.resize(static_cast<std::size_t>(N), 0);
      }
      reqs.push_back(std::move(r));
    }
    log.info("sampling " + std::to_string(count) + " trajectories over " + std::to_string(sched.steps()) + " steps");
    out = sample(params, reqs, cfg.diffusion, sched);
  }
  run.output(o.out, io::to_jsonl(io::as_records(out, "sample#")));
  for (const auto& [k, v] : cfg.to_map()) run.config[k] = v;
  run.config["sample.count"] = count;
  run.config["sample.unconditional"] = o.unconditional;
  run.config["sample.chunks"] = o.chunks;
  run.seeds["rng_seed"] = o.rng_seed;
}

// ---- evaluate ----

struct EvaluateOpts {
  std::string generated, reference, catalog, out;
};

void cmd_evaluate(const EvaluateOpts& o, Run& run, const Log& log) {
  const auto gen = io::tokens_of(io::read_jsonl(o.generated));
  const auto ref = io::tokens_of(io::read_jsonl(o.reference));
  const auto cat = io::read_catalog_csv(o.catalog);
  run.input(o.generated);
  run.input(o.reference);
  run.input(o.catalog);
  const MetricReport rep = evaluate(gen, ref, cat);
  run.output(o.out, report_json(rep));
  for (const auto& [name, h] : rep.histograms) run.output(o.out + "." + name + ".csv", histogram_csv(h));
  for (const auto& [name, d] : rep.divergence) {
    log.info(name + " JSD " + io::format_double(d));
    run.summary[name] = d;
  }
}

// ---- ablate ----

struct AblateOpts {
  ConfigOpts cfg;
  std::string data, out, embed_dims = "8,16,32,64", time_dims = "64,128,256";
  std::optional<std::uint64_t> rng_seed;
  std::optional<int> steps;
};

void cmd_ablate(const AblateOpts& o, Run& run, const Log& log) {
  RunConfig cfg;
  apply_config(cfg, o.cfg, run);
  if (o.rng_seed) cfg.train.rng_seed = *o.rng_seed;
  if (o.steps) cfg.train.total_steps = *o.steps;
  const auto data = io::tokens_of(io::read_jsonl(o.data));
  run.input(o.data);
  if (cfg.arch.vocab_size == 0) cfg.arch.vocab_size = max_token(data) + 1;
  cfg.validate();
  const auto cells = ablation_grid(cfg.arch, cfg.diffusion, cfg.schedule, parse_int_list(o.embed_dims, "--embed-dims"),
                                   parse_int_list(o.time_dims, "--time-dims"));
  log.info("ablation grid: " + std::to_string(cells.size()) + " cells");
  const auto rows = ablate(data, cells, cfg.arch, cfg.train, cfg.diffusion, cfg.schedule, [&](const AblationRow& r) {
    log.info(r.cell.group + " P=" + std::to_string(r.cell.embed_dim) + " " + to_string(r.cell.parameterization) +
             (r.cell.self_conditioning ? " sc" : " nosc") + " " + to_string(r.cell.schedule) +
             " temb=" + std::to_string(r.cell.time_embed_dim) + " val " + io::format_double(r.val_objective));
  });
  run.output(o.out, csv_of([&](std::ostream& os) { write_ablation_csv(os, rows); }));

  std::vector<const AblationRow*> main;
  for (const auto& r : rows)
    if (r.cell.group == "main") main.push_back(&r);
  std::stable_sort(main.begin(), main.end(),
                   [](const AblationRow* a, const AblationRow* b) { return a->val_objective < b->val_objective; });
  for (std::size_t k = 0; k < main.size(); ++k) {
    const auto& c = main[k]->cell;
    if (c.parameterization == Parameterization::z0 && c.self_conditioning) {
      run.summary["z0_sc_rank"] = k + 1;
      run.summary["main_cells"] = main.size();
      run.summary["z0_sc_embed_dim"] = c.embed_dim;
      log.info("best z0 + self-conditioning cell ranks " + std::to_string(k + 1) + " of " +
               std::to_string(main.size()));
      break;
    }
  }
  for (const auto& [k, v] : cfg.to_map()) run.config[k] = v;
  run.config["ablate.embed_dims"] = o.embed_dims;
  run.config["ablate.time_dims"] = o.time_dims;
  run.seeds["train.rng_seed"] = cfg.train.rng_seed;
}

// ---- baseline ----

struct BaselineOpts {
  std::string kind, fit, catalog, out;
  int count = 0, len = 0;
  std::uint64_t rng_seed = 0;
  EprParams epr;
};

void cmd_baseline(const BaselineOpts& o, Run& run, const Log& log) {
  const BaselineKind kind = parse_baseline_kind(o.kind);
  o.epr.validate();
  if (o.count < 1 || o.len < 1) throw ConfigError("baseline: --count and --len must be >= 1");
  const auto records = io::read_jsonl(o.fit);
  run.input(o.fit);
  LocationCatalog cat;
  if (!o.catalog.empty()) {
    cat = io::read_catalog_csv(o.catalog);
    run.input(o.catalog);
  } else {
    if (kind == BaselineKind::depr) throw ConfigError("baseline: depr needs --catalog for distances");
    const int m = max_token(io::tokens_of(records));
    cat.assign(static_cast<std::size_t>(std::max(m + 1, 1)), Location{});
  }
  const BaselineModel model = fit_baseline(records, kind, static_cast<int>(cat.size()), o.epr);
  log.info("fitted " + to_string(kind) + " on " + std::to_string(model.users.size()) + " users");
  run.output(o.out, io::to_jsonl(generate_baseline(model, cat, o.count, o.len, o.rng_seed)));
  run.config = {{"kind", to_string(kind)}, {"count", o.count}, {"len", o.len},
                {"rho", o.epr.rho},        {"gamma", o.epr.gamma}, {"vocab", cat.size()}};
  run.seeds["rng_seed"] = o.rng_seed;
}

// ---- synth-data ----

struct SynthOpts {
  SynthConfig cfg;
  std::string out, out_catalog;
};

void cmd_synth(const SynthOpts& o, Run& run, const Log& log) {
  const SynthCorpus c = synth_dataset(o.cfg);
  log.info("synthesized " + std::to_string(c.records.size()) + " trajectories over " +
           std::to_string(c.catalog.size()) + " locations");
  run.output(o.out, io::to_jsonl(c.records));
  run.output(o.out_catalog.empty() ? o.out + ".catalog.csv" : o.out_catalog, io::to_catalog_csv(c.catalog));
  run.config = {{"locations", o.cfg.locations}, {"users", o.cfg.users},   {"len_per_user", o.cfg.len_per_user},
                {"extent_km", o.cfg.extent_km}, {"seq_len", o.cfg.seq_len}, {"rho", o.cfg.epr.rho},
                {"gamma", o.cfg.epr.gamma}};
  run.seeds["rng_seed"] = o.cfg.seed;
}

// ---- preprocess ----

struct PreprocessOpts {
  std::string gnss, out, out_catalog;
  double radius_m = 100.0, min_dwell_s = 300.0;
  int seq_len = 32;
};

void cmd_preprocess(const PreprocessOpts& o, Run& run, const Log& log) {
  if (!(o.radius_m > 0.0) || o.min_dwell_s < 0.0) throw ConfigError("preprocess: bad radius or dwell");
  const auto points = io::read_gnss_csv(o.gnss);
  run.input(o.gnss);
  const auto sp = detect_all_staypoints(points, o.radius_m, o.min_dwell_s);
  const Aggregation agg = aggregate_locations(sp, o.radius_m);
  const auto records = chunk_records(agg.visits, o.seq_len);
  log.info(std::to_string(points.size()) + " points, " + std::to_string(sp.size()) + " staypoints, " +
           std::to_string(agg.catalog.size()) + " locations, " + std::to_string(records.size()) + " trajectories");
  run.output(o.out, io::to_jsonl(records));
  run.output(o.out_catalog.empty() ? o.out + ".catalog.csv" : o.out_catalog, io::to_catalog_csv(agg.catalog));
  run.config = {{"radius_m", o.radius_m}, {"min_dwell_s", o.min_dwell_s}, {"seq_len", o.seq_len}};
}

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Trajectory diffusion toolkit", "trajdiff"};
  app.require_subcommand(1);

  TrainOpts tr;
  auto* s_train = app.add_subcommand("train", "train a score network");
  add_config_opts(s_train, tr.cfg);
  s_train->add_option("--data", tr.data, "trajectories JSONL")->required();
  s_train->add_option("--out", tr.out, "checkpoint path")->required();
  s_train->add_option("--resume", tr.resume, "continue from this checkpoint");
  s_train->add_option("--rng-seed", tr.rng_seed);
  s_train->add_option("--steps", tr.steps, "total steps");
  s_train->add_option("--halt-after", tr.halt_after, "stop after this many completed steps");

  SampleOpts sa;
  auto* s_sample = app.add_subcommand("sample", "generate trajectories");
  s_sample->add_option("--checkpoint", sa.checkpoint)->required();
  s_sample->add_option("--count", sa.count);
  s_sample->add_option("--seed-file", sa.seed_file, "JSONL prefixes");
  s_sample->add_flag("--unconditional", sa.unconditional);
  s_sample->add_option("--guidance-w", sa.guidance_w);
  s_sample->add_option("--rng-seed", sa.rng_seed);
  s_sample->add_option("--chunks", sa.chunks, "autoregressive continuation rounds");
  s_sample->add_option("--set", sa.sets)->allow_extra_args(false);
  s_sample->add_option("--out", sa.out)->required();

  EvaluateOpts ev;
  auto* s_eval = app.add_subcommand("evaluate", "compare generated and reference corpora");
  s_eval->add_option("--generated", ev.generated)->required();
  s_eval->add_option("--reference", ev.reference)->required();
  s_eval->add_option("--catalog", ev.catalog)->required();
  s_eval->add_option("--out", ev.out)->required();

  AblateOpts ab;
  auto* s_abl = app.add_subcommand("ablate", "train and score the ablation grid");
  add_config_opts(s_abl, ab.cfg);
  s_abl->add_option("--data", ab.data)->required();
  s_abl->add_option("--out", ab.out)->required();
  s_abl->add_option("--embed-dims", ab.embed_dims);
  s_abl->add_option("--time-dims", ab.time_dims);
  s_abl->add_option("--rng-seed", ab.rng_seed);
  s_abl->add_option("--steps", ab.steps);

  BaselineOpts bl;
  auto* s_base = app.add_subcommand("baseline", "fit and run a mechanistic generator");
  s_base->add_option("--kind", bl.kind, "epr, depr, dtepr or ipt")->required();
  s_base->add_option("--fit", bl.fit)->required();
  s_base->add_option("--catalog", bl.catalog);
  s_base->add_option("--count", bl.count)->required();
  s_base->add_option("--len", bl.len)->required();
  s_base->add_option("--rng-seed", bl.rng_seed);
  s_base->add_option("--rho", bl.epr.rho);
  s_base->add_option("--gamma", bl.epr.gamma);
  s_base->add_option("--out", bl.out)->required();

  SynthOpts sy;
  auto* s_synth = app.add_subcommand("synth-data", "generate a synthetic EPR corpus");
  s_synth->add_option("--rng-seed", sy.cfg.seed);
  s_synth->add_option("--locations", sy.cfg.locations);
  s_synth->add_option("--users", sy.cfg.users);
  s_synth->add_option("--len-per-user", sy.cfg.len_per_user);
  s_synth->add_option("--extent-km", sy.cfg.extent_km);
  s_synth->add_option("--seq-len", sy.cfg.seq_len);
  s_synth->add_option("--rho", sy.cfg.epr.rho);
  s_synth->add_option("--gamma", sy.cfg.epr.gamma);
  s_synth->add_option("--out", sy.out)->required();
  s_synth->add_option("--out-catalog", sy.out_catalog);

  PreprocessOpts pp;
  auto* s_pre = app.add_subcommand("preprocess", "GNSS CSV to location trajectories");
  s_pre->add_option("--gnss", pp.gnss)->required();
  s_pre->add_option("--radius-m", pp.radius_m);
  s_pre->add_option("--min-dwell-s", pp.min_dwell_s);
  s_pre->add_option("--seq-len", pp.seq_len);
  s_pre->add_option("--out", pp.out)->required();
  s_pre->add_option("--out-catalog", pp.out_catalog);

  std::string manifest, out_dir;
  auto* s_replay = app.add_subcommand("replay", "re-run a command from its manifest");
  s_replay->add_option("manifest", manifest)->required();
  s_replay->add_option("--out-dir", out_dir);

  std::vector<std::string> argv_store{"trajdiff"};
  argv_store.insert(argv_store.end(), args.begin(), args.end());
  std::vector<const char*> argv;
  for (const auto& a : argv_store) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }

  const Log log{log_level_from_env(), err};
  if (s_replay->parsed()) return replay(manifest, out_dir, out, err);

  Run run;
  run.argv = args;
  const std::string started = iso_now();
  const auto t0 = std::chrono::steady_clock::now();
  if (s_train->parsed()) {
    run.command = "train";
    cmd_train(tr, run, log);
  } else if (s_sample->parsed()) {
    run.command = "sample";
    cmd_sample(sa, run, log);
  } else if (s_eval->parsed()) {
    run.command = "evaluate";
    cmd_evaluate(ev, run, log);
  } else if (s_abl->parsed()) {
    run.command = "ablate";
    cmd_ablate(ab, run, log);
  } else if (s_base->parsed()) {
    run.command = "baseline";
    cmd_baseline(bl, run, log);
  } else if (s_synth->parsed()) {
    run.command = "synth-data";
    cmd_synth(sy, run, log);
  } else if (s_pre->parsed()) {
    run.command = "preprocess";
    cmd_preprocess(pp, run, log);
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  commit(run, secs, started);
  for (const auto& [p, bytes] : run.outputs) out << p.string() << '\n';
  return kOk;
}

bool is_output_flag(const std::string& a) { return a.rfind("--out", 0) == 0 && a.rfind("--out-dir", 0) != 0; }

fs::path relocate(const fs::path& p, const fs::path& out_dir) {
  return out_dir.empty() ? p : out_dir / p.filename();
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  try {
    return dispatch(args, out, err);
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const DataError& e) {
    err << "error: " << e.what() << '\n';
    return kData;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return kData;
  } catch (const json::exception& e) {
    err << "error: " << e.what() << '\n';
    return kData;
  } catch (const NumericError& e) {
    err << "error: numeric failure: " << e.what() << '\n';
    return kNumeric;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kInternal;
  }
}

int replay(const fs::path& manifest, const fs::path& out_dir, std::ostream& out, std::ostream& err) {
  const json m = json::parse(io::read_file(manifest));
  if (!m.contains("argv") || !m.contains("outputs") || !m.contains("inputs"))
    throw DataError("'" + manifest.string() + "' is not a run manifest");
  std::vector<std::string> args = m["argv"].get<std::vector<std::string>>();
  const fs::path dir = out_dir.empty() ? fs::path() : fs::absolute(out_dir);
  if (!dir.empty() && !fs::is_directory(dir)) throw DataError("output directory does not exist: '" + dir.string() + "'");

  for (std::size_t i = 0; i < args.size(); ++i) {
    const auto eq = args[i].find('=');
    if (eq != std::string::npos && is_output_flag(args[i].substr(0, eq))) {
      args[i] = args[i].substr(0, eq + 1) + relocate(args[i].substr(eq + 1), dir).string();
    } else if (is_output_flag(args[i]) && i + 1 < args.size()) {
      args[i + 1] = relocate(args[i + 1], dir).string();
      ++i;
    }
  }

  const fs::path here = fs::current_path();
  const fs::path there = m.value("cwd", here.string());
  struct Restore {
    fs::path p;
    ~Restore() {
      std::error_code ec;
      fs::current_path(p, ec);
    }
  } restore{here};
  if (fs::is_directory(there)) fs::current_path(there);

  for (const auto& in : m["inputs"]) {
    const fs::path p = in.at("path").get<std::string>();
    if (io::sha256_file(p) != in.at("sha256").get<std::string>())
      throw DataError("input '" + p.string() + "' changed since the manifest was written");
  }
  std::ostringstream inner_out;
  const int code = run_cli(args, inner_out, err);
  if (code != kOk) return code;

  int mismatches = 0;
  for (const auto& o : m["outputs"]) {
    const fs::path p = relocate(o.at("path").get<std::string>(), dir);
    const bool same = io::sha256_file(p) == o.at("sha256").get<std::string>();
    out << (same ? "identical " : "DIFFERS   ") << p.string() << '\n';
    if (!same) ++mismatches;
  }
  if (mismatches) throw DataError(std::to_string(mismatches) + " output(s) differ from the manifest");
  return kOk;
}

}  // namespace trajdiff::cli
