#include "trajdiff/config.hpp"

#include "trajdiff/io.hpp"

#include <charconv>
#include <cmath>
#include <functional>
#include <sstream>

namespace trajdiff {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

[[noreturn]] void bad_value(std::string_view key, std::string_view value) {
  throw ConfigError("invalid value '" + std::string(value) + "' for key '" + std::string(key) + "'");
}

double to_double(std::string_view key, std::string_view v) {
  double out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || p != v.data() + v.size() || !std::isfinite(out)) bad_value(key, v);
  return out;
}

long long to_int(std::string_view key, std::string_view v) {
  long long out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || p != v.data() + v.size()) bad_value(key, v);
  return out;
}

int to_int32(std::string_view key, std::string_view v) {
  const long long x = to_int(key, v);
  if (x < -2147483647LL || x > 2147483647LL) bad_value(key, v);
  return static_cast<int>(x);
}

std::uint64_t to_u64(std::string_view key, std::string_view v) {
  std::uint64_t out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || p != v.data() + v.size()) bad_value(key, v);
  return out;
}

bool to_bool(std::string_view key, std::string_view v) {
  if (v == "true" || v == "on" || v == "1") return true;
  if (v == "false" || v == "off" || v == "0") return false;
  bad_value(key, v);
}

std::vector<int> to_list(std::string_view key, std::string_view v) {
  std::vector<int> out;
  std::size_t start = 0;
  while (start <= v.size()) {
    const std::size_t pos = v.find(',', start);
    const auto item = trim(v.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (item.empty()) bad_value(key, v);
    out.push_back(to_int32(key, item));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

std::string list_text(const std::vector<int>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

std::string b(bool v) { return v ? "true" : "false"; }
std::string d(double v) { return io::format_double(v); }

}  // namespace

void RunConfig::set(std::string_view key, std::string_view value) {
  value = trim(value);
  using Setter = std::function<void(RunConfig&, std::string_view, std::string_view)>;
  static const std::map<std::string, Setter, std::less<>> setters = {
      {"schedule.kind", [](RunConfig& c, auto k, auto v) {
         try {
           c.schedule.kind = parse_schedule_kind(v);
         } catch (const ConfigError&) {
           bad_value(k, v);
         }
       }},
      {"schedule.T", [](RunConfig& c, auto k, auto v) { c.schedule.steps = to_int32(k, v); }},
      {"schedule.beta_start", [](RunConfig& c, auto k, auto v) { c.schedule.beta_start = to_double(k, v); }},
      {"schedule.beta_end", [](RunConfig& c, auto k, auto v) { c.schedule.beta_end = to_double(k, v); }},
      {"schedule.s", [](RunConfig& c, auto k, auto v) {
         c.schedule.s = to_double(k, v);
         c.schedule_s_set = true;
       }},
      {"model.seq_len", [](RunConfig& c, auto k, auto v) { c.arch.seq_len = to_int32(k, v); }},
      {"model.embed_dim", [](RunConfig& c, auto k, auto v) { c.arch.embed_dim = to_int32(k, v); }},
      {"model.vocab_size", [](RunConfig& c, auto k, auto v) { c.arch.vocab_size = to_int32(k, v); }},
      {"model.input_hidden", [](RunConfig& c, auto k, auto v) { c.arch.input_hidden = to_list(k, v); }},
      {"model.time_hidden", [](RunConfig& c, auto k, auto v) { c.arch.time_hidden = to_list(k, v); }},
      {"model.output_hidden", [](RunConfig& c, auto k, auto v) { c.arch.output_hidden = to_list(k, v); }},
      {"model.time_embed_dim", [](RunConfig& c, auto k, auto v) { c.arch.time_embed_dim = to_int32(k, v); }},
      {"model.heads", [](RunConfig& c, auto k, auto v) { c.arch.heads = to_int32(k, v); }},
      {"model.blocks", [](RunConfig& c, auto k, auto v) { c.arch.blocks = to_int32(k, v); }},
      {"model.ffn_mult", [](RunConfig& c, auto k, auto v) { c.arch.ffn_mult = to_int32(k, v); }},
      {"diffusion.parameterization", [](RunConfig& c, auto k, auto v) {
         try {
           c.diffusion.parameterization = parse_parameterization(v);
         } catch (const ConfigError&) {
           bad_value(k, v);
         }
       }},
      {"diffusion.self_conditioning", [](RunConfig& c, auto k, auto v) { c.diffusion.self_conditioning = to_bool(k, v); }},
      {"diffusion.self_cond_prob", [](RunConfig& c, auto k, auto v) { c.diffusion.self_cond_prob = to_double(k, v); }},
      {"diffusion.guidance", [](RunConfig& c, auto k, auto v) { c.diffusion.guidance = to_bool(k, v); }},
      {"diffusion.guidance_w", [](RunConfig& c, auto k, auto v) { c.diffusion.guidance_w = to_double(k, v); }},
      {"diffusion.p_disc", [](RunConfig& c, auto k, auto v) { c.diffusion.p_disc = to_double(k, v); }},
      {"diffusion.mask_prefix_frac", [](RunConfig& c, auto k, auto v) { c.diffusion.mask_prefix_frac = to_double(k, v); }},
      {"diffusion.mask_random_frac", [](RunConfig& c, auto k, auto v) { c.diffusion.mask_random_frac = to_double(k, v); }},
      {"diffusion.sample_decode", [](RunConfig& c, auto k, auto v) { c.diffusion.sample_decode = to_bool(k, v); }},
      {"train.batch_size", [](RunConfig& c, auto k, auto v) { c.train.batch_size = to_int32(k, v); }},
      {"train.total_steps", [](RunConfig& c, auto k, auto v) { c.train.total_steps = to_int32(k, v); }},
      {"train.lr_start", [](RunConfig& c, auto k, auto v) { c.train.lr_start = to_double(k, v); }},
      {"train.lr_end", [](RunConfig& c, auto k, auto v) { c.train.lr_end = to_double(k, v); }},
      {"train.adam_b1", [](RunConfig& c, auto k, auto v) { c.train.adam_b1 = to_double(k, v); }},
      {"train.adam_b2", [](RunConfig& c, auto k, auto v) { c.train.adam_b2 = to_double(k, v); }},
      {"train.adam_eps", [](RunConfig& c, auto k, auto v) { c.train.adam_eps = to_double(k, v); }},
      {"train.weight_decay", [](RunConfig& c, auto k, auto v) { c.train.weight_decay = to_double(k, v); }},
      {"train.val_fraction", [](RunConfig& c, auto k, auto v) { c.train.val_fraction = to_double(k, v); }},
      {"train.rng_seed", [](RunConfig& c, auto k, auto v) { c.train.rng_seed = to_u64(k, v); }},
      {"train.eval_every", [](RunConfig& c, auto k, auto v) { c.train.eval_every = to_int32(k, v); }},
      {"train.patience", [](RunConfig& c, auto k, auto v) { c.train.patience = to_int32(k, v); }},
      {"train.min_rel_improvement", [](RunConfig& c, auto k, auto v) { c.train.min_rel_improvement = to_double(k, v); }},
      {"train.val_mc", [](RunConfig& c, auto k, auto v) { c.train.val_mc = to_int32(k, v); }},
  };
  auto it = setters.find(key);
  if (it == setters.end()) throw ConfigError("unknown config key '" + std::string(key) + "'");
  it->second(*this, key, value);
}

void RunConfig::apply_text(std::string_view text, const std::string& source) {
  std::size_t lineno = 0, start = 0;
  while (start <= text.size()) {
    const std::size_t pos = text.find('\n', start);
    std::string_view line = text.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start);
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (!line.empty()) {
      const auto eq = line.find('=');
      if (eq == std::string_view::npos)
        throw ConfigError(source + ":" + std::to_string(lineno) + ": expected 'key = value'");
      try {
        set(trim(line.substr(0, eq)), line.substr(eq + 1));
      } catch (const ConfigError& e) {
        throw ConfigError(source + ":" + std::to_string(lineno) + ": " + e.what());
      }
    }
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
}

void RunConfig::apply_override(std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos) throw ConfigError("override must look like key=value: '" + std::string(assignment) + "'");
  set(trim(assignment.substr(0, eq)), assignment.substr(eq + 1));
}

ScheduleSpec RunConfig::effective_schedule() const {
  ScheduleSpec s = schedule;
  if (s.kind == ScheduleKind::sqrt && !schedule_s_set) s.s = 1e-4;
  return s;
}

std::map<std::string, std::string> RunConfig::to_map() const {
  const ScheduleSpec s = effective_schedule();
  return {
      {"schedule.kind", to_string(s.kind)},
      {"schedule.T", std::to_string(s.steps)},
      {"schedule.beta_start", d(s.beta_start)},
      {"schedule.beta_end", d(s.beta_end)},
      {"schedule.s", d(s.s)},
      {"model.seq_len", std::to_string(arch.seq_len)},
      {"model.embed_dim", std::to_string(arch.embed_dim)},
      {"model.vocab_size", std::to_string(arch.vocab_size)},
      {"model.input_hidden", list_text(arch.input_hidden)},
      {"model.time_hidden", list_text(arch.time_hidden)},
      {"model.output_hidden", list_text(arch.output_hidden)},
      {"model.time_embed_dim", std::to_string(arch.time_embed_dim)},
      {"model.heads", std::to_string(arch.heads)},
      {"model.blocks", std::to_string(arch.blocks)},
      {"model.ffn_mult", std::to_string(arch.ffn_mult)},
      {"diffusion.parameterization", to_string(diffusion.parameterization)},
      {"diffusion.self_conditioning", b(diffusion.self_conditioning)},
      {"diffusion.self_cond_prob", d(diffusion.self_cond_prob)},
      {"diffusion.guidance", b(diffusion.guidance)},
      {"diffusion.guidance_w", d(diffusion.guidance_w)},
      {"diffusion.p_disc", d(diffusion.p_disc)},
      {"diffusion.mask_prefix_frac", d(diffusion.mask_prefix_frac)},
      {"diffusion.mask_random_frac", d(diffusion.mask_random_frac)},
      {"diffusion.sample_decode", b(diffusion.sample_decode)},
      {"train.batch_size", std::to_string(train.batch_size)},
      {"train.total_steps", std::to_string(train.total_steps)},
      {"train.lr_start", d(train.lr_start)},
      {"train.lr_end", d(train.lr_end)},
      {"train.adam_b1", d(train.adam_b1)},
      {"train.adam_b2", d(train.adam_b2)},
      {"train.adam_eps", d(train.adam_eps)},
      {"train.weight_decay", d(train.weight_decay)},
      {"train.val_fraction", d(train.val_fraction)},
      {"train.rng_seed", std::to_string(train.rng_seed)},
      {"train.eval_every", std::to_string(train.eval_every)},
      {"train.patience", std::to_string(train.patience)},
      {"train.min_rel_improvement", d(train.min_rel_improvement)},
      {"train.val_mc", std::to_string(train.val_mc)},
  };
}

std::string RunConfig::to_text() const {
  std::string out;
  for (const auto& [k, v] : to_map()) out += k + " = " + v + "\n";
  return out;
}

void RunConfig::validate() const {
  if (schedule.steps < 2) throw ConfigError("schedule.T must be >= 2");
  try {
    (void)make_schedule(effective_schedule());
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("schedule: ") + e.what());
  }
  diffusion.validate();
  train.validate();
}

RunConfig load_config(const std::filesystem::path& path) {
  RunConfig c;
  std::string text;
  try {
    text = io::read_file(path);
  } catch (const DataError&) {
    throw ConfigError("cannot open config file '" + path.string() + "'");
  }
  c.apply_text(text, path.string());
  return c;
}

}  // namespace trajdiff
