#include "trajdiff/schedules.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace trajdiff {

namespace {

constexpr double kCosineBetaMax = 0.999;
constexpr double kSqrtAlphaBarFloor = 1e-5;
constexpr double kDegenerateAlphaBar = 1e-12;

void require_steps(int steps) {
  if (steps < 1) throw std::invalid_argument("schedule: step count must be >= 1");
}

void require_shape(const Mat& a, const Mat& b, const char* what) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw std::invalid_argument(std::string(what) + ": shape mismatch");
}

}  // namespace

std::string to_string(ScheduleKind kind) {
  switch (kind) {
    case ScheduleKind::linear:
      return "linear";
    case ScheduleKind::cosine:
      return "cosine";
    case ScheduleKind::sqrt:
      return "sqrt";
  }
  return "?";
}

ScheduleKind parse_schedule_kind(std::string_view s) {
  if (s == "linear") return ScheduleKind::linear;
  if (s == "cosine") return ScheduleKind::cosine;
  if (s == "sqrt") return ScheduleKind::sqrt;
  throw ConfigError("unknown schedule kind '" + std::string(s) + "'");
}

NoiseSchedule::NoiseSchedule(ScheduleSpec spec, std::vector<double> betas) : spec_(spec) {
  if (betas.empty()) throw std::invalid_argument("schedule: no steps");
  const std::size_t T = betas.size();
  beta_.assign(T + 1, 0.0);
  alpha_.assign(T + 1, 1.0);
  alpha_bar_.assign(T + 1, 1.0);
  beta_tilde_.assign(T + 1, 0.0);
  for (std::size_t t = 1; t <= T; ++t) {
    const double b = betas[t - 1];
    if (!(b > 0.0 && b < 1.0)) throw std::invalid_argument("schedule: beta out of (0, 1)");
    beta_[t] = b;
    alpha_[t] = 1.0 - b;
    alpha_bar_[t] = alpha_bar_[t - 1] * alpha_[t];
    if (!(alpha_bar_[t] < alpha_bar_[t - 1]) || !(alpha_bar_[t] > 0.0))
      throw std::invalid_argument("schedule: alpha_bar must be strictly decreasing and positive");
    beta_tilde_[t] = (1.0 - alpha_bar_[t - 1]) / (1.0 - alpha_bar_[t]) * b;
  }
  spec_.steps = static_cast<int>(T);
}

std::size_t NoiseSchedule::check(int t, int lo) const {
  if (t < lo || t > steps())
    throw std::out_of_range("schedule: timestep " + std::to_string(t) + " outside [" +
                            std::to_string(lo) + ", " + std::to_string(steps()) + "]");
  return static_cast<std::size_t>(t);
}

double NoiseSchedule::posterior_coef_z0(int t) const {
  const auto i = check(t, 1);
  return std::sqrt(alpha_bar_[i - 1]) * beta_[i] / (1.0 - alpha_bar_[i]);
}

double NoiseSchedule::posterior_coef_zt(int t) const {
  const auto i = check(t, 1);
  return std::sqrt(alpha_[i]) * (1.0 - alpha_bar_[i - 1]) / (1.0 - alpha_bar_[i]);
}

NoiseSchedule make_linear_schedule(int steps, double beta_start, double beta_end) {
  require_steps(steps);
  if (!(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0))
    throw std::invalid_argument("linear schedule: need 0 < beta_start <= beta_end < 1");
  std::vector<double> betas(static_cast<std::size_t>(steps));
  for (int t = 1; t <= steps; ++t) {
    const double frac = steps == 1 ? 0.0 : static_cast<double>(t - 1) / (steps - 1);
    betas[static_cast<std::size_t>(t - 1)] = beta_start + (beta_end - beta_start) * frac;
  }
  return NoiseSchedule({ScheduleKind::linear, steps, beta_start, beta_end, 0.0}, std::move(betas));
}

NoiseSchedule make_cosine_schedule(int steps, double s) {
  require_steps(steps);
  if (!(s > 0.0)) throw std::invalid_argument("cosine schedule: offset s must be > 0");
  auto f = [&](int t) {
    const double c = std::cos((static_cast<double>(t) / steps + s) / (1.0 + s) * std::numbers::pi / 2.0);
    return c * c;
  };
  const double f0 = f(0);
  std::vector<double> betas(static_cast<std::size_t>(steps));
  double prev = 1.0;
  for (int t = 1; t <= steps; ++t) {
    const double ab = f(t) / f0;
    betas[static_cast<std::size_t>(t - 1)] = std::min(1.0 - ab / prev, kCosineBetaMax);
    prev = ab;
  }
  ScheduleSpec spec{ScheduleKind::cosine, steps, 0.0, 0.0, s};
  return NoiseSchedule(spec, std::move(betas));
}

NoiseSchedule make_sqrt_schedule(int steps, double s) {
  require_steps(steps);
  if (!(s > 0.0)) throw std::invalid_argument("sqrt schedule: offset s must be > 0");
  std::vector<double> betas(static_cast<std::size_t>(steps));
  double prev = 1.0;
  for (int t = 1; t <= steps; ++t) {
    const double ab =
        std::max(1.0 - std::sqrt(static_cast<double>(t) / steps + s), kSqrtAlphaBarFloor);
    double b = 1.0 - ab / prev;
    // prev tracks the product exactly as NoiseSchedule recomputes it
    while (prev * (1.0 - b) < ab && b > 0.0) b = std::nextafter(b, 0.0);
    betas[static_cast<std::size_t>(t - 1)] = b;
    prev *= 1.0 - b;
  }
  ScheduleSpec spec{ScheduleKind::sqrt, steps, 0.0, 0.0, s};
  return NoiseSchedule(spec, std::move(betas));
}

NoiseSchedule make_schedule(const ScheduleSpec& spec) {
  switch (spec.kind) {
    case ScheduleKind::linear:
      return make_linear_schedule(spec.steps, spec.beta_start, spec.beta_end);
    case ScheduleKind::cosine:
      return make_cosine_schedule(spec.steps, spec.s);
    case ScheduleKind::sqrt:
      return make_sqrt_schedule(spec.steps, spec.s);
  }
  throw std::invalid_argument("unknown schedule kind");
}

Mat q_sample(const Mat& z0, int t, const Mat& eps, const NoiseSchedule& sched) {
  require_shape(z0, eps, "q_sample");
  const double ab = sched.alpha_bar(t);
  if (t < 1) throw std::out_of_range("q_sample: t must be >= 1");
  return std::sqrt(ab) * z0 + std::sqrt(1.0 - ab) * eps;
}

Mat posterior_mean(const Mat& z_t, const Mat& z0, int t, const NoiseSchedule& sched) {
  require_shape(z_t, z0, "posterior_mean");
  if (t < 2 || t > sched.steps())
    throw std::out_of_range("posterior_mean: t must lie in [2, T]");
  return sched.posterior_coef_z0(t) * z0 + sched.posterior_coef_zt(t) * z_t;
}

Mat zhat0_from_eps(const Mat& z_t, const Mat& eps_hat, int t, const NoiseSchedule& sched) {
  require_shape(z_t, eps_hat, "zhat0_from_eps");
  if (t < 1) throw std::out_of_range("zhat0_from_eps: t must be >= 1");
  const double ab = sched.alpha_bar(t);
  if (ab < kDegenerateAlphaBar) throw NumericError("zhat0_from_eps: alpha_bar below 1e-12");
  return (z_t - std::sqrt(1.0 - ab) * eps_hat) / std::sqrt(ab);
}

}  // namespace trajdiff
