#pragma once

#include "trajdiff/types.hpp"

#include <string>
#include <string_view>
#include <vector>

namespace trajdiff {

enum class ScheduleKind { linear, cosine, sqrt };

std::string to_string(ScheduleKind kind);
ScheduleKind parse_schedule_kind(std::string_view s);

/// Constructor arguments of a schedule, kept so a schedule can be persisted
/// and rebuilt bit-exactly.
struct ScheduleSpec {
  ScheduleKind kind = ScheduleKind::cosine;
  int steps = 1000;
  double beta_start = 1e-4;
  double beta_end = 0.02;
  double s = 0.008;  // cosine offset; the sqrt schedule uses its own default of 1e-4
};

/// Fixed forward-process noise schedule. All per-step arrays are indexed by
/// t = 1..T; index 0 holds the alpha_bar_0 = 1 convention.
class NoiseSchedule {
 public:
  /// Builds from explicit betas (t = 1..T). Throws std::invalid_argument
  /// unless every beta lies in (0, 1) and alpha_bar is strictly decreasing.
  NoiseSchedule(ScheduleSpec spec, std::vector<double> betas);

  int steps() const { return static_cast<int>(beta_.size()) - 1; }
  const ScheduleSpec& spec() const { return spec_; }

  double beta(int t) const { return beta_.at(check(t, 1)); }
  double alpha(int t) const { return alpha_.at(check(t, 1)); }
  double alpha_bar(int t) const { return alpha_bar_.at(check(t, 0)); }
  double beta_tilde(int t) const { return beta_tilde_.at(check(t, 1)); }

  /// Coefficients of z0 and z_t in the forward-process posterior mean.
  double posterior_coef_z0(int t) const;
  double posterior_coef_zt(int t) const;

 private:
  std::size_t check(int t, int lo) const;

  ScheduleSpec spec_;
  std::vector<double> beta_;
  std::vector<double> alpha_;
  std::vector<double> alpha_bar_;
  std::vector<double> beta_tilde_;
};

NoiseSchedule make_linear_schedule(int steps, double beta_start = 1e-4, double beta_end = 0.02);
NoiseSchedule make_cosine_schedule(int steps, double s = 0.008);
NoiseSchedule make_sqrt_schedule(int steps, double s = 1e-4);
NoiseSchedule make_schedule(const ScheduleSpec& spec);

/// z_t = sqrt(abar_t) z0 + sqrt(1 - abar_t) eps.
Mat q_sample(const Mat& z0, int t, const Mat& eps, const NoiseSchedule& sched);

/// Mean of q(z_{t-1} | z_t, z0), valid for 2 <= t <= T.
Mat posterior_mean(const Mat& z_t, const Mat& z0, int t, const NoiseSchedule& sched);

/// Inverse of q_sample for a noise estimate.
Mat zhat0_from_eps(const Mat& z_t, const Mat& eps_hat, int t, const NoiseSchedule& sched);

}  // namespace trajdiff
