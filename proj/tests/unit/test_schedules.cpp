#include <doctest.h>

#include "trajdiff/rng.hpp"
#include "trajdiff/schedules.hpp"

#include <cmath>
#include <vector>

using namespace trajdiff;

namespace {

Mat scalar(double v) { return Mat::Constant(1, 1, v); }

void check_invariants(const NoiseSchedule& s, double beta_cap = 1.0) {
  CHECK(s.alpha_bar(0) == 1.0);
  CHECK(s.beta_tilde(1) == 0.0);
  for (int t = 1; t <= s.steps(); ++t) {
    CHECK(s.beta(t) > 0.0);
    CHECK(s.beta(t) < beta_cap + 1e-15);
    CHECK(s.alpha_bar(t) < s.alpha_bar(t - 1));
    CHECK(s.alpha_bar(t) > 0.0);
  }
}

}  // namespace

TEST_CASE("linear schedule small cases") {
  auto s1 = make_linear_schedule(1, 0.1, 0.1);
  CHECK(s1.steps() == 1);
  CHECK(s1.beta(1) == doctest::Approx(0.1));
  CHECK(s1.alpha_bar(1) == doctest::Approx(0.9));

  auto s2 = make_linear_schedule(2, 0.1, 0.2);
  CHECK(s2.alpha_bar(1) == doctest::Approx(0.9));
  CHECK(s2.alpha_bar(2) == doctest::Approx(0.72));
  CHECK(s2.alpha(2) == doctest::Approx(0.8));
}

TEST_CASE("linear schedule default endpoints") {
  auto s = make_linear_schedule(1000);
  CHECK(s.beta(1) == doctest::Approx(1e-4));
  CHECK(s.beta(1000) == doctest::Approx(0.02));
  // mpmath cumulative product, 40 digits
  CHECK(s.alpha_bar(1000) == doctest::Approx(4.0358297653756833e-5).epsilon(1e-9));
  check_invariants(s);
}

TEST_CASE("linear schedule rejects bad arguments") {
  CHECK_THROWS(make_linear_schedule(0));
  CHECK_THROWS(make_linear_schedule(10, 0.0, 0.02));
  CHECK_THROWS(make_linear_schedule(10, 0.1, 1.0));
  CHECK_THROWS(make_linear_schedule(10, 0.2, 0.1));
}

TEST_CASE("cosine schedule") {
  auto s = make_cosine_schedule(1000, 0.008);
  CHECK(s.alpha_bar(0) == 1.0);
  CHECK(s.alpha_bar(500) == doctest::Approx(0.49384359044063771).epsilon(1e-9));
  for (int t = 1; t <= 1000; ++t) CHECK(s.beta(t) <= 0.999);
  CHECK(s.beta(1000) == doctest::Approx(0.999));
  CHECK(s.alpha_bar(1000) == doctest::Approx(2.4287669070344684e-9).epsilon(1e-6));
  check_invariants(s, 0.999);
  CHECK_THROWS(make_cosine_schedule(100, 0.0));
  CHECK_THROWS(make_cosine_schedule(100, -1.0));
}

TEST_CASE("sqrt schedule") {
  auto s = make_sqrt_schedule(100, 1e-4);
  CHECK(s.alpha_bar(25) == doctest::Approx(0.4999000099980005).epsilon(1e-12));
  CHECK(s.alpha_bar(1) == doctest::Approx(0.8995012437887911).epsilon(1e-12));
  CHECK(s.alpha_bar(100) >= 1e-5);
  check_invariants(s);
  CHECK_THROWS(make_sqrt_schedule(0));
}

TEST_CASE("make_schedule dispatch and parsing") {
  ScheduleSpec spec;
  spec.kind = ScheduleKind::linear;
  spec.steps = 10;
  auto s = make_schedule(spec);
  CHECK(s.spec().kind == ScheduleKind::linear);
  CHECK(s.steps() == 10);
  CHECK(parse_schedule_kind("sqrt") == ScheduleKind::sqrt);
  CHECK(to_string(ScheduleKind::cosine) == "cosine");
  CHECK_THROWS_AS(parse_schedule_kind("quadratic"), ConfigError);
}

TEST_CASE("out of range timesteps throw") {
  auto s = make_linear_schedule(5);
  CHECK_THROWS_AS(s.beta(0), std::out_of_range);
  CHECK_THROWS_AS(s.alpha_bar(6), std::out_of_range);
  CHECK_THROWS_AS(q_sample(scalar(1), 0, scalar(0), s), std::out_of_range);
  CHECK_THROWS_AS(posterior_mean(scalar(1), scalar(1), 1, s), std::out_of_range);
  CHECK_THROWS_AS(posterior_mean(scalar(1), scalar(1), 6, s), std::out_of_range);
}

TEST_CASE("q_sample") {
  auto s = make_linear_schedule(2, 0.1, 0.2);  // abar_2 = 0.72
  CHECK(q_sample(scalar(1), 2, scalar(1), s)(0, 0) == doctest::Approx(1.3776783996367751).epsilon(1e-12));
  Mat z0 = Mat::Random(3, 4);
  Mat zt = q_sample(z0, 2, Mat::Zero(3, 4), s);
  CHECK((zt - std::sqrt(0.72) * z0).norm() < 1e-14);
  CHECK_THROWS(q_sample(z0, 1, Mat::Zero(2, 4), s));
}

TEST_CASE("posterior mean") {
  auto s = make_linear_schedule(2, 0.1, 0.2);
  CHECK(posterior_mean(scalar(0), scalar(0), 2, s)(0, 0) == 0.0);
  CHECK(posterior_mean(scalar(1), scalar(1), 2, s)(0, 0) == doctest::Approx(0.99706920967890838).epsilon(1e-12));

  // independent arithmetic over random schedules
  auto eng = rng::stream(7, "posterior-oracle");
  for (int rep = 0; rep < 3; ++rep) {
    std::vector<double> betas(6);
    for (auto& b : betas) b = 0.01 + 0.3 * rng::uniform01(eng);
    NoiseSchedule sched(ScheduleSpec{}, betas);
    for (int t = 2; t <= 6; ++t) {
      double ab = 1, ab_prev = 1;
      for (int k = 1; k <= t; ++k) {
        ab_prev = ab;
        ab *= 1 - betas[static_cast<std::size_t>(k - 1)];
      }
      const double bt = betas[static_cast<std::size_t>(t - 1)];
      const double c0 = std::sqrt(ab_prev) * bt / (1 - ab);
      const double ct = std::sqrt(1 - bt) * (1 - ab_prev) / (1 - ab);
      CHECK(sched.posterior_coef_z0(t) == doctest::Approx(c0).epsilon(1e-13));
      CHECK(sched.posterior_coef_zt(t) == doctest::Approx(ct).epsilon(1e-13));
      CHECK(posterior_mean(scalar(1), scalar(1), t, sched)(0, 0) == doctest::Approx(c0 + ct).epsilon(1e-13));
      CHECK(sched.beta_tilde(t) == doctest::Approx((1 - ab_prev) / (1 - ab) * bt).epsilon(1e-13));
    }
  }
}

TEST_CASE("zhat0_from_eps inverts q_sample") {
  auto s2 = make_linear_schedule(2, 0.1, 0.2);
  CHECK(zhat0_from_eps(scalar(1.3776783996367751), scalar(1), 2, s2)(0, 0) ==
        doctest::Approx(1.0).epsilon(1e-12));
  CHECK(zhat0_from_eps(scalar(2), scalar(0), 2, s2)(0, 0) == doctest::Approx(2 / std::sqrt(0.72)));

  auto eng = rng::stream(3, "roundtrip");
  for (auto sched : {make_linear_schedule(200), make_cosine_schedule(200), make_sqrt_schedule(200)}) {
    for (int t : {1, 17, 100, 199}) {
      Mat z0 = rng::normal(eng, 5, 3);
      Mat eps = rng::normal(eng, 5, 3);
      Mat back = zhat0_from_eps(q_sample(z0, t, eps, sched), eps, t, sched);
      CHECK((back - z0).norm() / z0.norm() < 1e-10);
    }
  }
}

TEST_CASE("composed single-step kernels match the q_sample marginal") {
  auto s = make_linear_schedule(20, 0.01, 0.1);
  const int t = 15, n = 100000;
  const double z0 = 0.7;
  auto eng = rng::stream(11, "compose");
  double sum = 0, sum2 = 0;
  for (int i = 0; i < n; ++i) {
    double z = z0;
    for (int k = 1; k <= t; ++k) {
      std::normal_distribution<double> nd;
      z = std::sqrt(1 - s.beta(k)) * z + std::sqrt(s.beta(k)) * nd(eng);
    }
    sum += z;
    sum2 += z * z;
  }
  const double mean = sum / n, var = sum2 / n - mean * mean;
  const double mu = std::sqrt(s.alpha_bar(t)) * z0, v = 1 - s.alpha_bar(t);
  CHECK(std::abs(mean - mu) < 3 * std::sqrt(v / n));
  CHECK(std::abs(var - v) < 3 * v * std::sqrt(2.0 / n));
}
