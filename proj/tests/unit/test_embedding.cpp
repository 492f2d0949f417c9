#include <doctest.h>

#include "trajdiff/embedding.hpp"
#include "trajdiff/rng.hpp"

#include <cmath>
#include <limits>

using namespace trajdiff;

namespace {

Mat random_table(std::uint64_t seed, int D, int P) {
  auto eng = rng::stream(seed, "table");
  return normalized_rows(rng::normal(eng, D, P));
}

// direct softmax, no shift
double softmax_oracle(const Trajectory& y, const Mat& z0, const Mat& E) {
  double total = 0;
  for (Eigen::Index n = 0; n < z0.rows(); ++n) {
    double denom = 0;
    for (Eigen::Index d = 0; d < E.rows(); ++d) denom += std::exp(z0.row(n).dot(E.row(d)));
    total -= std::log(std::exp(z0.row(n).dot(E.row(y[static_cast<std::size_t>(n)]))) / denom);
  }
  return total;
}

}  // namespace

TEST_CASE("embed is a table lookup") {
  Mat E(2, 3);
  E << 1, 0, 0, 0, 1, 0;
  Trajectory y{0, 1, 0};
  Mat z = embed(y, E);
  CHECK(z.rows() == 3);
  CHECK(z.row(0) == E.row(0));
  CHECK(z.row(1) == E.row(1));
  CHECK(z.row(2) == E.row(0));
  CHECK_THROWS_AS(embed(Trajectory{0, 2}, E), DataError);
  CHECK_THROWS_AS(embed(Trajectory{-1}, E), DataError);
}

TEST_CASE("embed then decode round trips on random normalized tables") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Mat E = random_table(seed, 7, 4);
    auto eng = rng::stream(seed, "tokens");
    Trajectory y(12);
    for (auto& v : y) v = rng::uniform_int(eng, 0, 6);
    Mat z = embed(y, E);
    for (Eigen::Index n = 0; n < z.rows(); ++n) CHECK(z.row(n).norm() == doctest::Approx(1.0));
    CHECK(decode(z, E) == y);
    CHECK(decode(sample_z0(y, E, 0.0, eng), E) == y);
  }
}

TEST_CASE("sample_z0 variance") {
  Mat E = random_table(1, 3, 2);
  Trajectory y{0, 1, 2, 1};
  auto eng = rng::stream(5, "z0");
  const double s2 = 0.04;
  const int n = 100000;
  const Mat mu = embed(y, E);
  double sum = 0, sum2 = 0;
  for (int i = 0; i < n; ++i) {
    Mat z = sample_z0(y, E, s2, eng);
    const double d = z(1, 1) - mu(1, 1);
    sum += d;
    sum2 += d * d;
  }
  const double var = sum2 / n - (sum / n) * (sum / n);
  CHECK(std::abs(var - s2) < 3 * s2 * std::sqrt(2.0 / n));
  CHECK(sample_z0(y, E, 0.0, eng) == mu);
}

TEST_CASE("logits") {
  Mat E = Mat::Identity(4, 4);
  Mat z = E.row(2);
  Mat l = logits(z, E);
  CHECK(l(0, 2) == 1.0);
  CHECK(l.maxCoeff() == 1.0);
  CHECK(logits(Mat::Zero(3, 4), E).isZero());

  auto eng = rng::stream(9, "logits");
  Mat z0 = rng::normal(eng, 3, 4);
  Mat T = rng::normal(eng, 5, 4);
  Mat L = logits(z0, T);
  for (int n = 0; n < 3; ++n)
    for (int d = 0; d < 5; ++d) {
      double dot = 0;
      for (int k = 0; k < 4; ++k) dot += z0(n, k) * T(d, k);
      CHECK(L(n, d) == doctest::Approx(dot).epsilon(1e-12));
      CHECK(std::abs(logits(z0.row(n), T)(0, d) - L(n, d)) < 1e-12);
    }
}

TEST_CASE("decode ties go to the smallest index") {
  Mat E = random_table(2, 5, 3);
  Trajectory y = decode(Mat::Zero(4, 3), E);
  for (int v : y) CHECK(v == 0);
  Mat E2(3, 2);
  E2 << 0, 1, 1, 0, 1, 0;
  Mat z(1, 2);
  z << 1, 0;
  CHECK(decode(z, E2) == Trajectory{1});
}

TEST_CASE("decode is stable under perturbations smaller than half the margin") {
  auto eng = rng::stream(4, "margin");
  for (int rep = 0; rep < 10; ++rep) {
    Mat E = random_table(100 + static_cast<std::uint64_t>(rep), 6, 3);
    Trajectory y{0, 1, 2, 3, 4, 5};
    Mat z = embed(y, E);
    // brute-force margin per row: 1 - max off-diagonal inner product
    double margin = std::numeric_limits<double>::infinity();
    for (int a = 0; a < 6; ++a)
      for (int b = 0; b < 6; ++b)
        if (a != b) margin = std::min(margin, 1.0 - E.row(a).dot(E.row(b)));
    Mat noise = rng::normal(eng, 6, 3);
    for (Eigen::Index n = 0; n < 6; ++n) noise.row(n) *= 0.49 * margin / 2 / noise.row(n).norm();
    // |<noise, e_a - e_b>| <= |noise| * |e_a - e_b| <= |noise| * 2
    CHECK(decode(z + noise, E) == y);
  }
}

TEST_CASE("cross entropy") {
  const int D = 6;
  Mat E = random_table(3, D, 4);
  Trajectory y{0, 3, 5};
  CHECK(cross_entropy(y, Mat::Zero(3, 4), E) == doctest::Approx(3 * std::log(D)));

  Mat big = 200.0 * embed(y, E);
  Mat Eid = Mat::Identity(4, 4);
  Trajectory y2{1, 2};
  CHECK(cross_entropy(y2, 1000.0 * embed(y2, Eid), Eid) < 1e-12);

  auto eng = rng::stream(8, "ce");
  for (int rep = 0; rep < 5; ++rep) {
    Mat z0 = rng::normal(eng, 3, 4);
    const double ce = cross_entropy(y, z0, E);
    CHECK(ce >= 0.0);
    CHECK(ce == doctest::Approx(softmax_oracle(y, z0, E)).epsilon(1e-10));
  }
  CHECK(std::isfinite(cross_entropy(y, big * 10, E)));
}

TEST_CASE("cross entropy gradients match finite differences") {
  const int D = 5, P = 3;
  Mat E = random_table(12, D, P);
  Trajectory y{4, 0, 2, 2};
  auto eng = rng::stream(12, "ce-grad");
  Mat z0 = rng::normal(eng, 4, P);
  std::vector<double> w{1, 0, 1, 1};

  Mat dz = Mat::Zero(4, P), dE = Mat::Zero(D, P);
  cross_entropy(y, z0, E, w, &dz, &dE);
  const double h = 1e-5;
  auto f = [&](const Mat& z, const Mat& T) { return cross_entropy(y, z, T, w, nullptr, nullptr); };
  for (int i = 0; i < z0.size(); ++i) {
    Mat zp = z0, zm = z0;
    zp.data()[i] += h;
    zm.data()[i] -= h;
    const double fd = (f(zp, E) - f(zm, E)) / (2 * h);
    CHECK(std::abs(fd - dz.data()[i]) <= 1e-6 * std::max({std::abs(fd), std::abs(dz.data()[i]), 1e-3}));
  }
  CHECK(dz.row(1).isZero());
  for (int i = 0; i < E.size(); ++i) {
    Mat Ep = E, Em = E;
    Ep.data()[i] += h;
    Em.data()[i] -= h;
    const double fd = (f(z0, Ep) - f(z0, Em)) / (2 * h);
    CHECK(std::abs(fd - dE.data()[i]) <= 1e-6 * std::max({std::abs(fd), std::abs(dE.data()[i]), 1e-3}));
  }
  // weights in {0,1} only restrict the sum
  CHECK(f(z0, E) == doctest::Approx(cross_entropy(Trajectory{4, 2, 2},
                                                  (Mat(3, P) << z0.row(0), z0.row(2), z0.row(3)).finished(), E)));
}

TEST_CASE("normalize rows") {
  Mat E(2, 2);
  E << 3, 4, -1, 0;
  Mat n = normalized_rows(E);
  CHECK(n(0, 0) == doctest::Approx(0.6));
  CHECK(n(0, 1) == doctest::Approx(0.8));
  CHECK(n(1, 0) == doctest::Approx(-1.0));
  CHECK((normalized_rows(n) - n).norm() < 1e-15);
  Mat bad = Mat::Zero(2, 2);
  CHECK_THROWS_AS(normalize_rows(bad), NumericError);
}
