#include <doctest.h>

#include "trajdiff/datapipe.hpp"
#include "trajdiff/metrics.hpp"

#include <cmath>
#include <numbers>
#include <numeric>

using namespace trajdiff;

namespace {

// metres east of (0, 0) along the equator
LatLon east(double m) { return {0.0, m / (1000.0 * kEarthRadiusKm * std::numbers::pi / 180.0)}; }

Staypoint stay(const std::string& user, double metres_east) { return {user, east(metres_east), 0.0, 600.0}; }

}  // namespace

TEST_CASE("staypoint: a stationary hour is one staypoint") {
  std::vector<GnssPoint> pts;
  for (int k = 0; k <= 60; ++k) pts.push_back({"u", 60.0 * k, {47.0, 8.0}});
  const auto sp = detect_staypoints(pts, 100, 300);
  REQUIRE(sp.size() == 1);
  CHECK(sp[0].start == 0.0);
  CHECK(sp[0].end == 3600.0);
  CHECK(sp[0].centroid.lat == doctest::Approx(47.0).epsilon(1e-14));
}

TEST_CASE("staypoint: fast motion yields nothing") {
  std::vector<GnssPoint> pts;
  for (int k = 0; k < 100; ++k) pts.push_back({"u", 10.0 * k, east(500.0 * k)});
  CHECK(detect_staypoints(pts, 100, 300).empty());
}

TEST_CASE("staypoint: two clusters 1 km apart") {
  std::vector<GnssPoint> pts;
  // symmetric jitter of +-20 m around 0 m and 1000 m; the centroids sit on the centres
  const double jitter[] = {-20, 20, 0, -20, 20, 0, -20, 20, 0, 0};
  double t = 0;
  for (double j : jitter) pts.push_back({"u", t += 60, east(j)});
  for (int k = 0; k < 5; ++k) pts.push_back({"u", t += 60, east(200.0 + 150.0 * k)});
  for (double j : jitter) pts.push_back({"u", t += 60, east(1000 + j)});
  const auto sp = detect_staypoints(pts, 100, 300);
  REQUIRE(sp.size() == 2);
  CHECK(distance_m(sp[0].centroid, east(0)) < 1e-6);
  CHECK(distance_m(sp[1].centroid, east(1000)) < 1e-6);
  CHECK(sp[0].end - sp[0].start == 540.0);
  CHECK(distance_m(sp[0].centroid, sp[1].centroid) == doctest::Approx(1000.0).epsilon(1e-9));
}

TEST_CASE("staypoint: short dwell is dropped and decreasing timestamps are rejected") {
  std::vector<GnssPoint> pts{{"u", 0, {1, 1}}, {"u", 100, {1, 1}}};
  CHECK(detect_staypoints(pts, 100, 300).empty());
  CHECK(detect_staypoints(pts, 100, 100).size() == 1);
  pts.push_back({"u", 50, {1, 1}});
  CHECK_THROWS_AS(detect_staypoints(pts, 100, 300), DataError);
}

TEST_CASE("staypoints are computed per user") {
  std::vector<GnssPoint> pts;
  for (int k = 0; k <= 10; ++k) {
    pts.push_back({"b", 60.0 * k, east(0)});
    pts.push_back({"a", 60.0 * k, east(5000)});
  }
  const auto sp = detect_all_staypoints(pts, 100, 300);
  REQUIRE(sp.size() == 2);
  CHECK(sp[0].user == "a");
  CHECK(sp[1].user == "b");
}

TEST_CASE("aggregation radius") {
  CHECK(aggregate_locations({stay("u", 0), stay("u", 50)}, 100).catalog.size() == 1);
  CHECK(aggregate_locations({stay("u", 0), stay("u", 500)}, 100).catalog.size() == 2);
}

TEST_CASE("aggregation follows the running centroid") {
  // 0 m founds L0; 80 m joins (centroid -> 40 m); 130 m is 90 m from the centroid and joins too,
  // although it is 130 m from the first staypoint
  const Aggregation agg = aggregate_locations({stay("u", 0), stay("u", 80), stay("u", 130)}, 100);
  REQUIRE(agg.catalog.size() == 1);
  CHECK(agg.catalog[0].support == 3);
  CHECK(distance_m(agg.catalog[0].coord, east(70)) < 1e-6);
  CHECK(agg.visits[0].locations == std::vector<int>{0, 0, 0});

  // 0, 80, 160: the third is 120 m from the 40 m centroid and founds L1
  const Aggregation two = aggregate_locations({stay("u", 0), stay("u", 80), stay("v", 160)}, 100);
  REQUIRE(two.catalog.size() == 2);
  CHECK(distance_m(two.catalog[0].coord, east(40)) < 1e-6);
  CHECK(two.catalog[1].support == 1);
  REQUIRE(two.visits.size() == 2);
  CHECK(two.visits[0].user == "u");
  CHECK(two.visits[1].locations == std::vector<int>{1});
  CHECK(two.visits[0].dwell_s == std::vector<double>{600, 600});
}

TEST_CASE("chunking drops the remainder") {
  std::vector<int> v(70);
  std::iota(v.begin(), v.end(), 0);
  const auto c = chunk_sequences(v, 32);
  REQUIRE(c.size() == 2);
  std::vector<int> joined;
  for (const auto& t : c) joined.insert(joined.end(), t.begin(), t.end());
  CHECK(std::equal(joined.begin(), joined.end(), v.begin()));
  CHECK(chunk_sequences(std::vector<int>(31, 1), 32).empty());
  CHECK_THROWS_AS(chunk_sequences(v, 1), ConfigError);

  const std::vector<UserVisits> uv{{"u", {1, 2, 3, 4, 5}, {10, 20, 30, 40, 50}}};
  const auto recs = chunk_records(uv, 2);
  REQUIRE(recs.size() == 2);
  CHECK(recs[1].tokens == Trajectory{3, 4});
  CHECK(recs[1].dwell_s == std::vector<double>{30, 40});
  CHECK(recs[1].user == "u");
}

TEST_CASE("synthetic corpus") {
  SynthConfig cfg;
  cfg.seed = 4;
  cfg.locations = 20;
  cfg.users = 8;
  cfg.len_per_user = 70;
  cfg.seq_len = 16;
  const SynthCorpus a = synth_dataset(cfg);
  const SynthCorpus b = synth_dataset(cfg);
  CHECK(a.catalog.size() == 20);
  CHECK(a.records.size() == 8 * 4);
  CHECK(io::to_jsonl(a.records) == io::to_jsonl(b.records));
  CHECK(io::to_catalog_csv(a.catalog) == io::to_catalog_csv(b.catalog));
  for (const auto& r : a.records) {
    CHECK(r.tokens.size() == 16);
    CHECK(r.dwell_s.size() == 16);
    for (int t : r.tokens) CHECK((t >= 0 && t < 20));
  }
  double max_km = 0;
  for (const auto& x : a.catalog)
    for (const auto& y : a.catalog) max_km = std::max(max_km, haversine_km(x.coord, y.coord));
  CHECK(max_km < std::sqrt(2.0) * cfg.extent_km * 1.01);
  cfg.locations = 3;
  CHECK_THROWS_AS(synth_dataset(cfg), ConfigError);
}

TEST_CASE("synthetic corpus statistics are reproducible across seeds") {
  SynthConfig cfg;
  cfg.locations = 40;
  cfg.users = 200;
  cfg.len_per_user = 32;
  cfg.seq_len = 32;
  auto mean_entropy = [&](std::uint64_t seed) {
    cfg.seed = seed;
    const auto recs = synth_dataset(cfg).records;
    std::vector<double> h;
    for (const auto& r : recs) h.push_back(shannon_entropy(r.tokens));
    const double m = std::accumulate(h.begin(), h.end(), 0.0) / static_cast<double>(h.size());
    double v = 0;
    for (double x : h) v += (x - m) * (x - m);
    return std::pair{m, v / static_cast<double>(h.size() - 1) / static_cast<double>(h.size())};
  };
  const auto [m1, se1] = mean_entropy(1);
  const auto [m2, se2] = mean_entropy(2);
  CHECK(std::abs(m1 - m2) < 4 * std::sqrt(se1 + se2));
}

TEST_CASE("pipeline is total on valid input") {
  auto eng = rng::stream(6, "gnss");
  std::vector<GnssPoint> pts;
  for (int u = 0; u < 3; ++u) {
    double t = 0;
    LatLon here{46.0, 7.0};
    for (int k = 0; k < 400; ++k) {
      if (rng::uniform01(eng) < 0.05) here = {46.0 + 0.05 * rng::uniform01(eng), 7.0 + 0.05 * rng::uniform01(eng)};
      t += 30 + 60 * rng::uniform01(eng);
      pts.push_back({"u" + std::to_string(u), t, {here.lat + 1e-5 * rng::uniform01(eng), here.lon}});
    }
  }
  const auto sp = detect_all_staypoints(pts);
  CHECK_FALSE(sp.empty());
  const Aggregation agg = aggregate_locations(sp);
  std::size_t visits = 0;
  for (const auto& v : agg.visits) {
    visits += v.locations.size();
    for (int l : v.locations) CHECK((l >= 0 && l < static_cast<int>(agg.catalog.size())));
  }
  CHECK(visits == sp.size());
  std::int64_t support = 0;
  for (const auto& l : agg.catalog) support += l.support;
  CHECK(support == static_cast<std::int64_t>(sp.size()));
  CHECK_NOTHROW(chunk_records(agg.visits, 4));
  CHECK(aggregate_locations({}).catalog.empty());
}

TEST_CASE("markov corpus follows its chain") {
  const Mat T = cyclic_chain(5, 0.6);
  CHECK(T(0, 1) == 0.6);
  CHECK(T(4, 0) == 0.6);
  CHECK(T(2, 2) == doctest::Approx(0.1));
  for (int r = 0; r < 5; ++r) CHECK(T.row(r).sum() == doctest::Approx(1.0).epsilon(1e-14));
  const std::vector<double> init(5, 0.2);
  const auto data = markov_dataset(T, init, 2000, 32, 3);
  CHECK(data.size() == 2000);
  const Mat F = transition_frequencies(data, 5);
  CHECK((F - T).cwiseAbs().maxCoeff() < 0.02);
  CHECK(markov_dataset(T, init, 3, 32, 3)[2] == data[2]);
}
