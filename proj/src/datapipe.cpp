#include "trajdiff/datapipe.hpp"

#include "trajdiff/rng.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>

namespace trajdiff {

double distance_m(LatLon a, LatLon b) { return 1000.0 * haversine_km(a, b); }

namespace {

struct Window {
  double lat_sum = 0, lon_sum = 0;
  std::size_t n = 0;
  LatLon centroid() const { return {lat_sum / static_cast<double>(n), lon_sum / static_cast<double>(n)}; }
};

}  // namespace

std::vector<Staypoint> detect_staypoints(const std::vector<GnssPoint>& points, double radius_m, double min_dwell_s) {
  std::vector<Staypoint> out;
  for (std::size_t k = 1; k < points.size(); ++k)
    if (points[k].timestamp < points[k - 1].timestamp)
      throw DataError("GNSS timestamps decrease for user '" + points[k].user + "'");
  std::size_t i = 0;
  while (i < points.size()) {
    Window w;
    w.lat_sum = points[i].coord.lat;
    w.lon_sum = points[i].coord.lon;
    w.n = 1;
    std::size_t j = i;
    while (j + 1 < points.size()) {
      Window cand = w;
      cand.lat_sum += points[j + 1].coord.lat;
      cand.lon_sum += points[j + 1].coord.lon;
      ++cand.n;
      const LatLon c = cand.centroid();
      bool ok = true;
      for (std::size_t k = i; k <= j + 1 && ok; ++k) ok = distance_m(points[k].coord, c) <= radius_m;
      if (!ok) break;
      w = cand;
      ++j;
    }
    if (points[j].timestamp - points[i].timestamp >= min_dwell_s) {
      out.push_back({points[i].user, w.centroid(), points[i].timestamp, points[j].timestamp});
      i = j + 1;
    } else {
      ++i;
    }
  }
  return out;
}

std::vector<Staypoint> detect_all_staypoints(const std::vector<GnssPoint>& points, double radius_m,
                                             double min_dwell_s) {
  std::map<std::string, std::vector<GnssPoint>> by_user;
  for (const auto& p : points) {
    check_coordinate(p.coord);
    by_user[p.user].push_back(p);
  }
  std::vector<Staypoint> out;
  for (const auto& [user, pts] : by_user) {
    auto sp = detect_staypoints(pts, radius_m, min_dwell_s);
    out.insert(out.end(), sp.begin(), sp.end());
  }
  return out;
}

Aggregation aggregate_locations(const std::vector<Staypoint>& staypoints, double radius_m) {
  Aggregation agg;
  std::vector<Window> sums;
  std::map<std::string, std::size_t> user_index;
  for (const auto& sp : staypoints) {
    int loc = -1;
    for (std::size_t d = 0; d < agg.catalog.size(); ++d) {
      if (distance_m(agg.catalog[d].coord, sp.centroid) <= radius_m) {
        loc = static_cast<int>(d);
        break;
      }
    }
    if (loc < 0) {
      loc = static_cast<int>(agg.catalog.size());
      agg.catalog.push_back({sp.centroid, 0});
      sums.emplace_back();
    }
    Window& w = sums[static_cast<std::size_t>(loc)];
    w.lat_sum += sp.centroid.lat;
    w.lon_sum += sp.centroid.lon;
    ++w.n;
    agg.catalog[static_cast<std::size_t>(loc)].coord = w.centroid();
    ++agg.catalog[static_cast<std::size_t>(loc)].support;

    auto [it, fresh] = user_index.try_emplace(sp.user, agg.visits.size());
    if (fresh) agg.visits.push_back({sp.user, {}, {}});
    agg.visits[it->second].locations.push_back(loc);
    agg.visits[it->second].dwell_s.push_back(sp.end - sp.start);
  }
  return agg;
}

std::vector<Trajectory> chunk_sequences(const std::vector<int>& visits, int N) {
  if (N < 2) throw ConfigError("chunk length must be >= 2");
  std::vector<Trajectory> out;
  for (std::size_t s = 0; s + static_cast<std::size_t>(N) <= visits.size(); s += static_cast<std::size_t>(N))
    out.emplace_back(visits.begin() + static_cast<std::ptrdiff_t>(s),
                     visits.begin() + static_cast<std::ptrdiff_t>(s) + N);
  return out;
}

std::vector<io::Record> chunk_records(const std::vector<UserVisits>& visits, int N) {
  std::vector<io::Record> out;
  for (const auto& v : visits) {
    const auto chunks = chunk_sequences(v.locations, N);
    for (std::size_t k = 0; k < chunks.size(); ++k) {
      io::Record r{v.user, chunks[k], {}};
      if (v.dwell_s.size() == v.locations.size())
        r.dwell_s.assign(v.dwell_s.begin() + static_cast<std::ptrdiff_t>(k) * N,
                         v.dwell_s.begin() + static_cast<std::ptrdiff_t>(k + 1) * N);
      out.push_back(std::move(r));
    }
  }
  return out;
}

SynthCorpus synth_dataset(const SynthConfig& cfg) {
  if (cfg.locations < 4) throw ConfigError("synth: need at least 4 locations");
  if (cfg.users < 1 || cfg.len_per_user < 1) throw ConfigError("synth: users and len_per_user must be >= 1");
  if (!(cfg.extent_km > 0.0)) throw ConfigError("synth: extent must be > 0");
  cfg.epr.validate();
  SynthCorpus c;
  const LatLon origin{47.0, 8.0};
  const double km_per_deg = kEarthRadiusKm * std::numbers::pi / 180.0;
  auto geo = rng::stream(cfg.seed, "synth-catalog");
  for (int d = 0; d < cfg.locations; ++d) {
    const double dy = (rng::uniform01(geo) - 0.5) * cfg.extent_km;
    const double dx = (rng::uniform01(geo) - 0.5) * cfg.extent_km;
    c.catalog.push_back({{origin.lat + dy / km_per_deg,
                          origin.lon + dx / (km_per_deg * std::cos(origin.lat * std::numbers::pi / 180.0))},
                         0});
  }
  std::vector<UserVisits> visits;
  for (int u = 0; u < cfg.users; ++u) {
    auto eng = rng::stream(cfg.seed, "synth-user", static_cast<std::uint64_t>(u));
    std::lognormal_distribution<double> dwell(std::log(3600.0), 1.0);
    UserVisits v;
    v.user = "u" + std::to_string(u);
    const int start = rng::uniform_int(eng, 0, cfg.locations - 1);
    EprState st = EprState::at(cfg.locations, start);
    v.locations.push_back(start);
    v.dwell_s.push_back(std::round(dwell(eng)));
    for (int n = 1; n < cfg.len_per_user; ++n) {
      v.locations.push_back(epr_step(st, c.catalog, cfg.epr, eng));
      v.dwell_s.push_back(std::round(dwell(eng)));
    }
    for (int loc : v.locations) ++c.catalog[static_cast<std::size_t>(loc)].support;
    visits.push_back(std::move(v));
  }
  c.records = chunk_records(visits, cfg.seq_len);
  return c;
}

std::vector<Trajectory> markov_dataset(const Mat& transition, std::span<const double> initial, int count, int N,
                                       std::uint64_t seed) {
  const int D = static_cast<int>(transition.rows());
  if (transition.cols() != D || static_cast<int>(initial.size()) != D) throw ConfigError("markov: shape mismatch");
  std::vector<Trajectory> out;
  for (int i = 0; i < count; ++i) {
    auto eng = rng::stream(seed, "markov", static_cast<std::uint64_t>(i));
    Trajectory t;
    t.push_back(static_cast<int>(rng::categorical(eng, initial)));
    while (static_cast<int>(t.size()) < N) t.push_back(ipt_step(t.back(), transition, eng));
    out.push_back(std::move(t));
  }
  return out;
}

Mat cyclic_chain(int D, double p_successor) {
  if (D < 2) throw ConfigError("cyclic chain needs D >= 2");
  Mat T = Mat::Constant(D, D, (1.0 - p_successor) / (D - 1));
  for (int s = 0; s < D; ++s) T(s, (s + 1) % D) = p_successor;
  return T;
}

}  // namespace trajdiff
