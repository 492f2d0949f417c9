#include "trajdiff/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace trajdiff {

std::string to_string(BaselineKind k) {
  switch (k) {
    case BaselineKind::epr: return "epr";
    case BaselineKind::depr: return "depr";
    case BaselineKind::dtepr: return "dtepr";
    case BaselineKind::ipt: return "ipt";
  }
  return "?";
}

BaselineKind parse_baseline_kind(std::string_view s) {
  if (s == "epr") return BaselineKind::epr;
  if (s == "depr") return BaselineKind::depr;
  if (s == "dtepr") return BaselineKind::dtepr;
  if (s == "ipt") return BaselineKind::ipt;
  throw ConfigError("unknown baseline kind '" + std::string(s) + "'");
}

void EprParams::validate() const {
  if (!(rho > 0.0 && rho <= 1.0)) throw ConfigError("epr: rho must lie in (0, 1]");
  if (!(gamma >= 0.0)) throw ConfigError("epr: gamma must be >= 0");
}

EprState EprState::at(int D, int start) {
  if (D < 1) throw DataError("epr: empty catalog");
  if (start < 0 || start >= D) throw DataError("epr: start location outside the catalog");
  EprState s;
  s.visit_counts.assign(static_cast<std::size_t>(D), 0);
  s.visit(start);
  return s;
}

EprState EprState::from_counts(std::vector<std::int64_t> counts, int current) {
  if (counts.empty()) throw DataError("epr: empty catalog");
  if (current < 0 || current >= static_cast<int>(counts.size()) || counts[static_cast<std::size_t>(current)] <= 0)
    throw DataError("epr: current location must have a positive count");
  EprState s;
  s.visit_counts = std::move(counts);
  s.distinct = static_cast<int>(std::count_if(s.visit_counts.begin(), s.visit_counts.end(), [](auto c) { return c > 0; }));
  s.current = current;
  return s;
}

void EprState::visit(int loc) {
  auto& c = visit_counts.at(static_cast<std::size_t>(loc));
  if (c == 0) ++distinct;
  ++c;
  current = loc;
}

double exploration_probability(int S, const EprParams& p) {
  if (S < 1) return 1.0;
  return std::min(1.0, p.rho * std::pow(static_cast<double>(S), -p.gamma));
}

namespace {

int preferential_return(const EprState& st, rng::Engine& eng) {
  std::vector<double> w(st.visit_counts.begin(), st.visit_counts.end());
  return static_cast<int>(rng::categorical(eng, w));
}

template <class Explore>
int epr_like_step(EprState& st, const LocationCatalog& catalog, const EprParams& p, rng::Engine& eng,
                  Explore&& explore) {
  if (catalog.empty() || catalog.size() != st.visit_counts.size()) throw DataError("epr: catalog/state mismatch");
  const double u = rng::uniform01(eng);
  const bool can_explore = st.distinct < static_cast<int>(catalog.size());
  int next = -1;
  if (can_explore && u < exploration_probability(st.distinct, p)) next = explore();
  if (next < 0) next = preferential_return(st, eng);
  st.visit(next);
  return next;
}

}  // namespace

int epr_step(EprState& st, const LocationCatalog& catalog, const EprParams& p, rng::Engine& eng) {
  return epr_like_step(st, catalog, p, eng, [&] {
    std::vector<double> w(st.visit_counts.size());
    for (std::size_t i = 0; i < w.size(); ++i) w[i] = st.visit_counts[i] == 0 ? 1.0 : 0.0;
    return static_cast<int>(rng::categorical(eng, w));
  });
}

std::vector<double> depr_exploration_weights(const EprState& st, const LocationCatalog& catalog) {
  const LatLon here = catalog.at(static_cast<std::size_t>(st.current)).coord;
  std::vector<double> w(catalog.size(), 0.0);
  for (std::size_t i = 0; i < catalog.size(); ++i) {
    if (st.visit_counts[i] != 0) continue;
    const double d = haversine_km(here, catalog[i].coord);
    if (d > 0.0) w[i] = 1.0 / (d * d);
  }
  return w;
}

int depr_step(EprState& st, const LocationCatalog& catalog, const EprParams& p, rng::Engine& eng) {
  return epr_like_step(st, catalog, p, eng, [&] {
    const auto w = depr_exploration_weights(st, catalog);
    double total = 0;
    for (double v : w) total += v;
    return total > 0.0 ? static_cast<int>(rng::categorical(eng, w)) : -1;
  });
}

TimedStep dtepr_step(EprState& st, const LocationCatalog& catalog, const EprParams& p,
                     std::span<const double> dwell_dist, rng::Engine& eng) {
  if (dwell_dist.empty()) throw DataError("dtepr: empty dwell distribution");
  const int loc = depr_step(st, catalog, p, eng);
  const auto k = rng::uniform_int(eng, 0, static_cast<int>(dwell_dist.size()) - 1);
  return {loc, dwell_dist[static_cast<std::size_t>(k)]};
}

int ipt_step(int current, const Mat& transition, rng::Engine& eng) {
  if (transition.rows() != transition.cols() || current < 0 || current >= transition.rows())
    throw DataError("ipt: current location outside the transition matrix");
  const RowVec row = transition.row(current);
  if (std::abs(row.sum() - 1.0) > 1e-9 || (row.array() < 0.0).any())
    throw DataError("ipt: transition row " + std::to_string(current) + " is not a probability vector");
  std::vector<double> w(row.data(), row.data() + row.size());
  return static_cast<int>(rng::categorical(eng, w));
}

Mat ipt_transition_matrix(std::span<const Trajectory> sequences, int D) {
  Mat counts = Mat::Ones(D, D);
  for (const auto& s : sequences)
    for (std::size_t n = 1; n < s.size(); ++n) counts(s[n - 1], s[n]) += 1.0;
  for (Eigen::Index r = 0; r < D; ++r) counts.row(r) /= counts.row(r).sum();
  return counts;
}

BaselineModel fit_baseline(const std::vector<io::Record>& observations, BaselineKind kind, int vocab,
                           const EprParams& p) {
  p.validate();
  if (observations.empty()) throw DataError("baseline: empty corpus");
  if (vocab < 1) throw DataError("baseline: empty catalog");
  BaselineModel m;
  m.kind = kind;
  m.vocab = vocab;
  m.epr = p;
  std::map<std::string, std::vector<const io::Record*>> by_user;
  for (const auto& r : observations) {
    if (r.tokens.empty()) throw DataError("baseline: empty trajectory for user '" + r.user + "'");
    for (int t : r.tokens)
      if (t < 0 || t >= vocab) throw DataError("baseline: token " + std::to_string(t) + " outside the catalog");
    by_user[r.user].push_back(&r);
  }
  for (const auto& [user, recs] : by_user) {
    UserProfile u;
    u.user = user;
    u.visit_counts.assign(static_cast<std::size_t>(vocab), 0);
    u.first_location = recs.front()->tokens.front();
    std::vector<Trajectory> seqs;
    for (const auto* r : recs) {
      for (int t : r->tokens) ++u.visit_counts[static_cast<std::size_t>(t)];
      u.dwell_s.insert(u.dwell_s.end(), r->dwell_s.begin(), r->dwell_s.end());
      seqs.push_back(r->tokens);
    }
    if (kind == BaselineKind::ipt) u.transition = ipt_transition_matrix(seqs, vocab);
    m.dwell_pool.insert(m.dwell_pool.end(), u.dwell_s.begin(), u.dwell_s.end());
    m.users.push_back(std::move(u));
  }
  if (kind == BaselineKind::dtepr && m.dwell_pool.empty())
    throw DataError("dtepr needs dwell_s data in the fitting corpus");
  return m;
}

std::vector<io::Record> generate_baseline(const BaselineModel& model, const LocationCatalog& catalog, int count,
                                          int length, std::uint64_t seed) {
  if (count < 0 || length < 1) throw ConfigError("baseline: count must be >= 0 and length >= 1");
  if (static_cast<int>(catalog.size()) != model.vocab)
    throw DataError("baseline: catalog size does not match the fitted model");
  std::vector<io::Record> out;
  for (int i = 0; i < count; ++i) {
    const UserProfile& u = model.users[static_cast<std::size_t>(i) % model.users.size()];
    auto eng = rng::stream(seed, "baseline", static_cast<std::uint64_t>(i));
    io::Record rec;
    rec.user = u.user + "#" + std::to_string(i);
    const std::span<const double> dwell = u.dwell_s.empty() ? std::span<const double>(model.dwell_pool)
                                                            : std::span<const double>(u.dwell_s);
    int cur = u.first_location;
    rec.tokens.push_back(cur);
    if (model.kind == BaselineKind::dtepr)
      rec.dwell_s.push_back(dwell[static_cast<std::size_t>(rng::uniform_int(eng, 0, static_cast<int>(dwell.size()) - 1))]);
    EprState st = EprState::from_counts(u.visit_counts, cur);
    for (int n = 1; n < length; ++n) {
      switch (model.kind) {
        case BaselineKind::epr: cur = epr_step(st, catalog, model.epr, eng); break;
        case BaselineKind::depr: cur = depr_step(st, catalog, model.epr, eng); break;
        case BaselineKind::dtepr: {
          const TimedStep ts = dtepr_step(st, catalog, model.epr, dwell, eng);
          cur = ts.location;
          rec.dwell_s.push_back(ts.dwell_s);
          break;
        }
        case BaselineKind::ipt: cur = ipt_step(cur, u.transition, eng); break;
      }
      rec.tokens.push_back(cur);
    }
    out.push_back(std::move(rec));
  }
  return out;
}

}  // namespace trajdiff
