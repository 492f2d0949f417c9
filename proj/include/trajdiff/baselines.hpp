#pragma once

#include "trajdiff/geo.hpp"
#include "trajdiff/io.hpp"
#include "trajdiff/rng.hpp"
#include "trajdiff/types.hpp"

#include <span>
#include <string>
#include <vector>

namespace trajdiff {

enum class BaselineKind { epr, depr, dtepr, ipt };

std::string to_string(BaselineKind k);
BaselineKind parse_baseline_kind(std::string_view s);

struct EprParams {
  double rho = 0.6;
  double gamma = 0.21;
  void validate() const;
};

struct EprState {
  std::vector<std::int64_t> visit_counts;  // one slot per catalog location
  int distinct = 0;                        // S
  int current = -1;

  /// Fresh state: one visit at `start`.
  static EprState at(int D, int start);
  /// State seeded from observed counts; `current` must have a positive count.
  static EprState from_counts(std::vector<std::int64_t> counts, int current);
  void visit(int loc);
};

/// min(1, rho * S^-gamma).
double exploration_probability(int S, const EprParams& p);

/// Exploration picks an unvisited location uniformly; return picks a visited
/// location with probability proportional to its count. With nothing left to
/// explore the step is a return.
int epr_step(EprState& st, const LocationCatalog& catalog, const EprParams& p, rng::Engine& eng);

/// Exploration weights proportional to 1/d^2 from the current location;
/// zero-distance candidates are excluded.
int depr_step(EprState& st, const LocationCatalog& catalog, const EprParams& p, rng::Engine& eng);

/// Weights dEPR exploration would use for each location (0 for excluded ones).
std::vector<double> depr_exploration_weights(const EprState& st, const LocationCatalog& catalog);

struct TimedStep {
  int location = 0;
  double dwell_s = 0.0;
};

/// dEPR movement plus a dwell drawn uniformly from the empirical multiset.
TimedStep dtepr_step(EprState& st, const LocationCatalog& catalog, const EprParams& p,
                     std::span<const double> dwell_dist, rng::Engine& eng);

/// Next location drawn from row `current`. Throws DataError when the row
/// does not sum to 1 within 1e-9.
int ipt_step(int current, const Mat& transition, rng::Engine& eng);

/// Row-stochastic matrix of observed transitions with add-one smoothing.
Mat ipt_transition_matrix(std::span<const Trajectory> sequences, int D);

struct UserProfile {
  std::string user;
  std::vector<std::int64_t> visit_counts;
  int first_location = 0;
  std::vector<double> dwell_s;
  Mat transition;  // only for ipt
};

struct BaselineModel {
  BaselineKind kind = BaselineKind::epr;
  int vocab = 0;
  EprParams epr;
  std::vector<UserProfile> users;  // sorted by user id
  std::vector<double> dwell_pool;  // every observed dwell
};

/// Groups records by user. Throws DataError on an empty corpus, a token
/// outside the catalog, or dtepr without dwell data.
BaselineModel fit_baseline(const std::vector<io::Record>& observations, BaselineKind kind, int vocab,
                           const EprParams& p = {});

/// Trajectory i uses user profile i mod U and its own substream of `seed`.
/// Each starts at the profile's first observed location.
std::vector<io::Record> generate_baseline(const BaselineModel& model, const LocationCatalog& catalog, int count,
                                          int length, std::uint64_t seed);

}  // namespace trajdiff
