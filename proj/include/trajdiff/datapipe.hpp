#pragma once

#include "trajdiff/baselines.hpp"
#include "trajdiff/geo.hpp"
#include "trajdiff/io.hpp"
#include "trajdiff/types.hpp"

#include <string>
#include <vector>

namespace trajdiff {

struct Staypoint {
  std::string user;
  LatLon centroid;
  double start = 0.0;
  double end = 0.0;
};

double distance_m(LatLon a, LatLon b);

/// Windowed-centroid staypoints of one user's time-sorted points: a window
/// grows while every point stays within radius_m of the window centroid and
/// is emitted when it spans at least min_dwell_s. Throws DataError when
/// timestamps decrease.
std::vector<Staypoint> detect_staypoints(const std::vector<GnssPoint>& points, double radius_m = 100.0,
                                         double min_dwell_s = 300.0);

/// Splits a mixed file by user (sorted ids) and runs detect_staypoints on each.
std::vector<Staypoint> detect_all_staypoints(const std::vector<GnssPoint>& points, double radius_m = 100.0,
                                             double min_dwell_s = 300.0);

struct UserVisits {
  std::string user;
  std::vector<int> locations;
  std::vector<double> dwell_s;
};

struct Aggregation {
  LocationCatalog catalog;
  std::vector<UserVisits> visits;  // in first-appearance order of users
};

/// Greedy first-fit clustering: each staypoint joins the first location whose
/// running centroid lies within radius_m, else founds a new one.
Aggregation aggregate_locations(const std::vector<Staypoint>& staypoints, double radius_m = 100.0);

/// Non-overlapping consecutive windows of length N; the remainder is dropped.
std::vector<Trajectory> chunk_sequences(const std::vector<int>& visits, int N);

/// Chunked records keeping the user id, with dwell times carried along.
std::vector<io::Record> chunk_records(const std::vector<UserVisits>& visits, int N);

struct SynthConfig {
  std::uint64_t seed = 0;
  int locations = 64;  // D
  int users = 50;
  int len_per_user = 320;
  double extent_km = 20.0;
  int seq_len = 32;
  EprParams epr;
};

struct SynthCorpus {
  LocationCatalog catalog;
  std::vector<io::Record> records;  // chunked, with dwell times
};

/// Uniform locations in a square box; per-user EPR visits
/// with log-normal dwell times. Deterministic in the seed.
SynthCorpus synth_dataset(const SynthConfig& cfg);

/// Sequences from a first-order Markov chain with the given transition
/// matrix and initial distribution.
std::vector<Trajectory> markov_dataset(const Mat& transition, std::span<const double> initial, int count, int N,
                                       std::uint64_t seed);

/// Cyclic D-state chain: p_stay on the successor (s+1 mod D), the rest spread
/// uniformly over the other states.
Mat cyclic_chain(int D, double p_successor);

}  // namespace trajdiff
