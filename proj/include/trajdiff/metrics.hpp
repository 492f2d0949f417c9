#pragma once

#include "trajdiff/geo.hpp"
#include "trajdiff/types.hpp"

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace trajdiff {

/// Entropy of the empirical location distribution of one sequence. Natural
/// log unless `base` is given.
double shannon_entropy(std::span<const int> traj, std::optional<double> base = std::nullopt);

std::map<int, int> visit_counts(std::span<const int> traj);

/// Haversine km between consecutive locations. Throws DataError for a token
/// without catalog coordinates.
std::vector<double> travel_distances(std::span<const int> traj, const LocationCatalog& catalog);

/// Equal-width bins over the joint range of both samples.
struct Histogram {
  double lo = 0.0;
  double width = 1.0;
  std::vector<double> a;  // normalized frequencies
  std::vector<double> b;
};

Histogram shared_histogram(std::span<const double> a, std::span<const double> b, int n_bins);

/// Freedman-Diaconis bin count of `reference` over the joint range; falls
/// back to sqrt(n) bins when the interquartile range is zero. Clamped to
/// [1, 1000].
int freedman_diaconis_bins(std::span<const double> reference, std::span<const double> other);

double jensen_shannon(std::span<const double> p, std::span<const double> q);

/// Jensen-Shannon divergence (natural log) between shared-binned histograms.
double compare_histograms(std::span<const double> a, std::span<const double> b, int n_bins);

struct MetricSet {
  std::vector<double> entropies;     // one per trajectory
  std::vector<double> visit_counts;  // one per (trajectory, unique location)
  std::vector<double> distances;     // km, one per consecutive pair
};

MetricSet compute_metrics(const std::vector<Trajectory>& trajs, const LocationCatalog& catalog);

struct MetricReport {
  MetricSet generated;
  MetricSet reference;
  std::map<std::string, double> divergence;  // entropy, visit_counts, distance
  std::map<std::string, int> bins;
  std::map<std::string, Histogram> histograms;
};

/// Per-metric JSD with Freedman-Diaconis bins on the reference corpus.
MetricReport evaluate(const std::vector<Trajectory>& generated, const std::vector<Trajectory>& reference,
                      const LocationCatalog& catalog);

std::string report_json(const MetricReport& r);
/// CSV with columns bin_lo,bin_hi,generated,reference.
std::string histogram_csv(const Histogram& h);

/// Row-normalized empirical first-order transition counts.
Mat transition_frequencies(const std::vector<Trajectory>& trajs, int D);

}  // namespace trajdiff
