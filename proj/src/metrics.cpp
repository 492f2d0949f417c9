#include "trajdiff/metrics.hpp"

#include "trajdiff/io.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>

namespace trajdiff {

double shannon_entropy(std::span<const int> traj, std::optional<double> base) {
  if (traj.empty()) throw std::invalid_argument("entropy of an empty sequence");
  const auto counts = visit_counts(traj);
  if (counts.size() == 1) return 0.0;
  // H = ln n - sum(c ln c) / n; singletons contribute nothing to the sum
  const double n = static_cast<double>(traj.size());
  double s = 0.0;
  for (const auto& [loc, c] : counts)
    if (c > 1) s += c * std::log(static_cast<double>(c));
  double h = std::log(n) - s / n;
  if (base) h /= std::log(*base);
  return std::max(h, 0.0);
}

std::map<int, int> visit_counts(std::span<const int> traj) {
  std::map<int, int> out;
  for (int t : traj) ++out[t];
  return out;
}

std::vector<double> travel_distances(std::span<const int> traj, const LocationCatalog& catalog) {
  std::vector<double> out;
  for (int t : traj)
    if (t < 0 || t >= static_cast<int>(catalog.size()))
      throw DataError("location " + std::to_string(t) + " has no catalog coordinates");
  for (std::size_t n = 1; n < traj.size(); ++n)
    out.push_back(haversine_km(catalog[static_cast<std::size_t>(traj[n - 1])].coord,
                               catalog[static_cast<std::size_t>(traj[n])].coord));
  return out;
}

Histogram shared_histogram(std::span<const double> a, std::span<const double> b, int n_bins) {
  if (a.empty() || b.empty()) throw std::invalid_argument("histogram of an empty sample");
  if (n_bins < 1) throw std::invalid_argument("histogram needs at least one bin");
  double lo = std::min(*std::min_element(a.begin(), a.end()), *std::min_element(b.begin(), b.end()));
  double hi = std::max(*std::max_element(a.begin(), a.end()), *std::max_element(b.begin(), b.end()));
  Histogram h;
  h.lo = lo;
  h.width = hi > lo ? (hi - lo) / n_bins : 1.0;
  auto fill = [&](std::span<const double> xs) {
    std::vector<double> f(static_cast<std::size_t>(n_bins), 0.0);
    for (double x : xs) {
      auto k = static_cast<long>(std::floor((x - lo) / h.width));
      k = std::clamp<long>(k, 0, n_bins - 1);
      f[static_cast<std::size_t>(k)] += 1.0;
    }
    for (double& v : f) v /= static_cast<double>(xs.size());
    return f;
  };
  h.a = fill(a);
  h.b = fill(b);
  return h;
}

namespace {

double quantile(std::vector<double> xs, double q) {
  std::sort(xs.begin(), xs.end());
  const double pos = q * static_cast<double>(xs.size() - 1);
  const auto i = static_cast<std::size_t>(std::floor(pos));
  const double frac = pos - static_cast<double>(i);
  return i + 1 < xs.size() ? xs[i] * (1 - frac) + xs[i + 1] * frac : xs[i];
}

}  // namespace

int freedman_diaconis_bins(std::span<const double> reference, std::span<const double> other) {
  if (reference.empty()) throw std::invalid_argument("binning an empty sample");
  const std::vector<double> ref(reference.begin(), reference.end());
  const double iqr = quantile(ref, 0.75) - quantile(ref, 0.25);
  double lo = *std::min_element(ref.begin(), ref.end()), hi = *std::max_element(ref.begin(), ref.end());
  for (double x : other) {
    lo = std::min(lo, x);
    hi = std::max(hi, x);
  }
  const double n = static_cast<double>(ref.size());
  double bins;
  if (iqr > 0.0) bins = std::ceil((hi - lo) / (2.0 * iqr / std::cbrt(n)));
  else bins = std::ceil(std::sqrt(n));
  return static_cast<int>(std::clamp(bins, 1.0, 1000.0));
}

double jensen_shannon(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) throw std::invalid_argument("jensen_shannon: size mismatch");
  double js = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double m = 0.5 * (p[i] + q[i]);
    if (p[i] > 0) js += 0.5 * p[i] * std::log(p[i] / m);
    if (q[i] > 0) js += 0.5 * q[i] * std::log(q[i] / m);
  }
  return std::max(0.0, js);
}

double compare_histograms(std::span<const double> a, std::span<const double> b, int n_bins) {
  const Histogram h = shared_histogram(a, b, n_bins);
  return jensen_shannon(h.a, h.b);
}

MetricSet compute_metrics(const std::vector<Trajectory>& trajs, const LocationCatalog& catalog) {
  MetricSet m;
  for (const auto& t : trajs) {
    m.entropies.push_back(shannon_entropy(t));
    for (const auto& [loc, c] : visit_counts(t)) m.visit_counts.push_back(c);
    const auto d = travel_distances(t, catalog);
    m.distances.insert(m.distances.end(), d.begin(), d.end());
  }
  return m;
}

MetricReport evaluate(const std::vector<Trajectory>& generated, const std::vector<Trajectory>& reference,
                      const LocationCatalog& catalog) {
  if (generated.empty() || reference.empty()) throw DataError("evaluate needs nonempty corpora");
  MetricReport r;
  r.generated = compute_metrics(generated, catalog);
  r.reference = compute_metrics(reference, catalog);
  auto add = [&](const std::string& name, const std::vector<double>& g, const std::vector<double>& ref) {
    if (g.empty() || ref.empty()) {
      r.divergence[name] = 0.0;
      r.bins[name] = 0;
      return;
    }
    const int bins = freedman_diaconis_bins(ref, g);
    r.bins[name] = bins;
    r.histograms[name] = shared_histogram(g, ref, bins);
    r.divergence[name] = jensen_shannon(r.histograms[name].a, r.histograms[name].b);
  };
  add("entropy", r.generated.entropies, r.reference.entropies);
  add("visit_counts", r.generated.visit_counts, r.reference.visit_counts);
  add("distance", r.generated.distances, r.reference.distances);
  return r;
}

namespace {

nlohmann::json summary(const std::vector<double>& xs) {
  nlohmann::json j;
  j["count"] = xs.size();
  if (xs.empty()) return j;
  double s = 0;
  for (double x : xs) s += x;
  j["mean"] = s / static_cast<double>(xs.size());
  j["min"] = *std::min_element(xs.begin(), xs.end());
  j["max"] = *std::max_element(xs.begin(), xs.end());
  return j;
}

}  // namespace

std::string report_json(const MetricReport& r) {
  nlohmann::json j;
  j["divergence"] = r.divergence;
  j["bins"] = r.bins;
  for (const auto& [name, set] : {std::pair{"generated", &r.generated}, std::pair{"reference", &r.reference}}) {
    j[name]["entropy"] = summary(set->entropies);
    j[name]["visit_counts"] = summary(set->visit_counts);
    j[name]["distance_km"] = summary(set->distances);
  }
  return j.dump(2) + "\n";
}

std::string histogram_csv(const Histogram& h) {
  std::string out = "bin_lo,bin_hi,generated,reference\n";
  for (std::size_t i = 0; i < h.a.size(); ++i) {
    const double lo = h.lo + h.width * static_cast<double>(i);
    out += io::format_double(lo) + ',' + io::format_double(lo + h.width) + ',' + io::format_double(h.a[i]) + ',' +
           io::format_double(h.b[i]) + '\n';
  }
  return out;
}

Mat transition_frequencies(const std::vector<Trajectory>& trajs, int D) {
  Mat c = Mat::Zero(D, D);
  for (const auto& t : trajs)
    for (std::size_t n = 1; n < t.size(); ++n) c(t[n - 1], t[n]) += 1.0;
  for (Eigen::Index r = 0; r < D; ++r) {
    const double s = c.row(r).sum();
    if (s > 0) c.row(r) /= s;
  }
  return c;
}

}  // namespace trajdiff
