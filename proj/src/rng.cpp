#include "trajdiff/rng.hpp"

#include <stdexcept>

namespace trajdiff::rng {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  return h;
}

}  // namespace

std::uint64_t substream_seed(std::uint64_t root, std::string_view name, std::uint64_t i,
                             std::uint64_t j) {
  std::uint64_t h = splitmix64(root);
  h = splitmix64(h ^ fnv1a(name));
  h = splitmix64(h ^ i);
  h = splitmix64(h ^ (j * 0xD6E8FEB86659FD93ULL));
  return h;
}

void fill_normal(Engine& eng, Mat& out) {
  std::normal_distribution<double> dist(0.0, 1.0);
  double* p = out.data();
  for (Eigen::Index k = 0; k < out.size(); ++k) p[k] = dist(eng);
}

Mat normal(Engine& eng, Eigen::Index rows, Eigen::Index cols) {
  Mat out(rows, cols);
  fill_normal(eng, out);
  return out;
}

double uniform01(Engine& eng) {
  return std::uniform_real_distribution<double>(0.0, 1.0)(eng);
}

int uniform_int(Engine& eng, int lo, int hi) {
  return std::uniform_int_distribution<int>(lo, hi)(eng);
}

std::size_t categorical(Engine& eng, std::span<const double> weights) {
  double total = 0.0;
  for (double w : weights) total += w;
  if (!(total > 0.0)) throw std::invalid_argument("categorical: weights must have positive sum");
  const double r = uniform01(eng) * total;
  double acc = 0.0;
  std::size_t last_positive = 0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (weights[i] > 0.0) last_positive = i;
    acc += weights[i];
    if (r < acc) return i;
  }
  return last_positive;
}

}  // namespace trajdiff::rng
