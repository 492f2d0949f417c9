#pragma once

#include "trajdiff/types.hpp"

#include <cstdint>
#include <random>
#include <span>
#include <string_view>

namespace trajdiff::rng {

using Engine = std::mt19937_64;

/// Seed of a named substream. Every random draw in the library comes from a
/// substream of one root seed, so a run is reproducible from that seed and
/// independent streams never overlap by construction of the index tuple.
std::uint64_t substream_seed(std::uint64_t root, std::string_view name, std::uint64_t i = 0,
                             std::uint64_t j = 0);

inline Engine stream(std::uint64_t root, std::string_view name, std::uint64_t i = 0,
                     std::uint64_t j = 0) {
  return Engine{substream_seed(root, name, i, j)};
}

/// Fills `out` with i.i.d. standard normal draws in row-major order.
void fill_normal(Engine& eng, Mat& out);

Mat normal(Engine& eng, Eigen::Index rows, Eigen::Index cols);

double uniform01(Engine& eng);

/// Uniform integer in [lo, hi].
int uniform_int(Engine& eng, int lo, int hi);

/// Index drawn with probability proportional to `weights` (nonnegative,
/// positive sum).
std::size_t categorical(Engine& eng, std::span<const double> weights);

}  // namespace trajdiff::rng
