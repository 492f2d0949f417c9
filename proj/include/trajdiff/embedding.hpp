#pragma once

#include "trajdiff/rng.hpp"
#include "trajdiff/types.hpp"

#include <span>

namespace trajdiff {

/// Read-only view of a D x P embedding table (one row per location).
using TableRef = Eigen::Ref<const Mat>;

/// Throws DataError if any token lies outside [0, vocab).
void check_tokens(std::span<const int> tokens, Eigen::Index vocab);

/// Row n of the result is row tokens[n] of the table.
Mat embed(std::span<const int> tokens, TableRef table);

/// Draws z0 ~ N(embed(tokens), sigma0_sq I).
Mat sample_z0(std::span<const int> tokens, TableRef table, double sigma0_sq, rng::Engine& eng);

/// logits(n, d) = <z0 row n, table row d>.
Mat logits(const Mat& z0, TableRef table);

/// Per-row argmax of the logits; ties go to the smallest index.
Trajectory decode(const Mat& z0, TableRef table);

/// Per-row draw from softmax(logits).
Trajectory decode_sampled(const Mat& z0, TableRef table, rng::Engine& eng);

/// Sum over rows of -log softmax(logits row n)[tokens[n]], computed with a
/// log-sum-exp shift.
double cross_entropy(std::span<const int> tokens, const Mat& z0, TableRef table);

/// Cross-entropy restricted to rows with weight 1 (weights in {0, 1}).
/// Accumulates d/dz0 into `dz0` and d/dtable into `dtable` when non-null.
double cross_entropy(std::span<const int> tokens, const Mat& z0, TableRef table,
                     std::span<const double> row_weights, Mat* dz0, Mat* dtable);

/// Scales every row to unit L2 norm. Throws NumericError on a row with norm
/// below 1e-12.
void normalize_rows(Eigen::Ref<Mat> table);
Mat normalized_rows(const Mat& table);

}  // namespace trajdiff
