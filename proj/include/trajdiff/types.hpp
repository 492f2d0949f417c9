#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace trajdiff {

/// Row-major dense matrix. Rows are sequence positions, columns are features.
using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowVec = Eigen::RowVectorXd;
using MatMap = Eigen::Map<Mat>;
using ConstMatMap = Eigen::Map<const Mat>;

/// A fixed-length sequence of location ids, each in [0, D).
using Trajectory = std::vector<int>;

/// Binary per-position mask. 1 marks a given (conditioned) position.
using Mask = std::vector<std::uint8_t>;

/// Base class for errors raised by the library. The CLI maps the concrete
/// subclasses onto exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed or missing input data (files, records, coordinates).
class DataError : public Error {
 public:
  using Error::Error;
};

/// A non-finite value or degenerate numeric state was produced.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Bad configuration or command-line usage.
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace trajdiff
