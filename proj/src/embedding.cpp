#include "trajdiff/embedding.hpp"

#include <cmath>
#include <string>
#include <vector>

namespace trajdiff {

void check_tokens(std::span<const int> tokens, Eigen::Index vocab) {
  for (std::size_t n = 0; n < tokens.size(); ++n) {
    if (tokens[n] < 0 || tokens[n] >= vocab)
      throw DataError("token " + std::to_string(tokens[n]) + " at position " + std::to_string(n) +
                      " outside [0, " + std::to_string(vocab) + ")");
  }
}

Mat embed(std::span<const int> tokens, TableRef table) {
  check_tokens(tokens, table.rows());
  Mat out(static_cast<Eigen::Index>(tokens.size()), table.cols());
  for (std::size_t n = 0; n < tokens.size(); ++n) out.row(static_cast<Eigen::Index>(n)) = table.row(tokens[n]);
  return out;
}

Mat sample_z0(std::span<const int> tokens, TableRef table, double sigma0_sq, rng::Engine& eng) {
  if (!(sigma0_sq >= 0.0)) throw std::invalid_argument("sample_z0: sigma0_sq must be >= 0");
  Mat z0 = embed(tokens, table);
  const Mat eps = rng::normal(eng, z0.rows(), z0.cols());
  z0 += std::sqrt(sigma0_sq) * eps;
  return z0;
}

Mat logits(const Mat& z0, TableRef table) {
  if (z0.cols() != table.cols()) throw std::invalid_argument("logits: embedding width mismatch");
  return z0 * table.transpose();
}

Trajectory decode(const Mat& z0, TableRef table) {
  const Mat lg = logits(z0, table);
  Trajectory out(static_cast<std::size_t>(lg.rows()));
  for (Eigen::Index n = 0; n < lg.rows(); ++n) {
    Eigen::Index best = 0;
    for (Eigen::Index d = 1; d < lg.cols(); ++d)
      if (lg(n, d) > lg(n, best)) best = d;
    out[static_cast<std::size_t>(n)] = static_cast<int>(best);
  }
  return out;
}

Trajectory decode_sampled(const Mat& z0, TableRef table, rng::Engine& eng) {
  const Mat lg = logits(z0, table);
  Trajectory out(static_cast<std::size_t>(lg.rows()));
  std::vector<double> w(static_cast<std::size_t>(lg.cols()));
  for (Eigen::Index n = 0; n < lg.rows(); ++n) {
    const double mx = lg.row(n).maxCoeff();
    for (Eigen::Index d = 0; d < lg.cols(); ++d) w[static_cast<std::size_t>(d)] = std::exp(lg(n, d) - mx);
    out[static_cast<std::size_t>(n)] = static_cast<int>(rng::categorical(eng, w));
  }
  return out;
}

double cross_entropy(std::span<const int> tokens, const Mat& z0, TableRef table) {
  const std::vector<double> ones(tokens.size(), 1.0);
  return cross_entropy(tokens, z0, table, ones, nullptr, nullptr);
}

double cross_entropy(std::span<const int> tokens, const Mat& z0, TableRef table,
                     std::span<const double> row_weights, Mat* dz0, Mat* dtable) {
  if (static_cast<Eigen::Index>(tokens.size()) != z0.rows() || row_weights.size() != tokens.size())
    throw std::invalid_argument("cross_entropy: length mismatch");
  check_tokens(tokens, table.rows());
  const Mat lg = logits(z0, table);
  double total = 0.0;
  RowVec probs(lg.cols());
  for (Eigen::Index n = 0; n < lg.rows(); ++n) {
    const double w = row_weights[static_cast<std::size_t>(n)];
    if (w == 0.0) continue;
    const double mx = lg.row(n).maxCoeff();
    probs = (lg.row(n).array() - mx).exp();
    const double z = probs.sum();
    const int y = tokens[static_cast<std::size_t>(n)];
    total += w * (std::log(z) + mx - lg(n, y));
    if (dz0 || dtable) {
      // d/dlogits = softmax - onehot
      probs /= z;
      probs(y) -= 1.0;
      probs *= w;
      if (dz0) dz0->row(n).noalias() += probs * table;
      if (dtable) dtable->noalias() += probs.transpose() * z0.row(n);
    }
  }
  return total;
}

void normalize_rows(Eigen::Ref<Mat> table) {
  for (Eigen::Index d = 0; d < table.rows(); ++d) {
    const double norm = table.row(d).norm();
    if (!(norm >= 1e-12))
      throw NumericError("normalize_rows: embedding row " + std::to_string(d) + " has zero norm");
    table.row(d) /= norm;
  }
}

Mat normalized_rows(const Mat& table) {
  Mat out = table;
  normalize_rows(out);
  return out;
}

}  // namespace trajdiff
