#pragma once

#include "trajdiff/types.hpp"

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace trajdiff {

/// Shape of the transformer score model. The defaults are the full-size
/// model; tests and desk-scale experiments shrink the hidden widths.
struct ArchConfig {
  int seq_len = 32;
  int embed_dim = 16;
  int vocab_size = 0;
  std::vector<int> input_hidden{256, 256};
  std::vector<int> time_hidden{256, 256};
  std::vector<int> output_hidden{512, 512};
  int time_embed_dim = 256;
  int heads = 4;
  int blocks = 1;
  int ffn_mult = 4;

  /// Throws ConfigError on inconsistent shapes.
  void validate() const;
  int input_features() const { return 3 * embed_dim + 1; }
};

struct TensorSpec {
  std::string name;
  Eigen::Index rows = 0;
  Eigen::Index cols = 0;
  std::size_t offset = 0;
};

/// Named tensors stored contiguously in one flat buffer. The same layout is
/// used for weights, gradients and optimizer moments.
class ParamSet {
 public:
  ParamSet() = default;
  explicit ParamSet(std::vector<TensorSpec> specs);

  std::size_t size() const { return data_.size(); }
  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }
  const std::vector<TensorSpec>& specs() const { return specs_; }

  MatMap tensor(std::size_t i);
  ConstMatMap tensor(std::size_t i) const;
  std::size_t index_of(std::string_view name) const;
  MatMap tensor(std::string_view name) { return tensor(index_of(name)); }
  ConstMatMap tensor(std::string_view name) const { return tensor(index_of(name)); }

  void set_zero();
  /// Same layout, all zeros.
  ParamSet zeros_like() const;
  bool same_layout(const ParamSet& other) const;

 private:
  std::vector<TensorSpec> specs_;
  // aligned so vectorized reductions over tensors do not depend on heap addresses
  std::vector<double, Eigen::aligned_allocator<double>> data_;
};

/// All trainable state of the model, including the location embedding table
/// (tensor "embedding", vocab_size x embed_dim).
struct ScoreNetParams {
  ArchConfig arch;
  ParamSet weights;

  ConstMatMap embedding() const { return weights.tensor(std::string_view{"embedding"}); }
  MatMap embedding() { return weights.tensor(std::string_view{"embedding"}); }
};

/// Tensor layout implied by an architecture, in a fixed order.
std::vector<TensorSpec> param_layout(const ArchConfig& arch);

/// Fan-in scaled normal weights, zero biases, unit LayerNorm gains, and a
/// standard normal embedding table with unit-norm rows. Deterministic in seed.
ScoreNetParams init_params(const ArchConfig& arch, std::uint64_t seed);

/// One sequence worth of score-model input.
///
/// The network enforces the masking invariants itself: rows of z_t where
/// mask == 1 and rows of emb_cond where mask == 0 are treated as zero.
struct ScoreInput {
  Mat z_t;
  Mat z_hat_prev;
  Mask mask;
  Mat emb_cond;
  int t = 1;
  /// Position indices for the sinusoidal encoding; empty means 0..N-1.
  std::vector<int> positions;
};

/// Gradients with respect to the differentiable inputs, stacked over the
/// batch (row s*N + n is position n of sequence s).
struct InputGrads {
  Mat z_t;
  Mat z_hat_prev;
  Mat emb_cond;
};

/// A forward pass over a batch of equal-length sequences that keeps the
/// activations needed for reverse-mode differentiation.
class ForwardPass {
 public:
  ForwardPass(const ScoreNetParams& params, std::span<const ScoreInput> inputs);
  ~ForwardPass();
  ForwardPass(ForwardPass&&) noexcept;
  ForwardPass& operator=(ForwardPass&&) noexcept;

  std::size_t batch() const;
  Eigen::Index seq_len() const;

  /// Stacked output, (batch * N) x P.
  const Mat& output() const;
  Mat output(std::size_t i) const;

  /// Residual stream entering the first transformer block, after the
  /// positional encoding has been added.
  const Mat& block_input() const;
  /// Residual stream leaving the last transformer block.
  const Mat& block_output() const;
  /// Stream after the time conditioning has been added (input of the
  /// output MLP).
  const Mat& time_conditioned() const;

  /// Accumulates d(loss)/d(weights) into `grads` given d(loss)/d(output).
  /// Throws NumericError on a non-finite gradient.
  InputGrads backward(const Mat& d_output, ParamSet& grads) const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

Mat forward(const ScoreNetParams& params, const ScoreInput& input);
std::vector<Mat> forward_batch(const ScoreNetParams& params, std::span<const ScoreInput> inputs);

/// Sinusoidal encodings shared by the network and its tests.
Mat positional_encoding(std::span<const int> positions, int dim);
RowVec timestep_encoding(int t, int dim);

}  // namespace trajdiff
