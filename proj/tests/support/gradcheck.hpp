#pragma once

#include "trajdiff/diffusion.hpp"
#include "trajdiff/rng.hpp"
#include "trajdiff/schedules.hpp"
#include "trajdiff/score_net.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <vector>

namespace trajdiff::testing {

inline ArchConfig tiny_arch() {
  ArchConfig a;
  a.seq_len = 4;
  a.embed_dim = 4;
  a.vocab_size = 3;
  a.input_hidden = {6, 5};
  a.time_hidden = {6, 5};
  a.output_hidden = {7, 6};
  a.time_embed_dim = 8;
  a.heads = 4;
  a.blocks = 1;
  a.ffn_mult = 2;
  return a;
}

/// init_params plus a small random perturbation so gains and biases are generic.
inline ScoreNetParams perturbed_params(const ArchConfig& arch, std::uint64_t seed) {
  ScoreNetParams p = init_params(arch, seed);
  auto eng = rng::stream(seed, "perturb");
  std::normal_distribution<double> nd(0.0, 0.1);
  for (double& v : p.weights.values()) v += nd(eng);
  return p;
}

/// Scalar objective of the network output: sum(W .* out) + 0.5 |out|^2.
struct OutputObjective {
  std::vector<ScoreInput> inputs;
  Mat weights;

  double value(const ScoreNetParams& p) const {
    ForwardPass fp(p, inputs);
    return (fp.output().array() * weights.array()).sum() + 0.5 * fp.output().squaredNorm();
  }
  Mat d_output(const ScoreNetParams& p) const {
    ForwardPass fp(p, inputs);
    return weights + fp.output();
  }
};

inline OutputObjective make_output_objective(const ArchConfig& arch, std::uint64_t seed, int batch) {
  auto eng = rng::stream(seed, "objective");
  OutputObjective obj;
  const int N = arch.seq_len, P = arch.embed_dim;
  for (int b = 0; b < batch; ++b) {
    ScoreInput in;
    in.z_t = rng::normal(eng, N, P);
    in.z_hat_prev = rng::normal(eng, N, P);
    in.mask = Mask(static_cast<std::size_t>(N), 0);
    in.mask[static_cast<std::size_t>(b % N)] = 1;
    in.emb_cond = rng::normal(eng, N, P);
    in.t = 1 + 37 * b;
    obj.inputs.push_back(std::move(in));
  }
  obj.weights = rng::normal(eng, batch * N, P);
  return obj;
}

struct GroupError {
  double max_rel = 0.0;
  std::size_t coords = 0;
};

inline double rel_err(double a, double b, double floor) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

/// Central differences over every coordinate, grouped by tensor name. `grads`
/// is the analytic gradient with the same layout as p.weights.
template <class F>
std::map<std::string, GroupError> finite_difference_check(ScoreNetParams p, const ParamSet& grads, F&& f,
                                                          double h = 1e-4, double floor = 1e-6) {
  std::map<std::string, GroupError> out;
  auto vals = p.weights.values();
  for (const auto& spec : p.weights.specs()) {
    GroupError& ge = out[spec.name];
    for (std::size_t k = 0; k < static_cast<std::size_t>(spec.rows * spec.cols); ++k) {
      const std::size_t i = spec.offset + k;
      const double v = vals[i];
      vals[i] = v + h;
      const double fp = f(p);
      vals[i] = v - h;
      const double fm = f(p);
      vals[i] = v;
      const double fd = (fp - fm) / (2 * h);
      ge.max_rel = std::max(ge.max_rel, rel_err(fd, grads.values()[i], floor));
      ++ge.coords;
    }
  }
  return out;
}

/// Fixed training draws without the self-conditioning pre-pass (which is
/// stop-gradient and therefore invisible to finite differences).
inline std::vector<TrainingDraw> fixed_draws(const ArchConfig& arch, const DiffusionConfig& cfg,
                                             const NoiseSchedule& sched, std::uint64_t seed, int batch) {
  auto eng = rng::stream(seed, "draws");
  std::vector<TrainingDraw> draws;
  for (int b = 0; b < batch; ++b) {
    TrainingDraw d = draw_training(eng, arch.seq_len, arch.embed_dim, cfg, sched);
    d.self_condition = false;
    d.drop_conditioning = (b == 1);
    d.mask = Mask(static_cast<std::size_t>(arch.seq_len), 0);
    if (b != 2) d.mask[static_cast<std::size_t>(b % arch.seq_len)] = 1;
    draws.push_back(std::move(d));
  }
  return draws;
}

}  // namespace trajdiff::testing
