#pragma once

#include "trajdiff/embedding.hpp"
#include "trajdiff/rng.hpp"
#include "trajdiff/schedules.hpp"
#include "trajdiff/score_net.hpp"
#include "trajdiff/types.hpp"

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace trajdiff {

enum class Parameterization { z0, eps };

std::string to_string(Parameterization p);
Parameterization parse_parameterization(std::string_view s);

struct DiffusionConfig {
  Parameterization parameterization = Parameterization::z0;
  bool self_conditioning = true;
  /// Probability that a training example gets a self-conditioning estimate
  /// from a gradient-free pre-pass (otherwise it sees zeros).
  double self_cond_prob = 0.5;
  /// When set, sampling always evaluates the unconditional branch and mixes
  /// with cfg_combine, even for guidance_w == 0.
  bool guidance = false;
  double guidance_w = 0.0;
  /// Probability of dropping the conditioning streams for a training example.
  double p_disc = 0.2;
  double mask_prefix_frac = 0.25;
  double mask_random_frac = 0.25;
  /// Draw tokens from the likelihood instead of taking the argmax.
  bool sample_decode = false;

  void validate() const;
};

/// Prefix of floor(N * prefix_frac) ones plus floor(N * random_frac) ones
/// spread uniformly over the remaining positions.
Mask make_training_mask(rng::Engine& eng, int N, double prefix_frac = 0.25,
                        double random_frac = 0.25);

Mask prefix_mask(int N, int prefix_len);

/// Zeroes both conditioning streams (emb_cond and mask).
ScoreInput drop_conditioning(ScoreInput in);

/// (1 + w) * cond - w * uncond.
Mat cfg_combine(const Mat& pred_cond, const Mat& pred_uncond, double w);

/// Masked-out copy of the clean embedding: rows with mask == 0 are zero.
Mat conditioning_rows(const Mat& emb, const Mask& mask);

// ---------------------------------------------------------------------------
// Training objective
// ---------------------------------------------------------------------------

/// Every random quantity one training example consumes.
struct TrainingDraw {
  int t = 2;
  Mat eps0;  // z0 noise
  Mat eps_t;
  Mat eps_1;
  Mask mask;
  bool drop_conditioning = false;
  bool self_condition = false;
};

/// Draws t ~ U{2..T}, the three noise matrices, a training mask (unless one
/// is supplied), and the conditioning-drop / self-conditioning coins.
TrainingDraw draw_training(rng::Engine& eng, int N, int P, const DiffusionConfig& cfg,
                           const NoiseSchedule& sched, const Mask* mask = nullptr);

/// Latent quantities of one example derived from a draw.
struct Latents {
  Mat emb;  // EMB(y0)
  Mat z0;
  Mat z_t;
  Mat z_1;
};

Latents make_latents(std::span<const int> y0, TableRef table, const TrainingDraw& draw,
                     const NoiseSchedule& sched);

/// Per-term values of the (negated, single-t) objective, summed over the
/// modelled (mask == 0) rows.
struct LossTerms {
  double cross_entropy = 0.0;
  double recon_first = 0.0;  // t = 1 reconstruction of EMB(y0)
  double recon_t = 0.0;      // residual at the sampled t
  double prior = 0.0;        // |sqrt(abar_T) z0|^2
  double total() const { return cross_entropy + recon_first + recon_t + prior; }
};

/// Objective from given network outputs at t and at 1. Used directly by
/// tests with oracle predictions; the training path calls it too.
LossTerms loss_from_predictions(std::span<const int> y0, TableRef table, const Latents& lat,
                                const TrainingDraw& draw, const Mat& pred_t, const Mat& pred_1,
                                const DiffusionConfig& cfg, const NoiseSchedule& sched);

struct BatchLoss {
  double loss = 0.0;  // mean over the batch
  LossTerms mean_terms;
};

/// Mean objective over a batch. When `grads` is non-null, accumulates the
/// gradient of the batch mean with respect to every parameter (embedding
/// table included).
BatchLoss batch_loss(const ScoreNetParams& params, std::span<const Trajectory> batch,
                     std::span<const TrainingDraw> draws, const DiffusionConfig& cfg,
                     const NoiseSchedule& sched, ParamSet* grads);

/// Single-example objective with the z0 parameterization. Throws
/// std::invalid_argument for T < 2.
double loss_z0(const ScoreNetParams& params, const Trajectory& y0, const Mask& mask,
               rng::Engine& eng, const NoiseSchedule& sched, DiffusionConfig cfg = {});
/// Single-example objective with the eps parameterization.
double loss_eps(const ScoreNetParams& params, const Trajectory& y0, const Mask& mask,
                rng::Engine& eng, const NoiseSchedule& sched, DiffusionConfig cfg = {});

/// Parameterization-neutral estimate of the negated variational objective:
/// cross-entropy + t=1 reconstruction + (T-1) times the posterior-mean
/// residual at the sampled t + prior term. Lower is better.
double variational_objective(const ScoreNetParams& params, std::span<const Trajectory> batch,
                             std::span<const TrainingDraw> draws, const DiffusionConfig& cfg,
                             const NoiseSchedule& sched);

// ---------------------------------------------------------------------------
// Sampling
// ---------------------------------------------------------------------------

/// Maps a batch of score inputs to raw network outputs.
using Denoiser = std::function<std::vector<Mat>(std::span<const ScoreInput>)>;

Denoiser network_denoiser(const ScoreNetParams& params);

struct ReverseState {
  Mat z;
  Mat z_hat_prev;
  Mask mask;
  Mat emb_cond;
};

struct StepResult {
  Mat z_prev;
  Mat z_hat0;
};

/// Clean-latent estimate at step t: network evaluation, parameterization
/// conversion, optional guidance, and the overwrite of given rows.
std::vector<Mat> estimate_z0(const Denoiser& denoiser, std::span<const ReverseState> states, int t,
                             const DiffusionConfig& cfg, const NoiseSchedule& sched);

/// One ancestral step from t to t-1 (2 <= t <= T) for a batch of states.
/// `noise[i]` is a standard normal draw; it is scaled by sqrt(beta_t).
std::vector<StepResult> reverse_step(const Denoiser& denoiser, std::span<const ReverseState> states,
                                     int t, const DiffusionConfig& cfg, const NoiseSchedule& sched,
                                     std::span<const Mat> noise);

StepResult reverse_step(const ScoreNetParams& params, const ReverseState& state, int t,
                        const DiffusionConfig& cfg, rng::Engine& eng, const NoiseSchedule& sched);

struct SampleRequest {
  Mask mask;             // length N; 1 marks a given position
  Trajectory seed;       // length N (entries at mask == 0 are ignored) or empty if no ones
  std::uint64_t stream;  // seed of this trajectory's random stream
};

/// Generates one trajectory per request. Given positions equal the seed.
std::vector<Trajectory> sample(const Denoiser& denoiser, TableRef table,
                               std::span<const SampleRequest> requests, const DiffusionConfig& cfg,
                               const NoiseSchedule& sched);

std::vector<Trajectory> sample(const ScoreNetParams& params,
                               std::span<const SampleRequest> requests, const DiffusionConfig& cfg,
                               const NoiseSchedule& sched);

Trajectory sample(const ScoreNetParams& params, const std::optional<Trajectory>& seed_tokens,
                  const Mask& mask, const DiffusionConfig& cfg, rng::Engine& eng,
                  const NoiseSchedule& sched);

/// Chunked generation: each round conditions on the last N/2 tokens as a
/// prefix and appends N/2 new tokens. Output length is N/2 * (n_chunks + 1).
std::vector<Trajectory> autoregressive_generate(const ScoreNetParams& params,
                                                std::span<const Trajectory> initial_seeds,
                                                int n_chunks, const DiffusionConfig& cfg,
                                                std::uint64_t root_seed,
                                                const NoiseSchedule& sched);

Trajectory autoregressive_generate(const ScoreNetParams& params, const Trajectory& initial_seed,
                                   int n_chunks, const DiffusionConfig& cfg, rng::Engine& eng,
                                   const NoiseSchedule& sched);

/// N/2 uniform random tokens, used to seed unconditional chunked generation.
Trajectory random_seed_tokens(rng::Engine& eng, int length, int vocab);

}  // namespace trajdiff
