#include "trajdiff/diffusion.hpp"

#include "trajdiff/embedding.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace trajdiff {

namespace {

constexpr std::size_t kSampleChunk = 128;

bool any_given(const Mask& m) {
  return std::any_of(m.begin(), m.end(), [](std::uint8_t v) { return v != 0; });
}

/// 1 for modelled rows, 0 for given rows.
std::vector<double> modelled_weights(const Mask& effective) {
  std::vector<double> w(effective.size());
  for (std::size_t n = 0; n < effective.size(); ++n) w[n] = effective[n] ? 0.0 : 1.0;
  return w;
}

Mask effective_mask(const TrainingDraw& d) {
  return d.drop_conditioning ? Mask(d.mask.size(), 0) : d.mask;
}

Eigen::VectorXd as_column(const std::vector<double>& w) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(w.size()));
  for (std::size_t i = 0; i < w.size(); ++i) v(static_cast<Eigen::Index>(i)) = w[i];
  return v;
}

double weighted_sq_norm(const Mat& r, const Eigen::VectorXd& w) {
  return (r.rowwise().squaredNorm().array() * w.array()).sum();
}

struct LossGrads {
  Mat pred_t, pred_1;  // d/d network outputs
  Mat z0, z1, emb;     // direct dependencies
  Mat table;           // cross-entropy logits path
};

LossTerms loss_terms(std::span<const int> y0, TableRef table, const Latents& lat,
                     const TrainingDraw& draw, const Mat& pred_t, const Mat& pred_1,
                     const DiffusionConfig& cfg, const NoiseSchedule& sched, LossGrads* g) {
  const Mask eff = effective_mask(draw);
  const std::vector<double> wv = modelled_weights(eff);
  const Eigen::VectorXd w = as_column(wv);
  const Eigen::Index N = lat.z0.rows(), P = lat.z0.cols();
  LossTerms terms;

  if (g) {
    g->z0 = Mat::Zero(N, P);
    g->z1 = Mat::Zero(N, P);
    g->emb = Mat::Zero(N, P);
    g->table = Mat::Zero(table.rows(), table.cols());
  }
  terms.cross_entropy =
      cross_entropy(y0, lat.z0, table, wv, g ? &g->z0 : nullptr, g ? &g->table : nullptr);

  if (cfg.parameterization == Parameterization::z0) {
    const Mat r_t = lat.z0 - pred_t;
    const Mat r_1 = lat.emb - pred_1;
    terms.recon_t = weighted_sq_norm(r_t, w);
    terms.recon_first = weighted_sq_norm(r_1, w);
    if (g) {
      const Mat wr_t = 2.0 * (r_t.array().colwise() * w.array()).matrix();
      const Mat wr_1 = 2.0 * (r_1.array().colwise() * w.array()).matrix();
      g->pred_t = -wr_t;
      g->z0 += wr_t;
      g->pred_1 = -wr_1;
      g->emb += wr_1;
    }
  } else {
    const double a = std::sqrt(sched.alpha_bar(1));
    const double c = std::sqrt(1.0 - sched.alpha_bar(1));
    const Mat r_t = draw.eps_t - pred_t;
    const Mat zhat = (lat.z_1 - c * pred_1) / a;
    const Mat r_1 = lat.emb - zhat;
    terms.recon_t = weighted_sq_norm(r_t, w);
    terms.recon_first = weighted_sq_norm(r_1, w);
    if (g) {
      const Mat wr_t = 2.0 * (r_t.array().colwise() * w.array()).matrix();
      const Mat wr_1 = 2.0 * (r_1.array().colwise() * w.array()).matrix();
      g->pred_t = -wr_t;
      // d/dzhat = -wr_1
      g->emb += wr_1;
      g->z1 += -wr_1 / a;
      g->pred_1 = (c / a) * wr_1;
    }
  }

  const double abar_T = sched.alpha_bar(sched.steps());
  terms.prior = abar_T * weighted_sq_norm(lat.z0, w);
  if (g) g->z0 += 2.0 * abar_T * (lat.z0.array().colwise() * w.array()).matrix();
  return terms;
}

ScoreInput make_input(const Mat& z, const Mat& sc, const Mask& mask, const Mat& emb_cond, int t) {
  return ScoreInput{z, sc, mask, emb_cond, t, {}};
}

/// Converts a raw network output to a clean-latent estimate.
Mat to_z0(const Mat& raw, const Mat& z, int t, Parameterization p, const NoiseSchedule& sched) {
  return p == Parameterization::z0 ? raw : zhat0_from_eps(z, raw, t, sched);
}

void overwrite_given(Mat& zhat, const Mask& mask, const Mat& emb_cond) {
  for (std::size_t n = 0; n < mask.size(); ++n)
    if (mask[n]) zhat.row(static_cast<Eigen::Index>(n)) = emb_cond.row(static_cast<Eigen::Index>(n));
}

struct PreparedBatch {
  std::vector<Latents> latents;
  std::vector<Mask> masks;  // effective
  std::vector<Mat> emb_cond;
  std::vector<Mat> sc_t, sc_1;
};

PreparedBatch prepare(const ScoreNetParams& params, std::span<const Trajectory> batch,
                      std::span<const TrainingDraw> draws, const DiffusionConfig& cfg,
                      const NoiseSchedule& sched, bool force_self_condition) {
  if (batch.size() != draws.size() || batch.empty())
    throw std::invalid_argument("batch_loss: batch and draws must be nonempty and equally long");
  const TableRef table = params.embedding();
  const std::size_t B = batch.size();
  PreparedBatch pb;
  for (std::size_t i = 0; i < B; ++i) {
    pb.latents.push_back(make_latents(batch[i], table, draws[i], sched));
    pb.masks.push_back(effective_mask(draws[i]));
    pb.emb_cond.push_back(conditioning_rows(pb.latents[i].emb, pb.masks[i]));
    pb.sc_t.push_back(Mat::Zero(pb.latents[i].z0.rows(), pb.latents[i].z0.cols()));
    pb.sc_1.push_back(pb.sc_t.back());
  }
  if (!cfg.self_conditioning) return pb;

  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < B; ++i)
    if (force_self_condition || draws[i].self_condition) idx.push_back(i);
  if (idx.empty()) return pb;

  std::vector<ScoreInput> inputs;
  for (std::size_t i : idx)
    inputs.push_back(make_input(pb.latents[i].z_t, pb.sc_t[i], pb.masks[i], pb.emb_cond[i], draws[i].t));
  for (std::size_t i : idx)
    inputs.push_back(make_input(pb.latents[i].z_1, pb.sc_1[i], pb.masks[i], pb.emb_cond[i], 1));
  const std::vector<Mat> out = forward_batch(params, inputs);
  for (std::size_t k = 0; k < idx.size(); ++k) {
    const std::size_t i = idx[k];
    pb.sc_t[i] = to_z0(out[k], pb.latents[i].z_t, draws[i].t, cfg.parameterization, sched);
    pb.sc_1[i] = to_z0(out[idx.size() + k], pb.latents[i].z_1, 1, cfg.parameterization, sched);
    overwrite_given(pb.sc_t[i], pb.masks[i], pb.emb_cond[i]);
    overwrite_given(pb.sc_1[i], pb.masks[i], pb.emb_cond[i]);
  }
  return pb;
}

std::vector<ScoreInput> main_inputs(const PreparedBatch& pb, std::span<const TrainingDraw> draws) {
  std::vector<ScoreInput> inputs;
  const std::size_t B = pb.latents.size();
  for (std::size_t i = 0; i < B; ++i)
    inputs.push_back(make_input(pb.latents[i].z_t, pb.sc_t[i], pb.masks[i], pb.emb_cond[i], draws[i].t));
  for (std::size_t i = 0; i < B; ++i)
    inputs.push_back(make_input(pb.latents[i].z_1, pb.sc_1[i], pb.masks[i], pb.emb_cond[i], 1));
  return inputs;
}

}  // namespace

std::string to_string(Parameterization p) { return p == Parameterization::z0 ? "z0" : "eps"; }

Parameterization parse_parameterization(std::string_view s) {
  if (s == "z0") return Parameterization::z0;
  if (s == "eps") return Parameterization::eps;
  throw ConfigError("unknown parameterization '" + std::string(s) + "'");
}

void DiffusionConfig::validate() const {
  auto in01 = [](double v) { return v >= 0.0 && v <= 1.0; };
  if (!in01(mask_prefix_frac) || !in01(mask_random_frac) ||
      mask_prefix_frac + mask_random_frac > 1.0)
    throw ConfigError("diffusion: mask fractions must lie in [0, 1] and sum to at most 1");
  if (!in01(p_disc)) throw ConfigError("diffusion: p_disc must lie in [0, 1]");
  if (!in01(self_cond_prob)) throw ConfigError("diffusion: self_cond_prob must lie in [0, 1]");
  if (!(guidance_w >= -1.0)) throw ConfigError("diffusion: guidance_w must be >= -1");
}

Mask make_training_mask(rng::Engine& eng, int N, double prefix_frac, double random_frac) {
  if (N < 1) throw std::invalid_argument("make_training_mask: N must be >= 1");
  const int n_prefix = static_cast<int>(std::floor(N * prefix_frac));
  const int n_random = static_cast<int>(std::floor(N * random_frac));
  Mask m(static_cast<std::size_t>(N), 0);
  std::fill(m.begin(), m.begin() + n_prefix, 1);
  std::vector<int> rest(static_cast<std::size_t>(N - n_prefix));
  std::iota(rest.begin(), rest.end(), n_prefix);
  // partial Fisher-Yates: the first n_random entries become a uniform subset
  for (int k = 0; k < n_random && k < static_cast<int>(rest.size()); ++k) {
    const int j = rng::uniform_int(eng, k, static_cast<int>(rest.size()) - 1);
    std::swap(rest[static_cast<std::size_t>(k)], rest[static_cast<std::size_t>(j)]);
    m[static_cast<std::size_t>(rest[static_cast<std::size_t>(k)])] = 1;
  }
  return m;
}

Mask prefix_mask(int N, int prefix_len) {
  if (prefix_len < 0 || prefix_len > N) throw std::invalid_argument("prefix_mask: bad prefix length");
  Mask m(static_cast<std::size_t>(N), 0);
  std::fill(m.begin(), m.begin() + prefix_len, 1);
  return m;
}

ScoreInput drop_conditioning(ScoreInput in) {
  in.emb_cond.setZero();
  std::fill(in.mask.begin(), in.mask.end(), 0);
  return in;
}

Mat cfg_combine(const Mat& pred_cond, const Mat& pred_uncond, double w) {
  if (pred_cond.rows() != pred_uncond.rows() || pred_cond.cols() != pred_uncond.cols())
    throw std::invalid_argument("cfg_combine: shape mismatch");
  return (1.0 + w) * pred_cond - w * pred_uncond;
}

Mat conditioning_rows(const Mat& emb, const Mask& mask) {
  if (static_cast<Eigen::Index>(mask.size()) != emb.rows())
    throw std::invalid_argument("conditioning_rows: mask length mismatch");
  Mat out = Mat::Zero(emb.rows(), emb.cols());
  overwrite_given(out, mask, emb);
  return out;
}

TrainingDraw draw_training(rng::Engine& eng, int N, int P, const DiffusionConfig& cfg,
                           const NoiseSchedule& sched, const Mask* mask) {
  if (sched.steps() < 2)
    throw std::invalid_argument("training objective needs a schedule with T >= 2");
  TrainingDraw d;
  d.t = rng::uniform_int(eng, 2, sched.steps());
  d.eps0 = rng::normal(eng, N, P);
  d.eps_t = rng::normal(eng, N, P);
  d.eps_1 = rng::normal(eng, N, P);
  if (mask) {
    if (static_cast<int>(mask->size()) != N) throw std::invalid_argument("draw_training: mask length");
    d.mask = *mask;
  } else {
    d.mask = make_training_mask(eng, N, cfg.mask_prefix_frac, cfg.mask_random_frac);
  }
  const double u_drop = rng::uniform01(eng);
  const double u_sc = rng::uniform01(eng);
  d.drop_conditioning = u_drop < cfg.p_disc;
  d.self_condition = cfg.self_conditioning && u_sc < cfg.self_cond_prob;
  return d;
}

Latents make_latents(std::span<const int> y0, TableRef table, const TrainingDraw& draw,
                     const NoiseSchedule& sched) {
  Latents lat;
  lat.emb = embed(y0, table);
  lat.z0 = lat.emb + std::sqrt(sched.beta(1)) * draw.eps0;
  lat.z_t = q_sample(lat.z0, draw.t, draw.eps_t, sched);
  lat.z_1 = q_sample(lat.z0, 1, draw.eps_1, sched);
  return lat;
}

LossTerms loss_from_predictions(std::span<const int> y0, TableRef table, const Latents& lat,
                                const TrainingDraw& draw, const Mat& pred_t, const Mat& pred_1,
                                const DiffusionConfig& cfg, const NoiseSchedule& sched) {
  return loss_terms(y0, table, lat, draw, pred_t, pred_1, cfg, sched, nullptr);
}

BatchLoss batch_loss(const ScoreNetParams& params, std::span<const Trajectory> batch,
                     std::span<const TrainingDraw> draws, const DiffusionConfig& cfg,
                     const NoiseSchedule& sched, ParamSet* grads) {
  const PreparedBatch pb = prepare(params, batch, draws, cfg, sched, false);
  const std::size_t B = batch.size();
  const TableRef table = params.embedding();
  const std::vector<ScoreInput> inputs = main_inputs(pb, draws);
  ForwardPass fp(params, inputs);

  const double inv_b = 1.0 / static_cast<double>(B);
  BatchLoss result;
  std::vector<LossGrads> lg(grads ? B : 0);
  for (std::size_t i = 0; i < B; ++i) {
    const LossTerms terms = loss_terms(batch[i], table, pb.latents[i], draws[i], fp.output(i),
                                       fp.output(B + i), cfg, sched, grads ? &lg[i] : nullptr);
    result.loss += inv_b * terms.total();
    result.mean_terms.cross_entropy += inv_b * terms.cross_entropy;
    result.mean_terms.recon_first += inv_b * terms.recon_first;
    result.mean_terms.recon_t += inv_b * terms.recon_t;
    result.mean_terms.prior += inv_b * terms.prior;
  }
  if (!std::isfinite(result.loss)) throw NumericError("training loss is not finite");
  if (!grads) return result;

  const Eigen::Index N = fp.seq_len();
  const Eigen::Index P = params.arch.embed_dim;
  Mat d_out(static_cast<Eigen::Index>(2 * B) * N, P);
  for (std::size_t i = 0; i < B; ++i) {
    d_out.block(static_cast<Eigen::Index>(i) * N, 0, N, P) = inv_b * lg[i].pred_t;
    d_out.block(static_cast<Eigen::Index>(B + i) * N, 0, N, P) = inv_b * lg[i].pred_1;
  }
  const InputGrads ig = fp.backward(d_out, *grads);

  MatMap d_table = grads->tensor(std::string_view{"embedding"});
  for (std::size_t i = 0; i < B; ++i) {
    const Eigen::Index rt = static_cast<Eigen::Index>(i) * N;
    const Eigen::Index r1 = static_cast<Eigen::Index>(B + i) * N;
    const double sa_t = std::sqrt(sched.alpha_bar(draws[i].t));
    const double sa_1 = std::sqrt(sched.alpha_bar(1));
    const Mat dz1 = ig.z_t.block(r1, 0, N, P) + inv_b * lg[i].z1;
    const Mat dz0 = inv_b * lg[i].z0 + sa_t * ig.z_t.block(rt, 0, N, P) + sa_1 * dz1;
    const Mat demb = inv_b * lg[i].emb + dz0 + ig.emb_cond.block(rt, 0, N, P) +
                     ig.emb_cond.block(r1, 0, N, P);
    d_table += inv_b * lg[i].table;
    for (Eigen::Index n = 0; n < N; ++n) d_table.row(batch[i][static_cast<std::size_t>(n)]) += demb.row(n);
  }
  if (!d_table.allFinite()) throw NumericError("non-finite embedding gradient");
  return result;
}

namespace {

double single_loss(const ScoreNetParams& params, const Trajectory& y0, const Mask& mask,
                   rng::Engine& eng, const NoiseSchedule& sched, const DiffusionConfig& cfg) {
  const TrainingDraw d = draw_training(eng, static_cast<int>(y0.size()), params.arch.embed_dim,
                                       cfg, sched, &mask);
  return batch_loss(params, std::span<const Trajectory>(&y0, 1), std::span<const TrainingDraw>(&d, 1),
                    cfg, sched, nullptr)
      .loss;
}

}  // namespace

double loss_z0(const ScoreNetParams& params, const Trajectory& y0, const Mask& mask,
               rng::Engine& eng, const NoiseSchedule& sched, DiffusionConfig cfg) {
  cfg.parameterization = Parameterization::z0;
  return single_loss(params, y0, mask, eng, sched, cfg);
}

double loss_eps(const ScoreNetParams& params, const Trajectory& y0, const Mask& mask,
                rng::Engine& eng, const NoiseSchedule& sched, DiffusionConfig cfg) {
  cfg.parameterization = Parameterization::eps;
  return single_loss(params, y0, mask, eng, sched, cfg);
}

double variational_objective(const ScoreNetParams& params, std::span<const Trajectory> batch,
                             std::span<const TrainingDraw> draws, const DiffusionConfig& cfg,
                             const NoiseSchedule& sched) {
  const PreparedBatch pb = prepare(params, batch, draws, cfg, sched, true);
  const std::size_t B = batch.size();
  const TableRef table = params.embedding();
  const std::vector<Mat> out = forward_batch(params, main_inputs(pb, draws));
  const double T = sched.steps();
  const double abar_T = sched.alpha_bar(sched.steps());
  double total = 0.0;
  for (std::size_t i = 0; i < B; ++i) {
    const Latents& lat = pb.latents[i];
    const int t = draws[i].t;
    const std::vector<double> wv = modelled_weights(pb.masks[i]);
    const Eigen::VectorXd w = as_column(wv);
    const Mat zhat_t = to_z0(out[i], lat.z_t, t, cfg.parameterization, sched);
    const Mat zhat_1 = to_z0(out[B + i], lat.z_1, 1, cfg.parameterization, sched);
    const double coef = sched.posterior_coef_z0(t);
    double v = cross_entropy(batch[i], lat.z0, table, wv, nullptr, nullptr);
    v += weighted_sq_norm(lat.emb - zhat_1, w);
    v += (T - 1.0) * coef * coef * weighted_sq_norm(lat.z0 - zhat_t, w);
    v += abar_T * weighted_sq_norm(lat.z0, w);
    total += v;
  }
  const double mean = total / static_cast<double>(B);
  if (!std::isfinite(mean)) throw NumericError("validation objective is not finite");
  return mean;
}

// ---------------------------------------------------------------------------
// Sampling
// ---------------------------------------------------------------------------

Denoiser network_denoiser(const ScoreNetParams& params) {
  return [&params](std::span<const ScoreInput> inputs) { return forward_batch(params, inputs); };
}

std::vector<Mat> estimate_z0(const Denoiser& denoiser, std::span<const ReverseState> states, int t,
                             const DiffusionConfig& cfg, const NoiseSchedule& sched) {
  std::vector<ScoreInput> inputs;
  inputs.reserve(states.size());
  for (const auto& s : states) {
    const Mat sc = cfg.self_conditioning ? s.z_hat_prev : Mat::Zero(s.z.rows(), s.z.cols());
    inputs.push_back(make_input(s.z, sc, s.mask, s.emb_cond, t));
  }
  std::vector<Mat> raw = denoiser(inputs);
  if (raw.size() != states.size()) throw std::logic_error("denoiser returned wrong batch size");

  if (cfg.guidance) {
    std::vector<std::size_t> guided;
    std::vector<ScoreInput> unc;
    for (std::size_t i = 0; i < states.size(); ++i) {
      if (!any_given(states[i].mask)) continue;
      guided.push_back(i);
      unc.push_back(drop_conditioning(inputs[i]));
    }
    if (!guided.empty()) {
      const std::vector<Mat> raw_u = denoiser(unc);
      for (std::size_t k = 0; k < guided.size(); ++k)
        raw[guided[k]] = cfg_combine(raw[guided[k]], raw_u[k], cfg.guidance_w);
    }
  }

  for (std::size_t i = 0; i < states.size(); ++i) {
    raw[i] = to_z0(raw[i], states[i].z, t, cfg.parameterization, sched);
    overwrite_given(raw[i], states[i].mask, states[i].emb_cond);
  }
  return raw;
}

std::vector<StepResult> reverse_step(const Denoiser& denoiser, std::span<const ReverseState> states,
                                     int t, const DiffusionConfig& cfg, const NoiseSchedule& sched,
                                     std::span<const Mat> noise) {
  if (t < 2 || t > sched.steps()) throw std::out_of_range("reverse_step: t must lie in [2, T]");
  if (noise.size() != states.size()) throw std::invalid_argument("reverse_step: one noise draw per state");
  std::vector<Mat> zhat = estimate_z0(denoiser, states, t, cfg, sched);
  const double sigma = std::sqrt(sched.beta(t));
  std::vector<StepResult> out;
  out.reserve(states.size());
  for (std::size_t i = 0; i < states.size(); ++i) {
    Mat z_prev = posterior_mean(states[i].z, zhat[i], t, sched) + sigma * noise[i];
    out.push_back({std::move(z_prev), std::move(zhat[i])});
  }
  return out;
}

StepResult reverse_step(const ScoreNetParams& params, const ReverseState& state, int t,
                        const DiffusionConfig& cfg, rng::Engine& eng, const NoiseSchedule& sched) {
  const Mat noise = rng::normal(eng, state.z.rows(), state.z.cols());
  auto out = reverse_step(network_denoiser(params), std::span<const ReverseState>(&state, 1), t, cfg,
                          sched, std::span<const Mat>(&noise, 1));
  return std::move(out[0]);
}

std::vector<Trajectory> sample(const Denoiser& denoiser, TableRef table,
                               std::span<const SampleRequest> requests, const DiffusionConfig& cfg,
                               const NoiseSchedule& sched) {
  std::vector<Trajectory> result;
  result.reserve(requests.size());
  const Eigen::Index P = table.cols();
  for (std::size_t begin = 0; begin < requests.size(); begin += kSampleChunk) {
    const std::size_t end = std::min(requests.size(), begin + kSampleChunk);
    std::vector<ReverseState> states;
    std::vector<rng::Engine> engines;
    for (std::size_t i = begin; i < end; ++i) {
      const SampleRequest& req = requests[i];
      const auto N = static_cast<Eigen::Index>(req.mask.size());
      if (N < 1) throw std::invalid_argument("sample: empty mask");
      ReverseState st;
      st.mask = req.mask;
      if (any_given(req.mask)) {
        if (static_cast<Eigen::Index>(req.seed.size()) != N)
          throw DataError("sample: seed tokens must cover every masked position");
        Trajectory filled = req.seed;
        for (std::size_t n = 0; n < filled.size(); ++n)
          if (!req.mask[n]) filled[n] = 0;
        st.emb_cond = conditioning_rows(embed(filled, table), req.mask);
      } else {
        st.emb_cond = Mat::Zero(N, P);
      }
      engines.emplace_back(req.stream);
      st.z = rng::normal(engines.back(), N, P);
      st.z_hat_prev = Mat::Zero(N, P);
      states.push_back(std::move(st));
    }

    for (int t = sched.steps(); t >= 2; --t) {
      std::vector<Mat> noise;
      noise.reserve(states.size());
      for (std::size_t k = 0; k < states.size(); ++k)
        noise.push_back(rng::normal(engines[k], states[k].z.rows(), P));
      std::vector<StepResult> step = reverse_step(denoiser, states, t, cfg, sched, noise);
      for (std::size_t k = 0; k < states.size(); ++k) {
        states[k].z = std::move(step[k].z_prev);
        states[k].z_hat_prev = std::move(step[k].z_hat0);
      }
    }
    const std::vector<Mat> zhat = estimate_z0(denoiser, states, 1, cfg, sched);
    for (std::size_t k = 0; k < states.size(); ++k) {
      Trajectory y = cfg.sample_decode ? decode_sampled(zhat[k], table, engines[k])
                                       : decode(zhat[k], table);
      const SampleRequest& req = requests[begin + k];
      for (std::size_t n = 0; n < y.size(); ++n)
        if (req.mask[n]) y[n] = req.seed[n];
      result.push_back(std::move(y));
    }
  }
  return result;
}

std::vector<Trajectory> sample(const ScoreNetParams& params,
                               std::span<const SampleRequest> requests, const DiffusionConfig& cfg,
                               const NoiseSchedule& sched) {
  return sample(network_denoiser(params), params.embedding(), requests, cfg, sched);
}

Trajectory sample(const ScoreNetParams& params, const std::optional<Trajectory>& seed_tokens,
                  const Mask& mask, const DiffusionConfig& cfg, rng::Engine& eng,
                  const NoiseSchedule& sched) {
  if (any_given(mask) && !seed_tokens) throw DataError("sample: mask has ones but no seed tokens");
  SampleRequest req{mask, seed_tokens.value_or(Trajectory{}), eng()};
  return sample(params, std::span<const SampleRequest>(&req, 1), cfg, sched).at(0);
}

std::vector<Trajectory> autoregressive_generate(const ScoreNetParams& params,
                                                std::span<const Trajectory> initial_seeds,
                                                int n_chunks, const DiffusionConfig& cfg,
                                                std::uint64_t root_seed,
                                                const NoiseSchedule& sched) {
  const int N = params.arch.seq_len;
  const int half = N / 2;
  if (n_chunks < 0) throw std::invalid_argument("autoregressive_generate: n_chunks must be >= 0");
  std::vector<Trajectory> out(initial_seeds.begin(), initial_seeds.end());
  for (const auto& s : out)
    if (static_cast<int>(s.size()) != half)
      throw DataError("autoregressive_generate: seed must hold exactly N/2 tokens");
  const Mask mask = prefix_mask(N, half);
  for (int c = 0; c < n_chunks; ++c) {
    std::vector<SampleRequest> reqs;
    reqs.reserve(out.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
      Trajectory seed(static_cast<std::size_t>(N), 0);
      std::copy(out[i].end() - half, out[i].end(), seed.begin());
      reqs.push_back({mask, std::move(seed),
                      rng::substream_seed(root_seed, "ar-chunk", i, static_cast<std::uint64_t>(c))});
    }
    const std::vector<Trajectory> gen = sample(params, reqs, cfg, sched);
    for (std::size_t i = 0; i < out.size(); ++i)
      out[i].insert(out[i].end(), gen[i].begin() + half, gen[i].end());
  }
  return out;
}

Trajectory autoregressive_generate(const ScoreNetParams& params, const Trajectory& initial_seed,
                                   int n_chunks, const DiffusionConfig& cfg, rng::Engine& eng,
                                   const NoiseSchedule& sched) {
  return autoregressive_generate(params, std::span<const Trajectory>(&initial_seed, 1), n_chunks,
                                 cfg, eng(), sched)
      .at(0);
}

Trajectory random_seed_tokens(rng::Engine& eng, int length, int vocab) {
  Trajectory t(static_cast<std::size_t>(length));
  for (auto& v : t) v = rng::uniform_int(eng, 0, vocab - 1);
  return t;
}

}  // namespace trajdiff
