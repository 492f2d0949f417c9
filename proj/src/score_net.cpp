#include "trajdiff/score_net.hpp"

#include "trajdiff/embedding.hpp"
#include "trajdiff/rng.hpp"

#include <cmath>
#include <numeric>

namespace trajdiff {

// ---------------------------------------------------------------------------
// ArchConfig / ParamSet
// ---------------------------------------------------------------------------

void ArchConfig::validate() const {
  auto fail = [](const std::string& m) { throw ConfigError("model: " + m); };
  if (seq_len < 1) fail("seq_len must be >= 1");
  if (embed_dim < 1) fail("embed_dim must be >= 1");
  if (vocab_size < 1) fail("vocab_size must be >= 1");
  if (heads < 1 || embed_dim % heads != 0) fail("embed_dim must be divisible by heads");
  if (blocks < 0) fail("blocks must be >= 0");
  if (ffn_mult < 1) fail("ffn_mult must be >= 1");
  if (time_embed_dim < 2 || time_embed_dim % 2 != 0) fail("time_embed_dim must be even and >= 2");
  if (time_hidden.empty()) fail("time_hidden needs at least one layer");
  for (const auto* widths : {&input_hidden, &time_hidden, &output_hidden})
    for (int w : *widths)
      if (w < 1) fail("hidden widths must be positive");
}

ParamSet::ParamSet(std::vector<TensorSpec> specs) : specs_(std::move(specs)) {
  std::size_t offset = 0;
  for (auto& s : specs_) {
    s.offset = offset;
    offset += static_cast<std::size_t>(s.rows * s.cols);
  }
  data_.assign(offset, 0.0);
}

MatMap ParamSet::tensor(std::size_t i) {
  const auto& s = specs_.at(i);
  return MatMap(data_.data() + s.offset, s.rows, s.cols);
}

ConstMatMap ParamSet::tensor(std::size_t i) const {
  const auto& s = specs_.at(i);
  return ConstMatMap(data_.data() + s.offset, s.rows, s.cols);
}

std::size_t ParamSet::index_of(std::string_view name) const {
  for (std::size_t i = 0; i < specs_.size(); ++i)
    if (specs_[i].name == name) return i;
  throw std::out_of_range("no tensor named '" + std::string(name) + "'");
}

void ParamSet::set_zero() { std::fill(data_.begin(), data_.end(), 0.0); }

ParamSet ParamSet::zeros_like() const { return ParamSet(specs_); }

bool ParamSet::same_layout(const ParamSet& other) const {
  if (specs_.size() != other.specs_.size()) return false;
  for (std::size_t i = 0; i < specs_.size(); ++i) {
    const auto& a = specs_[i];
    const auto& b = other.specs_[i];
    if (a.name != b.name || a.rows != b.rows || a.cols != b.cols) return false;
  }
  return true;
}

// ---------------------------------------------------------------------------
// Layout
// ---------------------------------------------------------------------------

namespace {

struct LinearRef {
  std::size_t w = 0;
  std::size_t b = 0;
};

struct LayerNormRef {
  std::size_t gain = 0;
  std::size_t bias = 0;
};

struct BlockRef {
  LayerNormRef ln1;
  LinearRef q, k, v, o;
  LayerNormRef ln2;
  std::vector<LinearRef> ffn;
};

struct Layout {
  std::size_t embedding = 0;
  std::vector<LinearRef> input;
  std::vector<BlockRef> blocks;
  std::vector<LinearRef> time;
  LinearRef time_proj;
  std::vector<LinearRef> output;
};

class LayoutBuilder {
 public:
  std::size_t add(std::string name, Eigen::Index rows, Eigen::Index cols) {
    specs_.push_back({std::move(name), rows, cols, 0});
    return specs_.size() - 1;
  }
  LinearRef linear(const std::string& name, int in, int out) {
    return {add(name + ".w", in, out), add(name + ".b", 1, out)};
  }
  LayerNormRef layer_norm(const std::string& name, int dim) {
    return {add(name + ".g", 1, dim), add(name + ".b", 1, dim)};
  }
  std::vector<LinearRef> mlp(const std::string& name, int in, const std::vector<int>& widths) {
    std::vector<LinearRef> out;
    for (std::size_t l = 0; l < widths.size(); ++l) {
      out.push_back(linear(name + "." + std::to_string(l), in, widths[l]));
      in = widths[l];
    }
    return out;
  }
  std::vector<TensorSpec> take() { return std::move(specs_); }

 private:
  std::vector<TensorSpec> specs_;
};

Layout build_layout(const ArchConfig& arch, std::vector<TensorSpec>* specs) {
  arch.validate();
  const int P = arch.embed_dim;
  LayoutBuilder lb;
  Layout lay;
  lay.embedding = lb.add("embedding", arch.vocab_size, P);

  std::vector<int> in_widths = arch.input_hidden;
  in_widths.push_back(P);
  lay.input = lb.mlp("in", arch.input_features(), in_widths);

  for (int b = 0; b < arch.blocks; ++b) {
    const std::string n = "block" + std::to_string(b);
    BlockRef br;
    br.ln1 = lb.layer_norm(n + ".ln1", P);
    br.q = lb.linear(n + ".attn.q", P, P);
    br.k = lb.linear(n + ".attn.k", P, P);
    br.v = lb.linear(n + ".attn.v", P, P);
    br.o = lb.linear(n + ".attn.o", P, P);
    br.ln2 = lb.layer_norm(n + ".ln2", P);
    br.ffn = lb.mlp(n + ".ffn", P, {arch.ffn_mult * P, P});
    lay.blocks.push_back(std::move(br));
  }

  lay.time = lb.mlp("time", arch.time_embed_dim, arch.time_hidden);
  lay.time_proj = lb.linear("time_proj", arch.time_hidden.back(), P);

  std::vector<int> out_widths = arch.output_hidden;
  out_widths.push_back(P);
  lay.output = lb.mlp("out", P, out_widths);

  if (specs) *specs = lb.take();
  return lay;
}

// ---------------------------------------------------------------------------
// Layer primitives
// ---------------------------------------------------------------------------

constexpr double kLayerNormEps = 1e-5;

void check_finite(const Mat& m, const std::string& layer) {
  if (!m.allFinite()) throw NumericError("score network: non-finite values in layer '" + layer + "'");
}

Mat silu(const Mat& a) {
  return (a.array() / (1.0 + (-a.array()).exp())).matrix();
}

Mat silu_grad(const Mat& a) {
  const Eigen::ArrayXXd s = 1.0 / (1.0 + (-a.array()).exp());
  return (s * (1.0 + a.array() * (1.0 - s))).matrix();
}

Mat linear_forward(const ParamSet& ps, const LinearRef& l, const Mat& x) {
  Mat y = x * ps.tensor(l.w);
  y.rowwise() += ps.tensor(l.b).row(0);
  return y;
}

/// Returns dx; accumulates dW, db.
Mat linear_backward(const ParamSet& ps, const LinearRef& l, const Mat& x, const Mat& dy,
                    ParamSet& g) {
  g.tensor(l.w).noalias() += x.transpose() * dy;
  g.tensor(l.b).row(0) += dy.colwise().sum();
  return dy * ps.tensor(l.w).transpose();
}

struct MlpCache {
  std::vector<Mat> inputs;
  std::vector<Mat> pre;
};

Mat mlp_forward(const ParamSet& ps, const std::vector<LinearRef>& layers, Mat x,
                bool activate_last, MlpCache& cache, const std::string& name) {
  cache.inputs.clear();
  cache.pre.clear();
  for (std::size_t l = 0; l < layers.size(); ++l) {
    Mat a = linear_forward(ps, layers[l], x);
    check_finite(a, name + "." + std::to_string(l));
    cache.inputs.push_back(std::move(x));
    const bool act = activate_last || l + 1 < layers.size();
    x = act ? silu(a) : a;
    cache.pre.push_back(std::move(a));
  }
  return x;
}

Mat mlp_backward(const ParamSet& ps, const std::vector<LinearRef>& layers, const MlpCache& cache,
                 Mat d, bool activate_last, ParamSet& g) {
  for (std::size_t li = layers.size(); li-- > 0;) {
    const bool act = activate_last || li + 1 < layers.size();
    if (act) d = (d.array() * silu_grad(cache.pre[li]).array()).matrix();
    d = linear_backward(ps, layers[li], cache.inputs[li], d, g);
  }
  return d;
}

struct LayerNormCache {
  Mat xhat;
  Eigen::VectorXd rstd;
};

Mat layer_norm_forward(const ParamSet& ps, const LayerNormRef& ln, const Mat& x,
                       LayerNormCache& cache) {
  const Eigen::Index F = x.cols();
  cache.xhat.resize(x.rows(), F);
  cache.rstd.resize(x.rows());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const double mean = x.row(r).mean();
    const double var = (x.row(r).array() - mean).square().sum() / static_cast<double>(F);
    const double rstd = 1.0 / std::sqrt(var + kLayerNormEps);
    cache.rstd(r) = rstd;
    cache.xhat.row(r) = (x.row(r).array() - mean) * rstd;
  }
  Mat y = (cache.xhat.array().rowwise() * ps.tensor(ln.gain).row(0).array()).matrix();
  y.rowwise() += ps.tensor(ln.bias).row(0);
  return y;
}

Mat layer_norm_backward(const ParamSet& ps, const LayerNormRef& ln, const LayerNormCache& cache,
                        const Mat& dy, ParamSet& g) {
  const auto gain = ps.tensor(ln.gain).row(0);
  g.tensor(ln.gain).row(0) += (dy.array() * cache.xhat.array()).matrix().colwise().sum();
  g.tensor(ln.bias).row(0) += dy.colwise().sum();
  const Mat dxhat = (dy.array().rowwise() * gain.array()).matrix();
  const double F = static_cast<double>(dy.cols());
  Mat dx(dy.rows(), dy.cols());
  for (Eigen::Index r = 0; r < dy.rows(); ++r) {
    const double sum_d = dxhat.row(r).sum();
    const double sum_dx = dxhat.row(r).dot(cache.xhat.row(r));
    dx.row(r) = (cache.rstd(r) / F) *
                (F * dxhat.row(r).array() - sum_d - cache.xhat.row(r).array() * sum_dx);
  }
  return dx;
}

struct AttentionCache {
  Mat x;  // normalized input
  Mat q, k, v;
  std::vector<Mat> probs;  // one N x N matrix per (sequence, head)
  Mat concat;
};

struct BlockCache {
  LayerNormCache ln1;
  AttentionCache attn;
  LayerNormCache ln2;
  Mat ffn_in;
  MlpCache ffn;
};

Mat attention_forward(const ParamSet& ps, const BlockRef& br, Mat x, std::size_t batch,
                      Eigen::Index N, int heads, AttentionCache& c, const std::string& name) {
  const Eigen::Index P = x.cols();
  const Eigen::Index dh = P / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  c.q = linear_forward(ps, br.q, x);
  c.k = linear_forward(ps, br.k, x);
  c.v = linear_forward(ps, br.v, x);
  c.x = std::move(x);
  c.concat.resize(c.q.rows(), P);
  c.probs.assign(batch * static_cast<std::size_t>(heads), Mat());
  for (std::size_t s = 0; s < batch; ++s) {
    const Eigen::Index r0 = static_cast<Eigen::Index>(s) * N;
    for (int h = 0; h < heads; ++h) {
      const Eigen::Index c0 = h * dh;
      Mat scores = scale * c.q.block(r0, c0, N, dh) * c.k.block(r0, c0, N, dh).transpose();
      for (Eigen::Index i = 0; i < N; ++i) {
        const double mx = scores.row(i).maxCoeff();
        scores.row(i) = (scores.row(i).array() - mx).exp();
        scores.row(i) /= scores.row(i).sum();
      }
      c.concat.block(r0, c0, N, dh).noalias() = scores * c.v.block(r0, c0, N, dh);
      c.probs[s * static_cast<std::size_t>(heads) + static_cast<std::size_t>(h)] = std::move(scores);
    }
  }
  Mat out = linear_forward(ps, br.o, c.concat);
  check_finite(out, name + ".attn");
  return out;
}

Mat attention_backward(const ParamSet& ps, const BlockRef& br, const AttentionCache& c,
                       std::size_t batch, Eigen::Index N, int heads, const Mat& dout, ParamSet& g) {
  const Eigen::Index P = c.x.cols();
  const Eigen::Index dh = P / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  const Mat dconcat = linear_backward(ps, br.o, c.concat, dout, g);
  Mat dq(c.q.rows(), P), dk(c.k.rows(), P), dv(c.v.rows(), P);
  for (std::size_t s = 0; s < batch; ++s) {
    const Eigen::Index r0 = static_cast<Eigen::Index>(s) * N;
    for (int h = 0; h < heads; ++h) {
      const Eigen::Index c0 = h * dh;
      const Mat& A = c.probs[s * static_cast<std::size_t>(heads) + static_cast<std::size_t>(h)];
      const auto dO = dconcat.block(r0, c0, N, dh);
      const Mat dA = dO * c.v.block(r0, c0, N, dh).transpose();
      dv.block(r0, c0, N, dh).noalias() = A.transpose() * dO;
      // softmax backward, row by row
      Mat dS = A.array() * (dA.array().colwise() - (dA.array() * A.array()).rowwise().sum());
      dS *= scale;
      dq.block(r0, c0, N, dh).noalias() = dS * c.k.block(r0, c0, N, dh);
      dk.block(r0, c0, N, dh).noalias() = dS.transpose() * c.q.block(r0, c0, N, dh);
    }
  }
  Mat dx = linear_backward(ps, br.q, c.x, dq, g);
  dx += linear_backward(ps, br.k, c.x, dk, g);
  dx += linear_backward(ps, br.v, c.x, dv, g);
  return dx;
}

}  // namespace

std::vector<TensorSpec> param_layout(const ArchConfig& arch) {
  std::vector<TensorSpec> specs;
  build_layout(arch, &specs);
  return ParamSet(std::move(specs)).specs();
}

ScoreNetParams init_params(const ArchConfig& arch, std::uint64_t seed) {
  ScoreNetParams p{arch, ParamSet(param_layout(arch))};
  auto eng = rng::stream(seed, "init");
  for (std::size_t i = 0; i < p.weights.specs().size(); ++i) {
    const auto& spec = p.weights.specs()[i];
    auto t = p.weights.tensor(i);
    const std::string_view name = spec.name;
    if (name == "embedding") {
      Mat e = rng::normal(eng, spec.rows, spec.cols);
      normalize_rows(e);
      t = e;
    } else if (name.ends_with(".w")) {
      Mat w = rng::normal(eng, spec.rows, spec.cols);
      t = w / std::sqrt(static_cast<double>(spec.rows));
    } else if (name.ends_with(".g")) {
      t.setOnes();
    } else {
      t.setZero();
    }
  }
  return p;
}

// ---------------------------------------------------------------------------
// Encodings
// ---------------------------------------------------------------------------

Mat positional_encoding(std::span<const int> positions, int dim) {
  Mat pe(static_cast<Eigen::Index>(positions.size()), dim);
  for (std::size_t n = 0; n < positions.size(); ++n) {
    for (int i = 0; i < dim; i += 2) {
      const double angle = positions[n] / std::pow(10000.0, static_cast<double>(i) / dim);
      pe(static_cast<Eigen::Index>(n), i) = std::sin(angle);
      if (i + 1 < dim) pe(static_cast<Eigen::Index>(n), i + 1) = std::cos(angle);
    }
  }
  return pe;
}

RowVec timestep_encoding(int t, int dim) {
  const int half = dim / 2;
  RowVec enc = RowVec::Zero(dim);
  for (int k = 0; k < half; ++k) {
    const double freq = std::exp(-std::log(10000.0) * k / half);
    enc(k) = std::sin(t * freq);
    enc(half + k) = std::cos(t * freq);
  }
  return enc;
}

// ---------------------------------------------------------------------------
// ForwardPass
// ---------------------------------------------------------------------------

struct ForwardPass::Impl {
  const ScoreNetParams* params = nullptr;
  Layout layout;
  std::size_t batch = 0;
  Eigen::Index N = 0;
  Eigen::Index P = 0;
  Eigen::VectorXd given;  // stacked mask, 1 where the position is conditioned

  MlpCache input_mlp;
  Mat block_in;
  std::vector<Mat> block_inputs;
  std::vector<BlockCache> blocks;
  Mat block_out;
  MlpCache time_mlp;
  Mat time_features;
  Mat conditioned;
  MlpCache output_mlp;
  Mat out;
};

ForwardPass::~ForwardPass() = default;
ForwardPass::ForwardPass(ForwardPass&&) noexcept = default;
ForwardPass& ForwardPass::operator=(ForwardPass&&) noexcept = default;

ForwardPass::ForwardPass(const ScoreNetParams& params, std::span<const ScoreInput> inputs)
    : impl_(std::make_unique<Impl>()) {
  Impl& m = *impl_;
  const ArchConfig& arch = params.arch;
  m.params = &params;
  std::vector<TensorSpec> specs;
  m.layout = build_layout(arch, &specs);
  const auto& have = params.weights.specs();
  bool match = have.size() == specs.size();
  for (std::size_t i = 0; match && i < specs.size(); ++i)
    match = have[i].name == specs[i].name && have[i].rows == specs[i].rows && have[i].cols == specs[i].cols;
  if (!match) throw std::invalid_argument("score network: parameter layout does not match architecture");
  if (inputs.empty()) throw std::invalid_argument("score network: empty batch");
  m.batch = inputs.size();
  m.N = inputs[0].z_t.rows();
  m.P = arch.embed_dim;
  const Eigen::Index N = m.N, P = m.P;
  const ParamSet& ps = params.weights;

  const Eigen::Index rows = static_cast<Eigen::Index>(m.batch) * N;
  Mat x0(rows, arch.input_features());
  Mat pos(rows, P);
  m.given.resize(rows);
  for (std::size_t s = 0; s < m.batch; ++s) {
    const ScoreInput& in = inputs[s];
    if (in.z_t.rows() != N || in.z_t.cols() != P || in.z_hat_prev.rows() != N ||
        in.z_hat_prev.cols() != P || in.emb_cond.rows() != N || in.emb_cond.cols() != P ||
        static_cast<Eigen::Index>(in.mask.size()) != N)
      throw std::invalid_argument("score network: malformed input shapes");
    const Eigen::Index r0 = static_cast<Eigen::Index>(s) * N;
    for (Eigen::Index n = 0; n < N; ++n) {
      const bool g = in.mask[static_cast<std::size_t>(n)] != 0;
      m.given(r0 + n) = g ? 1.0 : 0.0;
      auto row = x0.row(r0 + n);
      if (g) row.segment(0, P).setZero(); else row.segment(0, P) = in.z_t.row(n);
      row.segment(P, P) = in.z_hat_prev.row(n);
      row(2 * P) = g ? 1.0 : 0.0;
      if (g) row.segment(2 * P + 1, P) = in.emb_cond.row(n); else row.segment(2 * P + 1, P).setZero();
    }
    std::vector<int> positions = in.positions;
    if (positions.empty()) {
      positions.resize(static_cast<std::size_t>(N));
      std::iota(positions.begin(), positions.end(), 0);
    } else if (static_cast<Eigen::Index>(positions.size()) != N) {
      throw std::invalid_argument("score network: positions length mismatch");
    }
    pos.block(r0, 0, N, P) = positional_encoding(positions, static_cast<int>(P));
  }
  check_finite(x0, "input");

  Mat h = mlp_forward(ps, m.layout.input, std::move(x0), false, m.input_mlp, "in");
  h += pos;
  m.block_in = h;

  m.blocks.resize(m.layout.blocks.size());
  m.block_inputs.resize(m.layout.blocks.size());
  for (std::size_t b = 0; b < m.layout.blocks.size(); ++b) {
    const BlockRef& br = m.layout.blocks[b];
    BlockCache& bc = m.blocks[b];
    const std::string name = "block" + std::to_string(b);
    m.block_inputs[b] = h;
    Mat a = layer_norm_forward(ps, br.ln1, h, bc.ln1);
    h += attention_forward(ps, br, std::move(a), m.batch, N, arch.heads, bc.attn, name);
    bc.ffn_in = layer_norm_forward(ps, br.ln2, h, bc.ln2);
    h += mlp_forward(ps, br.ffn, bc.ffn_in, false, bc.ffn, name + ".ffn");
    check_finite(h, name);
  }
  m.block_out = h;

  Mat temb(static_cast<Eigen::Index>(m.batch), arch.time_embed_dim);
  for (std::size_t s = 0; s < m.batch; ++s)
    temb.row(static_cast<Eigen::Index>(s)) = timestep_encoding(inputs[s].t, arch.time_embed_dim);
  m.time_features = mlp_forward(ps, m.layout.time, std::move(temb), true, m.time_mlp, "time");
  const Mat tcond = linear_forward(ps, m.layout.time_proj, m.time_features);
  check_finite(tcond, "time_proj");
  for (std::size_t s = 0; s < m.batch; ++s)
    h.block(static_cast<Eigen::Index>(s) * N, 0, N, P).rowwise() += tcond.row(static_cast<Eigen::Index>(s));
  m.conditioned = h;

  m.out = mlp_forward(ps, m.layout.output, std::move(h), false, m.output_mlp, "out");
}

std::size_t ForwardPass::batch() const { return impl_->batch; }
Eigen::Index ForwardPass::seq_len() const { return impl_->N; }
const Mat& ForwardPass::output() const { return impl_->out; }
const Mat& ForwardPass::block_input() const { return impl_->block_in; }
const Mat& ForwardPass::block_output() const { return impl_->block_out; }
const Mat& ForwardPass::time_conditioned() const { return impl_->conditioned; }

Mat ForwardPass::output(std::size_t i) const {
  return impl_->out.block(static_cast<Eigen::Index>(i) * impl_->N, 0, impl_->N, impl_->P);
}

InputGrads ForwardPass::backward(const Mat& d_output, ParamSet& grads) const {
  const Impl& m = *impl_;
  const ParamSet& ps = m.params->weights;
  const Eigen::Index N = m.N, P = m.P;
  if (d_output.rows() != m.out.rows() || d_output.cols() != m.out.cols())
    throw std::invalid_argument("backward: gradient shape mismatch");
  if (!grads.same_layout(ps)) throw std::invalid_argument("backward: gradient layout mismatch");

  Mat dh = mlp_backward(ps, m.layout.output, m.output_mlp, d_output, false, grads);

  Mat dtime(static_cast<Eigen::Index>(m.batch), P);
  for (std::size_t s = 0; s < m.batch; ++s)
    dtime.row(static_cast<Eigen::Index>(s)) =
        dh.block(static_cast<Eigen::Index>(s) * N, 0, N, P).colwise().sum();
  const Mat dfeat = linear_backward(ps, m.layout.time_proj, m.time_features, dtime, grads);
  mlp_backward(ps, m.layout.time, m.time_mlp, dfeat, true, grads);

  for (std::size_t b = m.layout.blocks.size(); b-- > 0;) {
    const BlockRef& br = m.layout.blocks[b];
    const BlockCache& bc = m.blocks[b];
    const Mat dffn = mlp_backward(ps, br.ffn, bc.ffn, dh, false, grads);
    dh += layer_norm_backward(ps, br.ln2, bc.ln2, dffn, grads);
    const Mat dattn =
        attention_backward(ps, br, bc.attn, m.batch, N, m.params->arch.heads, dh, grads);
    dh += layer_norm_backward(ps, br.ln1, bc.ln1, dattn, grads);
  }

  const Mat dx0 = mlp_backward(ps, m.layout.input, m.input_mlp, dh, false, grads);

  InputGrads out;
  const Eigen::VectorXd free_rows = 1.0 - m.given.array();
  out.z_t = dx0.leftCols(P).array().colwise() * free_rows.array();
  out.z_hat_prev = dx0.middleCols(P, P);
  out.emb_cond = dx0.rightCols(P).array().colwise() * m.given.array();

  for (double v : grads.values())
    if (!std::isfinite(v)) throw NumericError("score network: non-finite gradient");
  return out;
}

Mat forward(const ScoreNetParams& params, const ScoreInput& input) {
  return ForwardPass(params, std::span<const ScoreInput>(&input, 1)).output(0);
}

std::vector<Mat> forward_batch(const ScoreNetParams& params, std::span<const ScoreInput> inputs) {
  ForwardPass fp(params, inputs);
  std::vector<Mat> out;
  out.reserve(inputs.size());
  for (std::size_t i = 0; i < inputs.size(); ++i) out.push_back(fp.output(i));
  return out;
}

}  // namespace trajdiff
