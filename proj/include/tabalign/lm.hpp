#pragma once

#include <Eigen/Dense>
#include <cstring>
#include <fstream>

#include "tabalign/common.hpp"
#include "tabalign/dataset.hpp"

namespace tabalign {

using MatrixRM = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// ---------------------------------------------------------------------------
// A small pre-norm causal transformer over the tabular vocabulary. Parameters
// live in one flat vector so optimizer steps, snapshots, checkpoints and
// finite-difference checks all operate on plain contiguous storage. Gradients
// are exact hand-derived reverse-mode adjoints.

struct ModelConfig {
  int vocab_size = 0;
  int d_model = 48;
  int n_layers = 2;
  int n_heads = 3;
  int ff_mult = 2;
  int context_limit = 96;
  double init_std = 0.02;
  int bos_id = -1;
  int eos_id = -1;

  int d_ff() const { return d_model * ff_mult; }

  void validate() const {
    if (vocab_size <= 0) throw ConfigError("model: vocab_size must be positive");
    if (d_model <= 0 || n_layers <= 0 || n_heads <= 0 || ff_mult <= 0)
      throw ConfigError("model: dimensions must be positive");
    if (d_model % n_heads != 0)
      throw ConfigError("model: d_model must be divisible by n_heads");
    if (context_limit < 3) throw ConfigError("model: context_limit too small");
  }

  bool operator==(const ModelConfig&) const = default;
};

namespace lmdetail {

// Offsets of every tensor inside the flat parameter vector.
struct Layout {
  int V, D, F, C, H, L;
  size_t tok_emb, pos_emb;
  struct Layer {
    size_t ln1_g, ln1_b;
    size_t wq, bq, wk, bk, wv, bv, wo, bo;
    size_t ln2_g, ln2_b;
    size_t w1, b1, w2, b2;
  };
  std::vector<Layer> layers;
  size_t lnf_g, lnf_b;
  size_t w_out, b_out;
  size_t total;

  explicit Layout(const ModelConfig& cfg)
      : V(cfg.vocab_size),
        D(cfg.d_model),
        F(cfg.d_ff()),
        C(cfg.context_limit),
        H(cfg.n_heads),
        L(cfg.n_layers) {
    size_t off = 0;
    auto take = [&off](size_t n) {
      const size_t at = off;
      off += n;
      return at;
    };
    tok_emb = take(static_cast<size_t>(V) * D);
    pos_emb = take(static_cast<size_t>(C) * D);
    layers.resize(static_cast<size_t>(L));
    for (auto& l : layers) {
      l.ln1_g = take(D);
      l.ln1_b = take(D);
      l.wq = take(static_cast<size_t>(D) * D);
      l.bq = take(D);
      l.wk = take(static_cast<size_t>(D) * D);
      l.bk = take(D);
      l.wv = take(static_cast<size_t>(D) * D);
      l.bv = take(D);
      l.wo = take(static_cast<size_t>(D) * D);
      l.bo = take(D);
      l.ln2_g = take(D);
      l.ln2_b = take(D);
      l.w1 = take(static_cast<size_t>(D) * F);
      l.b1 = take(F);
      l.w2 = take(static_cast<size_t>(F) * D);
      l.b2 = take(D);
    }
    lnf_g = take(D);
    lnf_b = take(D);
    w_out = take(static_cast<size_t>(D) * V);
    b_out = take(V);
    total = off;
  }
};

constexpr double kLnEps = 1e-5;

inline double gelu(double x) {
  return 0.5 * x * (1.0 + std::erf(x * M_SQRT1_2));
}

inline double gelu_grad(double x) {
  return 0.5 * (1.0 + std::erf(x * M_SQRT1_2)) +
         x * std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI);
}

struct LayerNormCache {
  MatrixRM xhat;           // normalized input
  Eigen::VectorXd inv_std; // per row
};

inline MatrixRM layer_norm_fwd(const MatrixRM& x, const double* gamma,
                               const double* beta, int D, LayerNormCache& cache) {
  const Eigen::Index T = x.rows();
  cache.xhat.resize(T, D);
  cache.inv_std.resize(T);
  MatrixRM out(T, D);
  for (Eigen::Index i = 0; i < T; ++i) {
    const double mu = x.row(i).mean();
    const double var = (x.row(i).array() - mu).square().mean();
    const double inv = 1.0 / std::sqrt(var + kLnEps);
    cache.inv_std(i) = inv;
    for (int j = 0; j < D; ++j) {
      const double xh = (x(i, j) - mu) * inv;
      cache.xhat(i, j) = xh;
      out(i, j) = gamma[j] * xh + beta[j];
    }
  }
  return out;
}

inline MatrixRM layer_norm_bwd(const MatrixRM& dout, const LayerNormCache& cache,
                               const double* gamma, int D, double* dgamma,
                               double* dbeta) {
  const Eigen::Index T = dout.rows();
  MatrixRM dx(T, D);
  for (Eigen::Index i = 0; i < T; ++i) {
    double mean_dxhat = 0.0, mean_dxhat_xhat = 0.0;
    for (int j = 0; j < D; ++j) {
      const double dy = dout(i, j);
      dgamma[j] += dy * cache.xhat(i, j);
      dbeta[j] += dy;
      const double dxhat = dy * gamma[j];
      mean_dxhat += dxhat;
      mean_dxhat_xhat += dxhat * cache.xhat(i, j);
    }
    mean_dxhat /= D;
    mean_dxhat_xhat /= D;
    for (int j = 0; j < D; ++j) {
      const double dxhat = dout(i, j) * gamma[j];
      dx(i, j) =
          cache.inv_std(i) * (dxhat - mean_dxhat - cache.xhat(i, j) * mean_dxhat_xhat);
    }
  }
  return dx;
}

struct LayerCache {
  MatrixRM x_in;
  LayerNormCache ln1;
  MatrixRM n1, q, k, v;
  std::vector<MatrixRM> att;  // per head, row-softmax probabilities (causal)
  MatrixRM concat;            // attention output before the output projection
  MatrixRM x_mid;
  LayerNormCache ln2;
  MatrixRM n2, h_pre, h_act;
};

struct ForwardCache {
  std::vector<int> inputs;   // ids[0..L-2]
  MatrixRM x0;               // embedding + positional
  std::vector<LayerCache> layers;
  MatrixRM x_final;
  LayerNormCache lnf;
  MatrixRM logits;           // [T, V]
};

// Forward pass over the first (len-1) tokens of `ids`, producing next-token
// logits at each input position.
inline void forward(const ModelConfig& cfg, const Layout& ly, const double* p,
                    std::span<const int> inputs, ForwardCache& cache) {
  const int D = ly.D, H = ly.H, F = ly.F, V = ly.V;
  const int dh = D / H;
  const Eigen::Index T = static_cast<Eigen::Index>(inputs.size());
  if (T <= 0) throw DataError("lm: sequence has no predictable tokens");
  if (T > cfg.context_limit) throw DataError("lm: sequence too long");

  cache.inputs.assign(inputs.begin(), inputs.end());
  cache.x0.resize(T, D);
  for (Eigen::Index t = 0; t < T; ++t) {
    const int tok = inputs[static_cast<size_t>(t)];
    if (tok < 0 || tok >= V) throw DataError("lm: token id out of range");
    for (int j = 0; j < D; ++j)
      cache.x0(t, j) = p[ly.tok_emb + static_cast<size_t>(tok) * D + j] +
                       p[ly.pos_emb + static_cast<size_t>(t) * D + j];
  }

  cache.layers.resize(static_cast<size_t>(ly.L));
  MatrixRM x = cache.x0;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  for (int l = 0; l < ly.L; ++l) {
    LayerCache& lc = cache.layers[static_cast<size_t>(l)];
    const Layout::Layer& lw = ly.layers[static_cast<size_t>(l)];
    lc.x_in = x;
    lc.n1 = layer_norm_fwd(x, p + lw.ln1_g, p + lw.ln1_b, D, lc.ln1);

    Eigen::Map<const MatrixRM> Wq(p + lw.wq, D, D), Wk(p + lw.wk, D, D),
        Wv(p + lw.wv, D, D), Wo(p + lw.wo, D, D);
    Eigen::Map<const Eigen::RowVectorXd> bq(p + lw.bq, D), bk(p + lw.bk, D),
        bv(p + lw.bv, D), bo(p + lw.bo, D);

    lc.q = (lc.n1 * Wq).rowwise() + bq;
    lc.k = (lc.n1 * Wk).rowwise() + bk;
    lc.v = (lc.n1 * Wv).rowwise() + bv;

    lc.att.assign(static_cast<size_t>(H), MatrixRM::Zero(T, T));
    lc.concat.resize(T, D);
    for (int h = 0; h < H; ++h) {
      auto Qh = lc.q.middleCols(h * dh, dh);
      auto Kh = lc.k.middleCols(h * dh, dh);
      auto Vh = lc.v.middleCols(h * dh, dh);
      MatrixRM& P = lc.att[static_cast<size_t>(h)];
      for (Eigen::Index i = 0; i < T; ++i) {
        double mx = -std::numeric_limits<double>::infinity();
        for (Eigen::Index j = 0; j <= i; ++j) {
          const double s = Qh.row(i).dot(Kh.row(j)) * scale;
          P(i, j) = s;
          mx = std::max(mx, s);
        }
        double z = 0.0;
        for (Eigen::Index j = 0; j <= i; ++j) {
          P(i, j) = std::exp(P(i, j) - mx);
          z += P(i, j);
        }
        for (Eigen::Index j = 0; j <= i; ++j) P(i, j) /= z;
      }
      lc.concat.middleCols(h * dh, dh) = P * Vh;
    }

    lc.x_mid = lc.x_in + ((lc.concat * Wo).rowwise() + bo);

    lc.n2 = layer_norm_fwd(lc.x_mid, p + lw.ln2_g, p + lw.ln2_b, D, lc.ln2);
    Eigen::Map<const MatrixRM> W1(p + lw.w1, D, F), W2(p + lw.w2, F, D);
    Eigen::Map<const Eigen::RowVectorXd> b1(p + lw.b1, F), b2(p + lw.b2, D);
    lc.h_pre = (lc.n2 * W1).rowwise() + b1;
    lc.h_act = lc.h_pre.unaryExpr([](double v) { return gelu(v); });
    x = lc.x_mid + ((lc.h_act * W2).rowwise() + b2);
  }

  cache.x_final = x;
  MatrixRM nf = layer_norm_fwd(x, p + ly.lnf_g, p + ly.lnf_b, D, cache.lnf);
  Eigen::Map<const MatrixRM> Wout(p + ly.w_out, D, V);
  Eigen::Map<const Eigen::RowVectorXd> bout(p + ly.b_out, V);
  cache.logits = (nf * Wout).rowwise() + bout;
}

// Reverse pass: accumulates weight * d(scalar)/d(params) into `grad` given
// d(scalar)/d(logits).
inline void backward(const ModelConfig&, const Layout& ly, const double* p,
                     const ForwardCache& cache, const MatrixRM& dlogits,
                     double weight, double* grad) {
  const int D = ly.D, H = ly.H, F = ly.F, V = ly.V;
  const int dh = D / H;
  const Eigen::Index T = cache.logits.rows();
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  MatrixRM dl = weight * dlogits;

  // Output head.
  Eigen::Map<const MatrixRM> Wout(p + ly.w_out, D, V);
  {
    Eigen::Map<MatrixRM> dWout(grad + ly.w_out, D, V);
    Eigen::Map<Eigen::RowVectorXd> dbout(grad + ly.b_out, V);
    MatrixRM nf(T, D);
    for (Eigen::Index i = 0; i < T; ++i)
      for (int j = 0; j < D; ++j)
        nf(i, j) = p[ly.lnf_g + static_cast<size_t>(j)] * cache.lnf.xhat(i, j) +
                   p[ly.lnf_b + static_cast<size_t>(j)];
    dWout.noalias() += nf.transpose() * dl;
    dbout += dl.colwise().sum();
  }
  MatrixRM dnf = dl * Wout.transpose();
  MatrixRM dx = layer_norm_bwd(dnf, cache.lnf, p + ly.lnf_g, D, grad + ly.lnf_g,
                               grad + ly.lnf_b);

  for (int l = ly.L - 1; l >= 0; --l) {
    const LayerCache& lc = cache.layers[static_cast<size_t>(l)];
    const Layout::Layer& lw = ly.layers[static_cast<size_t>(l)];
    Eigen::Map<const MatrixRM> Wq(p + lw.wq, D, D), Wk(p + lw.wk, D, D),
        Wv(p + lw.wv, D, D), Wo(p + lw.wo, D, D);
    Eigen::Map<const MatrixRM> W1(p + lw.w1, D, F), W2(p + lw.w2, F, D);

    // Feed-forward block.
    MatrixRM dff_out = dx;  // gradient of x_out w.r.t. the FF residual branch
    {
      Eigen::Map<MatrixRM> dW2(grad + lw.w2, F, D);
      Eigen::Map<Eigen::RowVectorXd> db2(grad + lw.b2, D);
      dW2.noalias() += lc.h_act.transpose() * dff_out;
      db2 += dff_out.colwise().sum();
    }
    MatrixRM dh_act = dff_out * W2.transpose();
    MatrixRM dh_pre =
        dh_act.binaryExpr(lc.h_pre, [](double g, double x) { return g * gelu_grad(x); });
    {
      Eigen::Map<MatrixRM> dW1(grad + lw.w1, D, F);
      Eigen::Map<Eigen::RowVectorXd> db1(grad + lw.b1, F);
      dW1.noalias() += lc.n2.transpose() * dh_pre;
      db1 += dh_pre.colwise().sum();
    }
    MatrixRM dn2 = dh_pre * W1.transpose();
    MatrixRM dx_mid =
        dx + layer_norm_bwd(dn2, lc.ln2, p + lw.ln2_g, D, grad + lw.ln2_g,
                            grad + lw.ln2_b);

    // Attention block.
    MatrixRM datt_out = dx_mid;  // gradient w.r.t. the attention residual branch
    {
      Eigen::Map<MatrixRM> dWo(grad + lw.wo, D, D);
      Eigen::Map<Eigen::RowVectorXd> dbo(grad + lw.bo, D);
      dWo.noalias() += lc.concat.transpose() * datt_out;
      dbo += datt_out.colwise().sum();
    }
    MatrixRM dconcat = datt_out * Wo.transpose();

    MatrixRM dq = MatrixRM::Zero(T, D), dk = MatrixRM::Zero(T, D),
             dv = MatrixRM::Zero(T, D);
    for (int h = 0; h < H; ++h) {
      auto Qh = lc.q.middleCols(h * dh, dh);
      auto Kh = lc.k.middleCols(h * dh, dh);
      auto Vh = lc.v.middleCols(h * dh, dh);
      auto dOh = dconcat.middleCols(h * dh, dh);
      const MatrixRM& P = lc.att[static_cast<size_t>(h)];

      // dV += P^T dO  (lower-triangular P)
      dv.middleCols(h * dh, dh).noalias() += P.transpose() * dOh;
      // dP = dO V^T, then softmax backward row-wise within the causal prefix.
      MatrixRM dP = dOh * Vh.transpose();
      for (Eigen::Index i = 0; i < T; ++i) {
        double dot = 0.0;
        for (Eigen::Index j = 0; j <= i; ++j) dot += dP(i, j) * P(i, j);
        for (Eigen::Index j = 0; j <= i; ++j) {
          const double ds = P(i, j) * (dP(i, j) - dot) * scale;
          dq.row(i).middleCols(h * dh, dh) += ds * Kh.row(j);
          dk.row(j).middleCols(h * dh, dh) += ds * Qh.row(i);
        }
      }
    }

    {
      Eigen::Map<MatrixRM> dWq(grad + lw.wq, D, D), dWk(grad + lw.wk, D, D),
          dWv(grad + lw.wv, D, D);
      Eigen::Map<Eigen::RowVectorXd> dbq(grad + lw.bq, D), dbk(grad + lw.bk, D),
          dbv(grad + lw.bv, D);
      dWq.noalias() += lc.n1.transpose() * dq;
      dWk.noalias() += lc.n1.transpose() * dk;
      dWv.noalias() += lc.n1.transpose() * dv;
      dbq += dq.colwise().sum();
      dbk += dk.colwise().sum();
      dbv += dv.colwise().sum();
    }
    MatrixRM dn1 = dq * Wq.transpose() + dk * Wk.transpose() + dv * Wv.transpose();
    dx = dx_mid + layer_norm_bwd(dn1, lc.ln1, p + lw.ln1_g, D, grad + lw.ln1_g,
                                 grad + lw.ln1_b);
  }

  // Embedding and positional tables.
  for (Eigen::Index t = 0; t < T; ++t) {
    const int tok = cache.inputs[static_cast<size_t>(t)];
    for (int j = 0; j < D; ++j) {
      grad[ly.tok_emb + static_cast<size_t>(tok) * D + j] += dx(t, j);
      grad[ly.pos_emb + static_cast<size_t>(t) * D + j] += dx(t, j);
    }
  }
}

inline Eigen::RowVectorXd log_softmax_row(const Eigen::RowVectorXd& z) {
  const double mx = z.maxCoeff();
  const double lse = mx + std::log((z.array() - mx).exp().sum());
  return z.array() - lse;
}

}  // namespace lmdetail

// ---------------------------------------------------------------------------

struct PolicyModel {
  ModelConfig config;
  std::vector<double> params;

  size_t param_count() const { return params.size(); }
};

struct ReferenceSnapshot {
  ModelConfig config;
  std::vector<double> params;
};

struct GradientVector {
  std::vector<double> values;

  size_t size() const { return values.size(); }
};

inline size_t param_count(const ModelConfig& cfg) {
  return lmdetail::Layout(cfg).total;
}

inline PolicyModel init_model(const ModelConfig& cfg, uint64_t seed) {
  cfg.validate();
  lmdetail::Layout ly(cfg);
  PolicyModel m;
  m.config = cfg;
  m.params.assign(ly.total, 0.0);
  Rng rng(derive_seed(seed, "model-init"));
  for (auto& v : m.params) v = rng.normal(0.0, cfg.init_std);
  // Layer-norm gains start at 1, shifts at 0.
  auto set_ln = [&m](size_t g, size_t b, int d) {
    for (int j = 0; j < d; ++j) {
      m.params[g + static_cast<size_t>(j)] = 1.0;
      m.params[b + static_cast<size_t>(j)] = 0.0;
    }
  };
  for (const auto& l : ly.layers) {
    set_ln(l.ln1_g, l.ln1_b, ly.D);
    set_ln(l.ln2_g, l.ln2_b, ly.D);
    for (int j = 0; j < ly.D; ++j) {
      m.params[l.bq + static_cast<size_t>(j)] = 0.0;
      m.params[l.bk + static_cast<size_t>(j)] = 0.0;
      m.params[l.bv + static_cast<size_t>(j)] = 0.0;
      m.params[l.bo + static_cast<size_t>(j)] = 0.0;
      m.params[l.b2 + static_cast<size_t>(j)] = 0.0;
    }
    for (int j = 0; j < ly.F; ++j) m.params[l.b1 + static_cast<size_t>(j)] = 0.0;
  }
  set_ln(ly.lnf_g, ly.lnf_b, ly.D);
  for (int j = 0; j < ly.V; ++j) m.params[ly.b_out + static_cast<size_t>(j)] = 0.0;
  return m;
}

namespace lmdetail {

inline double log_prob_impl(const ModelConfig& cfg, const double* params,
                            const TokenSequence& seq, ForwardCache* cache_out) {
  if (seq.ids.size() < 2) throw DataError("lm: sequence too short");
  if (static_cast<int>(seq.ids.size()) > cfg.context_limit + 1)
    throw DataError("lm: sequence too long");
  Layout ly(cfg);
  ForwardCache local;
  ForwardCache& cache = cache_out ? *cache_out : local;
  forward(cfg, ly, params, std::span<const int>(seq.ids.data(), seq.ids.size() - 1),
          cache);
  double lp = 0.0;
  for (Eigen::Index t = 0; t < cache.logits.rows(); ++t) {
    const Eigen::RowVectorXd ls = log_softmax_row(cache.logits.row(t));
    lp += ls(seq.ids[static_cast<size_t>(t) + 1]);
  }
  return lp;
}

}  // namespace lmdetail

/// Exact sequence log-probability in nats, summed over all tokens after BOS
/// (EOS included when present).
inline double log_prob(const PolicyModel& m, const TokenSequence& seq) {
  return lmdetail::log_prob_impl(m.config, m.params.data(), seq, nullptr);
}

inline double log_prob(const ReferenceSnapshot& m, const TokenSequence& seq) {
  return lmdetail::log_prob_impl(m.config, m.params.data(), seq, nullptr);
}

/// Per-position conditional log-probs log p(token_{t+1} | tokens_{<=t}) from a
/// single forward pass; sums to log_prob(m, seq).
inline std::vector<double> conditional_log_probs(const PolicyModel& m,
                                                 const TokenSequence& seq) {
  lmdetail::ForwardCache cache;
  lmdetail::log_prob_impl(m.config, m.params.data(), seq, &cache);
  std::vector<double> out;
  out.reserve(static_cast<size_t>(cache.logits.rows()));
  for (Eigen::Index t = 0; t < cache.logits.rows(); ++t) {
    const Eigen::RowVectorXd ls = lmdetail::log_softmax_row(cache.logits.row(t));
    out.push_back(ls(seq.ids[static_cast<size_t>(t) + 1]));
  }
  return out;
}

/// Accumulates weight * d log_prob / d params into grad; returns log_prob.
inline double accumulate_log_prob_grad(const PolicyModel& m, const TokenSequence& seq,
                                       double weight, GradientVector& grad) {
  lmdetail::Layout ly(m.config);
  if (grad.values.size() != ly.total) grad.values.assign(ly.total, 0.0);
  lmdetail::ForwardCache cache;
  const double lp = lmdetail::log_prob_impl(m.config, m.params.data(), seq, &cache);

  const Eigen::Index T = cache.logits.rows();
  MatrixRM dlogits(T, m.config.vocab_size);
  for (Eigen::Index t = 0; t < T; ++t) {
    const Eigen::RowVectorXd ls = lmdetail::log_softmax_row(cache.logits.row(t));
    dlogits.row(t) = -ls.array().exp();
    dlogits(t, seq.ids[static_cast<size_t>(t) + 1]) += 1.0;
  }
  lmdetail::backward(m.config, ly, m.params.data(), cache, dlogits, weight,
                     grad.values.data());
  return lp;
}

inline std::pair<double, GradientVector> log_prob_grad(const PolicyModel& m,
                                                       const TokenSequence& seq) {
  GradientVector g;
  const double lp = accumulate_log_prob_grad(m, seq, 1.0, g);
  if (!all_finite(g.values)) throw TrainingError("lm: non-finite gradient");
  return {lp, std::move(g)};
}

/// Next-token logits after the given prefix. Stepwise path used by sampling
/// and by conditional-probability oracles.
inline Eigen::RowVectorXd next_token_logits(const PolicyModel& m,
                                            std::span<const int> prefix) {
  lmdetail::Layout ly(m.config);
  lmdetail::ForwardCache cache;
  lmdetail::forward(m.config, ly, m.params.data(), prefix, cache);
  return cache.logits.row(cache.logits.rows() - 1);
}

/// Ancestral sampling from BOS; stops after EOS or at max_len tokens.
inline TokenSequence sample(const PolicyModel& m, uint64_t seed, int max_len,
                            double temperature) {
  if (temperature <= 0.0) throw DataError("sample: temperature must be positive");
  if (m.config.bos_id < 0 || m.config.eos_id < 0)
    throw DataError("sample: model has no BOS/EOS ids configured");
  const int cap = std::min(max_len, m.config.context_limit);
  Rng rng(derive_seed(seed, "sample"));
  TokenSequence seq;
  seq.ids.push_back(m.config.bos_id);
  while (static_cast<int>(seq.ids.size()) < cap) {
    const Eigen::RowVectorXd logits =
        next_token_logits(m, std::span<const int>(seq.ids.data(), seq.ids.size()));
    const double mx = logits.maxCoeff();
    Eigen::VectorXd probs =
        ((logits.array() - mx) / temperature).exp().transpose();
    probs /= probs.sum();
    const double u = rng.uniform();
    double acc = 0.0;
    int pick = m.config.vocab_size - 1;
    for (int v = 0; v < m.config.vocab_size; ++v) {
      acc += probs(v);
      if (u < acc) {
        pick = v;
        break;
      }
    }
    seq.ids.push_back(pick);
    if (pick == m.config.eos_id) break;
  }
  return seq;
}

// ---------------------------------------------------------------------------
// AdamW with decoupled weight decay and bias correction.

struct AdamState {
  std::vector<double> m, v;
  int64_t step = 0;
};

inline void adamw_step(PolicyModel& model, const GradientVector& grad,
                       AdamState& state, double lr, double weight_decay,
                       double beta1 = 0.9, double beta2 = 0.999,
                       double eps = 1e-8) {
  if (grad.values.size() != model.params.size())
    throw TrainingError("adamw: gradient length mismatch");
  if (!all_finite(grad.values))
    throw TrainingError("adamw: non-finite gradient, update refused");
  if (state.m.size() != model.params.size()) {
    state.m.assign(model.params.size(), 0.0);
    state.v.assign(model.params.size(), 0.0);
    state.step = 0;
  }
  ++state.step;
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(state.step));
  for (size_t i = 0; i < model.params.size(); ++i) {
    const double g = grad.values[i];
    state.m[i] = beta1 * state.m[i] + (1.0 - beta1) * g;
    state.v[i] = beta2 * state.v[i] + (1.0 - beta2) * g * g;
    const double mhat = state.m[i] / bc1;
    const double vhat = state.v[i] / bc2;
    model.params[i] -=
        lr * (mhat / (std::sqrt(vhat) + eps) + weight_decay * model.params[i]);
  }
}

// ---------------------------------------------------------------------------
// Checkpoints: small versioned binary container with the config and the flat
// parameter vector; loading reproduces parameters bit for bit.

inline constexpr char kCkptMagic[8] = {'T', 'A', 'L', 'M', 'C', 'K', 'P', '1'};

inline void save_checkpoint(const PolicyModel& m, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("checkpoint: cannot write '" + path + "'");
  out.write(kCkptMagic, sizeof kCkptMagic);
  auto put_i64 = [&out](int64_t v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof v);
  };
  auto put_f64 = [&out](double v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof v);
  };
  put_i64(m.config.vocab_size);
  put_i64(m.config.d_model);
  put_i64(m.config.n_layers);
  put_i64(m.config.n_heads);
  put_i64(m.config.ff_mult);
  put_i64(m.config.context_limit);
  put_f64(m.config.init_std);
  put_i64(m.config.bos_id);
  put_i64(m.config.eos_id);
  put_i64(static_cast<int64_t>(m.params.size()));
  out.write(reinterpret_cast<const char*>(m.params.data()),
            static_cast<std::streamsize>(m.params.size() * sizeof(double)));
  if (!out) throw DataError("checkpoint: write failed for '" + path + "'");
}

inline PolicyModel load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("checkpoint: cannot open '" + path + "'");
  char magic[8];
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kCkptMagic, sizeof magic) != 0)
    throw DataError("checkpoint: bad magic in '" + path + "'");
  auto get_i64 = [&in]() {
    int64_t v;
    in.read(reinterpret_cast<char*>(&v), sizeof v);
    return v;
  };
  auto get_f64 = [&in]() {
    double v;
    in.read(reinterpret_cast<char*>(&v), sizeof v);
    return v;
  };
  PolicyModel m;
  m.config.vocab_size = static_cast<int>(get_i64());
  m.config.d_model = static_cast<int>(get_i64());
  m.config.n_layers = static_cast<int>(get_i64());
  m.config.n_heads = static_cast<int>(get_i64());
  m.config.ff_mult = static_cast<int>(get_i64());
  m.config.context_limit = static_cast<int>(get_i64());
  m.config.init_std = get_f64();
  m.config.bos_id = static_cast<int>(get_i64());
  m.config.eos_id = static_cast<int>(get_i64());
  const int64_t n = get_i64();
  if (!in || n < 0) throw DataError("checkpoint: truncated header in '" + path + "'");
  m.params.resize(static_cast<size_t>(n));
  in.read(reinterpret_cast<char*>(m.params.data()),
          static_cast<std::streamsize>(m.params.size() * sizeof(double)));
  if (!in) throw DataError("checkpoint: truncated params in '" + path + "'");
  m.config.validate();
  if (m.params.size() != param_count(m.config))
    throw DataError("checkpoint: parameter count does not match config");
  return m;
}

}  // namespace tabalign
