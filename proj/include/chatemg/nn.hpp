// Shared transformer building blocks with hand-written backward passes:
// layer normalization, tanh-approximation GELU, multi-head self-attention
// (causal or full), pre-LN residual blocks, inverted dropout, and Adam.
// Everything is templated on the scalar so gradient checks run at 64-bit.
#pragma once

#include <cmath>
#include <optional>
#include <vector>

#include "chatemg/core.hpp"
#include "chatemg/rng.hpp"

namespace chatemg::nn {

template <class S>
constexpr S kLnEps = static_cast<S>(1e-5);

// Parameter-naming convention shared by the initializers: "..._g" are
// layer-norm gains (init 1), "..._b"/".b"/".b_*" are biases (init 0),
// everything else is a weight (init N(0, 0.02^2)).
inline bool is_gain_name(const std::string& name) { return name.ends_with("_g"); }
inline bool is_bias_name(const std::string& name) {
  return name.ends_with("_b") || name.ends_with(".b") || name.find(".b_") != std::string::npos;
}

// ---------------------------------------------------------------------------
// GELU (tanh approximation)
// ---------------------------------------------------------------------------
template <class S>
S gelu(S x) {
  const S c = static_cast<S>(0.7978845608028654);  // sqrt(2/pi)
  const S a = static_cast<S>(0.044715);
  S u = c * (x + a * x * x * x);
  return static_cast<S>(0.5) * x * (static_cast<S>(1) + std::tanh(u));
}

template <class S>
S gelu_grad(S x) {
  const S c = static_cast<S>(0.7978845608028654);
  const S a = static_cast<S>(0.044715);
  S u = c * (x + a * x * x * x);
  S t = std::tanh(u);
  S du = c * (static_cast<S>(1) + static_cast<S>(3) * a * x * x);
  return static_cast<S>(0.5) * (static_cast<S>(1) + t) +
         static_cast<S>(0.5) * x * (static_cast<S>(1) - t * t) * du;
}

template <class S>
void gelu_inplace(Mat<S>& m) {
  S* p = m.data();
  for (Eigen::Index i = 0; i < m.size(); ++i) p[i] = gelu(p[i]);
}

// ---------------------------------------------------------------------------
// Layer normalization over each row
// ---------------------------------------------------------------------------
template <class S>
struct LnCache {
  Mat<S> x_hat;     // N x d, normalized input
  Vec<S> inv_std;   // N
};

template <class S>
Mat<S> layernorm_forward(const Mat<S>& x, const Mat<S>& gain, const Mat<S>& bias,
                         LnCache<S>* cache) {
  const Eigen::Index n = x.rows(), d = x.cols();
  Mat<S> out(n, d);
  if (cache) {
    cache->x_hat.resize(n, d);
    cache->inv_std.resize(n);
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    S mu = x.row(i).mean();
    S var = (x.row(i).array() - mu).square().mean();
    S inv = static_cast<S>(1) / std::sqrt(var + kLnEps<S>);
    auto x_hat = ((x.row(i).array() - mu) * inv).matrix();
    out.row(i) = (x_hat.array() * gain.array()).matrix() + bias;
    if (cache) {
      cache->x_hat.row(i) = x_hat;
      cache->inv_std(i) = inv;
    }
  }
  return out;
}

// Returns dx; accumulates parameter grads.
template <class S>
Mat<S> layernorm_backward(const Mat<S>& dout, const LnCache<S>& cache, const Mat<S>& gain,
                          Mat<S>& dgain, Mat<S>& dbias) {
  const Eigen::Index n = dout.rows(), d = dout.cols();
  Mat<S> dx(n, d);
  for (Eigen::Index i = 0; i < n; ++i) {
    dgain += (dout.row(i).array() * cache.x_hat.row(i).array()).matrix();
    dbias += dout.row(i);
    auto dxhat = (dout.row(i).array() * gain.array()).matrix().eval();
    S mean_dxhat = dxhat.mean();
    S mean_dxhat_xhat = (dxhat.array() * cache.x_hat.row(i).array()).mean();
    dx.row(i) = (cache.inv_std(i) *
                 (dxhat.array() - mean_dxhat - cache.x_hat.row(i).array() * mean_dxhat_xhat))
                    .matrix();
  }
  return dx;
}

// ---------------------------------------------------------------------------
// Inverted dropout
// ---------------------------------------------------------------------------
template <class S>
void dropout_forward(Mat<S>& x, S p, RngEngine& rng, Mat<S>& mask) {
  mask.resize(x.rows(), x.cols());
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const S keep_inv = static_cast<S>(1) / (static_cast<S>(1) - p);
  S* mp = mask.data();
  S* xp = x.data();
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    mp[i] = unit(rng) < static_cast<double>(p) ? S(0) : keep_inv;
    xp[i] *= mp[i];
  }
}

// ---------------------------------------------------------------------------
// Multi-head self-attention on stacked sequences. Rows are n_seqs blocks of
// seq_len; qkv holds [Q | K | V] each of width d.
// ---------------------------------------------------------------------------
template <class S>
struct AttentionCache {
  std::vector<Mat<S>> probs;  // n_seqs * n_heads entries, each seq_len x seq_len
};

template <class S>
Mat<S> attention_forward(const Mat<S>& qkv, int n_seqs, int seq_len, int n_heads, bool causal,
                         AttentionCache<S>* cache) {
  const int d = static_cast<int>(qkv.cols()) / 3;
  const int hd = d / n_heads;
  const S scale = static_cast<S>(1) / std::sqrt(static_cast<S>(hd));
  Mat<S> ctx(qkv.rows(), d);
  if (cache) cache->probs.assign(static_cast<std::size_t>(n_seqs) * n_heads, Mat<S>());

  Mat<S> scores(seq_len, seq_len);
  for (int s = 0; s < n_seqs; ++s) {
    const Eigen::Index row0 = static_cast<Eigen::Index>(s) * seq_len;
    for (int h = 0; h < n_heads; ++h) {
      auto q = qkv.block(row0, h * hd, seq_len, hd);
      auto k = qkv.block(row0, d + h * hd, seq_len, hd);
      auto v = qkv.block(row0, 2 * d + h * hd, seq_len, hd);
      scores.noalias() = q * k.transpose();
      scores *= scale;
      for (int i = 0; i < seq_len; ++i) {
        const int width = causal ? i + 1 : seq_len;
        auto row = scores.row(i).head(width);
        S mx = row.maxCoeff();
        row = (row.array() - mx).exp();
        row /= row.sum();
        if (causal && width < seq_len) scores.row(i).tail(seq_len - width).setZero();
      }
      ctx.block(row0, h * hd, seq_len, hd).noalias() = scores * v;
      if (cache) cache->probs[static_cast<std::size_t>(s) * n_heads + h] = scores;
    }
  }
  return ctx;
}

// Returns d(qkv). Probabilities are zero above the diagonal in the causal
// case, so the softmax backward needs no separate masking.
template <class S>
Mat<S> attention_backward(const Mat<S>& dctx, const Mat<S>& qkv, const AttentionCache<S>& cache,
                          int n_seqs, int seq_len, int n_heads) {
  const int d = static_cast<int>(qkv.cols()) / 3;
  const int hd = d / n_heads;
  const S scale = static_cast<S>(1) / std::sqrt(static_cast<S>(hd));
  Mat<S> dqkv = Mat<S>::Zero(qkv.rows(), qkv.cols());

  Mat<S> dprobs(seq_len, seq_len), dscores(seq_len, seq_len);
  for (int s = 0; s < n_seqs; ++s) {
    const Eigen::Index row0 = static_cast<Eigen::Index>(s) * seq_len;
    for (int h = 0; h < n_heads; ++h) {
      const Mat<S>& probs = cache.probs[static_cast<std::size_t>(s) * n_heads + h];
      auto q = qkv.block(row0, h * hd, seq_len, hd);
      auto k = qkv.block(row0, d + h * hd, seq_len, hd);
      auto v = qkv.block(row0, 2 * d + h * hd, seq_len, hd);
      auto dc = dctx.block(row0, h * hd, seq_len, hd);

      dprobs.noalias() = dc * v.transpose();
      dqkv.block(row0, 2 * d + h * hd, seq_len, hd).noalias() = probs.transpose() * dc;

      // softmax backward, rowwise
      for (int i = 0; i < seq_len; ++i) {
        S dot = dprobs.row(i).dot(probs.row(i));
        dscores.row(i) =
            (probs.row(i).array() * (dprobs.row(i).array() - dot)).matrix() * scale;
      }
      dqkv.block(row0, h * hd, seq_len, hd).noalias() = dscores * k;
      dqkv.block(row0, d + h * hd, seq_len, hd).noalias() = dscores.transpose() * q;
    }
  }
  return dqkv;
}

// ---------------------------------------------------------------------------
// Pre-LN residual block: x + proj(attn(ln1(x))), then x + mlp(ln2(x)).
// ---------------------------------------------------------------------------
template <class S>
struct BlockParams {
  Mat<S> ln1_g, ln1_b;  // 1 x d
  Mat<S> w_qkv, b_qkv;  // d x 3d, 1 x 3d
  Mat<S> w_proj, b_proj;
  Mat<S> ln2_g, ln2_b;
  Mat<S> w_fc1, b_fc1;  // d x 4d
  Mat<S> w_fc2, b_fc2;  // 4d x d

  static BlockParams sized(int d) {
    BlockParams b;
    b.ln1_g.resize(1, d);
    b.ln1_b.resize(1, d);
    b.w_qkv.resize(d, 3 * d);
    b.b_qkv.resize(1, 3 * d);
    b.w_proj.resize(d, d);
    b.b_proj.resize(1, d);
    b.ln2_g.resize(1, d);
    b.ln2_b.resize(1, d);
    b.w_fc1.resize(d, 4 * d);
    b.b_fc1.resize(1, 4 * d);
    b.w_fc2.resize(4 * d, d);
    b.b_fc2.resize(1, d);
    return b;
  }

  template <class F>
  void for_each(const std::string& prefix, F&& f) {
    f(prefix + ".ln1_g", ln1_g);
    f(prefix + ".ln1_b", ln1_b);
    f(prefix + ".w_qkv", w_qkv);
    f(prefix + ".b_qkv", b_qkv);
    f(prefix + ".w_proj", w_proj);
    f(prefix + ".b_proj", b_proj);
    f(prefix + ".ln2_g", ln2_g);
    f(prefix + ".ln2_b", ln2_b);
    f(prefix + ".w_fc1", w_fc1);
    f(prefix + ".b_fc1", b_fc1);
    f(prefix + ".w_fc2", w_fc2);
    f(prefix + ".b_fc2", b_fc2);
  }
};

template <class S>
struct BlockCache {
  Mat<S> x_in;
  LnCache<S> ln1;
  Mat<S> ln1_out;
  Mat<S> qkv;
  AttentionCache<S> att;
  Mat<S> att_ctx;
  Mat<S> after_attn;
  LnCache<S> ln2;
  Mat<S> ln2_out;
  Mat<S> fc1_pre;
  Mat<S> drop_attn, drop_mlp;  // empty when dropout off
};

template <class S>
Mat<S> block_forward(const BlockParams<S>& p, Mat<S> x, int n_seqs, int seq_len, int n_heads,
                     bool causal, S dropout_p, RngEngine* rng, BlockCache<S>* cache) {
  const bool train = cache != nullptr;
  const bool use_dropout = train && rng != nullptr && dropout_p > S(0);
  if (train) cache->x_in = x;

  Mat<S> ln1_out = layernorm_forward(x, p.ln1_g, p.ln1_b, train ? &cache->ln1 : nullptr);
  Mat<S> qkv = (ln1_out * p.w_qkv).rowwise() + p.b_qkv.row(0);
  Mat<S> ctx =
      attention_forward(qkv, n_seqs, seq_len, n_heads, causal, train ? &cache->att : nullptr);
  Mat<S> attn_out = (ctx * p.w_proj).rowwise() + p.b_proj.row(0);
  if (use_dropout) {
    dropout_forward(attn_out, dropout_p, *rng, cache->drop_attn);
  }
  x += attn_out;
  if (train) {
    cache->ln1_out = std::move(ln1_out);
    cache->qkv = std::move(qkv);
    cache->att_ctx = std::move(ctx);
    cache->after_attn = x;
  }

  Mat<S> ln2_out = layernorm_forward(x, p.ln2_g, p.ln2_b, train ? &cache->ln2 : nullptr);
  Mat<S> fc1 = (ln2_out * p.w_fc1).rowwise() + p.b_fc1.row(0);
  if (train) cache->fc1_pre = fc1;
  gelu_inplace(fc1);
  Mat<S> mlp_out = (fc1 * p.w_fc2).rowwise() + p.b_fc2.row(0);
  if (use_dropout) {
    dropout_forward(mlp_out, dropout_p, *rng, cache->drop_mlp);
  }
  x += mlp_out;
  if (train) cache->ln2_out = std::move(ln2_out);
  return x;
}

// Accumulates into the gradient block; returns dx.
template <class S>
Mat<S> block_backward(const BlockParams<S>& p, BlockParams<S>& g, const BlockCache<S>& cache,
                      const Mat<S>& dout, int n_seqs, int seq_len, int n_heads) {
  // MLP path
  Mat<S> d_mlp_out = dout;
  if (cache.drop_mlp.size() > 0) d_mlp_out.array() *= cache.drop_mlp.array();
  Mat<S> fc1_act = cache.fc1_pre;
  gelu_inplace(fc1_act);
  g.w_fc2.noalias() += fc1_act.transpose() * d_mlp_out;
  g.b_fc2 += d_mlp_out.colwise().sum();
  Mat<S> d_fc1_act = d_mlp_out * p.w_fc2.transpose();
  {
    const S* pre = cache.fc1_pre.data();
    S* d = d_fc1_act.data();
    for (Eigen::Index i = 0; i < d_fc1_act.size(); ++i) d[i] *= gelu_grad(pre[i]);
  }
  g.w_fc1.noalias() += cache.ln2_out.transpose() * d_fc1_act;
  g.b_fc1 += d_fc1_act.colwise().sum();
  Mat<S> d_ln2_out = d_fc1_act * p.w_fc1.transpose();
  Mat<S> dx = layernorm_backward(d_ln2_out, cache.ln2, p.ln2_g, g.ln2_g, g.ln2_b);
  dx += dout;  // residual

  // Attention path
  Mat<S> d_attn_out = dx;
  if (cache.drop_attn.size() > 0) d_attn_out.array() *= cache.drop_attn.array();
  g.w_proj.noalias() += cache.att_ctx.transpose() * d_attn_out;
  g.b_proj += d_attn_out.colwise().sum();
  Mat<S> d_ctx = d_attn_out * p.w_proj.transpose();
  Mat<S> d_qkv = attention_backward(d_ctx, cache.qkv, cache.att, n_seqs, seq_len, n_heads);
  g.w_qkv.noalias() += cache.ln1_out.transpose() * d_qkv;
  g.b_qkv += d_qkv.colwise().sum();
  Mat<S> d_ln1_out = d_qkv * p.w_qkv.transpose();
  Mat<S> dx_ln1 = layernorm_backward(d_ln1_out, cache.ln1, p.ln1_g, g.ln1_g, g.ln1_b);
  dx += dx_ln1;
  return dx;
}

// ---------------------------------------------------------------------------
// Cross-entropy over rows of logits
// ---------------------------------------------------------------------------
template <class S>
S cross_entropy(const Mat<S>& logits, const VecI& targets, Mat<S>* dlogits = nullptr) {
  if (logits.rows() != targets.size()) {
    throw std::invalid_argument("cross_entropy: logits/targets length mismatch");
  }
  const Eigen::Index n = logits.rows(), v = logits.cols();
  if (dlogits) dlogits->resize(n, v);
  S total = S(0);
  for (Eigen::Index i = 0; i < n; ++i) {
    const int t = targets(i);
    if (t < 0 || t >= v) throw std::invalid_argument("cross_entropy: target out of range");
    S mx = logits.row(i).maxCoeff();
    auto shifted = (logits.row(i).array() - mx).eval();
    S sum_exp = shifted.exp().sum();
    S lse = std::log(sum_exp) + mx;
    total += lse - logits(i, t);
    if (dlogits) {
      dlogits->row(i) = (shifted.exp() / sum_exp).matrix() / static_cast<S>(n);
      (*dlogits)(i, t) -= S(1) / static_cast<S>(n);
    }
  }
  return total / static_cast<S>(n);
}

// ---------------------------------------------------------------------------
// Adam with global-norm gradient clipping
// ---------------------------------------------------------------------------
template <class S>
class Adam {
 public:
  Adam(std::vector<Mat<S>*> params, double lr, double beta1 = 0.9, double beta2 = 0.999,
       double eps = 1e-8, double clip_norm = 1.0)
      : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps),
        clip_norm_(clip_norm) {
    m_.reserve(params_.size());
    v_.reserve(params_.size());
    for (auto* p : params_) {
      m_.push_back(Mat<S>::Zero(p->rows(), p->cols()));
      v_.push_back(Mat<S>::Zero(p->rows(), p->cols()));
    }
  }

  void step(const std::vector<Mat<S>*>& grads) {
    if (grads.size() != params_.size()) throw std::invalid_argument("Adam: grad count mismatch");
    ++t_;
    double sq = 0.0;
    for (auto* gm : grads) sq += static_cast<double>(gm->squaredNorm());
    double norm = std::sqrt(sq);
    S scale = S(1);
    if (clip_norm_ > 0.0 && norm > clip_norm_) scale = static_cast<S>(clip_norm_ / norm);
    const double bc1 = 1.0 - std::pow(beta1_, t_);
    const double bc2 = 1.0 - std::pow(beta2_, t_);
    for (std::size_t i = 0; i < params_.size(); ++i) {
      auto g = (grads[i]->array() * scale).eval();
      m_[i].array() = static_cast<S>(beta1_) * m_[i].array() + static_cast<S>(1.0 - beta1_) * g;
      v_[i].array() =
          static_cast<S>(beta2_) * v_[i].array() + static_cast<S>(1.0 - beta2_) * g.square();
      auto m_hat = m_[i].array() / static_cast<S>(bc1);
      auto v_hat = v_[i].array() / static_cast<S>(bc2);
      params_[i]->array() -= static_cast<S>(lr_) * m_hat / (v_hat.sqrt() + static_cast<S>(eps_));
    }
  }

  long long steps() const { return t_; }

 private:
  std::vector<Mat<S>*> params_;
  std::vector<Mat<S>> m_, v_;
  double lr_, beta1_, beta2_, eps_, clip_norm_;
  long long t_ = 0;
};

}  // namespace chatemg::nn
