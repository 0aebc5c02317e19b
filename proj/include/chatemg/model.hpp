// Dual-branch decoder-only transformer over the quantized EMG vocabulary.
// The self branch consumes channel-1 tokens; the context branch sums 8
// per-channel token embeddings. Both run independent causal attention stacks,
// their final features are concatenated per position and mapped to vocabulary
// logits by a small fully connected head.
#pragma once

#include <cstdio>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "chatemg/container.hpp"
#include "chatemg/core.hpp"
#include "chatemg/nn.hpp"
#include "chatemg/rng.hpp"

namespace chatemg {

struct ModelConfig {
  int vocab_size = kMaxValue + 1;  // tokens 0..1000
  int n_embed = 256;
  int n_blocks_per_branch = 12;
  int n_heads = 8;
  int context_len = kDefaultWindowLen;
  int fc_layers = 3;
  double dropout = 0.1;

  void validate() const {
    if (vocab_size < 2) throw std::invalid_argument("vocab_size must be >= 2");
    if (context_len < 2) throw std::invalid_argument("context_len must be >= 2");
    if (n_embed < 1 || n_heads < 1 || n_embed % n_heads != 0) {
      throw std::invalid_argument("n_embed must be a positive multiple of n_heads");
    }
    if (n_blocks_per_branch < 1) throw std::invalid_argument("need at least 1 block per branch");
    if (fc_layers < 1) throw std::invalid_argument("fc_layers must be >= 1");
    if (dropout < 0.0 || dropout >= 1.0) throw std::invalid_argument("dropout must be in [0,1)");
  }

  bool operator==(const ModelConfig&) const = default;
};

template <class S>
struct BranchParams {
  std::vector<Mat<S>> tok_emb;  // 1 (self) or 8 (context) tables of V x d
  Mat<S> pos_emb;               // T x d
  std::vector<nn::BlockParams<S>> blocks;
  Mat<S> lnf_g, lnf_b;  // 1 x d

  template <class F>
  void for_each(const std::string& prefix, F&& f) {
    for (std::size_t i = 0; i < tok_emb.size(); ++i) {
      f(prefix + ".tok_emb" + std::to_string(i), tok_emb[i]);
    }
    f(prefix + ".pos_emb", pos_emb);
    for (std::size_t b = 0; b < blocks.size(); ++b) {
      blocks[b].for_each(prefix + ".block" + std::to_string(b), f);
    }
    f(prefix + ".lnf_g", lnf_g);
    f(prefix + ".lnf_b", lnf_b);
  }
};

template <class S>
struct ModelParams {
  BranchParams<S> self_branch;
  BranchParams<S> ctx_branch;
  struct HeadLayer {
    Mat<S> w, b;
  };
  std::vector<HeadLayer> head;  // fc_layers; input 2d, hidden 2d, output V

  template <class F>
  void for_each(F&& f) {
    self_branch.for_each("self", f);
    ctx_branch.for_each("ctx", f);
    for (std::size_t i = 0; i < head.size(); ++i) {
      f("head" + std::to_string(i) + ".w", head[i].w);
      f("head" + std::to_string(i) + ".b", head[i].b);
    }
  }

  template <class F>
  void for_each(F&& f) const {
    const_cast<ModelParams*>(this)->for_each(
        [&](const std::string& name, Mat<S>& m) { f(name, std::as_const(m)); });
  }

  std::vector<Mat<S>*> param_list() {
    std::vector<Mat<S>*> out;
    for_each([&](const std::string&, Mat<S>& m) { out.push_back(&m); });
    return out;
  }
};

namespace detail {

template <class S>
BranchParams<S> make_branch(const ModelConfig& cfg, int n_embeddings) {
  BranchParams<S> b;
  b.tok_emb.resize(n_embeddings);
  for (auto& t : b.tok_emb) t.resize(cfg.vocab_size, cfg.n_embed);
  b.pos_emb.resize(cfg.context_len, cfg.n_embed);
  b.blocks.assign(static_cast<std::size_t>(cfg.n_blocks_per_branch),
                  nn::BlockParams<S>::sized(cfg.n_embed));
  b.lnf_g.resize(1, cfg.n_embed);
  b.lnf_b.resize(1, cfg.n_embed);
  return b;
}

}  // namespace detail

template <class S>
ModelParams<S> make_model_params(const ModelConfig& cfg) {
  cfg.validate();
  ModelParams<S> p;
  p.self_branch = detail::make_branch<S>(cfg, 1);
  p.ctx_branch = detail::make_branch<S>(cfg, kNumChannels);
  p.head.resize(static_cast<std::size_t>(cfg.fc_layers));
  const int fused = 2 * cfg.n_embed;
  for (int i = 0; i < cfg.fc_layers; ++i) {
    const int out = (i == cfg.fc_layers - 1) ? cfg.vocab_size : fused;
    p.head[static_cast<std::size_t>(i)].w.resize(fused, out);
    p.head[static_cast<std::size_t>(i)].b.resize(1, out);
  }
  return p;
}

// Weights ~ N(0, 0.02^2), biases zero, layer-norm gains one. Deterministic
// given the seed; float and double instantiations draw the same sequence.
template <class S>
ModelParams<S> init_params(const ModelConfig& cfg, std::uint64_t seed) {
  ModelParams<S> p = make_model_params<S>(cfg);
  auto rng = make_rng(derive_seed(seed, "model_init"));
  std::normal_distribution<double> normal(0.0, 0.02);
  p.for_each([&](const std::string& name, Mat<S>& m) {
    if (nn::is_gain_name(name)) {
      m.setOnes();
    } else if (nn::is_bias_name(name)) {
      m.setZero();
    } else {
      for (Eigen::Index i = 0; i < m.rows(); ++i) {
        for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = static_cast<S>(normal(rng));
      }
    }
  });
  return p;
}

template <class S>
ModelParams<S> zeros_like(ModelParams<S>& params) {
  ModelParams<S> g = params;  // copy shapes
  g.for_each([](const std::string&, Mat<S>& m) { m.setZero(); });
  return g;
}

// ---------------------------------------------------------------------------
// Forward
// ---------------------------------------------------------------------------
template <class S>
struct BranchCache {
  Mat<S> emb;  // N x d input to block stack
  std::vector<nn::BlockCache<S>> blocks;
  nn::LnCache<S> lnf;
  Mat<S> lnf_in;
  Mat<S> drop_emb;
};

template <class S>
struct ForwardCache {
  MatI tokens;
  int n_seqs = 0, seq_len = 0;
  BranchCache<S> self_branch, ctx_branch;
  Mat<S> fused;                 // N x 2d
  std::vector<Mat<S>> head_pre;  // pre-activations of hidden head layers
};

namespace detail {

template <class S>
Mat<S> branch_forward(const BranchParams<S>& bp, const ModelConfig& cfg, const MatI& tokens,
                      int n_seqs, int seq_len, bool context_branch, S dropout_p, RngEngine* rng,
                      BranchCache<S>* cache) {
  const Eigen::Index n = tokens.rows();
  Mat<S> x(n, cfg.n_embed);
  for (Eigen::Index r = 0; r < n; ++r) {
    const int pos = static_cast<int>(r % seq_len);
    if (context_branch) {
      x.row(r) = bp.pos_emb.row(pos);
      for (int c = 0; c < kNumChannels; ++c) x.row(r) += bp.tok_emb[c].row(tokens(r, c));
    } else {
      x.row(r) = bp.tok_emb[0].row(tokens(r, 0)) + bp.pos_emb.row(pos);
    }
  }
  const bool train = cache != nullptr;
  if (train && rng && dropout_p > S(0)) {
    nn::dropout_forward(x, dropout_p, *rng, cache->drop_emb);
  }
  if (train) {
    cache->emb = x;
    cache->blocks.resize(bp.blocks.size());
  }
  for (std::size_t b = 0; b < bp.blocks.size(); ++b) {
    x = nn::block_forward(bp.blocks[b], std::move(x), n_seqs, seq_len, cfg.n_heads,
                          /*causal=*/true, dropout_p, train ? rng : nullptr,
                          train ? &cache->blocks[b] : nullptr);
  }
  if (train) cache->lnf_in = x;
  return nn::layernorm_forward(x, bp.lnf_g, bp.lnf_b, train ? &cache->lnf : nullptr);
}

template <class S>
Mat<S> head_forward(const ModelParams<S>& p, const Mat<S>& fused,
                    std::vector<Mat<S>>* head_pre) {
  Mat<S> h = fused;
  if (head_pre) head_pre->clear();
  for (std::size_t i = 0; i < p.head.size(); ++i) {
    Mat<S> z = (h * p.head[i].w).rowwise() + p.head[i].b.row(0);
    if (i + 1 < p.head.size()) {
      if (head_pre) head_pre->push_back(z);
      nn::gelu_inplace(z);
    }
    h = std::move(z);
  }
  return h;
}

}  // namespace detail

// Training/eval forward over stacked sequences. tokens is (n_seqs*seq_len) x 8
// with every value in [0, vocab_size). Returns per-position logits.
template <class S>
Mat<S> forward_batch(const ModelParams<S>& p, const ModelConfig& cfg, const MatI& tokens,
                     int n_seqs, int seq_len, RngEngine* dropout_rng = nullptr,
                     ForwardCache<S>* cache = nullptr) {
  if (tokens.cols() != kNumChannels) throw std::invalid_argument("input must have 8 channels");
  if (seq_len < 1 || n_seqs < 1 || tokens.rows() != static_cast<Eigen::Index>(n_seqs) * seq_len) {
    throw std::invalid_argument("token matrix does not match n_seqs * seq_len");
  }
  if (seq_len > cfg.context_len) {
    throw ContextOverflow("sequence length " + std::to_string(seq_len) +
                          " exceeds context length " + std::to_string(cfg.context_len));
  }
  if (tokens.minCoeff() < 0 || tokens.maxCoeff() >= cfg.vocab_size) {
    throw std::invalid_argument("token out of vocabulary range");
  }
  const S dp = static_cast<S>(cfg.dropout);
  if (cache) {
    cache->tokens = tokens;
    cache->n_seqs = n_seqs;
    cache->seq_len = seq_len;
  }
  Mat<S> self_out = detail::branch_forward(p.self_branch, cfg, tokens, n_seqs, seq_len,
                                           /*context_branch=*/false, dp, dropout_rng,
                                           cache ? &cache->self_branch : nullptr);
  Mat<S> ctx_out = detail::branch_forward(p.ctx_branch, cfg, tokens, n_seqs, seq_len,
                                          /*context_branch=*/true, dp, dropout_rng,
                                          cache ? &cache->ctx_branch : nullptr);
  Mat<S> fused(self_out.rows(), 2 * cfg.n_embed);
  fused.leftCols(cfg.n_embed) = self_out;
  fused.rightCols(cfg.n_embed) = ctx_out;
  if (cache) cache->fused = fused;
  return detail::head_forward(p, fused, cache ? &cache->head_pre : nullptr);
}

// Single-sequence forward, eval mode (the public inference surface).
template <class S>
Mat<S> forward(const ModelParams<S>& p, const ModelConfig& cfg, const MatI& input) {
  if (input.rows() < 1) throw std::invalid_argument("input must have at least one step");
  return forward_batch<S>(p, cfg, input, 1, static_cast<int>(input.rows()));
}

// Ablation switch: zeroes the context-branch contribution before the fusion
// head, so the self branch alone defines an unconditional channel-1 model.
template <class S>
Mat<S> forward_self_only(const ModelParams<S>& p, const ModelConfig& cfg, const MatI& input) {
  if (input.rows() < 1) throw std::invalid_argument("input must have at least one step");
  const int seq_len = static_cast<int>(input.rows());
  if (seq_len > cfg.context_len) throw ContextOverflow("sequence exceeds context length");
  if (input.minCoeff() < 0 || input.maxCoeff() >= cfg.vocab_size) {
    throw std::invalid_argument("token out of vocabulary range");
  }
  Mat<S> self_out = detail::branch_forward<S>(p.self_branch, cfg, input, 1, seq_len, false, S(0),
                                              nullptr, nullptr);
  Mat<S> fused = Mat<S>::Zero(self_out.rows(), 2 * cfg.n_embed);
  fused.leftCols(cfg.n_embed) = self_out;
  return detail::head_forward<S>(p, fused, nullptr);
}

// Mean cross-entropy between per-position logits and next-step targets.
template <class S>
S loss(const Mat<S>& logits, const VecI& targets) {
  return nn::cross_entropy<S>(logits, targets, nullptr);
}

// ---------------------------------------------------------------------------
// Backward
// ---------------------------------------------------------------------------
namespace detail {

template <class S>
void branch_backward(const BranchParams<S>& bp, BranchParams<S>& gb, const ModelConfig& cfg,
                     const BranchCache<S>& cache, const MatI& tokens, int n_seqs, int seq_len,
                     bool context_branch, Mat<S> dout) {
  Mat<S> dx = nn::layernorm_backward(dout, cache.lnf, bp.lnf_g, gb.lnf_g, gb.lnf_b);
  for (std::size_t b = bp.blocks.size(); b-- > 0;) {
    dx = nn::block_backward(bp.blocks[b], gb.blocks[b], cache.blocks[b], dx, n_seqs, seq_len,
                            cfg.n_heads);
  }
  if (cache.drop_emb.size() > 0) dx.array() *= cache.drop_emb.array();
  for (Eigen::Index r = 0; r < dx.rows(); ++r) {
    const int pos = static_cast<int>(r % seq_len);
    gb.pos_emb.row(pos) += dx.row(r);
    if (context_branch) {
      for (int c = 0; c < kNumChannels; ++c) gb.tok_emb[c].row(tokens(r, c)) += dx.row(r);
    } else {
      gb.tok_emb[0].row(tokens(r, 0)) += dx.row(r);
    }
  }
}

}  // namespace detail

// Accumulates gradients into `grads` (zeroed by the caller).
template <class S>
void backward_batch(const ModelParams<S>& p, ModelParams<S>& grads, const ModelConfig& cfg,
                    const ForwardCache<S>& cache, const Mat<S>& dlogits) {
  // Head backward.
  Mat<S> d = dlogits;
  std::vector<Mat<S>> hidden;  // activated inputs of each head layer
  hidden.reserve(p.head.size());
  hidden.push_back(cache.fused);
  for (std::size_t i = 0; i + 1 < p.head.size(); ++i) {
    Mat<S> act = cache.head_pre[i];
    nn::gelu_inplace(act);
    hidden.push_back(std::move(act));
  }
  for (std::size_t i = p.head.size(); i-- > 0;) {
    grads.head[i].w.noalias() += hidden[i].transpose() * d;
    grads.head[i].b += d.colwise().sum();
    if (i == 0) {
      d = d * p.head[i].w.transpose();
      break;
    }
    Mat<S> dprev = d * p.head[i].w.transpose();
    const Mat<S>& pre = cache.head_pre[i - 1];
    S* dp = dprev.data();
    const S* pp = pre.data();
    for (Eigen::Index k = 0; k < dprev.size(); ++k) dp[k] *= nn::gelu_grad(pp[k]);
    d = std::move(dprev);
  }
  const int dmodel = cfg.n_embed;
  detail::branch_backward<S>(p.self_branch, grads.self_branch, cfg, cache.self_branch,
                             cache.tokens, cache.n_seqs, cache.seq_len, false,
                             Mat<S>(d.leftCols(dmodel)));
  detail::branch_backward<S>(p.ctx_branch, grads.ctx_branch, cfg, cache.ctx_branch, cache.tokens,
                             cache.n_seqs, cache.seq_len, true, Mat<S>(d.rightCols(dmodel)));
}

// ---------------------------------------------------------------------------
// Incremental decoding with per-block key/value caches. prime() runs the full
// prefix; append() extends by one frame. Logits come from the last position
// only.
// ---------------------------------------------------------------------------
template <class S>
class DecoderState {
 public:
  DecoderState(const ModelParams<S>& params, const ModelConfig& cfg)
      : p_(&params), cfg_(cfg) {
    const int t = cfg_.context_len, d = cfg_.n_embed;
    self_k_.assign(cfg_.n_blocks_per_branch, Mat<S>(t, d));
    self_v_.assign(cfg_.n_blocks_per_branch, Mat<S>(t, d));
    ctx_k_.assign(cfg_.n_blocks_per_branch, Mat<S>(t, d));
    ctx_v_.assign(cfg_.n_blocks_per_branch, Mat<S>(t, d));
  }

  int length() const { return len_; }

  // Runs the prefix through both branches, filling the caches, and returns
  // the last position's logits.
  Vec<S> prime(const MatI& history) {
    if (history.rows() < 1) throw std::invalid_argument("history must be non-empty");
    if (history.rows() > cfg_.context_len) {
      throw ContextOverflow("history longer than context length");
    }
    if (history.cols() != kNumChannels) throw std::invalid_argument("history must be Lx8");
    if (history.minCoeff() < 0 || history.maxCoeff() >= cfg_.vocab_size) {
      throw std::invalid_argument("token out of vocabulary range");
    }
    len_ = static_cast<int>(history.rows());
    Mat<S> self_out = prime_branch(p_->self_branch, history, false, self_k_, self_v_);
    Mat<S> ctx_out = prime_branch(p_->ctx_branch, history, true, ctx_k_, ctx_v_);
    return head_last(self_out, ctx_out);
  }

  // Appends one frame and returns the new last-position logits.
  Vec<S> append(const EmgFrame& frame) {
    if (len_ >= cfg_.context_len) throw ContextOverflow("decoder context is full");
    for (int c = 0; c < kNumChannels; ++c) {
      if (frame[c] >= cfg_.vocab_size) throw std::invalid_argument("token out of vocabulary");
    }
    Vec<S> self_x = p_->self_branch.tok_emb[0].row(frame[0]).transpose() +
                    p_->self_branch.pos_emb.row(len_).transpose();
    Vec<S> ctx_x = p_->ctx_branch.pos_emb.row(len_).transpose();
    for (int c = 0; c < kNumChannels; ++c) {
      ctx_x += p_->ctx_branch.tok_emb[c].row(frame[c]).transpose();
    }
    Vec<S> self_out = step_branch(p_->self_branch, std::move(self_x), self_k_, self_v_);
    Vec<S> ctx_out = step_branch(p_->ctx_branch, std::move(ctx_x), ctx_k_, ctx_v_);
    ++len_;
    Mat<S> self_row = self_out.transpose();
    Mat<S> ctx_row = ctx_out.transpose();
    return head_last(self_row, ctx_row);
  }

 private:
  // Row-wise layer norm of a single vector.
  static Vec<S> ln_vec(const Vec<S>& x, const Mat<S>& g, const Mat<S>& b) {
    S mu = x.mean();
    S var = (x.array() - mu).square().mean();
    S inv = S(1) / std::sqrt(var + nn::kLnEps<S>);
    return (((x.array() - mu) * inv) * g.row(0).transpose().array() +
            b.row(0).transpose().array())
        .matrix();
  }

  Mat<S> prime_branch(const BranchParams<S>& bp, const MatI& tokens, bool context_branch,
                      std::vector<Mat<S>>& k_cache, std::vector<Mat<S>>& v_cache) {
    const int n = static_cast<int>(tokens.rows());
    const int d = cfg_.n_embed;
    Mat<S> x(n, d);
    for (int r = 0; r < n; ++r) {
      if (context_branch) {
        x.row(r) = bp.pos_emb.row(r);
        for (int c = 0; c < kNumChannels; ++c) x.row(r) += bp.tok_emb[c].row(tokens(r, c));
      } else {
        x.row(r) = bp.tok_emb[0].row(tokens(r, 0)) + bp.pos_emb.row(r);
      }
    }
    for (std::size_t b = 0; b < bp.blocks.size(); ++b) {
      const auto& blk = bp.blocks[b];
      Mat<S> ln1 = nn::layernorm_forward<S>(x, blk.ln1_g, blk.ln1_b, nullptr);
      Mat<S> qkv = (ln1 * blk.w_qkv).rowwise() + blk.b_qkv.row(0);
      k_cache[b].topRows(n) = qkv.middleCols(d, d);
      v_cache[b].topRows(n) = qkv.rightCols(d);
      Mat<S> ctx = nn::attention_forward<S>(qkv, 1, n, cfg_.n_heads, true, nullptr);
      x += (ctx * blk.w_proj).rowwise() + blk.b_proj.row(0);
      Mat<S> ln2 = nn::layernorm_forward<S>(x, blk.ln2_g, blk.ln2_b, nullptr);
      Mat<S> fc1 = (ln2 * blk.w_fc1).rowwise() + blk.b_fc1.row(0);
      nn::gelu_inplace(fc1);
      x += (fc1 * blk.w_fc2).rowwise() + blk.b_fc2.row(0);
    }
    return x;
  }

  Vec<S> step_branch(const BranchParams<S>& bp, Vec<S> x, std::vector<Mat<S>>& k_cache,
                     std::vector<Mat<S>>& v_cache) {
    const int d = cfg_.n_embed;
    const int hd = d / cfg_.n_heads;
    const S scale = S(1) / std::sqrt(static_cast<S>(hd));
    const int L = len_ + 1;  // cache rows after appending this position
    for (std::size_t b = 0; b < bp.blocks.size(); ++b) {
      const auto& blk = bp.blocks[b];
      Vec<S> ln1 = ln_vec(x, blk.ln1_g, blk.ln1_b);
      Vec<S> qkv = blk.w_qkv.transpose() * ln1 + blk.b_qkv.row(0).transpose();
      k_cache[b].row(len_) = qkv.segment(d, d).transpose();
      v_cache[b].row(len_) = qkv.tail(d).transpose();
      Vec<S> ctx(d);
      for (int h = 0; h < cfg_.n_heads; ++h) {
        auto q = qkv.segment(h * hd, hd);
        auto keys = k_cache[b].block(0, h * hd, L, hd);
        auto vals = v_cache[b].block(0, h * hd, L, hd);
        Vec<S> scores = (keys * q) * scale;
        S mx = scores.maxCoeff();
        scores = (scores.array() - mx).exp();
        scores /= scores.sum();
        ctx.segment(h * hd, hd) = vals.transpose() * scores;
      }
      x += blk.w_proj.transpose() * ctx + blk.b_proj.row(0).transpose();
      Vec<S> ln2 = ln_vec(x, blk.ln2_g, blk.ln2_b);
      Vec<S> fc1 = blk.w_fc1.transpose() * ln2 + blk.b_fc1.row(0).transpose();
      for (Eigen::Index i = 0; i < fc1.size(); ++i) fc1(i) = nn::gelu(fc1(i));
      x += blk.w_fc2.transpose() * fc1 + blk.b_fc2.row(0).transpose();
    }
    return x;
  }

  // Fuses the last rows of both branch outputs and applies the head.
  Vec<S> head_last(const Mat<S>& self_out, const Mat<S>& ctx_out) {
    const int d = cfg_.n_embed;
    Mat<S> fused(1, 2 * d);
    Vec<S> self_ln = ln_vec(self_out.row(self_out.rows() - 1).transpose(),
                            p_->self_branch.lnf_g, p_->self_branch.lnf_b);
    Vec<S> ctx_ln = ln_vec(ctx_out.row(ctx_out.rows() - 1).transpose(), p_->ctx_branch.lnf_g,
                           p_->ctx_branch.lnf_b);
    fused.leftCols(d) = self_ln.transpose();
    fused.rightCols(d) = ctx_ln.transpose();
    Mat<S> logits = detail::head_forward<S>(*p_, fused, nullptr);
    return logits.row(0).transpose();
  }

  const ModelParams<S>* p_;
  ModelConfig cfg_;
  int len_ = 0;
  std::vector<Mat<S>> self_k_, self_v_, ctx_k_, ctx_v_;
};

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------
inline Container to_container(const ModelParams<float>& params, const ModelConfig& cfg,
                              Intent intent) {
  Container c;
  c.meta["kind"] = "generative_model";
  c.meta["intent"] = to_string(intent);
  c.set_meta_int("vocab_size", cfg.vocab_size);
  c.set_meta_int("n_embed", cfg.n_embed);
  c.set_meta_int("n_blocks_per_branch", cfg.n_blocks_per_branch);
  c.set_meta_int("n_heads", cfg.n_heads);
  c.set_meta_int("context_len", cfg.context_len);
  c.set_meta_int("fc_layers", cfg.fc_layers);
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", cfg.dropout);
  c.meta["dropout"] = buf;
  params.for_each(
      [&](const std::string& name, const Mat<float>& m) { c.tensors[name] = to_blob(m); });
  return c;
}

struct LoadedModel {
  ModelConfig config;
  ModelParams<float> params;
  Intent intent = Intent::relax;
};

inline LoadedModel from_container(const Container& c) {
  if (c.meta_str("kind") != "generative_model") {
    throw IoError("container does not hold a generative model checkpoint");
  }
  LoadedModel m;
  m.intent = intent_from_string(c.meta_str("intent"));
  m.config.vocab_size = static_cast<int>(c.meta_int("vocab_size"));
  m.config.n_embed = static_cast<int>(c.meta_int("n_embed"));
  m.config.n_blocks_per_branch = static_cast<int>(c.meta_int("n_blocks_per_branch"));
  m.config.n_heads = static_cast<int>(c.meta_int("n_heads"));
  m.config.context_len = static_cast<int>(c.meta_int("context_len"));
  m.config.fc_layers = static_cast<int>(c.meta_int("fc_layers"));
  m.config.dropout = std::stod(c.meta_str("dropout"));
  m.config.validate();
  m.params = make_model_params<float>(m.config);
  m.params.for_each([&](const std::string& name, Mat<float>& mat) {
    const TensorBlob& t = c.tensor(name);
    if (t.shape.size() != 2 || t.shape[0] != mat.rows() || t.shape[1] != mat.cols()) {
      throw IoError("checkpoint tensor '" + name + "' has unexpected shape");
    }
    mat = from_blob<float>(t);
  });
  return m;
}

inline void save_checkpoint(const ModelParams<float>& params, const ModelConfig& cfg,
                            Intent intent, const std::filesystem::path& path) {
  save_container(to_container(params, cfg, intent), path);
}

inline LoadedModel load_checkpoint(const std::filesystem::path& path) {
  return from_container(load_container(path));
}

// One trained model per intent; the shared config is identical across the
// three by construction.
struct IntentModelSet {
  ModelConfig config;
  std::array<ModelParams<float>, kNumIntents> params;

  const ModelParams<float>& for_intent(Intent intent) const {
    return params[static_cast<std::size_t>(intent)];
  }
};

inline std::filesystem::path intent_checkpoint_path(const std::filesystem::path& dir,
                                                    Intent intent) {
  return dir / (std::string(to_string(intent)) + ".ckpt");
}

inline void save_model_set(const IntentModelSet& set, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  for (Intent intent : kAllIntents) {
    save_checkpoint(set.for_intent(intent), set.config, intent,
                    intent_checkpoint_path(dir, intent));
  }
}

inline IntentModelSet load_model_set(const std::filesystem::path& dir) {
  IntentModelSet set;
  bool first = true;
  for (Intent intent : kAllIntents) {
    auto path = intent_checkpoint_path(dir, intent);
    if (!std::filesystem::exists(path)) {
      throw IoError("missing checkpoint for intent '" + std::string(to_string(intent)) +
                    "': " + path.string());
    }
    LoadedModel m = load_checkpoint(path);
    if (m.intent != intent) {
      throw IoError("checkpoint " + path.string() + " holds intent '" + to_string(m.intent) +
                    "'");
    }
    if (first) {
      set.config = m.config;
      first = false;
    } else if (!(set.config == m.config)) {
      throw IoError("intent checkpoints disagree on model config in " + dir.string());
    }
    set.params[static_cast<std::size_t>(intent)] = std::move(m.params);
  }
  return set;
}

}  // namespace chatemg
