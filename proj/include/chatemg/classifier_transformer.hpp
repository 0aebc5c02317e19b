// Attention-based intent classifier: a linear projection of the normalized
// 8-channel frames plus learned positional embeddings, a small stack of
// full-attention transformer blocks, mean pooling over time, and an MLP head
// onto the three intent logits. Trained with Adam; fine-tuning continues
// gradient training from pretrained weights on the support set.
#pragma once

#include <array>
#include <vector>

#include "chatemg/container.hpp"
#include "chatemg/core.hpp"
#include "chatemg/dataset.hpp"
#include "chatemg/nn.hpp"
#include "chatemg/rng.hpp"

namespace chatemg {

struct TransformerClfConfig {
  int n_heads = 4;
  int n_attention_blocks = 1;
  int mlp_layers = 3;
  int embed_dim = 64;
  int epochs = 8;
  int finetune_epochs = 4;
  int batch_size = 32;
  double learning_rate = 3e-3;
  double grad_clip_norm = 1.0;
  std::uint64_t rng_seed = 0;

  void validate() const {
    if (embed_dim < 1 || n_heads < 1 || embed_dim % n_heads != 0) {
      throw std::invalid_argument("transformer clf: embed_dim must be a positive multiple of n_heads");
    }
    if (n_attention_blocks < 1) throw std::invalid_argument("transformer clf: need >= 1 block");
    if (mlp_layers < 1) throw std::invalid_argument("transformer clf: mlp_layers must be >= 1");
    if (epochs < 0 || finetune_epochs < 0) {
      throw std::invalid_argument("transformer clf: epochs must be >= 0");
    }
    if (batch_size < 1) throw std::invalid_argument("transformer clf: batch_size must be >= 1");
    if (learning_rate <= 0.0) throw std::invalid_argument("transformer clf: learning_rate must be > 0");
  }
};

template <class S>
struct TClfParams {
  Mat<S> w_in, b_in;  // 8 x d, 1 x d
  Mat<S> pos;         // T x d
  std::vector<nn::BlockParams<S>> blocks;
  Mat<S> lnf_g, lnf_b;
  struct MlpLayer {
    Mat<S> w, b;
  };
  std::vector<MlpLayer> mlp;  // mlp_layers; last maps d -> 3

  template <class F>
  void for_each(F&& f) {
    f("clf.w_in", w_in);
    f("clf.b_in", b_in);
    f("clf.pos", pos);
    for (std::size_t i = 0; i < blocks.size(); ++i) {
      blocks[i].for_each("clf.block" + std::to_string(i), f);
    }
    f("clf.lnf_g", lnf_g);
    f("clf.lnf_b", lnf_b);
    for (std::size_t i = 0; i < mlp.size(); ++i) {
      f("clf.mlp" + std::to_string(i) + ".w", mlp[i].w);
      f("clf.mlp" + std::to_string(i) + ".b", mlp[i].b);
    }
  }

  std::vector<Mat<S>*> param_list() {
    std::vector<Mat<S>*> out;
    for_each([&](const std::string&, Mat<S>& m) { out.push_back(&m); });
    return out;
  }
};

namespace detail {

template <class S>
TClfParams<S> make_tclf_params(const TransformerClfConfig& cfg, int window_len) {
  TClfParams<S> p;
  const int d = cfg.embed_dim;
  p.w_in.resize(kNumChannels, d);
  p.b_in.resize(1, d);
  p.pos.resize(window_len, d);
  p.blocks.assign(static_cast<std::size_t>(cfg.n_attention_blocks), nn::BlockParams<S>::sized(d));
  p.lnf_g.resize(1, d);
  p.lnf_b.resize(1, d);
  p.mlp.resize(static_cast<std::size_t>(cfg.mlp_layers));
  for (int i = 0; i < cfg.mlp_layers; ++i) {
    const int out = i == cfg.mlp_layers - 1 ? kNumIntents : d;
    p.mlp[static_cast<std::size_t>(i)].w.resize(d, out);
    p.mlp[static_cast<std::size_t>(i)].b.resize(1, out);
  }
  return p;
}

template <class S>
TClfParams<S> init_tclf_params(const TransformerClfConfig& cfg, int window_len,
                               std::uint64_t seed) {
  TClfParams<S> p = make_tclf_params<S>(cfg, window_len);
  auto rng = make_rng(derive_seed(seed, "clf_init"));
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
struct TClfCache {
  Mat<S> x_frames;  // (B*T) x 8 normalized input
  std::vector<nn::BlockCache<S>> blocks;
  Mat<S> lnf_in;
  nn::LnCache<S> lnf;
  Mat<S> pooled;                 // B x d
  std::vector<Mat<S>> mlp_pre;   // hidden pre-activations
};

// Forward over B windows of length T stacked as (B*T) x 8.
template <class S>
Mat<S> tclf_forward(const TClfParams<S>& p, const TransformerClfConfig& cfg,
                    const Mat<S>& frames, int n_seqs, int seq_len, TClfCache<S>* cache) {
  const int d = cfg.embed_dim;
  Mat<S> x = frames * p.w_in;
  x.rowwise() += p.b_in.row(0);
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    x.row(r) += p.pos.row(r % seq_len);
  }
  if (cache) {
    cache->x_frames = frames;
    cache->blocks.resize(p.blocks.size());
  }
  for (std::size_t b = 0; b < p.blocks.size(); ++b) {
    x = nn::block_forward(p.blocks[b], std::move(x), n_seqs, seq_len, cfg.n_heads,
                          /*causal=*/false, S(0), nullptr, cache ? &cache->blocks[b] : nullptr);
  }
  if (cache) cache->lnf_in = x;
  Mat<S> normed = nn::layernorm_forward(x, p.lnf_g, p.lnf_b, cache ? &cache->lnf : nullptr);

  Mat<S> pooled(n_seqs, d);
  for (int s = 0; s < n_seqs; ++s) {
    pooled.row(s) = normed.middleRows(static_cast<Eigen::Index>(s) * seq_len, seq_len).colwise().mean();
  }
  if (cache) cache->pooled = pooled;

  Mat<S> h = pooled;
  if (cache) cache->mlp_pre.clear();
  for (std::size_t i = 0; i < p.mlp.size(); ++i) {
    Mat<S> z = (h * p.mlp[i].w).rowwise() + p.mlp[i].b.row(0);
    if (i + 1 < p.mlp.size()) {
      if (cache) cache->mlp_pre.push_back(z);
      nn::gelu_inplace(z);
    }
    h = std::move(z);
  }
  return h;
}

template <class S>
void tclf_backward(const TClfParams<S>& p, TClfParams<S>& g, const TransformerClfConfig& cfg,
                   const TClfCache<S>& cache, int n_seqs, int seq_len, const Mat<S>& dlogits) {
  Mat<S> d = dlogits;
  std::vector<Mat<S>> hidden;
  hidden.push_back(cache.pooled);
  for (std::size_t i = 0; i + 1 < p.mlp.size(); ++i) {
    Mat<S> act = cache.mlp_pre[i];
    nn::gelu_inplace(act);
    hidden.push_back(std::move(act));
  }
  for (std::size_t i = p.mlp.size(); i-- > 0;) {
    g.mlp[i].w.noalias() += hidden[i].transpose() * d;
    g.mlp[i].b += d.colwise().sum();
    Mat<S> dprev = d * p.mlp[i].w.transpose();
    if (i > 0) {
      const Mat<S>& pre = cache.mlp_pre[i - 1];
      S* dp = dprev.data();
      const S* pp = pre.data();
      for (Eigen::Index k = 0; k < dprev.size(); ++k) dp[k] *= nn::gelu_grad(pp[k]);
    }
    d = std::move(dprev);
  }

  // Mean-pool backward: every position receives d_pooled / T.
  Mat<S> d_normed(static_cast<Eigen::Index>(n_seqs) * seq_len, cfg.embed_dim);
  const S inv_t = S(1) / static_cast<S>(seq_len);
  for (int s = 0; s < n_seqs; ++s) {
    for (int t = 0; t < seq_len; ++t) {
      d_normed.row(static_cast<Eigen::Index>(s) * seq_len + t) = d.row(s) * inv_t;
    }
  }
  Mat<S> dx = nn::layernorm_backward(d_normed, cache.lnf, p.lnf_g, g.lnf_g, g.lnf_b);
  for (std::size_t b = p.blocks.size(); b-- > 0;) {
    dx = nn::block_backward(p.blocks[b], g.blocks[b], cache.blocks[b], dx, n_seqs, seq_len,
                            cfg.n_heads);
  }
  for (Eigen::Index r = 0; r < dx.rows(); ++r) {
    g.pos.row(r % seq_len) += dx.row(r);
  }
  g.b_in += dx.colwise().sum();
  g.w_in.noalias() += cache.x_frames.transpose() * dx;
}

}  // namespace detail

class TransformerClassifier {
 public:
  TransformerClassifier() = default;

  static TransformerClassifier fit(const TransformerClfConfig& cfg, const ClassifierSet& set,
                                   const std::array<double, kNumIntents>& class_weights) {
    cfg.validate();
    if (set.size() == 0) throw std::invalid_argument("transformer clf: empty training set");
    TransformerClassifier clf;
    clf.cfg_ = cfg;
    clf.window_len_ = set.windows[0].length();
    clf.params_ = detail::init_tclf_params<float>(cfg, clf.window_len_, cfg.rng_seed);
    clf.train(set, class_weights, cfg.epochs, derive_seed(cfg.rng_seed, "fit"));
    return clf;
  }

  // Continues gradient training from this model's weights.
  TransformerClassifier fine_tuned(const ClassifierSet& support,
                                   const std::array<double, kNumIntents>& class_weights) const {
    TransformerClassifier clf = *this;
    clf.train(support, class_weights, cfg_.finetune_epochs,
              derive_seed(cfg_.rng_seed, "fine_tune"));
    return clf;
  }

  Intent predict_one(const EmgWindow& window) const {
    if (window.length() != window_len_) {
      throw std::invalid_argument("transformer clf: window length mismatch");
    }
    MatF frames = normalize_for_classifier(window);
    MatF logits = detail::tclf_forward<float>(params_, cfg_, frames, 1, window_len_, nullptr);
    Eigen::Index best = 0;
    logits.row(0).maxCoeff(&best);
    return static_cast<Intent>(static_cast<int>(best));
  }

  int window_len() const { return window_len_; }
  const TransformerClfConfig& config() const { return cfg_; }

  void save_into(Container& c) const {
    c.set_meta_int("tclf.n_heads", cfg_.n_heads);
    c.set_meta_int("tclf.n_attention_blocks", cfg_.n_attention_blocks);
    c.set_meta_int("tclf.mlp_layers", cfg_.mlp_layers);
    c.set_meta_int("tclf.embed_dim", cfg_.embed_dim);
    c.set_meta_int("tclf.window_len", window_len_);
    const_cast<TClfParams<float>&>(params_).for_each(
        [&](const std::string& name, Mat<float>& m) { c.tensors[name] = to_blob(m); });
  }

  static TransformerClassifier load_from(const Container& c, const TransformerClfConfig& base) {
    TransformerClassifier clf;
    clf.cfg_ = base;
    clf.cfg_.n_heads = static_cast<int>(c.meta_int("tclf.n_heads"));
    clf.cfg_.n_attention_blocks = static_cast<int>(c.meta_int("tclf.n_attention_blocks"));
    clf.cfg_.mlp_layers = static_cast<int>(c.meta_int("tclf.mlp_layers"));
    clf.cfg_.embed_dim = static_cast<int>(c.meta_int("tclf.embed_dim"));
    clf.window_len_ = static_cast<int>(c.meta_int("tclf.window_len"));
    clf.params_ = detail::make_tclf_params<float>(clf.cfg_, clf.window_len_);
    clf.params_.for_each([&](const std::string& name, Mat<float>& m) {
      m = from_blob<float>(c.tensor(name));
    });
    return clf;
  }

 private:
  void train(const ClassifierSet& set, const std::array<double, kNumIntents>& class_weights,
             int epochs, std::uint64_t seed) {
    if (epochs == 0 || set.size() == 0) return;
    for (const auto& w : set.windows) {
      if (w.length() != window_len_) {
        throw std::invalid_argument("transformer clf: inconsistent window lengths");
      }
    }
    nn::Adam<float> adam(params_.param_list(), cfg_.learning_rate, 0.9, 0.999, 1e-8,
                         cfg_.grad_clip_norm);
    TClfParams<float> grads = params_;
    auto grad_list = grads.param_list();

    const auto n = set.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});

    MatF frames;
    detail::TClfCache<float> cache;
    for (int epoch = 0; epoch < epochs; ++epoch) {
      auto rng = make_rng(derive_seed(seed, "epoch", static_cast<std::uint64_t>(epoch)));
      std::shuffle(order.begin(), order.end(), rng);
      for (std::size_t start = 0; start < n; start += static_cast<std::size_t>(cfg_.batch_size)) {
        const int b = static_cast<int>(
            std::min<std::size_t>(static_cast<std::size_t>(cfg_.batch_size), n - start));
        frames.resize(static_cast<Eigen::Index>(b) * window_len_, kNumChannels);
        VecI targets(b);
        VecF weights(b);
        for (int s = 0; s < b; ++s) {
          const std::size_t idx = order[start + static_cast<std::size_t>(s)];
          frames.middleRows(static_cast<Eigen::Index>(s) * window_len_, window_len_) =
              set.normalized(idx);
          targets(s) = static_cast<int>(set.labels[idx]);
          weights(s) = static_cast<float>(class_weights[static_cast<std::size_t>(set.labels[idx])]);
        }
        MatF logits = detail::tclf_forward<float>(params_, cfg_, frames, b, window_len_, &cache);
        MatF dlogits;
        float batch_loss = weighted_ce(logits, targets, weights, &dlogits);
        if (!std::isfinite(batch_loss)) {
          throw TrainingDiverged("transformer classifier loss became non-finite");
        }
        for (auto* g : grad_list) g->setZero();
        detail::tclf_backward<float>(params_, grads, cfg_, cache, b, window_len_, dlogits);
        adam.step(grad_list);
      }
    }
  }

  static float weighted_ce(const MatF& logits, const VecI& targets, const VecF& weights,
                           MatF* dlogits) {
    const Eigen::Index n = logits.rows();
    float wsum = weights.sum();
    if (dlogits) dlogits->resize(n, logits.cols());
    float total = 0.0f;
    for (Eigen::Index i = 0; i < n; ++i) {
      float mx = logits.row(i).maxCoeff();
      auto shifted = (logits.row(i).array() - mx).eval();
      float lse = std::log(shifted.exp().sum()) + mx;
      total += weights(i) * (lse - logits(i, targets(i)));
      if (dlogits) {
        dlogits->row(i) =
            (shifted - (lse - mx)).exp().matrix() * (weights(i) / wsum);
        (*dlogits)(i, targets(i)) -= weights(i) / wsum;
      }
    }
    return total / wsum;
  }

  TransformerClfConfig cfg_;
  int window_len_ = kDefaultWindowLen;
  TClfParams<float> params_;
};

}  // namespace chatemg
