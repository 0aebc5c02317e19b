// Shrinkage-regularized linear discriminant analysis on flattened windows.
// The support sets are far smaller than the 2048-dim features, so the pooled
// covariance is singular without shrinkage toward a scaled identity.
//
// Fitting goes through additive sufficient statistics (per-class counts and
// sums plus one total scatter matrix), so unions of datasets can be fit
// without revisiting earlier samples.
#pragma once

#include <array>
#include <cmath>

#include "chatemg/container.hpp"
#include "chatemg/core.hpp"
#include "chatemg/dataset.hpp"

namespace chatemg {

struct LdaConfig {
  double shrinkage = 0.1;  // lambda in [0, 1]

  void validate() const {
    if (shrinkage < 0.0 || shrinkage > 1.0) {
      throw std::invalid_argument("lda shrinkage must be in [0, 1]");
    }
  }
};

struct LdaStats {
  Eigen::Index dim = 0;
  std::array<long long, kNumIntents> counts{};
  std::array<VecD, kNumIntents> sums;
  MatD xtx;  // total scatter, sum over all samples of x x^T

  void init(Eigen::Index d) {
    dim = d;
    for (auto& s : sums) s = VecD::Zero(d);
    xtx = MatD::Zero(d, d);
    counts.fill(0);
  }

  void add(const ClassifierSet& set) {
    if (set.size() == 0) return;
    const Eigen::Index d = set.flattened(0).size();
    if (dim == 0) init(d);
    if (d != dim) throw std::invalid_argument("lda: inconsistent feature dimension");
    // Accumulate the scatter in chunks via one rank-k update per chunk.
    const std::size_t chunk = 256;
    MatD buf;
    for (std::size_t start = 0; start < set.size(); start += chunk) {
      const std::size_t count = std::min(chunk, set.size() - start);
      buf.resize(static_cast<Eigen::Index>(count), dim);
      for (std::size_t i = 0; i < count; ++i) {
        VecD x = set.flattened(start + i).cast<double>();
        buf.row(static_cast<Eigen::Index>(i)) = x.transpose();
        const auto cls = static_cast<std::size_t>(set.labels[start + i]);
        sums[cls] += x;
        counts[cls]++;
      }
      xtx.selfadjointView<Eigen::Lower>().rankUpdate(buf.transpose(), 1.0);
    }
  }
};

class LdaModel {
 public:
  LdaModel() = default;

  static LdaModel fit(const LdaConfig& cfg, const LdaStats& stats) {
    cfg.validate();
    LdaModel model;
    model.dim_ = stats.dim;
    long long total = 0;
    int present = 0;
    for (auto c : stats.counts) {
      total += c;
      if (c > 0) ++present;
    }
    if (present < 2) {
      throw DegenerateTrainingSet("lda requires at least 2 classes present, got " +
                                  std::to_string(present));
    }
    const Eigen::Index d = stats.dim;

    MatD means = MatD::Zero(d, kNumIntents);
    for (int c = 0; c < kNumIntents; ++c) {
      const long long nc = stats.counts[static_cast<std::size_t>(c)];
      if (nc > 0) {
        means.col(c) = stats.sums[static_cast<std::size_t>(c)] / static_cast<double>(nc);
      }
    }

    MatD sw = MatD(stats.xtx.selfadjointView<Eigen::Lower>());
    for (int c = 0; c < kNumIntents; ++c) {
      const double nc = static_cast<double>(stats.counts[static_cast<std::size_t>(c)]);
      if (nc > 0) sw.noalias() -= nc * (means.col(c) * means.col(c).transpose());
    }
    const double denom = std::max<double>(1.0, static_cast<double>(total - present));
    MatD cov = sw / denom;

    const double lambda = cfg.shrinkage;
    double mean_var = cov.trace() / static_cast<double>(d);
    if (mean_var <= 0.0) mean_var = 1e-6;
    MatD shrunk = (1.0 - lambda) * cov;
    shrunk.diagonal().array() += lambda * mean_var;
    // Diagonal floor keeps the factorization well-posed even at lambda = 0.
    shrunk.diagonal().array() += 1e-9 * mean_var;

    Eigen::LLT<MatD> llt(shrunk);
    if (llt.info() != Eigen::Success) {
      throw NumericError("lda: covariance factorization failed");
    }
    MatD w = llt.solve(means);

    model.coef_ = w.cast<float>();
    for (int c = 0; c < kNumIntents; ++c) {
      const long long nc = stats.counts[static_cast<std::size_t>(c)];
      model.present_[static_cast<std::size_t>(c)] = nc > 0;
      if (nc > 0) {
        const double quad = means.col(c).dot(w.col(c));
        const double prior = std::log(static_cast<double>(nc) / static_cast<double>(total));
        model.intercept_[static_cast<std::size_t>(c)] = static_cast<float>(-0.5 * quad + prior);
      } else {
        model.intercept_[static_cast<std::size_t>(c)] = 0.0f;
      }
    }
    return model;
  }

  static LdaModel fit(const LdaConfig& cfg, const ClassifierSet& set) {
    LdaStats stats;
    stats.add(set);
    return fit(cfg, stats);
  }

  Intent predict_one(const VecF& x) const {
    if (x.size() != dim_) throw std::invalid_argument("lda: feature dimension mismatch");
    VecF scores = coef_.transpose() * x;
    int best = -1;
    float best_score = 0.0f;
    for (int c = 0; c < kNumIntents; ++c) {
      if (!present_[static_cast<std::size_t>(c)]) continue;
      const float s = scores(c) + intercept_[static_cast<std::size_t>(c)];
      if (best < 0 || s > best_score) {
        best = c;
        best_score = s;
      }
    }
    return static_cast<Intent>(best);
  }

  Eigen::Index dim() const { return dim_; }

  void save_into(Container& c) const {
    c.tensors["lda.coef"] = to_blob(Mat<float>(coef_));
    Mat<float> extra(2, kNumIntents);
    for (int i = 0; i < kNumIntents; ++i) {
      extra(0, i) = intercept_[static_cast<std::size_t>(i)];
      extra(1, i) = present_[static_cast<std::size_t>(i)] ? 1.0f : 0.0f;
    }
    c.tensors["lda.extra"] = to_blob(extra);
  }

  static LdaModel load_from(const Container& c) {
    LdaModel m;
    m.coef_ = from_blob<float>(c.tensor("lda.coef"));
    m.dim_ = m.coef_.rows();
    Mat<float> extra = from_blob<float>(c.tensor("lda.extra"));
    for (int i = 0; i < kNumIntents; ++i) {
      m.intercept_[static_cast<std::size_t>(i)] = extra(0, i);
      m.present_[static_cast<std::size_t>(i)] = extra(1, i) != 0.0f;
    }
    return m;
  }

 private:
  Eigen::Index dim_ = 0;
  MatF coef_;  // d x 3
  std::array<float, kNumIntents> intercept_{};
  std::array<bool, kNumIntents> present_{};
};

}  // namespace chatemg
