// Exact (non-approximate) t-SNE: per-point bandwidths solved by bisection to
// match the target perplexity, symmetrized affinities, and plain gradient
// descent with early exaggeration 12 for the first 250 iterations, learning
// rate 200, and momentum 0.5 switching to 0.8 at iteration 250.
#pragma once

#include <cmath>
#include <vector>

#include "chatemg/core.hpp"
#include "chatemg/rng.hpp"

namespace chatemg {

struct TsneConfig {
  double perplexity = 30.0;
  int iters = 1000;
  double learning_rate = 200.0;
  double early_exaggeration = 12.0;
  int exaggeration_iters = 250;
  std::uint64_t rng_seed = 0;
};

struct TsneResult {
  MatD points;         // n x 2
  double kl_at_switch = 0.0;  // KL(P||Q) when exaggeration ends
  double kl_final = 0.0;
};

namespace detail {

inline MatD pairwise_sq_dists(const MatD& x) {
  VecD sq = x.rowwise().squaredNorm();
  MatD d = (-2.0 * x * x.transpose());
  d.colwise() += sq;
  d.rowwise() += sq.transpose();
  d.diagonal().setZero();
  return d.cwiseMax(0.0);
}

// Conditional distribution row with bandwidth beta = 1/(2 sigma^2); returns
// the Shannon entropy in nats.
inline double p_row_entropy(const MatD& dists, Eigen::Index i, double beta, VecD& row) {
  const Eigen::Index n = dists.rows();
  double sum = 0.0;
  for (Eigen::Index j = 0; j < n; ++j) {
    row(j) = j == i ? 0.0 : std::exp(-beta * dists(i, j));
    sum += row(j);
  }
  if (sum <= 0.0) {
    row.setZero();
    return 0.0;
  }
  double entropy = 0.0;
  for (Eigen::Index j = 0; j < n; ++j) {
    row(j) /= sum;
    if (row(j) > 1e-300) entropy -= row(j) * std::log(row(j));
  }
  return entropy;
}

inline double kl_divergence(const MatD& p, const MatD& q) {
  double kl = 0.0;
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    for (Eigen::Index j = 0; j < p.cols(); ++j) {
      if (i == j || p(i, j) <= 0.0) continue;
      kl += p(i, j) * std::log(p(i, j) / q(i, j));
    }
  }
  return kl;
}

}  // namespace detail

// Embeds the rows of `samples` (n x dim) into 2-D. Deterministic per seed.
inline TsneResult tsne_embed(const MatD& samples, const TsneConfig& cfg = {}) {
  const Eigen::Index n = samples.rows();
  if (n < 3) throw std::invalid_argument("tsne_embed: need at least 3 samples");
  if (cfg.perplexity <= 0.0) throw std::invalid_argument("tsne_embed: perplexity must be > 0");
  if (cfg.iters < 1) throw std::invalid_argument("tsne_embed: iters must be >= 1");

  // A perplexity above (n-1)/3 over-constrains the bisection; clamp it.
  const double perplexity = std::min(cfg.perplexity, static_cast<double>(n - 1) / 3.0);
  const double target_entropy = std::log(std::max(perplexity, 1.0 + 1e-9));

  MatD dists = detail::pairwise_sq_dists(samples);

  // Per-point bandwidth via bisection on beta.
  MatD p_cond = MatD::Zero(n, n);
  VecD row(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    double beta = 1.0, beta_lo = 0.0, beta_hi = std::numeric_limits<double>::infinity();
    for (int it = 0; it < 50; ++it) {
      double entropy = detail::p_row_entropy(dists, i, beta, row);
      double diff = entropy - target_entropy;
      if (std::abs(diff) < 1e-7) break;
      if (diff > 0.0) {
        beta_lo = beta;
        beta = std::isinf(beta_hi) ? beta * 2.0 : 0.5 * (beta + beta_hi);
      } else {
        beta_hi = beta;
        beta = beta_lo == 0.0 ? beta / 2.0 : 0.5 * (beta + beta_lo);
      }
    }
    detail::p_row_entropy(dists, i, beta, row);
    p_cond.row(i) = row.transpose();
  }

  // Symmetrize and floor.
  MatD p = (p_cond + p_cond.transpose()) / (2.0 * static_cast<double>(n));
  p = p.cwiseMax(1e-12);
  p.diagonal().setZero();

  auto rng = make_rng(derive_seed(cfg.rng_seed, "tsne_init"));
  std::normal_distribution<double> init(0.0, 1e-4);
  MatD y(n, 2);
  for (Eigen::Index i = 0; i < n; ++i) {
    y(i, 0) = init(rng);
    y(i, 1) = init(rng);
  }

  TsneResult result;
  MatD velocity = MatD::Zero(n, 2);
  MatD gains = MatD::Ones(n, 2);
  MatD grad(n, 2);
  MatD q_num(n, n), q(n, n);

  for (int iter = 0; iter < cfg.iters; ++iter) {
    const bool exaggerated = iter < cfg.exaggeration_iters;
    const double p_scale = exaggerated ? cfg.early_exaggeration : 1.0;
    const double momentum = exaggerated ? 0.5 : 0.8;

    // Student-t affinities in the embedding.
    double q_sum = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      q_num(i, i) = 0.0;
      for (Eigen::Index j = i + 1; j < n; ++j) {
        const double dx = y(i, 0) - y(j, 0);
        const double dy = y(i, 1) - y(j, 1);
        const double w = 1.0 / (1.0 + dx * dx + dy * dy);
        q_num(i, j) = w;
        q_num(j, i) = w;
        q_sum += 2.0 * w;
      }
    }
    q = (q_num / q_sum).cwiseMax(1e-12);

    if (iter == cfg.exaggeration_iters) {
      result.kl_at_switch = detail::kl_divergence(p, q);
    }

    grad.setZero();
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = 0; j < n; ++j) {
        if (i == j) continue;
        const double coeff = 4.0 * (p_scale * p(i, j) - q(i, j)) * q_num(i, j);
        grad(i, 0) += coeff * (y(i, 0) - y(j, 0));
        grad(i, 1) += coeff * (y(i, 1) - y(j, 1));
      }
    }

    // Adaptive per-coordinate gains as in the reference implementation:
    // grow when the gradient keeps its direction against the velocity,
    // shrink when it flips.
    for (Eigen::Index i = 0; i < n; ++i) {
      for (int d = 0; d < 2; ++d) {
        const bool same_sign = (grad(i, d) > 0.0) == (velocity(i, d) < 0.0);
        gains(i, d) = same_sign ? gains(i, d) + 0.2 : gains(i, d) * 0.8;
        if (gains(i, d) < 0.01) gains(i, d) = 0.01;
      }
    }
    velocity = momentum * velocity - cfg.learning_rate * (gains.array() * grad.array()).matrix();
    y += velocity;
    y.rowwise() -= y.colwise().mean();
  }

  // Final KL with the true (unexaggerated) affinities.
  double q_sum = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    q_num(i, i) = 0.0;
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double dx = y(i, 0) - y(j, 0);
      const double dy = y(i, 1) - y(j, 1);
      const double w = 1.0 / (1.0 + dx * dx + dy * dy);
      q_num(i, j) = w;
      q_num(j, i) = w;
      q_sum += 2.0 * w;
    }
  }
  q = (q_num / q_sum).cwiseMax(1e-12);
  result.kl_final = detail::kl_divergence(p, q);
  if (cfg.iters <= cfg.exaggeration_iters) result.kl_at_switch = result.kl_final;
  result.points = std::move(y);
  return result;
}

}  // namespace chatemg
