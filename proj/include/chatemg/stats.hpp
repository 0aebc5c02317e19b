// Nonparametric comparison and generation-fidelity metrics: the one-sided
// Wilcoxon rank-sum test (exact null enumeration for small tie-free samples,
// normal approximation with tie and continuity corrections otherwise) and
// range-normalized RMSE over the generated region of a window.
#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "chatemg/core.hpp"

namespace chatemg {

namespace detail {

struct RankInfo {
  double rank_sum_x = 0.0;  // midrank sum of the first sample
  double tie_term = 0.0;    // sum over tie groups of t^3 - t
  bool has_ties = false;
};

inline RankInfo midranks(const std::vector<double>& x, const std::vector<double>& y) {
  struct Obs {
    double value;
    bool from_x;
  };
  std::vector<Obs> all;
  all.reserve(x.size() + y.size());
  for (double v : x) all.push_back({v, true});
  for (double v : y) all.push_back({v, false});
  std::sort(all.begin(), all.end(), [](const Obs& a, const Obs& b) { return a.value < b.value; });

  RankInfo info;
  std::size_t i = 0;
  while (i < all.size()) {
    std::size_t j = i;
    while (j < all.size() && all[j].value == all[i].value) ++j;
    const double t = static_cast<double>(j - i);
    const double mid = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j));
    for (std::size_t k = i; k < j; ++k) {
      if (all[k].from_x) info.rank_sum_x += mid;
    }
    if (t > 1.0) {
      info.has_ties = true;
      info.tie_term += t * t * t - t;
    }
    i = j;
  }
  return info;
}

// Number of ways to choose `n` distinct ranks from 1..N with each possible
// rank sum; classic subset-sum DP with exact integer counts.
inline std::vector<std::vector<long long>> rank_sum_counts(int total, int n) {
  const int max_sum = n * total;  // safe upper bound
  std::vector<std::vector<long long>> ways(
      static_cast<std::size_t>(n) + 1, std::vector<long long>(static_cast<std::size_t>(max_sum) + 1, 0));
  ways[0][0] = 1;
  for (int rank = 1; rank <= total; ++rank) {
    for (int j = std::min(rank, n); j >= 1; --j) {
      for (int s = max_sum; s >= rank; --s) {
        ways[static_cast<std::size_t>(j)][static_cast<std::size_t>(s)] +=
            ways[static_cast<std::size_t>(j - 1)][static_cast<std::size_t>(s - rank)];
      }
    }
  }
  return ways;
}

// P-value for H1 "x tends larger" via exact enumeration over all C(N, n)
// assignments of the tie-free ranks. Defined as the strict upper tail
// P(W > w_obs), floored at 1/C(N, n) (the probability of the extreme
// assignment itself) so the result stays in (0, 1].
inline double wilcoxon_exact_greater(int n, int m, long long w_obs) {
  const int total = n + m;
  auto ways = rank_sum_counts(total, n);
  const auto& row = ways[static_cast<std::size_t>(n)];
  long long count_gt = 0, count_all = 0;
  for (std::size_t s = 0; s < row.size(); ++s) {
    count_all += row[s];
    if (static_cast<long long>(s) > w_obs) count_gt += row[s];
  }
  double p = static_cast<double>(count_gt) / static_cast<double>(count_all);
  double floor = 1.0 / static_cast<double>(count_all);
  return std::max(p, floor);
}

// Upper-tail normal probability.
inline double normal_sf(double z) { return 0.5 * std::erfc(z / std::sqrt(2.0)); }

// Approximates the same strict upper tail P(W > w) the exact path computes,
// hence the +0.5 continuity correction (P(W > w) = P(W >= w + 1)).
inline double wilcoxon_normal_greater(double rank_sum_x, int n, int m, double tie_term) {
  const double nn = static_cast<double>(n), mm = static_cast<double>(m);
  const double total = nn + mm;
  const double mu = nn * (total + 1.0) / 2.0;
  double var = nn * mm / 12.0 * ((total + 1.0) - tie_term / (total * (total - 1.0)));
  if (var <= 0.0) return 0.5;  // every observation tied: no evidence either way
  const double z = (rank_sum_x + 0.5 - mu) / std::sqrt(var);
  return normal_sf(z);
}

}  // namespace detail

// One-sided Wilcoxon rank-sum test of H1: "values of x tend to be larger than
// values of y". Small tie-free samples use the exact null distribution;
// otherwise the normal approximation with tie and continuity corrections.
inline double wilcoxon_rank_sum_one_sided(const std::vector<double>& x,
                                          const std::vector<double>& y) {
  if (x.empty() || y.empty()) {
    throw std::invalid_argument("wilcoxon_rank_sum_one_sided: samples must be non-empty");
  }
  for (double v : x) {
    if (!std::isfinite(v)) throw std::invalid_argument("wilcoxon: non-finite sample value");
  }
  for (double v : y) {
    if (!std::isfinite(v)) throw std::invalid_argument("wilcoxon: non-finite sample value");
  }
  const int n = static_cast<int>(x.size());
  const int m = static_cast<int>(y.size());
  detail::RankInfo info = detail::midranks(x, y);
  if (n + m <= 12 && !info.has_ties) {
    return detail::wilcoxon_exact_greater(n, m, static_cast<long long>(std::llround(info.rank_sum_x)));
  }
  return detail::wilcoxon_normal_greater(info.rank_sum_x, n, m, info.tie_term);
}

// RMSE between the generated regions (rows prompt_len..T-1, all channels),
// normalized by the quantization range. Prompt rows are identical by
// construction, so they are excluded.
inline double nrmse(const U16Mat& synthetic, const U16Mat& real, int prompt_len = kDefaultPromptLen) {
  if (synthetic.rows() != real.rows() || synthetic.cols() != real.cols()) {
    throw std::invalid_argument("nrmse: shape mismatch");
  }
  if (prompt_len < 0 || prompt_len >= synthetic.rows()) {
    throw std::invalid_argument("nrmse: prompt_len must be within the window");
  }
  const Eigen::Index rows = synthetic.rows() - prompt_len;
  double sq = 0.0;
  for (Eigen::Index t = prompt_len; t < synthetic.rows(); ++t) {
    for (int c = 0; c < kNumChannels; ++c) {
      const double d = static_cast<double>(synthetic(t, c)) - static_cast<double>(real(t, c));
      sq += d * d;
    }
  }
  const double mse = sq / (static_cast<double>(rows) * kNumChannels);
  return std::sqrt(mse) / static_cast<double>(kMaxValue);
}

}  // namespace chatemg
