#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <random>
#include <vector>

#include "chatemg/stats.hpp"

using namespace chatemg;

namespace {

// Brute-force oracle: enumerate every C(N, n) assignment of ranks to x and
// count assignments whose rank sum strictly exceeds the observed one, with
// the same 1/C floor the implementation defines.
double wilcoxon_oracle(const std::vector<double>& x, const std::vector<double>& y) {
  const int n = static_cast<int>(x.size());
  const int total = n + static_cast<int>(y.size());
  std::vector<double> all(x);
  all.insert(all.end(), y.begin(), y.end());
  std::vector<int> order(static_cast<std::size_t>(total));
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    return all[static_cast<std::size_t>(a)] < all[static_cast<std::size_t>(b)];
  });
  // rank of observation index i (1-based, no ties by construction)
  std::vector<int> rank(static_cast<std::size_t>(total));
  for (int r = 0; r < total; ++r) rank[static_cast<std::size_t>(order[static_cast<std::size_t>(r)])] = r + 1;
  long long w_obs = 0;
  for (int i = 0; i < n; ++i) w_obs += rank[static_cast<std::size_t>(i)];

  // every subset of size n from ranks 1..total
  std::vector<int> pick(static_cast<std::size_t>(n));
  std::iota(pick.begin(), pick.end(), 1);
  long long count_gt = 0, count_all = 0;
  while (true) {
    long long s = 0;
    for (int v : pick) s += v;
    ++count_all;
    if (s > w_obs) ++count_gt;
    int i = n - 1;
    while (i >= 0 && pick[static_cast<std::size_t>(i)] == total - (n - 1 - i)) --i;
    if (i < 0) break;
    ++pick[static_cast<std::size_t>(i)];
    for (int j = i + 1; j < n; ++j) pick[static_cast<std::size_t>(j)] = pick[static_cast<std::size_t>(j - 1)] + 1;
  }
  double p = static_cast<double>(count_gt) / static_cast<double>(count_all);
  return std::max(p, 1.0 / static_cast<double>(count_all));
}

}  // namespace

TEST_CASE("wilcoxon pins the fully separated case to 0.95", "[stats]") {
  double p = wilcoxon_rank_sum_one_sided({1, 2, 3}, {4, 5, 6});
  CHECK(p == Catch::Approx(0.95).margin(1e-12));
  // And the mirrored case is maximally significant for "x larger".
  double p2 = wilcoxon_rank_sum_one_sided({4, 5, 6}, {1, 2, 3});
  CHECK(p2 == Catch::Approx(1.0 / 20.0).margin(1e-12));
  CHECK(p2 > 0.0);
}

TEST_CASE("wilcoxon identical single values gives no evidence", "[stats]") {
  double p = wilcoxon_rank_sum_one_sided({5.0}, {5.0});
  CHECK(p >= 0.5);
}

TEST_CASE("wilcoxon exact path matches brute-force enumeration", "[stats]") {
  std::mt19937_64 rng(77);
  std::uniform_real_distribution<double> dist(-10.0, 10.0);
  std::uniform_int_distribution<int> size_dist(1, 6);
  for (int trial = 0; trial < 50; ++trial) {
    const int n = size_dist(rng), m = size_dist(rng);
    std::vector<double> x, y;
    // draw until tie-free
    while (true) {
      x.clear();
      y.clear();
      for (int i = 0; i < n; ++i) x.push_back(dist(rng));
      for (int i = 0; i < m; ++i) y.push_back(dist(rng));
      std::vector<double> all(x);
      all.insert(all.end(), y.begin(), y.end());
      std::sort(all.begin(), all.end());
      if (std::adjacent_find(all.begin(), all.end()) == all.end()) break;
    }
    double got = wilcoxon_rank_sum_one_sided(x, y);
    double want = wilcoxon_oracle(x, y);
    REQUIRE(got == want);  // both are exact integer ratios
  }
}

TEST_CASE("wilcoxon exact and normal approximation agree on 6+6", "[stats]") {
  std::mt19937_64 rng(123);
  std::normal_distribution<double> dist(0.0, 1.0);
  for (int trial = 0; trial < 60; ++trial) {
    std::vector<double> x, y;
    for (int i = 0; i < 6; ++i) x.push_back(dist(rng));
    for (int i = 0; i < 6; ++i) y.push_back(dist(rng) + 0.3);
    detail::RankInfo info = detail::midranks(x, y);
    if (info.has_ties) continue;
    double exact = detail::wilcoxon_exact_greater(6, 6, static_cast<long long>(info.rank_sum_x));
    double approx = detail::wilcoxon_normal_greater(info.rank_sum_x, 6, 6, info.tie_term);
    REQUIRE(std::abs(exact - approx) < 0.02);
  }
}

TEST_CASE("wilcoxon large samples use the tie-corrected approximation", "[stats]") {
  // A clear shift must be significant; the reversed direction must not be.
  std::mt19937_64 rng(5);
  std::normal_distribution<double> dist(0.0, 1.0);
  std::vector<double> lo, hi;
  for (int i = 0; i < 30; ++i) {
    lo.push_back(dist(rng));
    hi.push_back(dist(rng) + 2.0);
  }
  CHECK(wilcoxon_rank_sum_one_sided(hi, lo) < 1e-4);
  CHECK(wilcoxon_rank_sum_one_sided(lo, hi) > 0.9);

  // Heavily tied data still produces a probability in (0, 1].
  std::vector<double> a(20, 1.0), b(20, 1.0);
  a[0] = 2.0;
  double p = wilcoxon_rank_sum_one_sided(a, b);
  CHECK(p > 0.0);
  CHECK(p <= 1.0);

  CHECK_THROWS_AS(wilcoxon_rank_sum_one_sided({}, {1.0}), std::invalid_argument);
  CHECK_THROWS_AS(wilcoxon_rank_sum_one_sided({1.0}, {}), std::invalid_argument);
}

TEST_CASE("nrmse on identical windows is zero and offsets scale linearly", "[stats]") {
  U16Mat real(256, kNumChannels);
  std::mt19937_64 rng(9);
  std::uniform_int_distribution<int> dist(0, 800);
  for (Eigen::Index i = 0; i < real.size(); ++i) real.data()[i] = static_cast<std::uint16_t>(dist(rng));

  CHECK(nrmse(real, real, 150) == 0.0);

  U16Mat shifted = real;
  for (Eigen::Index t = 150; t < 256; ++t) {
    for (int c = 0; c < kNumChannels; ++c) shifted(t, c) = static_cast<std::uint16_t>(real(t, c) + 100);
  }
  CHECK(nrmse(shifted, real, 150) == Catch::Approx(0.1).margin(1e-12));

  // Prompt-region differences are excluded by construction.
  U16Mat prompt_noise = real;
  for (Eigen::Index t = 0; t < 150; ++t) prompt_noise(t, 0) = 0;
  CHECK(nrmse(prompt_noise, real, 150) == 0.0);

  U16Mat wrong(100, kNumChannels);
  CHECK_THROWS_AS(nrmse(wrong, real, 50), std::invalid_argument);
  CHECK_THROWS_AS(nrmse(real, real, 256), std::invalid_argument);
}
