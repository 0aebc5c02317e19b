#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "chatemg/tsne.hpp"

using namespace chatemg;

namespace {

// Two Gaussian clusters in 16-D with the given center separation (in units of
// the within-cluster sigma).
MatD two_clusters(int per_cluster, double separation, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  const int dim = 16;
  MatD x(2 * per_cluster, dim);
  for (int i = 0; i < 2 * per_cluster; ++i) {
    const double offset = i < per_cluster ? 0.0 : separation;
    for (int d = 0; d < dim; ++d) x(i, d) = noise(rng) + (d == 0 ? offset : 0.0);
  }
  return x;
}

double centroid_agreement(const MatD& points, int per_cluster) {
  Eigen::RowVector2d c0 = points.topRows(per_cluster).colwise().mean();
  Eigen::RowVector2d c1 = points.bottomRows(per_cluster).colwise().mean();
  int correct = 0;
  for (Eigen::Index i = 0; i < points.rows(); ++i) {
    const double d0 = (points.row(i) - c0).squaredNorm();
    const double d1 = (points.row(i) - c1).squaredNorm();
    const bool in_first = i < per_cluster;
    if ((d0 < d1) == in_first) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(points.rows());
}

}  // namespace

TEST_CASE("tsne separates well-separated clusters", "[tsne]") {
  const int per_cluster = 40;
  MatD x = two_clusters(per_cluster, 10.0, 3);
  TsneConfig cfg;
  cfg.perplexity = 10.0;
  cfg.iters = 500;
  cfg.rng_seed = 4;
  TsneResult result = tsne_embed(x, cfg);

  REQUIRE(result.points.rows() == x.rows());
  CHECK(result.points.allFinite());
  CHECK(centroid_agreement(result.points, per_cluster) >= 0.95);
  CHECK(result.kl_final < result.kl_at_switch);
}

TEST_CASE("tsne is deterministic per seed", "[tsne]") {
  MatD x = two_clusters(15, 4.0, 8);
  TsneConfig cfg;
  cfg.perplexity = 8.0;
  cfg.iters = 260;
  cfg.rng_seed = 9;
  TsneResult a = tsne_embed(x, cfg);
  TsneResult b = tsne_embed(x, cfg);
  CHECK(a.points == b.points);
  cfg.rng_seed = 10;
  TsneResult c = tsne_embed(x, cfg);
  CHECK(a.points != c.points);
}

TEST_CASE("tsne maps duplicate points close together", "[tsne]") {
  std::mt19937_64 rng(21);
  std::normal_distribution<double> noise(0.0, 1.0);
  MatD x(30, 8);
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    for (Eigen::Index d = 0; d < x.cols(); ++d) x(i, d) = noise(rng);
  }
  x.row(7) = x.row(21);  // exact duplicate pair

  TsneConfig cfg;
  cfg.perplexity = 6.0;
  cfg.iters = 400;
  cfg.rng_seed = 2;
  TsneResult result = tsne_embed(x, cfg);

  std::vector<double> pair_dists;
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    for (Eigen::Index j = i + 1; j < x.rows(); ++j) {
      pair_dists.push_back((result.points.row(i) - result.points.row(j)).norm());
    }
  }
  std::sort(pair_dists.begin(), pair_dists.end());
  const double dup = (result.points.row(7) - result.points.row(21)).norm();
  const double p10 = pair_dists[pair_dists.size() / 10];
  CHECK(dup <= p10);
}

TEST_CASE("tsne validates inputs", "[tsne]") {
  MatD tiny(2, 4);
  tiny.setZero();
  CHECK_THROWS_AS(tsne_embed(tiny), std::invalid_argument);

  MatD ok(5, 4);
  ok.setRandom();
  TsneConfig cfg;
  cfg.iters = 0;
  CHECK_THROWS_AS(tsne_embed(ok, cfg), std::invalid_argument);
  cfg.iters = 10;
  cfg.perplexity = -1.0;
  CHECK_THROWS_AS(tsne_embed(ok, cfg), std::invalid_argument);

  // Output count == input count even when perplexity must be clamped.
  cfg.perplexity = 50.0;
  TsneResult r = tsne_embed(ok, cfg);
  CHECK(r.points.rows() == 5);
  CHECK(r.points.allFinite());
}
