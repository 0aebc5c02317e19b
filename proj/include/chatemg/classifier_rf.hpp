// Random forest over flattened windows. Features are quantized EMG values,
// so nodes split on 256-bin histograms of the raw integer range; candidate
// features are drawn per node (sqrt of the dimension), trees are grown on
// bootstrap samples to purity by default, and prediction is a majority vote.
#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <vector>

#include "chatemg/container.hpp"
#include "chatemg/core.hpp"
#include "chatemg/dataset.hpp"
#include "chatemg/parallel.hpp"
#include "chatemg/rng.hpp"

namespace chatemg {

struct RfConfig {
  int n_trees = 100;
  int max_depth = 0;  // 0 = grow to purity
  int min_samples_split = 2;
  std::uint64_t rng_seed = 0;

  void validate() const {
    if (n_trees < 1) throw std::invalid_argument("rf: n_trees must be >= 1");
    if (min_samples_split < 2) throw std::invalid_argument("rf: min_samples_split must be >= 2");
  }
};

constexpr int kRfBins = 256;

class RfModel {
 public:
  struct Node {
    std::int32_t feature = -1;  // -1: leaf
    std::int32_t cut = 0;       // go left when bin <= cut
    std::int32_t label = 0;
    std::int32_t left = -1;
    std::int32_t right = -1;
  };

  RfModel() = default;

  static std::uint8_t bin_value(std::uint16_t v) {
    return static_cast<std::uint8_t>((static_cast<int>(v) * kRfBins) / (kMaxValue + 1));
  }

  static RfModel fit(const RfConfig& cfg, const ClassifierSet& set,
                     const std::array<double, kNumIntents>& class_weights, int jobs = 1) {
    cfg.validate();
    if (set.size() == 0) throw std::invalid_argument("rf: empty training set");
    RfModel model;
    const auto n = static_cast<std::int64_t>(set.size());
    const Eigen::Index dim = set.windows[0].data.size();
    model.dim_ = dim;

    // Bin the whole dataset once: n x dim uint8, row-major.
    std::vector<std::uint8_t> binned(static_cast<std::size_t>(n) * static_cast<std::size_t>(dim));
    for (std::int64_t i = 0; i < n; ++i) {
      const auto& w = set.windows[static_cast<std::size_t>(i)].data;
      const std::uint16_t* src = w.data();
      std::uint8_t* dst = binned.data() + static_cast<std::size_t>(i) * static_cast<std::size_t>(dim);
      for (Eigen::Index f = 0; f < dim; ++f) dst[f] = bin_value(src[f]);
    }

    model.trees_.resize(static_cast<std::size_t>(cfg.n_trees));
    parallel_for(cfg.n_trees, jobs, [&](std::int64_t t) {
      auto rng = make_rng(derive_seed(cfg.rng_seed, "tree", static_cast<std::uint64_t>(t)));
      model.trees_[static_cast<std::size_t>(t)] =
          grow_tree(cfg, binned.data(), dim, set, class_weights, rng);
    });
    return model;
  }

  Intent predict_one(const EmgWindow& window) const {
    if (window.data.size() != dim_) throw std::invalid_argument("rf: feature dimension mismatch");
    std::array<int, kNumIntents> votes{};
    const std::uint16_t* features = window.data.data();
    for (const auto& tree : trees_) {
      int node = 0;
      while (tree[static_cast<std::size_t>(node)].feature >= 0) {
        const auto& nd = tree[static_cast<std::size_t>(node)];
        const std::uint8_t bin = bin_value(features[nd.feature]);
        node = bin <= nd.cut ? nd.left : nd.right;
      }
      votes[static_cast<std::size_t>(tree[static_cast<std::size_t>(node)].label)]++;
    }
    int best = 0;
    for (int c = 1; c < kNumIntents; ++c) {
      if (votes[static_cast<std::size_t>(c)] > votes[static_cast<std::size_t>(best)]) best = c;
    }
    return static_cast<Intent>(best);
  }

  std::size_t tree_count() const { return trees_.size(); }

  void save_into(Container& c) const {
    c.set_meta_int("rf.dim", dim_);
    c.set_meta_int("rf.n_trees", static_cast<std::int64_t>(trees_.size()));
    for (std::size_t t = 0; t < trees_.size(); ++t) {
      const auto& tree = trees_[t];
      Mat<float> enc(static_cast<Eigen::Index>(tree.size()), 5);
      for (std::size_t i = 0; i < tree.size(); ++i) {
        enc(static_cast<Eigen::Index>(i), 0) = static_cast<float>(tree[i].feature);
        enc(static_cast<Eigen::Index>(i), 1) = static_cast<float>(tree[i].cut);
        enc(static_cast<Eigen::Index>(i), 2) = static_cast<float>(tree[i].label);
        enc(static_cast<Eigen::Index>(i), 3) = static_cast<float>(tree[i].left);
        enc(static_cast<Eigen::Index>(i), 4) = static_cast<float>(tree[i].right);
      }
      c.tensors["rf.tree" + std::to_string(t)] = to_blob(enc);
    }
  }

  static RfModel load_from(const Container& c) {
    RfModel m;
    m.dim_ = c.meta_int("rf.dim");
    const auto n_trees = static_cast<std::size_t>(c.meta_int("rf.n_trees"));
    m.trees_.resize(n_trees);
    for (std::size_t t = 0; t < n_trees; ++t) {
      Mat<float> enc = from_blob<float>(c.tensor("rf.tree" + std::to_string(t)));
      auto& tree = m.trees_[t];
      tree.resize(static_cast<std::size_t>(enc.rows()));
      for (Eigen::Index i = 0; i < enc.rows(); ++i) {
        tree[static_cast<std::size_t>(i)] = {
            static_cast<std::int32_t>(enc(i, 0)), static_cast<std::int32_t>(enc(i, 1)),
            static_cast<std::int32_t>(enc(i, 2)), static_cast<std::int32_t>(enc(i, 3)),
            static_cast<std::int32_t>(enc(i, 4))};
      }
    }
    return m;
  }

 private:
  using Tree = std::vector<Node>;

  static Tree grow_tree(const RfConfig& cfg, const std::uint8_t* binned, Eigen::Index dim,
                        const ClassifierSet& set, const std::array<double, kNumIntents>& weights,
                        RngEngine& rng) {
    const auto n = static_cast<std::int64_t>(set.size());
    std::vector<std::int32_t> samples(static_cast<std::size_t>(n));
    std::uniform_int_distribution<std::int64_t> pick(0, n - 1);
    for (auto& s : samples) s = static_cast<std::int32_t>(pick(rng));

    const int mtry = std::max(1, static_cast<int>(std::sqrt(static_cast<double>(dim))));

    Tree tree;
    struct Task {
      std::int32_t node;
      std::int32_t begin, end;  // range in `samples`
      int depth;
    };
    std::vector<Task> stack;
    tree.push_back(Node{});
    stack.push_back({0, 0, static_cast<std::int32_t>(samples.size()), 0});

    std::vector<int> candidate(static_cast<std::size_t>(mtry));
    std::array<double, static_cast<std::size_t>(kRfBins) * kNumIntents> hist{};
    std::vector<std::uint8_t> touched;
    touched.reserve(kRfBins);

    while (!stack.empty()) {
      Task task = stack.back();
      stack.pop_back();
      const std::int32_t count = task.end - task.begin;

      std::array<double, kNumIntents> class_w{};
      std::array<std::int32_t, kNumIntents> class_n{};
      for (std::int32_t i = task.begin; i < task.end; ++i) {
        const auto cls = static_cast<std::size_t>(
            set.labels[static_cast<std::size_t>(samples[static_cast<std::size_t>(i)])]);
        class_w[cls] += weights[cls];
        class_n[cls]++;
      }
      int present = 0;
      for (auto cn : class_n) present += cn > 0 ? 1 : 0;

      auto make_leaf = [&]() {
        int best = 0;
        for (int c = 1; c < kNumIntents; ++c) {
          if (class_w[static_cast<std::size_t>(c)] > class_w[static_cast<std::size_t>(best)]) {
            best = c;
          }
        }
        tree[static_cast<std::size_t>(task.node)] = Node{-1, 0, best, -1, -1};
      };

      if (present <= 1 || count < cfg.min_samples_split ||
          (cfg.max_depth > 0 && task.depth >= cfg.max_depth)) {
        make_leaf();
        continue;
      }

      // Draw mtry distinct candidate features.
      {
        std::uniform_int_distribution<Eigen::Index> fpick(0, dim - 1);
        std::size_t got = 0;
        while (got < candidate.size()) {
          int f = static_cast<int>(fpick(rng));
          bool dup = false;
          for (std::size_t k = 0; k < got; ++k) {
            if (candidate[k] == f) {
              dup = true;
              break;
            }
          }
          if (!dup) candidate[got++] = f;
        }
      }

      double total_w = 0.0;
      double total_sq = 0.0;
      for (int c = 0; c < kNumIntents; ++c) {
        total_w += class_w[static_cast<std::size_t>(c)];
        total_sq += class_w[static_cast<std::size_t>(c)] * class_w[static_cast<std::size_t>(c)];
      }
      const double parent_impurity = total_w - total_sq / total_w;  // Gini * total_w

      double best_gain = 1e-12;
      int best_feature = -1;
      int best_cut = 0;
      for (int fidx : candidate) {
        // Class-weighted histogram over this node's samples.
        for (std::uint8_t b : touched) {
          for (int c = 0; c < kNumIntents; ++c) hist[static_cast<std::size_t>(b) * kNumIntents + c] = 0.0;
        }
        touched.clear();
        for (std::int32_t i = task.begin; i < task.end; ++i) {
          const auto row = static_cast<std::size_t>(samples[static_cast<std::size_t>(i)]);
          const std::uint8_t b = binned[row * static_cast<std::size_t>(dim) + static_cast<std::size_t>(fidx)];
          const auto cls = static_cast<std::size_t>(set.labels[row]);
          if (hist[static_cast<std::size_t>(b) * kNumIntents] == 0.0 &&
              hist[static_cast<std::size_t>(b) * kNumIntents + 1] == 0.0 &&
              hist[static_cast<std::size_t>(b) * kNumIntents + 2] == 0.0) {
            touched.push_back(b);
          }
          hist[static_cast<std::size_t>(b) * kNumIntents + cls] += weights[cls];
        }
        // Prefix scan over bins in order.
        std::array<double, kNumIntents> left{};
        double left_w = 0.0;
        for (int b = 0; b + 1 < kRfBins; ++b) {
          bool any = false;
          for (int c = 0; c < kNumIntents; ++c) {
            const double h = hist[static_cast<std::size_t>(b) * kNumIntents + c];
            if (h != 0.0) {
              left[static_cast<std::size_t>(c)] += h;
              left_w += h;
              any = true;
            }
          }
          if (!any && b > 0) continue;
          if (left_w <= 0.0 || left_w >= total_w) continue;
          double left_sq = 0.0, right_sq = 0.0;
          for (int c = 0; c < kNumIntents; ++c) {
            const double lw = left[static_cast<std::size_t>(c)];
            const double rw = class_w[static_cast<std::size_t>(c)] - lw;
            left_sq += lw * lw;
            right_sq += rw * rw;
          }
          const double right_w = total_w - left_w;
          const double child = (left_w - left_sq / left_w) + (right_w - right_sq / right_w);
          const double gain = parent_impurity - child;
          if (gain > best_gain) {
            best_gain = gain;
            best_feature = fidx;
            best_cut = b;
          }
        }
      }

      if (best_feature < 0) {
        make_leaf();
        continue;
      }

      // Partition samples in place: left gets bin <= cut.
      std::int32_t lo = task.begin, hi = task.end - 1;
      while (lo <= hi) {
        const auto row = static_cast<std::size_t>(samples[static_cast<std::size_t>(lo)]);
        const std::uint8_t b =
            binned[row * static_cast<std::size_t>(dim) + static_cast<std::size_t>(best_feature)];
        if (b <= best_cut) {
          ++lo;
        } else {
          std::swap(samples[static_cast<std::size_t>(lo)], samples[static_cast<std::size_t>(hi)]);
          --hi;
        }
      }
      const std::int32_t mid = lo;
      if (mid == task.begin || mid == task.end) {
        make_leaf();
        continue;
      }

      const auto left_id = static_cast<std::int32_t>(tree.size());
      tree.push_back(Node{});
      const auto right_id = static_cast<std::int32_t>(tree.size());
      tree.push_back(Node{});
      tree[static_cast<std::size_t>(task.node)] =
          Node{best_feature, best_cut, 0, left_id, right_id};
      stack.push_back({right_id, mid, task.end, task.depth + 1});
      stack.push_back({left_id, task.begin, mid, task.depth + 1});
    }
    return tree;
  }

  Eigen::Index dim_ = 0;
  std::vector<Tree> trees_;
};

}  // namespace chatemg
