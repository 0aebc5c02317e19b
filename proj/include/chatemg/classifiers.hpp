// Unified surface over the three intent classifiers: fit, predict, accuracy,
// fine-tune, and versioned save/load. LDA and RF consume flattened windows;
// the transformer consumes the 256 x 8 sequence. "Fine-tune" means continued
// gradient training for the transformer and retraining on offline + support
// for LDA/RF, which have no gradient path.
#pragma once

#include <optional>
#include <variant>

#include "chatemg/classifier_lda.hpp"
#include "chatemg/classifier_rf.hpp"
#include "chatemg/classifier_transformer.hpp"
#include "chatemg/core.hpp"
#include "chatemg/dataset.hpp"

namespace chatemg {

enum class ClassifierKind : int { lda = 0, rf = 1, transformer = 2 };

inline const char* to_string(ClassifierKind kind) {
  switch (kind) {
    case ClassifierKind::lda: return "lda";
    case ClassifierKind::rf: return "rf";
    case ClassifierKind::transformer: return "transformer";
  }
  throw std::invalid_argument("unknown classifier kind");
}

inline ClassifierKind classifier_kind_from_string(const std::string& s) {
  if (s == "lda") return ClassifierKind::lda;
  if (s == "rf") return ClassifierKind::rf;
  if (s == "transformer") return ClassifierKind::transformer;
  throw std::invalid_argument("unknown classifier kind: '" + s + "'");
}

struct ClfConfig {
  ClassifierKind kind = ClassifierKind::lda;
  LdaConfig lda;
  RfConfig rf;
  TransformerClfConfig transformer;
  bool class_weighting = false;  // inverse-frequency weights; off by default
  int jobs = 1;
};

namespace detail {

inline std::array<double, kNumIntents> class_weights_for(const ClassifierSet& set,
                                                         bool weighting) {
  std::array<double, kNumIntents> w;
  w.fill(1.0);
  if (!weighting || set.size() == 0) return w;
  std::array<long long, kNumIntents> counts{};
  for (Intent y : set.labels) counts[static_cast<std::size_t>(y)]++;
  for (int c = 0; c < kNumIntents; ++c) {
    if (counts[static_cast<std::size_t>(c)] > 0) {
      w[static_cast<std::size_t>(c)] = static_cast<double>(set.size()) /
                                       (static_cast<double>(kNumIntents) *
                                        static_cast<double>(counts[static_cast<std::size_t>(c)]));
    }
  }
  return w;
}

}  // namespace detail

class FittedClassifier {
 public:
  FittedClassifier() = default;

  static FittedClassifier fit(const ClfConfig& cfg, const ClassifierSet& set) {
    if (set.size() == 0) throw std::invalid_argument("fit: empty training set");
    auto weights = detail::class_weights_for(set, cfg.class_weighting);
    FittedClassifier clf;
    clf.kind_ = cfg.kind;
    switch (cfg.kind) {
      case ClassifierKind::lda:
        clf.state_ = LdaModel::fit(cfg.lda, set);
        break;
      case ClassifierKind::rf:
        clf.state_ = RfModel::fit(cfg.rf, set, weights, cfg.jobs);
        break;
      case ClassifierKind::transformer:
        clf.state_ = TransformerClassifier::fit(cfg.transformer, set, weights);
        break;
    }
    return clf;
  }

  static FittedClassifier wrap(LdaModel model) {
    FittedClassifier clf;
    clf.kind_ = ClassifierKind::lda;
    clf.state_ = std::move(model);
    return clf;
  }

  ClassifierKind kind() const { return kind_; }

  Intent predict_one(const EmgWindow& window) const {
    if (std::holds_alternative<LdaModel>(state_)) {
      MatF normed = normalize_for_classifier(window);
      Eigen::Map<VecF> flat(normed.data(), normed.size());
      return std::get<LdaModel>(state_).predict_one(flat);
    }
    if (std::holds_alternative<RfModel>(state_)) {
      return std::get<RfModel>(state_).predict_one(window);
    }
    return std::get<TransformerClassifier>(state_).predict_one(window);
  }

  std::vector<Intent> predict(const ClassifierSet& set) const {
    std::vector<Intent> out;
    out.reserve(set.size());
    for (const auto& w : set.windows) out.push_back(predict_one(w));
    return out;
  }

  const TransformerClassifier& transformer() const {
    return std::get<TransformerClassifier>(state_);
  }

  void save(const std::filesystem::path& path) const {
    Container c;
    c.meta["kind"] = "classifier";
    c.meta["classifier"] = to_string(kind_);
    if (std::holds_alternative<LdaModel>(state_)) {
      std::get<LdaModel>(state_).save_into(c);
    } else if (std::holds_alternative<RfModel>(state_)) {
      std::get<RfModel>(state_).save_into(c);
    } else {
      std::get<TransformerClassifier>(state_).save_into(c);
    }
    save_container(c, path);
  }

  static FittedClassifier load(const std::filesystem::path& path) {
    Container c = load_container(path);
    if (c.meta_str("kind") != "classifier") {
      throw IoError(path.string() + " does not hold a classifier");
    }
    FittedClassifier clf;
    clf.kind_ = classifier_kind_from_string(c.meta_str("classifier"));
    switch (clf.kind_) {
      case ClassifierKind::lda:
        clf.state_ = LdaModel::load_from(c);
        break;
      case ClassifierKind::rf:
        clf.state_ = RfModel::load_from(c);
        break;
      case ClassifierKind::transformer:
        clf.state_ = TransformerClassifier::load_from(c, TransformerClfConfig{});
        break;
    }
    return clf;
  }

 private:
  friend FittedClassifier fine_tune(const ClfConfig&, const std::optional<FittedClassifier>&,
                                    const ClassifierSet&, const ClassifierSet&);
  ClassifierKind kind_ = ClassifierKind::lda;
  std::variant<LdaModel, RfModel, TransformerClassifier> state_;
};

inline FittedClassifier fit(const ClfConfig& cfg, const ClassifierSet& set) {
  return FittedClassifier::fit(cfg, set);
}

inline std::vector<Intent> predict(const FittedClassifier& clf, const ClassifierSet& set) {
  return clf.predict(set);
}

inline double accuracy(const FittedClassifier& clf, const ClassifierSet& set) {
  if (set.size() == 0) throw std::invalid_argument("accuracy: empty evaluation set");
  auto preds = clf.predict(set);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (preds[i] == set.labels[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(preds.size());
}

inline double accuracy(const std::vector<Intent>& predictions, const std::vector<Intent>& labels) {
  if (predictions.size() != labels.size()) {
    throw std::invalid_argument("accuracy: prediction/label length mismatch");
  }
  if (predictions.empty()) throw std::invalid_argument("accuracy: empty evaluation set");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    if (predictions[i] == labels[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(predictions.size());
}

// Fine-tuning: the transformer continues gradient training from `pretrained`
// on the support set; LDA and RF retrain on offline + support.
inline FittedClassifier fine_tune(const ClfConfig& cfg,
                                  const std::optional<FittedClassifier>& pretrained,
                                  const ClassifierSet& offline, const ClassifierSet& support) {
  if (offline.size() == 0) {
    throw std::invalid_argument("fine_tune: offline set must be non-empty");
  }
  if (cfg.kind == ClassifierKind::transformer) {
    FittedClassifier base;
    if (pretrained.has_value()) {
      if (pretrained->kind() != ClassifierKind::transformer) {
        throw std::invalid_argument("fine_tune: pretrained classifier kind mismatch");
      }
      base = *pretrained;
    } else {
      base = FittedClassifier::fit(cfg, offline);
    }
    auto weights = detail::class_weights_for(support, cfg.class_weighting);
    FittedClassifier out;
    out.kind_ = ClassifierKind::transformer;
    out.state_ = std::get<TransformerClassifier>(base.state_).fine_tuned(support, weights);
    return out;
  }
  ClassifierSet merged = offline;
  merged.append(support);
  return FittedClassifier::fit(cfg, merged);
}

}  // namespace chatemg
