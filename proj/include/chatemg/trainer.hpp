// Offline optimization of one generative model per intent: Adam with global
// norm clipping, seeded batch order, validation-driven early stopping, and
// best-checkpoint selection.
#pragma once

#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>
#include <string>
#include <vector>

#include "chatemg/dataset.hpp"
#include "chatemg/model.hpp"
#include "chatemg/nn.hpp"

namespace chatemg {

struct TrainConfig {
  double learning_rate = 3e-4;
  int batch_size = 64;
  int max_epochs = 10;
  long long max_steps = 0;  // 0 = no step cap
  int patience = 3;         // consecutive non-improving validation checks
  long long val_interval = 0;  // steps between checks; 0 = once per epoch
  int val_max_batches = 0;     // 0 = full validation set
  double grad_clip_norm = 1.0;
  double train_fraction = 0.6;  // recording-level split used by train_all_intents
  std::uint64_t rng_seed = 0;

  void validate() const {
    if (learning_rate <= 0.0) throw std::invalid_argument("learning_rate must be positive");
    if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
    if (max_epochs < 1) throw std::invalid_argument("max_epochs must be >= 1");
    if (patience < 1) throw std::invalid_argument("patience must be >= 1");
    if (train_fraction <= 0.0 || train_fraction >= 1.0) {
      throw std::invalid_argument("train_fraction must be in (0,1)");
    }
  }
};

struct ValCheck {
  long long step = 0;
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
};

struct TrainReport {
  std::vector<ValCheck> checks;
  int stopped_epoch = 0;
  long long steps = 0;
  double best_val_loss = std::numeric_limits<double>::infinity();
  std::size_t train_examples = 0;
  std::size_t val_examples = 0;
  std::string checkpoint_path;
};

namespace detail {

inline double evaluate_loss(const ModelParams<float>& params, const ModelConfig& model_cfg,
                            const GenerativeDataset& set, int batch_size, int max_batches) {
  const int t = model_cfg.context_len;
  double total = 0.0;
  long long positions = 0;
  const std::size_t n = set.size();
  std::size_t i = 0;
  int batches = 0;
  while (i < n) {
    const int b = static_cast<int>(std::min<std::size_t>(batch_size, n - i));
    MatI tokens(static_cast<Eigen::Index>(b) * t, kNumChannels);
    VecI targets(static_cast<Eigen::Index>(b) * t);
    for (int s = 0; s < b; ++s) set.fill_batch_slot(i + s, s, tokens, targets);
    MatF logits = forward_batch(params, model_cfg, tokens, b, t);
    total += static_cast<double>(nn::cross_entropy<float>(logits, targets, nullptr)) *
             static_cast<double>(tokens.rows());
    positions += tokens.rows();
    i += static_cast<std::size_t>(b);
    if (max_batches > 0 && ++batches >= max_batches) break;
  }
  return total / static_cast<double>(positions);
}

}  // namespace detail

// Trains one model on next-step examples of a single intent. Returns the
// parameters of the checkpoint with minimum validation loss. Deterministic
// given the seed and a fixed thread count.
inline std::pair<ModelParams<float>, TrainReport> train_intent_model(
    const ModelConfig& model_cfg, const TrainConfig& train_cfg, const GenerativeDataset& train_set,
    const GenerativeDataset& val_set, Intent intent, std::ostream* log = nullptr) {
  model_cfg.validate();
  train_cfg.validate();
  if (train_set.empty() || val_set.empty()) {
    throw InvalidCorpus("training requires non-empty train and validation sets");
  }
  if (train_set.intent() != intent || val_set.intent() != intent) {
    throw InvalidCorpus(std::string("dataset intent does not match requested intent '") +
                        to_string(intent) + "'");
  }
  if (train_set.window_len() != model_cfg.context_len) {
    throw std::invalid_argument("dataset window length must equal model context length");
  }

  ModelParams<float> params = init_params<float>(model_cfg, train_cfg.rng_seed);
  nn::Adam<float> adam(params.param_list(), train_cfg.learning_rate, 0.9, 0.999, 1e-8,
                       train_cfg.grad_clip_norm);
  ModelParams<float> grads = zeros_like(params);
  auto grad_list = grads.param_list();

  auto order_rng_seed = derive_seed(train_cfg.rng_seed, "batch_order");
  auto dropout_rng = make_rng(derive_seed(train_cfg.rng_seed, "dropout"));

  const int t = model_cfg.context_len;
  const std::size_t n = train_set.size();
  const long long steps_per_epoch =
      static_cast<long long>((n + train_cfg.batch_size - 1) / train_cfg.batch_size);
  const long long val_every =
      train_cfg.val_interval > 0 ? train_cfg.val_interval : steps_per_epoch;

  TrainReport report;
  report.train_examples = n;
  report.val_examples = val_set.size();

  ModelParams<float> best_params = params;
  int bad_checks = 0;
  long long step = 0;
  double running_loss = 0.0;
  long long running_count = 0;
  bool stop = false;

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});

  MatI tokens;
  VecI targets;
  ForwardCache<float> cache;

  auto run_check = [&](int epoch) {
    double val_loss = detail::evaluate_loss(params, model_cfg, val_set, train_cfg.batch_size,
                                            train_cfg.val_max_batches);
    double train_loss = running_count > 0 ? running_loss / static_cast<double>(running_count)
                                          : std::numeric_limits<double>::quiet_NaN();
    running_loss = 0.0;
    running_count = 0;
    report.checks.push_back({step, epoch, train_loss, val_loss});
    if (log) {
      char line[160];
      std::snprintf(line, sizeof(line), "check step=%lld epoch=%d train_loss=%.6f val_loss=%.6f\n",
                    step, epoch, train_loss, val_loss);
      (*log) << line;
    }
    if (val_loss < report.best_val_loss) {
      report.best_val_loss = val_loss;
      best_params = params;
      bad_checks = 0;
    } else {
      ++bad_checks;
    }
    return bad_checks >= train_cfg.patience;
  };

  for (int epoch = 1; epoch <= train_cfg.max_epochs && !stop; ++epoch) {
    auto rng = make_rng(derive_seed(order_rng_seed, static_cast<std::uint64_t>(epoch)));
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < n && !stop; start += train_cfg.batch_size) {
      const int b = static_cast<int>(std::min<std::size_t>(train_cfg.batch_size, n - start));
      tokens.resize(static_cast<Eigen::Index>(b) * t, kNumChannels);
      targets.resize(static_cast<Eigen::Index>(b) * t);
      for (int s = 0; s < b; ++s) train_set.fill_batch_slot(order[start + s], s, tokens, targets);

      MatF logits = forward_batch(params, model_cfg, tokens, b, t, &dropout_rng, &cache);
      MatF dlogits;
      float batch_loss = nn::cross_entropy<float>(logits, targets, &dlogits);
      if (!std::isfinite(batch_loss)) {
        throw TrainingDiverged("non-finite loss at step " + std::to_string(step + 1) +
                               " (intent " + to_string(intent) + ")");
      }
      for (auto* g : grad_list) g->setZero();
      backward_batch(params, grads, model_cfg, cache, dlogits);
      adam.step(grad_list);

      ++step;
      running_loss += static_cast<double>(batch_loss) * static_cast<double>(tokens.rows());
      running_count += tokens.rows();
      report.stopped_epoch = epoch;

      if (step % val_every == 0) stop = run_check(epoch);
      if (train_cfg.max_steps > 0 && step >= train_cfg.max_steps) stop = true;
    }
  }
  // Ensure at least one validation check, and one final check if training
  // ended between intervals.
  if (report.checks.empty() || report.checks.back().step != step) {
    run_check(report.stopped_epoch);
  }
  report.steps = step;
  return {std::move(best_params), std::move(report)};
}

// ---------------------------------------------------------------------------
// All three intents from an offline corpus, recording-level train/val split.
// ---------------------------------------------------------------------------
struct IntentTrainResult {
  IntentModelSet models;
  std::array<TrainReport, kNumIntents> reports;
  std::array<SplitSpec, kNumIntents> splits;
};

inline IntentTrainResult train_all_intents(const ModelConfig& model_cfg,
                                           const TrainConfig& train_cfg,
                                           const std::vector<Recording>& corpus, int stride = 10,
                                           bool augment = true, std::ostream* log = nullptr) {
  IntentTrainResult result;
  result.models.config = model_cfg;
  for (Intent intent : kAllIntents) {
    // Only recordings that actually contribute windows for this intent count
    // toward its split.
    std::vector<std::string> ids;
    std::vector<const Recording*> with_intent;
    for (const auto& rec : corpus) {
      GenerativeDataset probe({rec}, intent, model_cfg.context_len, stride, false);
      if (!probe.empty()) {
        ids.push_back(rec.meta.id());
        with_intent.push_back(&rec);
      }
    }
    if (ids.empty()) {
      throw InvalidCorpus(std::string("corpus has no training windows for intent '") +
                          to_string(intent) + "'");
    }
    if (ids.size() < 2) {
      throw InvalidCorpus(std::string("intent '") + to_string(intent) +
                          "' needs at least 2 recordings for a train/val split");
    }
    SplitSpec split = split_by_recording(ids, train_cfg.train_fraction,
                                         derive_seed(train_cfg.rng_seed, "split", to_string(intent)));
    auto in = [](const std::vector<std::string>& set, const std::string& id) {
      return std::find(set.begin(), set.end(), id) != set.end();
    };
    std::vector<Recording> train_recs, val_recs;
    for (const Recording* rec : with_intent) {
      if (in(split.train_recordings, rec->meta.id())) train_recs.push_back(*rec);
      if (in(split.val_recordings, rec->meta.id())) val_recs.push_back(*rec);
    }
    GenerativeDataset train_set(train_recs, intent, model_cfg.context_len, stride, augment);
    GenerativeDataset val_set(val_recs, intent, model_cfg.context_len, stride, augment);
    if (log) (*log) << "intent " << to_string(intent) << ": train_examples=" << train_set.size()
                    << " val_examples=" << val_set.size() << "\n";
    TrainConfig per_intent = train_cfg;
    per_intent.rng_seed = derive_seed(train_cfg.rng_seed, "train", to_string(intent));
    auto [params, report] = train_intent_model(model_cfg, per_intent, train_set, val_set, intent, log);
    result.models.params[static_cast<std::size_t>(intent)] = std::move(params);
    result.reports[static_cast<std::size_t>(intent)] = std::move(report);
    result.splits[static_cast<std::size_t>(intent)] = std::move(split);
  }
  return result;
}

}  // namespace chatemg
