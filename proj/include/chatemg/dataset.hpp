// Dataset construction: next-step prediction examples with channel-rotation
// augmentation, prompt sampling from support slices, and classifier sets.
#pragma once

#include <algorithm>
#include <optional>
#include <string>
#include <vector>

#include "chatemg/core.hpp"
#include "chatemg/rng.hpp"
#include "chatemg/signal.hpp"

namespace chatemg {

// One next-step training example: input is T x 8, target[i] is the channel-1
// value at step i+1 (the source window has length T+1 so the last target
// exists).
struct GenExample {
  MatI input;    // T x 8
  VecI target;   // T
};

struct SplitSpec {
  std::vector<std::string> train_recordings;
  std::vector<std::string> val_recordings;
};

// Recording-level split: no window in the validation set may originate from a
// training recording. Deterministic given the seed.
inline SplitSpec split_by_recording(const std::vector<std::string>& recording_ids,
                                    double train_fraction, std::uint64_t seed) {
  if (recording_ids.size() < 2) {
    throw InvalidCorpus("need at least 2 recordings for a train/val split");
  }
  std::vector<std::string> ids = recording_ids;
  std::sort(ids.begin(), ids.end());
  auto rng = make_rng(derive_seed(seed, "recording_split"));
  std::shuffle(ids.begin(), ids.end(), rng);
  auto n_train = static_cast<std::size_t>(std::lround(train_fraction * ids.size()));
  n_train = std::clamp<std::size_t>(n_train, 1, ids.size() - 1);
  SplitSpec split;
  split.train_recordings.assign(ids.begin(), ids.begin() + n_train);
  split.val_recordings.assign(ids.begin() + n_train, ids.end());
  std::sort(split.train_recordings.begin(), split.train_recordings.end());
  std::sort(split.val_recordings.begin(), split.val_recordings.end());
  return split;
}

// Next-step examples for one intent. Source windows of length T+1 are stored
// once; the 8 rotation variants are materialized on access, which keeps the
// augmented set at 1/8 of its expanded footprint. Example order is source
// order (recording id, then offset), then rotation.
class GenerativeDataset {
 public:
  GenerativeDataset() = default;

  GenerativeDataset(const std::vector<Recording>& recordings, Intent intent, int window_len = kDefaultWindowLen,
                    int stride = 10, bool augment = true)
      : intent_(intent), window_len_(window_len), augment_(augment) {
    if (window_len < 2) throw std::invalid_argument("generative window length must be >= 2");
    for (const auto& rec : recordings) {
      // length+1 so the final target exists.
      for (auto& w : segment_windows(rec, window_len + 1, stride)) {
        if (w.intent == intent) sources_.push_back(std::move(w));
      }
    }
    std::stable_sort(sources_.begin(), sources_.end(),
                     [](const EmgWindow& a, const EmgWindow& b) {
                       if (a.source.recording_id != b.source.recording_id)
                         return a.source.recording_id < b.source.recording_id;
                       return a.source.start < b.source.start;
                     });
    if (sources_.empty()) {
      warning_ = "no qualifying windows for intent '" + std::string(to_string(intent)) + "'";
    }
  }

  Intent intent() const { return intent_; }
  int window_len() const { return window_len_; }
  bool augmented() const { return augment_; }
  std::size_t source_count() const { return sources_.size(); }
  std::size_t size() const { return sources_.size() * rotations(); }
  bool empty() const { return sources_.empty(); }
  const std::string& warning() const { return warning_; }
  int rotations() const { return augment_ ? kNumChannels : 1; }

  GenExample example(std::size_t i) const {
    const auto [win, rot] = locate(i);
    GenExample ex;
    ex.input.resize(window_len_, kNumChannels);
    ex.target.resize(window_len_);
    fill(win, rot, ex.input, ex.target);
    return ex;
  }

  // Writes example rows into a preallocated batch: tokens rows
  // [slot*T, (slot+1)*T), targets likewise.
  void fill_batch_slot(std::size_t i, int slot, MatI& tokens, VecI& targets) const {
    const auto [win, rot] = locate(i);
    auto tok_block = tokens.middleRows(static_cast<Eigen::Index>(slot) * window_len_, window_len_);
    auto tgt_block = targets.segment(static_cast<Eigen::Index>(slot) * window_len_, window_len_);
    fill(win, rot, tok_block, tgt_block);
  }

 private:
  std::pair<const EmgWindow*, int> locate(std::size_t i) const {
    if (i >= size()) throw std::out_of_range("generative dataset index");
    const int rot = static_cast<int>(i % rotations());
    return {&sources_[i / rotations()], rot};
  }

  template <class TokBlock, class TgtBlock>
  void fill(const EmgWindow* win, int rot, TokBlock&& tokens, TgtBlock&& targets) const {
    for (int t = 0; t < window_len_; ++t) {
      for (int c = 0; c < kNumChannels; ++c) {
        tokens(t, c) = win->data(t, (c + rot) % kNumChannels);
      }
      targets(t) = win->data(t + 1, rot);
    }
  }

  Intent intent_ = Intent::relax;
  int window_len_ = kDefaultWindowLen;
  bool augment_ = true;
  std::vector<EmgWindow> sources_;
  std::string warning_;
};

inline GenerativeDataset build_generative_set(const std::vector<Recording>& recordings,
                                              Intent intent, int window_len = kDefaultWindowLen,
                                              int stride = 10, bool augment = true) {
  return GenerativeDataset(recordings, intent, window_len, stride, augment);
}

// Samples n contiguous P-length prompts of the requested intent from the
// support slice, uniformly over all valid starts, with replacement.
inline std::vector<Prompt> sample_prompts(const Recording& support, Intent intent, int n,
                                          int prompt_len = kDefaultPromptLen,
                                          std::uint64_t rng_seed = 0) {
  if (n < 0) throw std::invalid_argument("sample_prompts: n must be >= 0");
  if (prompt_len < 1) throw std::invalid_argument("sample_prompts: prompt length must be >= 1");
  support.validate();

  std::vector<int> valid_starts;
  for (const auto& run : detail::label_runs(support)) {
    if (run.intent != intent) continue;
    for (int s = run.begin; s + prompt_len <= run.end; ++s) valid_starts.push_back(s);
  }
  if (valid_starts.empty()) {
    throw InsufficientSupport("support set has no single-intent segment of length >= " +
                              std::to_string(prompt_len) + " for intent '" +
                              to_string(intent) + "'");
  }

  auto rng = make_rng(derive_seed(rng_seed, "prompts", to_string(intent)));
  std::uniform_int_distribution<std::size_t> pick(0, valid_starts.size() - 1);
  const std::string rec_id = support.meta.id();

  std::vector<Prompt> prompts;
  prompts.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    int start = valid_starts[pick(rng)];
    Prompt p;
    p.intent = intent;
    p.source = {rec_id, start};
    p.data.resize(prompt_len, kNumChannels);
    for (int t = 0; t < prompt_len; ++t) {
      for (int c = 0; c < kNumChannels; ++c) p.data(t, c) = support.frames[start + t][c];
    }
    prompts.push_back(std::move(p));
  }
  return prompts;
}

// Classifier datasets keep quantized windows and normalize on access; the
// flattening for LDA/RF lives in the classifier adapters.
struct ClassifierSet {
  std::vector<EmgWindow> windows;
  std::vector<Intent> labels;

  std::size_t size() const { return windows.size(); }

  MatF normalized(std::size_t i) const { return normalize_for_classifier(windows[i]); }

  // Row-major flatten of the normalized window: length T*8.
  VecF flattened(std::size_t i) const {
    MatF m = normalized(i);
    return Eigen::Map<VecF>(m.data(), m.size());
  }

  void append(const ClassifierSet& other) {
    windows.insert(windows.end(), other.windows.begin(), other.windows.end());
    labels.insert(labels.end(), other.labels.begin(), other.labels.end());
  }
};

inline ClassifierSet build_classifier_set(std::vector<EmgWindow> windows) {
  ClassifierSet set;
  set.labels.reserve(windows.size());
  for (const auto& w : windows) {
    w.validate();
    set.labels.push_back(w.intent);
  }
  set.windows = std::move(windows);
  return set;
}

inline ClassifierSet windows_from_recordings(const std::vector<Recording>& recordings,
                                             int window_len = kDefaultWindowLen,
                                             int stride = 10) {
  std::vector<EmgWindow> windows;
  for (const auto& rec : recordings) {
    auto ws = segment_windows(rec, window_len, stride);
    windows.insert(windows.end(), std::make_move_iterator(ws.begin()),
                   std::make_move_iterator(ws.end()));
  }
  return build_classifier_set(std::move(windows));
}

}  // namespace chatemg
