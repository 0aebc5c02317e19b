// Deterministic signal transformations: median filtering, quantization,
// normalization, channel rotation, windowing, and support/query splitting.
// All functions are pure; safe to call concurrently.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "chatemg/core.hpp"

namespace chatemg {

using RawFrame = std::array<double, kNumChannels>;

// Per-channel sliding median with replicate padding at both ends. Keeps a
// sorted window and updates it incrementally (binary-search insert/erase),
// so it is not the same code path as a sort-the-neighborhood oracle.
inline std::vector<RawFrame> median_filter(const std::vector<RawFrame>& raw, int width = 9) {
  if (width < 1 || width % 2 == 0) {
    throw std::invalid_argument("median_filter: width must be odd and >= 1");
  }
  if (raw.empty()) {
    throw std::invalid_argument("median_filter: input sequence is empty");
  }
  const int n = static_cast<int>(raw.size());
  const int half = width / 2;
  std::vector<RawFrame> out(raw.size());

  auto clamp_idx = [&](int i) { return std::clamp(i, 0, n - 1); };

  std::vector<double> window;
  window.reserve(width);
  for (int c = 0; c < kNumChannels; ++c) {
    window.clear();
    // Window centered at position 0: indices -half..half, replicated.
    for (int j = -half; j <= half; ++j) {
      double v = raw[clamp_idx(j)][c];
      window.insert(std::upper_bound(window.begin(), window.end(), v), v);
    }
    out[0][c] = window[half];
    for (int i = 1; i < n; ++i) {
      double leaving = raw[clamp_idx(i - 1 - half)][c];
      double entering = raw[clamp_idx(i + half)][c];
      window.erase(std::lower_bound(window.begin(), window.end(), leaving));
      window.insert(std::upper_bound(window.begin(), window.end(), entering), entering);
      out[i][c] = window[half];
    }
  }
  return out;
}

// Affine map of [lo, hi] onto [0, 1000] with round-half-away-from-zero, then
// clipping. Rounding mode stated so independent implementations agree bitwise.
inline std::uint16_t quantize(double raw_value, double lo = -128.0, double hi = 127.0) {
  if (!std::isfinite(raw_value)) {
    throw std::invalid_argument("quantize: non-finite input");
  }
  if (!(lo < hi)) {
    throw std::invalid_argument("quantize: raw range must satisfy lo < hi");
  }
  double scaled = (raw_value - lo) / (hi - lo) * static_cast<double>(kMaxValue);
  long long r = std::llround(scaled);  // half away from zero
  r = std::clamp<long long>(r, 0, kMaxValue);
  return static_cast<std::uint16_t>(r);
}

inline EmgFrame quantize_frame(const RawFrame& raw, double lo = -128.0, double hi = 127.0) {
  EmgFrame f{};
  for (int c = 0; c < kNumChannels; ++c) f[c] = quantize(raw[c], lo, hi);
  return f;
}

// Maps quantized values into [-1, 1] for the classifiers: v / 500 - 1.
inline MatF normalize_for_classifier(const EmgWindow& window) {
  window.validate();
  return window.data.cast<float>() / 500.0f - MatF::Constant(window.data.rows(), kNumChannels, 1.0f);
}

// Output channel j carries input channel (j + k) mod 8. k = 0 is identity.
template <class S>
Mat<S> rotate_channels(const Mat<S>& window, int k) {
  if (k < 0 || k > 7) {
    throw std::invalid_argument("rotate_channels: k must be in [0, 7]");
  }
  if (window.cols() != kNumChannels) {
    throw std::invalid_argument("rotate_channels: expected 8 channels");
  }
  if (k == 0) return window;
  Mat<S> out(window.rows(), kNumChannels);
  for (int j = 0; j < kNumChannels; ++j) {
    out.col(j) = window.col((j + k) % kNumChannels);
  }
  return out;
}

// Extracts fixed-length single-intent windows at the given stride, ordered by
// start offset. Windows spanning a cue transition are dropped: transition
// frames have ambiguous ground truth.
inline std::vector<EmgWindow> segment_windows(const Recording& recording,
                                              int length = kDefaultWindowLen,
                                              int stride = 10) {
  if (length < 1 || stride < 1) {
    throw std::invalid_argument("segment_windows: length and stride must be positive");
  }
  recording.validate();
  std::vector<EmgWindow> windows;
  const int n = static_cast<int>(recording.size());
  if (length > n) return windows;

  // next_change[i] = index of the first frame after i with a different label.
  std::vector<int> next_change(n);
  int change = n;
  for (int i = n - 1; i >= 0; --i) {
    if (i + 1 < n && recording.labels[i + 1] != recording.labels[i]) change = i + 1;
    next_change[i] = change;
  }

  const std::string rec_id = recording.meta.id();
  for (int start = 0; start + length <= n; start += stride) {
    if (next_change[start] < start + length) continue;
    EmgWindow w;
    w.data.resize(length, kNumChannels);
    for (int t = 0; t < length; ++t) {
      for (int c = 0; c < kNumChannels; ++c) w.data(t, c) = recording.frames[start + t][c];
    }
    w.intent = recording.labels[start];
    w.source = {rec_id, start};
    windows.push_back(std::move(w));
  }
  return windows;
}

namespace detail {

struct LabelRun {
  Intent intent;
  int begin;
  int end;  // exclusive
};

inline std::vector<LabelRun> label_runs(const Recording& recording) {
  std::vector<LabelRun> runs;
  const int n = static_cast<int>(recording.size());
  int i = 0;
  while (i < n) {
    int j = i;
    while (j < n && recording.labels[j] == recording.labels[i]) ++j;
    runs.push_back({recording.labels[i], i, j});
    i = j;
  }
  return runs;
}

inline Recording slice_recording(const Recording& rec, int begin, int end) {
  Recording out;
  out.meta = rec.meta;
  out.frames.assign(rec.frames.begin() + begin, rec.frames.begin() + end);
  out.labels.assign(rec.labels.begin() + begin, rec.labels.begin() + end);
  return out;
}

}  // namespace detail

struct SupportQuerySplit {
  Recording support;
  Recording query;
};

// A motion spans from the onset of an open cue through the end of the relax
// segment that follows its close cue. Support covers the leading frames
// through the end of motion 1; query is the remainder.
inline SupportQuerySplit split_support_query(const Recording& recording) {
  recording.validate();
  const auto runs = detail::label_runs(recording);

  struct Motion {
    int open_run;
    int end_frame;
  };
  std::vector<Motion> motions;
  for (std::size_t r = 0; r + 2 < runs.size(); ++r) {
    if (runs[r].intent != Intent::open) continue;
    if (runs[r + 1].intent != Intent::relax) continue;
    if (runs[r + 2].intent != Intent::close) continue;
    // Trailing relax may be followed by the next motion's open cue or EOF.
    int end = runs[r + 2].end;
    if (r + 3 < runs.size() && runs[r + 3].intent == Intent::relax) {
      end = runs[r + 3].end;
    }
    motions.push_back({static_cast<int>(r), end});
  }
  if (motions.size() < 3) {
    throw MalformedRecording("recording '" + recording.meta.id() + "' contains " +
                             std::to_string(motions.size()) +
                             " open-relax-close motions; need at least 3");
  }
  const int cut = motions[0].end_frame;
  SupportQuerySplit split;
  split.support = detail::slice_recording(recording, 0, cut);
  split.query = detail::slice_recording(recording, cut, static_cast<int>(recording.size()));
  return split;
}

}  // namespace chatemg
