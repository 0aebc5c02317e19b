// Autoregressive prompt-conditioned synthesis. A generation session keeps 8
// decoder lanes, one per channel rotation: lane k consumes the history with
// channels rotated by k, so its next-token prediction is channel k's next
// value. All 8 channels of a new frame condition on the same history; the
// assembled frame is then appended to every lane.
#pragma once

#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <vector>

#include "chatemg/dataset.hpp"
#include "chatemg/model.hpp"
#include "chatemg/parallel.hpp"
#include "chatemg/recording_io.hpp"
#include "chatemg/signal.hpp"

namespace chatemg {

struct SamplingConfig {
  double temperature = 1.0;  // > 0; exactly 0 selects greedy argmax decoding
  int top_k = 0;             // 0 = full distribution
  std::uint64_t rng_seed = 0;

  void validate(int vocab_size) const {
    if (temperature < 0.0) throw std::invalid_argument("temperature must be >= 0");
    if (top_k < 0 || top_k > vocab_size) {
      throw std::invalid_argument("top_k must be in [0, vocab_size]");
    }
  }
};

// Draws one token from logits under temperature / top-k.
template <class S>
int sample_token(const Vec<S>& logits, const SamplingConfig& sampling, RngEngine& rng) {
  const Eigen::Index v = logits.size();
  if (sampling.temperature == 0.0) {
    Eigen::Index best = 0;
    logits.maxCoeff(&best);
    return static_cast<int>(best);
  }
  VecD scaled = logits.template cast<double>() / sampling.temperature;
  if (sampling.top_k > 0 && sampling.top_k < v) {
    VecD sorted = scaled;
    std::nth_element(sorted.data(), sorted.data() + (sampling.top_k - 1), sorted.data() + v,
                     std::greater<double>());
    const double cutoff = sorted(sampling.top_k - 1);
    for (Eigen::Index i = 0; i < v; ++i) {
      if (scaled(i) < cutoff) scaled(i) = -std::numeric_limits<double>::infinity();
    }
  }
  const double mx = scaled.maxCoeff();
  VecD probs = (scaled.array() - mx).exp();
  probs /= probs.sum();
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  double u = unit(rng);
  double cum = 0.0;
  for (Eigen::Index i = 0; i < v; ++i) {
    cum += probs(i);
    if (u < cum) return static_cast<int>(i);
  }
  return static_cast<int>(v - 1);
}

// Wraps the trained model for the generation interface. Test doubles provide
// the same members to drive the session with stub predictors.
struct ChatEmgModel {
  const ModelConfig* config;
  const ModelParams<float>* params;

  ChatEmgModel(const ModelConfig& cfg, const ModelParams<float>& p) : config(&cfg), params(&p) {}

  int context_len() const { return config->context_len; }
  int vocab_size() const { return config->vocab_size; }
  DecoderState<float> make_decoder() const { return DecoderState<float>(*params, *config); }
};

inline ChatEmgModel model_view(const IntentModelSet& set, Intent intent) {
  return ChatEmgModel(set.config, set.for_intent(intent));
}

template <class Model>
class GenerationSession {
 public:
  GenerationSession(const Model& model, const MatI& history) : model_(&model) {
    if (history.rows() < 1) throw std::invalid_argument("history must be non-empty");
    if (history.rows() >= model.context_len()) {
      throw ContextOverflow("history of length " + std::to_string(history.rows()) +
                            " leaves no room to generate within context " +
                            std::to_string(model.context_len()));
    }
    if (history.cols() != kNumChannels) throw std::invalid_argument("history must be Lx8");
    length_ = static_cast<int>(history.rows());
    for (int k = 0; k < kNumChannels; ++k) {
      lanes_.emplace_back(model.make_decoder());
      logits_[static_cast<std::size_t>(k)] =
          lanes_.back().prime(rotate_channels(history, k));
    }
  }

  int length() const { return length_; }

  // Samples all 8 channel values from the current lane logits (no intra-frame
  // conditioning), appends the frame to every lane, returns it.
  EmgFrame step(const SamplingConfig& sampling, RngEngine& rng) {
    if (length_ >= model_->context_len()) throw ContextOverflow("generation context is full");
    EmgFrame frame{};
    for (int k = 0; k < kNumChannels; ++k) {
      frame[static_cast<std::size_t>(k)] = static_cast<std::uint16_t>(
          sample_token(logits_[static_cast<std::size_t>(k)], sampling, rng));
    }
    ++length_;
    if (length_ < model_->context_len()) {
      for (int k = 0; k < kNumChannels; ++k) {
        EmgFrame rotated{};
        for (int j = 0; j < kNumChannels; ++j) {
          rotated[static_cast<std::size_t>(j)] = frame[static_cast<std::size_t>((j + k) % kNumChannels)];
        }
        logits_[static_cast<std::size_t>(k)] = lanes_[static_cast<std::size_t>(k)].append(rotated);
      }
    }
    return frame;
  }

 private:
  using Decoder = decltype(std::declval<const Model&>().make_decoder());
  const Model* model_;
  std::vector<Decoder> lanes_;
  std::array<Vec<float>, kNumChannels> logits_;
  int length_ = 0;
};

// Generates the next 8-channel frame for the given history.
template <class Model>
EmgFrame next_frame(const Model& model, const MatI& history, const SamplingConfig& sampling) {
  sampling.validate(model.vocab_size());
  GenerationSession<Model> session(model, history);
  auto rng = make_rng(derive_seed(sampling.rng_seed, "next_frame"));
  return session.step(sampling, rng);
}

namespace detail {

template <class Model>
U16Mat complete_with_rng(const Model& model, const Prompt& prompt, int target_len,
                         const SamplingConfig& sampling, RngEngine& rng) {
  const int p_len = prompt.length();
  if (p_len >= target_len) {
    throw std::invalid_argument("prompt length " + std::to_string(p_len) +
                                " must be shorter than target length " +
                                std::to_string(target_len));
  }
  if (target_len > model.context_len()) {
    throw ContextOverflow("target length exceeds model context");
  }
  U16Mat out(target_len, kNumChannels);
  out.topRows(p_len) = prompt.data;
  GenerationSession<Model> session(model, prompt.data.cast<int>());
  for (int r = p_len; r < target_len; ++r) {
    EmgFrame f = session.step(sampling, rng);
    for (int c = 0; c < kNumChannels; ++c) out(r, c) = f[static_cast<std::size_t>(c)];
  }
  return out;
}

}  // namespace detail

// Completes a prompt to target_len rows; rows [0, P) are the prompt verbatim.
template <class Model>
U16Mat complete(const Model& model, const Prompt& prompt, int target_len,
                const SamplingConfig& sampling) {
  sampling.validate(model.vocab_size());
  auto rng = make_rng(derive_seed(sampling.rng_seed, "complete"));
  return detail::complete_with_rng(model, prompt, target_len, sampling, rng);
}

struct SyntheticBatch {
  Intent intent = Intent::relax;
  std::vector<EmgWindow> windows;
  std::vector<std::uint64_t> window_seeds;  // per-window RNG stream seeds
  SamplingConfig sampling;
  int prompt_len = kDefaultPromptLen;
};

// n_per_intent completions per intent, prompts drawn from the support slice.
// Each window owns an RNG stream derived from (seed, intent, index), so the
// result is independent of scheduling.
inline std::array<SyntheticBatch, kNumIntents> batch_generate(
    const IntentModelSet& model_set, const Recording& support, int n_per_intent = 1000,
    const SamplingConfig& sampling = {}, int prompt_len = kDefaultPromptLen,
    int target_len = kDefaultWindowLen, int jobs = 1) {
  sampling.validate(model_set.config.vocab_size);
  if (n_per_intent < 0) throw std::invalid_argument("n_per_intent must be >= 0");
  std::array<SyntheticBatch, kNumIntents> batches;
  for (Intent intent : kAllIntents) {
    auto& batch = batches[static_cast<std::size_t>(intent)];
    batch.intent = intent;
    batch.sampling = sampling;
    batch.prompt_len = prompt_len;
    auto prompts = sample_prompts(support, intent, n_per_intent, prompt_len, sampling.rng_seed);
    batch.windows.resize(static_cast<std::size_t>(n_per_intent));
    batch.window_seeds.resize(static_cast<std::size_t>(n_per_intent));
    ChatEmgModel model = model_view(model_set, intent);
    parallel_for(n_per_intent, jobs, [&](std::int64_t i) {
      const auto idx = static_cast<std::size_t>(i);
      std::uint64_t seed = derive_seed(sampling.rng_seed, "window", to_string(intent),
                                       static_cast<std::uint64_t>(i));
      auto rng = make_rng(seed);
      EmgWindow w;
      w.data = detail::complete_with_rng(model, prompts[idx], target_len, sampling, rng);
      w.intent = intent;
      w.source = prompts[idx].source;
      batch.window_seeds[idx] = seed;
      batch.windows[idx] = std::move(w);
    });
  }
  return batches;
}

// ---------------------------------------------------------------------------
// On-disk form: one recording-format file per intent (windows concatenated,
// constant label) plus a provenance manifest.
// ---------------------------------------------------------------------------
inline void write_synthetic_batch(const SyntheticBatch& batch, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const std::string stem = to_string(batch.intent);
  Recording rec;
  rec.meta.subject_id = "synthetic";
  rec.meta.recording_index = static_cast<int>(batch.intent);
  for (const auto& w : batch.windows) {
    for (int t = 0; t < w.length(); ++t) {
      EmgFrame f{};
      for (int c = 0; c < kNumChannels; ++c) f[c] = w.data(t, c);
      rec.frames.push_back(f);
      rec.labels.push_back(batch.intent);
    }
  }
  write_recording_file(rec, dir / (stem + "_synthetic.csv"));

  std::ofstream prov(dir / (stem + "_provenance.csv"), std::ios::binary);
  if (!prov) throw IoError("cannot write provenance manifest in " + dir.string());
  prov << "window_index,source_recording,prompt_offset,seed\n";
  for (std::size_t i = 0; i < batch.windows.size(); ++i) {
    prov << i << ',' << batch.windows[i].source.recording_id << ','
         << batch.windows[i].source.start << ',' << batch.window_seeds[i] << "\n";
  }
}

// Reads back windows from a synthetic recording-format file.
inline std::vector<EmgWindow> read_synthetic_windows(const std::filesystem::path& csv,
                                                     int window_len = kDefaultWindowLen) {
  Recording rec = read_recording(csv);
  if (rec.size() % static_cast<std::size_t>(window_len) != 0) {
    throw MalformedRecording(csv.string() + ": length is not a multiple of the window length");
  }
  std::vector<EmgWindow> windows;
  const std::size_t count = rec.size() / static_cast<std::size_t>(window_len);
  for (std::size_t w = 0; w < count; ++w) {
    EmgWindow win;
    win.intent = rec.labels[w * static_cast<std::size_t>(window_len)];
    win.source = {csv.stem().string(), static_cast<int>(w * static_cast<std::size_t>(window_len))};
    win.data.resize(window_len, kNumChannels);
    for (int t = 0; t < window_len; ++t) {
      for (int c = 0; c < kNumChannels; ++c) {
        win.data(t, c) = rec.frames[w * static_cast<std::size_t>(window_len) +
                                    static_cast<std::size_t>(t)][c];
      }
    }
    windows.push_back(std::move(win));
  }
  return windows;
}

}  // namespace chatemg
