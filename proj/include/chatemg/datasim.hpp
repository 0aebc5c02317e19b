// Parametric session simulator following the collection protocol: per
// recording, a relax lead-in followed by three cued open-relax-close motions
// (5 s per cue at 100 Hz). Signals are baseline + per-intent activation
// envelopes + condition effects + noise + slow drift, then median-filtered
// and quantized like real armband data.
//
// This is a pipeline oracle, not a biomechanics simulator: parameters are
// chosen so intents are separable within a subject while distributions shift
// across subjects, sessions, and conditions.
#pragma once

#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "chatemg/core.hpp"
#include "chatemg/rng.hpp"
#include "chatemg/signal.hpp"

namespace chatemg {

constexpr int kDefaultProfileVersion = 1;

constexpr int kCueFrames = 500;        // 5 s at 100 Hz
constexpr int kLeadInFrames = 500;
constexpr int kMotionsPerRecording = 3;
// lead-in + 3 x (open, relax, close, relax)
constexpr int kRecordingFrames = kLeadInFrames + kMotionsPerRecording * 4 * kCueFrames;

struct SubjectProfile {
  std::string subject_id;
  int profile_version = kDefaultProfileVersion;
  std::array<double, kNumChannels> baseline{};                    // raw units
  std::array<std::array<double, kNumChannels>, kNumIntents> amplitude{};  // per intent
  double rise_tau = 18.0;    // frames; first-order onset
  double decay_tau = 30.0;   // frames; release after cue end
  double noise_scale = 5.0;  // raw units, Gaussian sigma
  double drift_rate = 0.12;  // fractional amplitude drift across one recording
  std::uint64_t rng_seed = 0;
};

struct ConditionEffect {
  std::array<double, kNumChannels> arm_off_gain{};  // multiplicative on activation
  double motor_artifact_amp = 14.0;                 // raw units
  int motor_artifact_delay = 100;                   // frames after cue onset (~1 s)
  int motor_artifact_len = 60;                      // frames
};

// Deterministic per-subject profile. Channel activation patterns are drawn
// independently per (subject, intent) so the same intent looks different
// across subjects; relax stays near baseline everywhere.
inline SubjectProfile make_subject_profile(const std::string& subject_id,
                                           std::uint64_t master_seed) {
  SubjectProfile p;
  p.subject_id = subject_id;
  p.rng_seed = derive_seed(master_seed, "profile", subject_id);
  auto rng = make_rng(p.rng_seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  for (int c = 0; c < kNumChannels; ++c) {
    p.baseline[c] = -95.0 + 18.0 * unit(rng);
  }
  // Two dominant channels per active intent plus a low-level spread. The lead
  // channels for open and close are forced apart so intents stay separable
  // within a subject, while their location varies across subjects.
  int lead_open = static_cast<int>(unit(rng) * kNumChannels) % kNumChannels;
  int lead_close = (lead_open + 3 + static_cast<int>(unit(rng) * 3.0)) % kNumChannels;
  auto fill_intent = [&](Intent intent, int lead) {
    int second = (lead + 1 + static_cast<int>(unit(rng) * 2.0)) % kNumChannels;
    for (int c = 0; c < kNumChannels; ++c) {
      double amp = 6.0 + 10.0 * unit(rng);
      if (c == second) amp = 40.0 + 30.0 * unit(rng);
      if (c == lead) amp = 70.0 + 45.0 * unit(rng);
      p.amplitude[static_cast<int>(intent)][c] = amp;
    }
  };
  fill_intent(Intent::open, lead_open);
  fill_intent(Intent::close, lead_close);
  for (int c = 0; c < kNumChannels; ++c) {
    // Residual tone during relax (spasticity hum).
    p.amplitude[static_cast<int>(Intent::relax)][c] = 1.5 + 2.5 * unit(rng);
  }
  p.rise_tau = 14.0 + 10.0 * unit(rng);
  p.decay_tau = 24.0 + 14.0 * unit(rng);
  p.noise_scale = 4.0 + 2.5 * unit(rng);
  p.drift_rate = 0.18 + 0.14 * unit(rng);

  // Per-subject montage rotation: armband placement differs between people,
  // so the whole channel layout shifts. Channel-order-sensitive classifiers
  // lose across subjects while rotation-invariant generative models do not.
  const int montage = static_cast<int>(unit(rng) * kNumChannels) % kNumChannels;
  if (montage != 0) {
    SubjectProfile rotated = p;
    for (int c = 0; c < kNumChannels; ++c) {
      const int src = (c + montage) % kNumChannels;
      rotated.baseline[c] = p.baseline[src];
      for (int i = 0; i < kNumIntents; ++i) rotated.amplitude[i][c] = p.amplitude[i][src];
    }
    p = rotated;
  }
  return p;
}

inline ConditionEffect make_condition_effect(const std::string& subject_id,
                                             std::uint64_t master_seed) {
  ConditionEffect e;
  auto rng = make_rng(derive_seed(master_seed, "condition", subject_id));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int c = 0; c < kNumChannels; ++c) {
    e.arm_off_gain[c] = 1.15 + 0.5 * unit(rng);
  }
  e.motor_artifact_amp = 10.0 + 8.0 * unit(rng);
  return e;
}

// Cue schedule shared by every recording.
inline std::vector<Intent> protocol_labels() {
  std::vector<Intent> labels;
  labels.reserve(kRecordingFrames);
  auto emit = [&](Intent intent, int count) {
    for (int i = 0; i < count; ++i) labels.push_back(intent);
  };
  emit(Intent::relax, kLeadInFrames);
  for (int m = 0; m < kMotionsPerRecording; ++m) {
    emit(Intent::open, kCueFrames);
    emit(Intent::relax, kCueFrames);
    emit(Intent::close, kCueFrames);
    emit(Intent::relax, kCueFrames);
  }
  return labels;
}

inline Recording simulate_recording(const SubjectProfile& profile,
                                    const ConditionEffect& condition_effect,
                                    ArmPosition arm_position, MotorState motor_state,
                                    int session_index, int recording_index,
                                    std::uint64_t rng_seed) {
  Recording rec;
  rec.meta.subject_id = profile.subject_id;
  rec.meta.session_index = session_index;
  rec.meta.arm_position = arm_position;
  rec.meta.motor_state = motor_state;
  rec.meta.recording_index = recording_index;
  rec.labels = protocol_labels();
  const int n = static_cast<int>(rec.labels.size());

  auto rng = make_rng(rng_seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  // Session 2 re-draws drift and perturbs amplitudes (inter-session shift).
  std::array<double, kNumChannels> session_gain;
  session_gain.fill(1.0);
  // Muscle tone and fatigue build over a recording: activation amplitude
  // decays while the recording progresses, by a subject- and
  // recording-dependent fraction.
  const double drift = -profile.drift_rate * (0.6 + 0.8 * unit(rng));
  if (session_index != 1) {
    auto srng = make_rng(derive_seed(profile.rng_seed, "session", static_cast<std::uint64_t>(session_index)));
    std::normal_distribution<double> g(0.0, 0.10);
    for (int c = 0; c < kNumChannels; ++c) session_gain[c] = std::max(0.6, 1.0 + g(srng));
  }

  // Cue onsets for the motor artifact (open and close cues actuate the motor).
  std::vector<int> artifact_onsets;
  if (motor_state == MotorState::on) {
    for (int i = 1; i < n; ++i) {
      if (rec.labels[i] != rec.labels[i - 1] &&
          (rec.labels[i] == Intent::open || rec.labels[i] == Intent::close)) {
        int jitter = static_cast<int>(unit(rng) * 20.0) - 10;
        artifact_onsets.push_back(i + condition_effect.motor_artifact_delay + jitter);
      }
    }
  }

  std::vector<RawFrame> raw(static_cast<std::size_t>(n));
  std::array<double, kNumChannels> envelope{};
  std::size_t next_artifact = 0;
  for (int i = 0; i < n; ++i) {
    const int intent_idx = static_cast<int>(rec.labels[i]);
    const double drift_gain = 1.0 + drift * (static_cast<double>(i) / n);
    double artifact = 0.0;
    if (next_artifact < artifact_onsets.size() && i >= artifact_onsets[next_artifact]) {
      int into = i - artifact_onsets[next_artifact];
      if (into >= condition_effect.motor_artifact_len) {
        ++next_artifact;
      } else {
        double phase = static_cast<double>(into) / condition_effect.motor_artifact_len;
        artifact = condition_effect.motor_artifact_amp * std::sin(M_PI * phase);
      }
    }
    for (int c = 0; c < kNumChannels; ++c) {
      double target = profile.amplitude[intent_idx][c] * session_gain[c];
      // First-order tracking: fast rise into a cue, slower release out of it.
      double tau = target > envelope[c] ? profile.rise_tau : profile.decay_tau;
      envelope[c] += (target - envelope[c]) / tau;
      double act = envelope[c] * drift_gain;
      if (arm_position == ArmPosition::off_table) act *= condition_effect.arm_off_gain[c];
      raw[static_cast<std::size_t>(i)][c] =
          profile.baseline[c] + act + artifact + profile.noise_scale * gauss(rng);
    }
  }

  auto filtered = median_filter(raw, 9);
  rec.frames.resize(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    rec.frames[static_cast<std::size_t>(i)] = quantize_frame(filtered[static_cast<std::size_t>(i)]);
  }
  rec.validate();
  return rec;
}

struct CorpusSpec {
  int n_subjects = 5;
  int n_sessions = 2;
  int recordings_per_condition = 2;
  std::uint64_t master_seed = 0;
};

inline std::string subject_name(int index) { return "S" + std::to_string(index + 1); }

// Full corpus: subjects x sessions x 4 conditions x recordings. 80 recordings
// at the default counts.
inline std::vector<Recording> simulate_corpus(const CorpusSpec& spec) {
  if (spec.n_subjects < 1 || spec.n_sessions < 1 || spec.recordings_per_condition < 1) {
    throw std::invalid_argument("simulate_corpus: counts must be positive");
  }
  std::vector<Recording> corpus;
  for (int s = 0; s < spec.n_subjects; ++s) {
    const std::string subject = subject_name(s);
    SubjectProfile profile = make_subject_profile(subject, spec.master_seed);
    ConditionEffect effect = make_condition_effect(subject, spec.master_seed);
    for (int session = 1; session <= spec.n_sessions; ++session) {
      for (int cond = 0; cond < 4; ++cond) {
        ArmPosition arm = (cond & 1) ? ArmPosition::off_table : ArmPosition::on_table;
        MotorState motor = (cond & 2) ? MotorState::on : MotorState::off;
        for (int r = 1; r <= spec.recordings_per_condition; ++r) {
          std::uint64_t seed =
              derive_seed(spec.master_seed, "recording", subject,
                          static_cast<std::uint64_t>(session), static_cast<std::uint64_t>(cond),
                          static_cast<std::uint64_t>(r));
          corpus.push_back(simulate_recording(profile, effect, arm, motor, session, r, seed));
        }
      }
    }
  }
  return corpus;
}

}  // namespace chatemg
