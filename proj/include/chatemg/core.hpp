// Core domain types for 8-channel surface-EMG processing: intents, frames,
// recordings, windows, prompts, and the error taxonomy shared by all modules.
#pragma once

#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace chatemg {

constexpr int kNumChannels = 8;
constexpr int kMaxValue = 1000;       // quantized amplitude range is [0, kMaxValue]
constexpr int kSampleRateHz = 100;
constexpr int kDefaultWindowLen = 256;
constexpr int kDefaultPromptLen = 150;

// Row-major matrices throughout; a window is rows=time, cols=channels.
template <class S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class S>
using Vec = Eigen::Matrix<S, Eigen::Dynamic, 1>;

using MatF = Mat<float>;
using MatD = Mat<double>;
using MatI = Mat<int>;
using U16Mat = Mat<std::uint16_t>;
using VecF = Vec<float>;
using VecD = Vec<double>;
using VecI = Vec<int>;

// ---------------------------------------------------------------------------
// Errors. The CLI maps these onto its exit-code contract:
//   UsageError -> 2, DataError -> 3, NumericError -> 4.
// ---------------------------------------------------------------------------
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct MalformedRecording : DataError {
  using DataError::DataError;
};
struct InsufficientSupport : DataError {
  using DataError::DataError;
};
struct InvalidCorpus : DataError {
  using DataError::DataError;
};
struct IoError : DataError {
  using DataError::DataError;
};
struct LeakageError : DataError {
  using DataError::DataError;
};
struct ContextOverflow : UsageError {
  using UsageError::UsageError;
};
struct DegenerateTrainingSet : DataError {
  using DataError::DataError;
};
struct TrainingDiverged : NumericError {
  using NumericError::NumericError;
};

// ---------------------------------------------------------------------------
// Intents
// ---------------------------------------------------------------------------
enum class Intent : int { open = 0, relax = 1, close = 2 };

constexpr int kNumIntents = 3;
constexpr std::array<Intent, kNumIntents> kAllIntents = {Intent::open, Intent::relax,
                                                         Intent::close};

inline const char* to_string(Intent intent) {
  switch (intent) {
    case Intent::open: return "open";
    case Intent::relax: return "relax";
    case Intent::close: return "close";
  }
  throw std::invalid_argument("unknown intent value");
}

inline Intent intent_from_string(const std::string& s) {
  if (s == "open") return Intent::open;
  if (s == "relax") return Intent::relax;
  if (s == "close") return Intent::close;
  throw std::invalid_argument("unknown intent label: '" + s + "'");
}

// ---------------------------------------------------------------------------
// Frames and recordings
// ---------------------------------------------------------------------------
using EmgFrame = std::array<std::uint16_t, kNumChannels>;

inline bool frame_in_range(const EmgFrame& f) {
  for (auto v : f) {
    if (v > kMaxValue) return false;
  }
  return true;
}

enum class ArmPosition : int { on_table = 0, off_table = 1 };
enum class MotorState : int { off = 0, on = 1 };

inline const char* to_string(ArmPosition a) {
  return a == ArmPosition::on_table ? "on_table" : "off_table";
}
inline const char* to_string(MotorState m) { return m == MotorState::off ? "off" : "on"; }

inline ArmPosition arm_position_from_string(const std::string& s) {
  if (s == "on_table") return ArmPosition::on_table;
  if (s == "off_table") return ArmPosition::off_table;
  throw std::invalid_argument("unknown arm_position: '" + s + "'");
}
inline MotorState motor_state_from_string(const std::string& s) {
  if (s == "off") return MotorState::off;
  if (s == "on") return MotorState::on;
  throw std::invalid_argument("unknown motor_state: '" + s + "'");
}

struct RecordingMeta {
  std::string subject_id;
  int session_index = 1;  // 1 or 2
  ArmPosition arm_position = ArmPosition::on_table;
  MotorState motor_state = MotorState::off;
  int recording_index = 1;

  // Stable identifier used in filenames, manifests, and leakage checks.
  std::string id() const {
    std::string s = subject_id;
    s += "_s" + std::to_string(session_index);
    s += arm_position == ArmPosition::on_table ? "_onT" : "_offT";
    s += motor_state == MotorState::off ? "_mOff" : "_mOn";
    s += "_r" + std::to_string(recording_index);
    return s;
  }
};

struct Recording {
  std::vector<EmgFrame> frames;
  std::vector<Intent> labels;
  RecordingMeta meta;

  std::size_t size() const { return frames.size(); }

  void validate() const {
    if (frames.size() != labels.size()) {
      throw MalformedRecording("recording '" + meta.id() + "': " +
                               std::to_string(frames.size()) + " frames vs " +
                               std::to_string(labels.size()) + " labels");
    }
    for (const auto& f : frames) {
      if (!frame_in_range(f)) {
        throw MalformedRecording("recording '" + meta.id() +
                                 "': frame value outside [0,1000]");
      }
    }
  }
};

// ---------------------------------------------------------------------------
// Windows and prompts
// ---------------------------------------------------------------------------
struct WindowSource {
  std::string recording_id;
  int start = 0;  // frame offset of row 0 within the source recording
};

struct EmgWindow {
  U16Mat data;  // T x 8
  Intent intent = Intent::relax;
  WindowSource source;

  int length() const { return static_cast<int>(data.rows()); }

  void validate() const {
    if (data.cols() != kNumChannels) {
      throw std::invalid_argument("window must have 8 channels");
    }
    if ((data.array() > kMaxValue).any()) {
      throw std::invalid_argument("window value outside [0,1000]");
    }
  }
};

struct Prompt {
  U16Mat data;  // P x 8
  Intent intent = Intent::relax;
  WindowSource source;

  int length() const { return static_cast<int>(data.rows()); }
};

}  // namespace chatemg
