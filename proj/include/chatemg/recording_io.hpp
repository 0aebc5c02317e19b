// Line-oriented recording file format plus the key=value sidecar, corpus
// directory scanning, and split manifests.
//
// Recording file: header `timestamp,emg1,...,emg8,label`, one row per 10 ms
// frame, timestamp in integer milliseconds. Sidecar `<name>.meta` carries
// subject_id, session, arm_position, motor_state, recording_index.
#pragma once

#include <charconv>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "chatemg/core.hpp"

namespace chatemg {

inline const std::string kRecordingHeader =
    "timestamp,emg1,emg2,emg3,emg4,emg5,emg6,emg7,emg8,label";

namespace detail {

inline int parse_int_field(std::string_view s, const std::string& context) {
  int v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size()) {
    throw MalformedRecording(context + ": expected integer, got '" + std::string(s) + "'");
  }
  return v;
}

inline std::vector<std::string_view> split_csv(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    std::size_t pos = line.find(',', start);
    if (pos == std::string_view::npos) {
      fields.push_back(line.substr(start));
      break;
    }
    fields.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return fields;
}

}  // namespace detail

inline void write_recording_file(const Recording& rec, const std::filesystem::path& csv_path) {
  rec.validate();
  std::ofstream out(csv_path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + csv_path.string());
  out << kRecordingHeader << "\n";
  for (std::size_t i = 0; i < rec.size(); ++i) {
    out << i * 10;
    for (int c = 0; c < kNumChannels; ++c) out << ',' << rec.frames[i][c];
    out << ',' << to_string(rec.labels[i]) << "\n";
  }
  if (!out) throw IoError("write failed: " + csv_path.string());
}

inline void write_recording_meta(const RecordingMeta& meta, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out << "subject_id=" << meta.subject_id << "\n";
  out << "session=" << meta.session_index << "\n";
  out << "arm_position=" << to_string(meta.arm_position) << "\n";
  out << "motor_state=" << to_string(meta.motor_state) << "\n";
  out << "recording_index=" << meta.recording_index << "\n";
  if (!out) throw IoError("write failed: " + path.string());
}

// Writes `<dir>/<id>.csv` and `<dir>/<id>.meta`.
inline std::filesystem::path write_recording(const Recording& rec,
                                             const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const std::string id = rec.meta.id();
  write_recording_file(rec, dir / (id + ".csv"));
  write_recording_meta(rec.meta, dir / (id + ".meta"));
  return dir / (id + ".csv");
}

inline std::map<std::string, std::string> read_key_value_file(
    const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open: " + path.string());
  std::map<std::string, std::string> kv;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    // trim
    auto is_space = [](unsigned char c) { return c == ' ' || c == '\t'; };
    while (!line.empty() && is_space(line.front())) line.erase(line.begin());
    while (!line.empty() && is_space(line.back())) line.pop_back();
    if (line.empty()) continue;
    std::size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw IoError(path.string() + ":" + std::to_string(line_no) + ": expected key=value");
    }
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return kv;
}

inline RecordingMeta read_recording_meta(const std::filesystem::path& path) {
  auto kv = read_key_value_file(path);
  auto need = [&](const char* key) -> const std::string& {
    auto it = kv.find(key);
    if (it == kv.end()) throw IoError(path.string() + ": missing key '" + key + "'");
    return it->second;
  };
  RecordingMeta meta;
  meta.subject_id = need("subject_id");
  meta.session_index = detail::parse_int_field(need("session"), path.string() + ": session");
  meta.arm_position = arm_position_from_string(need("arm_position"));
  meta.motor_state = motor_state_from_string(need("motor_state"));
  meta.recording_index =
      detail::parse_int_field(need("recording_index"), path.string() + ": recording_index");
  return meta;
}

inline Recording read_recording(const std::filesystem::path& csv_path) {
  std::ifstream in(csv_path, std::ios::binary);
  if (!in) throw IoError("cannot open: " + csv_path.string());
  Recording rec;

  std::filesystem::path meta_path = csv_path;
  meta_path.replace_extension(".meta");
  if (std::filesystem::exists(meta_path)) {
    rec.meta = read_recording_meta(meta_path);
  }

  std::string line;
  int line_no = 0;
  if (!std::getline(in, line)) {
    throw MalformedRecording(csv_path.string() + ": empty file");
  }
  ++line_no;
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kRecordingHeader) {
    throw MalformedRecording(csv_path.string() + ":1: bad header (expected '" +
                             kRecordingHeader + "')");
  }
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto fields = detail::split_csv(line);
    const std::string where = csv_path.string() + ":" + std::to_string(line_no);
    if (fields.size() != kNumChannels + 2) {
      throw MalformedRecording(where + ": expected 10 fields, got " +
                               std::to_string(fields.size()));
    }
    detail::parse_int_field(fields[0], where + ": timestamp");
    EmgFrame f{};
    for (int c = 0; c < kNumChannels; ++c) {
      int v = detail::parse_int_field(fields[c + 1], where + ": emg" + std::to_string(c + 1));
      if (v < 0 || v > kMaxValue) {
        throw MalformedRecording(where + ": value " + std::to_string(v) +
                                 " outside [0,1000]");
      }
      f[c] = static_cast<std::uint16_t>(v);
    }
    rec.frames.push_back(f);
    rec.labels.push_back(intent_from_string(std::string(fields[kNumChannels + 1])));
  }
  rec.validate();
  return rec;
}

// Loads every `*.csv` recording in a directory, sorted by filename.
inline std::vector<Recording> load_corpus(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) {
    throw IoError("not a directory: " + dir.string());
  }
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".csv") {
      files.push_back(entry.path());
    }
  }
  std::sort(files.begin(), files.end());
  std::vector<Recording> corpus;
  corpus.reserve(files.size());
  for (const auto& f : files) corpus.push_back(read_recording(f));
  if (corpus.empty()) throw InvalidCorpus("no recordings found in " + dir.string());
  return corpus;
}

// Split manifest: one recording id per line, '#' comments allowed.
inline std::vector<std::string> read_id_manifest(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open: " + path.string());
  std::vector<std::string> ids;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    while (!line.empty() && (line.back() == ' ' || line.back() == '\t')) line.pop_back();
    std::size_t first = line.find_first_not_of(" \t");
    if (first == std::string::npos) continue;
    ids.push_back(line.substr(first));
  }
  return ids;
}

inline void write_id_manifest(const std::vector<std::string>& ids,
                              const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  for (const auto& id : ids) out << id << "\n";
}

}  // namespace chatemg
