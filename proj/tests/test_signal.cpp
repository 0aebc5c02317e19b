#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <random>

#include "chatemg/datasim.hpp"
#include "chatemg/signal.hpp"

using namespace chatemg;

namespace {

// Brute-force oracle: pad with edge replication, sort the whole neighborhood,
// take the middle. Deliberately a different code path from the implementation.
std::vector<RawFrame> median_oracle(const std::vector<RawFrame>& raw, int width) {
  const int n = static_cast<int>(raw.size());
  const int half = width / 2;
  std::vector<RawFrame> out(raw.size());
  for (int c = 0; c < kNumChannels; ++c) {
    for (int i = 0; i < n; ++i) {
      std::vector<double> hood;
      for (int j = i - half; j <= i + half; ++j) {
        hood.push_back(raw[static_cast<std::size_t>(std::clamp(j, 0, n - 1))][c]);
      }
      std::sort(hood.begin(), hood.end());
      out[static_cast<std::size_t>(i)][c] = hood[static_cast<std::size_t>(half)];
    }
  }
  return out;
}

Recording protocol_recording() {
  SubjectProfile profile = make_subject_profile("S1", 11);
  ConditionEffect effect = make_condition_effect("S1", 11);
  return simulate_recording(profile, effect, ArmPosition::on_table, MotorState::off, 1, 1, 99);
}

}  // namespace

TEST_CASE("median filter keeps constants and rejects impulses", "[signal]") {
  std::vector<RawFrame> constant(20);
  for (auto& f : constant) f.fill(5.0);
  auto out = median_filter(constant, 9);
  REQUIRE(out.size() == constant.size());
  for (const auto& f : out) {
    for (double v : f) CHECK(v == 5.0);
  }

  std::vector<RawFrame> impulse(9);
  for (auto& f : impulse) f.fill(0.0);
  impulse[4].fill(100.0);
  auto filtered = median_filter(impulse, 9);
  CHECK(filtered[4][0] == 0.0);
  CHECK(filtered[4][7] == 0.0);
}

TEST_CASE("median filter rejects bad widths and empty input", "[signal]") {
  std::vector<RawFrame> seq(4);
  CHECK_THROWS_AS(median_filter(seq, 4), std::invalid_argument);
  CHECK_THROWS_AS(median_filter(seq, 0), std::invalid_argument);
  CHECK_THROWS_AS(median_filter(seq, -3), std::invalid_argument);
  CHECK_THROWS_AS(median_filter({}, 9), std::invalid_argument);
}

TEST_CASE("median filter matches brute-force oracle", "[signal]") {
  std::mt19937_64 rng(1234);
  std::uniform_real_distribution<double> dist(-50.0, 50.0);
  std::uniform_int_distribution<int> len_dist(1, 50);
  std::uniform_int_distribution<int> width_pick(0, 3);
  const int widths[] = {1, 3, 5, 9};
  for (int trial = 0; trial < 1000; ++trial) {
    const int n = len_dist(rng);
    std::vector<RawFrame> raw(static_cast<std::size_t>(n));
    for (auto& f : raw) {
      for (auto& v : f) v = dist(rng);
    }
    const int w = widths[width_pick(rng)];
    auto got = median_filter(raw, w);
    auto want = median_oracle(raw, w);
    for (int i = 0; i < n; ++i) {
      for (int c = 0; c < kNumChannels; ++c) {
        REQUIRE(got[static_cast<std::size_t>(i)][c] == want[static_cast<std::size_t>(i)][c]);
      }
    }
  }
}

TEST_CASE("quantize maps endpoints, midpoint, and clips", "[signal]") {
  CHECK(quantize(-128.0, -128.0, 127.0) == 0);
  CHECK(quantize(127.0, -128.0, 127.0) == 1000);
  CHECK(quantize(500.0, -128.0, 127.0) == 1000);   // above hi -> clipped
  CHECK(quantize(-4000.0, -128.0, 127.0) == 0);    // below lo -> clipped
  CHECK(quantize(0.0, -10.0, 10.0) == 500);        // midpoint
  CHECK_THROWS_AS(quantize(std::nan(""), -1.0, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(quantize(0.5, 2.0, 1.0), std::invalid_argument);
}

TEST_CASE("quantize is idempotent on the identity range", "[signal]") {
  std::mt19937_64 rng(7);
  std::uniform_int_distribution<int> dist(0, 1000);
  for (int i = 0; i < 200; ++i) {
    int v = dist(rng);
    CHECK(quantize(static_cast<double>(v), 0.0, 1000.0) == v);
  }
}

TEST_CASE("normalize_for_classifier maps 0/500/1000 to -1/0/+1", "[signal]") {
  EmgWindow w;
  w.data = U16Mat::Zero(4, kNumChannels);
  MatF lo = normalize_for_classifier(w);
  CHECK(lo.minCoeff() == -1.0f);
  CHECK(lo.maxCoeff() == -1.0f);

  w.data.setConstant(1000);
  MatF hi = normalize_for_classifier(w);
  CHECK(hi.minCoeff() == 1.0f);

  w.data.setConstant(500);
  MatF mid = normalize_for_classifier(w);
  CHECK(mid.cwiseAbs().maxCoeff() == 0.0f);
}

TEST_CASE("rotate_channels permutes cyclically", "[signal]") {
  MatI m(3, kNumChannels);
  for (int t = 0; t < 3; ++t) {
    for (int c = 0; c < kNumChannels; ++c) m(t, c) = c;
  }
  CHECK(rotate_channels(m, 0) == m);

  MatI r3 = rotate_channels(m, 3);
  CHECK(r3(0, 0) == 3);
  CHECK(r3(1, 7) == (7 + 3) % 8);

  MatI acc = m;
  for (int i = 0; i < 8; ++i) acc = rotate_channels(acc, 1);
  CHECK(acc == m);

  CHECK_THROWS_AS(rotate_channels(m, 8), std::invalid_argument);
  CHECK_THROWS_AS(rotate_channels(m, -1), std::invalid_argument);
}

TEST_CASE("rotate then inverse rotate is identity", "[signal]") {
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<int> dist(0, 1000);
  MatI m(16, kNumChannels);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
  for (int k = 0; k < 8; ++k) {
    MatI back = rotate_channels(rotate_channels(m, k), (8 - k) % 8);
    CHECK(back == m);
  }
}

TEST_CASE("segment_windows extracts single-intent windows", "[signal]") {
  Recording rec;
  rec.meta.subject_id = "T";
  rec.frames.assign(256, EmgFrame{});
  rec.labels.assign(256, Intent::relax);
  auto one = segment_windows(rec, 256, 1);
  REQUIRE(one.size() == 1);
  CHECK(one[0].intent == Intent::relax);

  // 150 open then 150 close: every 256-window crosses the boundary.
  Recording split;
  split.meta.subject_id = "T";
  split.frames.assign(300, EmgFrame{});
  split.labels.assign(150, Intent::open);
  split.labels.insert(split.labels.end(), 150, Intent::close);
  CHECK(segment_windows(split, 256, 1).empty());

  Recording longer;
  longer.meta.subject_id = "T";
  longer.frames.assign(500, EmgFrame{});
  longer.labels.assign(500, Intent::open);
  auto windows = segment_windows(longer, 256, 10);
  REQUIRE(windows.size() == 25);
  for (std::size_t i = 0; i < windows.size(); ++i) {
    CHECK(windows[i].source.start == static_cast<int>(i) * 10);
  }

  // length > recording: empty, not an error
  CHECK(segment_windows(one.empty() ? rec : rec, 512, 1).empty());
}

TEST_CASE("segment_windows never mixes labels", "[signal]") {
  auto rec = protocol_recording();
  for (int stride : {7, 50}) {
    for (const auto& w : segment_windows(rec, 100, stride)) {
      for (int t = 0; t < w.length(); ++t) {
        REQUIRE(rec.labels[static_cast<std::size_t>(w.source.start + t)] == w.intent);
      }
    }
  }
}

TEST_CASE("split_support_query partitions a protocol recording", "[signal]") {
  auto rec = protocol_recording();
  auto split = split_support_query(rec);

  CHECK(split.support.size() + split.query.size() == rec.size());
  for (std::size_t i = 0; i < split.support.size(); ++i) {
    CHECK(split.support.frames[i] == rec.frames[i]);
  }
  for (std::size_t i = 0; i < split.query.size(); ++i) {
    CHECK(split.query.frames[i] == rec.frames[split.support.size() + i]);
  }

  auto count_cues = [](const Recording& r, Intent intent) {
    int cues = 0;
    for (std::size_t i = 0; i < r.size(); ++i) {
      if (r.labels[i] == intent && (i == 0 || r.labels[i - 1] != intent)) ++cues;
    }
    return cues;
  };
  CHECK(count_cues(split.support, Intent::open) == 1);
  CHECK(count_cues(split.support, Intent::close) == 1);
  CHECK(count_cues(split.query, Intent::open) == 2);
  CHECK(count_cues(split.query, Intent::close) == 2);
}

TEST_CASE("split_support_query requires three motions", "[signal]") {
  Recording rec;
  rec.meta.subject_id = "T";
  auto emit = [&](Intent intent, int n) {
    for (int i = 0; i < n; ++i) {
      rec.frames.push_back(EmgFrame{});
      rec.labels.push_back(intent);
    }
  };
  emit(Intent::relax, 10);
  for (int m = 0; m < 2; ++m) {
    emit(Intent::open, 10);
    emit(Intent::relax, 10);
    emit(Intent::close, 10);
    emit(Intent::relax, 10);
  }
  CHECK_THROWS_AS(split_support_query(rec), MalformedRecording);
}
