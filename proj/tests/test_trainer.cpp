#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "chatemg/datasim.hpp"
#include "chatemg/trainer.hpp"

using namespace chatemg;

namespace {

ModelConfig tiny_model() {
  ModelConfig cfg;
  cfg.vocab_size = 101;
  cfg.n_embed = 16;
  cfg.n_blocks_per_branch = 1;
  cfg.n_heads = 2;
  cfg.context_len = 32;
  cfg.fc_layers = 2;
  cfg.dropout = 0.0;
  return cfg;
}

// A smooth low-amplitude recording whose values stay inside a small vocab.
Recording smooth_recording(Intent intent, int frames, std::uint64_t seed, int rec_index) {
  Recording rec;
  rec.meta.subject_id = "T";
  rec.meta.recording_index = rec_index;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, 1.5);
  rec.frames.resize(static_cast<std::size_t>(frames));
  rec.labels.assign(static_cast<std::size_t>(frames), intent);
  for (int i = 0; i < frames; ++i) {
    for (int c = 0; c < kNumChannels; ++c) {
      double base = 50.0 + 20.0 * std::sin(0.05 * i + c) + noise(rng);
      rec.frames[static_cast<std::size_t>(i)][c] =
          static_cast<std::uint16_t>(std::clamp(base, 0.0, 100.0));
    }
  }
  return rec;
}

}  // namespace

TEST_CASE("loss on a fixed batch strictly decreases over the first steps", "[trainer]") {
  ModelConfig model_cfg = tiny_model();
  // One batch worth of data; every epoch trains on the same batch.
  auto rec = smooth_recording(Intent::open, 140, 1, 1);
  GenerativeDataset set({rec}, Intent::open, model_cfg.context_len, 16, false);
  REQUIRE(set.size() >= 4);

  TrainConfig train_cfg;
  train_cfg.learning_rate = 1e-3;
  train_cfg.batch_size = static_cast<int>(set.size());
  train_cfg.max_epochs = 20;
  train_cfg.patience = 100;
  train_cfg.val_interval = 1;
  train_cfg.rng_seed = 5;

  auto [params, report] = train_intent_model(model_cfg, train_cfg, set, set, Intent::open);
  REQUIRE(report.checks.size() >= 20);
  for (std::size_t i = 1; i < 20; ++i) {
    REQUIRE(report.checks[i].train_loss < report.checks[i - 1].train_loss);
  }
}

TEST_CASE("training is deterministic and never returns worse-than-best params", "[trainer]") {
  ModelConfig model_cfg = tiny_model();
  std::vector<Recording> train_recs, val_recs;
  for (int i = 0; i < 3; ++i) train_recs.push_back(smooth_recording(Intent::close, 200, 10 + i, i));
  val_recs.push_back(smooth_recording(Intent::close, 200, 99, 7));
  GenerativeDataset train_set(train_recs, Intent::close, model_cfg.context_len, 8, false);
  GenerativeDataset val_set(val_recs, Intent::close, model_cfg.context_len, 8, false);

  TrainConfig train_cfg;
  train_cfg.batch_size = 8;
  train_cfg.max_epochs = 2;
  train_cfg.val_interval = 5;
  train_cfg.rng_seed = 42;

  auto [params_a, report_a] =
      train_intent_model(model_cfg, train_cfg, train_set, val_set, Intent::close);
  auto [params_b, report_b] =
      train_intent_model(model_cfg, train_cfg, train_set, val_set, Intent::close);

  REQUIRE(report_a.checks.size() == report_b.checks.size());
  for (std::size_t i = 0; i < report_a.checks.size(); ++i) {
    CHECK(report_a.checks[i].train_loss == report_b.checks[i].train_loss);
    CHECK(report_a.checks[i].val_loss == report_b.checks[i].val_loss);
  }

  // best_val_loss is the minimum of the series, and the returned parameters
  // reproduce it exactly.
  double min_val = std::numeric_limits<double>::infinity();
  for (const auto& c : report_a.checks) min_val = std::min(min_val, c.val_loss);
  CHECK(report_a.best_val_loss == min_val);
  double returned = detail::evaluate_loss(params_a, model_cfg, val_set, train_cfg.batch_size, 0);
  CHECK(returned == Catch::Approx(report_a.best_val_loss).margin(1e-9));
}

TEST_CASE("early stopping waits for patience consecutive failures", "[trainer]") {
  ModelConfig model_cfg = tiny_model();
  auto rec = smooth_recording(Intent::relax, 300, 3, 1);
  GenerativeDataset set({rec}, Intent::relax, model_cfg.context_len, 8, false);

  // patience=1 with val == train: as long as every check improves, training
  // must run to max_epochs rather than stop at the first check.
  TrainConfig train_cfg;
  train_cfg.learning_rate = 5e-4;
  train_cfg.batch_size = static_cast<int>(set.size());
  train_cfg.max_epochs = 5;
  train_cfg.patience = 1;
  train_cfg.val_interval = 1;
  train_cfg.rng_seed = 2;

  auto [params, report] = train_intent_model(model_cfg, train_cfg, set, set, Intent::relax);
  bool improved_throughout = true;
  double best = std::numeric_limits<double>::infinity();
  std::size_t stop_at = report.checks.size();
  for (std::size_t i = 0; i < report.checks.size(); ++i) {
    if (report.checks[i].val_loss < best) {
      best = report.checks[i].val_loss;
    } else if (improved_throughout) {
      improved_throughout = false;
      stop_at = i + 1;
    }
  }
  if (improved_throughout) {
    CHECK(report.stopped_epoch == train_cfg.max_epochs);
  } else {
    CHECK(report.checks.size() == stop_at);
  }
}

TEST_CASE("trainer rejects empty or mismatched datasets", "[trainer]") {
  ModelConfig model_cfg = tiny_model();
  auto rec = smooth_recording(Intent::open, 200, 4, 1);
  GenerativeDataset good({rec}, Intent::open, model_cfg.context_len, 8, false);
  GenerativeDataset empty({rec}, Intent::close, model_cfg.context_len, 8, false);
  TrainConfig train_cfg;
  CHECK_THROWS_AS(train_intent_model(model_cfg, train_cfg, empty, good, Intent::close),
                  InvalidCorpus);
  CHECK_THROWS_AS(train_intent_model(model_cfg, train_cfg, good, good, Intent::close),
                  InvalidCorpus);
}

TEST_CASE("unclipped training at an absurd learning rate reports divergence", "[trainer]") {
  ModelConfig model_cfg = tiny_model();
  auto rec = smooth_recording(Intent::open, 200, 8, 1);
  GenerativeDataset set({rec}, Intent::open, model_cfg.context_len, 8, false);
  TrainConfig train_cfg;
  train_cfg.learning_rate = 1e18;
  train_cfg.grad_clip_norm = 0.0;  // clipping off
  train_cfg.batch_size = 8;
  train_cfg.max_epochs = 50;
  train_cfg.patience = 1000;
  train_cfg.val_interval = 1000000;
  CHECK_THROWS_AS(train_intent_model(model_cfg, train_cfg, set, set, Intent::open),
                  TrainingDiverged);
}

TEST_CASE("training with dropout stays deterministic per seed", "[trainer]") {
  ModelConfig model_cfg = tiny_model();
  model_cfg.dropout = 0.1;
  auto rec = smooth_recording(Intent::relax, 200, 12, 1);
  GenerativeDataset set({rec}, Intent::relax, model_cfg.context_len, 8, false);
  TrainConfig train_cfg;
  train_cfg.batch_size = 8;
  train_cfg.max_epochs = 1;
  train_cfg.max_steps = 6;
  train_cfg.val_interval = 3;
  train_cfg.rng_seed = 9;
  auto [pa, ra] = train_intent_model(model_cfg, train_cfg, set, set, Intent::relax);
  auto [pb, rb] = train_intent_model(model_cfg, train_cfg, set, set, Intent::relax);
  REQUIRE(ra.checks.size() == rb.checks.size());
  for (std::size_t i = 0; i < ra.checks.size(); ++i) {
    CHECK(ra.checks[i].train_loss == rb.checks[i].train_loss);
    CHECK(std::isfinite(ra.checks[i].train_loss));
  }
}

TEST_CASE("saved checkpoints reload to the identical validation loss", "[trainer]") {
  ModelConfig model_cfg = tiny_model();
  std::vector<Recording> train_recs = {smooth_recording(Intent::open, 240, 31, 1)};
  std::vector<Recording> val_recs = {smooth_recording(Intent::open, 240, 32, 2)};
  GenerativeDataset train_set(train_recs, Intent::open, model_cfg.context_len, 8, false);
  GenerativeDataset val_set(val_recs, Intent::open, model_cfg.context_len, 8, false);
  TrainConfig train_cfg;
  train_cfg.batch_size = 8;
  train_cfg.max_epochs = 1;
  train_cfg.max_steps = 10;
  train_cfg.val_interval = 5;
  auto [params, report] = train_intent_model(model_cfg, train_cfg, train_set, val_set, Intent::open);

  auto dir = std::filesystem::temp_directory_path() / "chatemg_test_trainer_ckpt";
  std::filesystem::create_directories(dir);
  save_checkpoint(params, model_cfg, Intent::open, dir / "open.ckpt");
  LoadedModel loaded = load_checkpoint(dir / "open.ckpt");
  double reloaded_val =
      detail::evaluate_loss(loaded.params, loaded.config, val_set, train_cfg.batch_size, 0);
  CHECK(reloaded_val == report.best_val_loss);
}

TEST_CASE("train_all_intents needs and trains every intent", "[trainer]") {
  ModelConfig model_cfg = tiny_model();
  model_cfg.context_len = 24;

  std::vector<Recording> missing_close;
  for (int i = 0; i < 2; ++i) {
    missing_close.push_back(smooth_recording(Intent::open, 120, 20 + i, i));
    missing_close.push_back(smooth_recording(Intent::relax, 120, 30 + i, 10 + i));
  }
  TrainConfig train_cfg;
  train_cfg.batch_size = 16;
  train_cfg.max_epochs = 1;
  train_cfg.max_steps = 2;
  try {
    train_all_intents(model_cfg, train_cfg, missing_close, 8, false);
    FAIL("expected InvalidCorpus");
  } catch (const InvalidCorpus& e) {
    CHECK(std::string(e.what()).find("close") != std::string::npos);
  }

  std::vector<Recording> full = missing_close;
  for (int i = 0; i < 2; ++i) full.push_back(smooth_recording(Intent::close, 120, 40 + i, 20 + i));
  auto result = train_all_intents(model_cfg, train_cfg, full, 8, true);

  // Each intent's example count is its window count x 8 under augmentation.
  for (Intent intent : kAllIntents) {
    GenerativeDataset probe(full, intent, model_cfg.context_len, 8, false);
    const auto& report = result.reports[static_cast<std::size_t>(intent)];
    CHECK(report.train_examples + report.val_examples == probe.size() * 8);
  }
}
