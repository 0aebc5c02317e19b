#include <catch2/catch_amalgamated.hpp>

#include <fstream>

#include "chatemg/runconfig.hpp"

using namespace chatemg;
namespace fs = std::filesystem;

TEST_CASE("config defaults resolve into module configs", "[runconfig]") {
  RunConfig rc = RunConfig::defaults();
  ModelConfig model = model_config_from(rc);
  CHECK(model.vocab_size == 1001);
  CHECK(model.n_embed == 256);
  CHECK(model.n_blocks_per_branch == 12);
  CHECK(model.n_heads == 8);
  CHECK(model.context_len == 256);

  TrainConfig train = train_config_from(rc);
  CHECK(train.learning_rate == Catch::Approx(3e-4));
  CHECK(train.batch_size == 64);
  CHECK(train.patience == 3);

  ClfConfig clf = clf_config_from(rc, ClassifierKind::rf);
  CHECK(clf.rf.n_trees == 100);
  CHECK(clf.lda.shrinkage == Catch::Approx(0.1));
  CHECK(clf.transformer.n_heads == 4);
  CHECK(clf.transformer.embed_dim == 64);
  CHECK_FALSE(clf.class_weighting);

  EvalConfig eval = eval_config_from(rc);
  CHECK(eval.n_synthetic == 1000);
  CHECK(eval.prompt_len == 150);
}

TEST_CASE("unknown keys are rejected from files and overrides", "[runconfig]") {
  RunConfig rc = RunConfig::defaults();
  CHECK_THROWS_AS(rc.set("model.made_up", "3"), UsageError);

  auto dir = fs::temp_directory_path() / "chatemg_test_runconfig";
  fs::create_directories(dir);
  {
    std::ofstream out(dir / "bad.cfg");
    out << "model.n_embed=32\n";
    out << "nonsense.key=1\n";
  }
  CHECK_THROWS_AS(rc.load_file(dir / "bad.cfg"), UsageError);

  {
    std::ofstream out(dir / "good.cfg");
    out << "# comment\n";
    out << "model.n_embed=32\n";
    out << "train.batch_size=8\n";
  }
  rc.load_file(dir / "good.cfg");
  CHECK(rc.get_int("model.n_embed") == 32);
  CHECK(rc.get_int("train.batch_size") == 8);

  // Flag override wins over the file value.
  rc.set("model.n_embed", "16");
  CHECK(rc.get_int("model.n_embed") == 16);
}

TEST_CASE("typed getters validate their values", "[runconfig]") {
  RunConfig rc = RunConfig::defaults();
  rc.set("train.batch_size", "oops");
  CHECK_THROWS_AS(rc.get_int("train.batch_size"), UsageError);
  rc.set("model.dropout", "zero");
  CHECK_THROWS_AS(rc.get_double("model.dropout"), UsageError);
  rc.set("clf.class_weighting", "maybe");
  CHECK_THROWS_AS(rc.get_bool("clf.class_weighting"), UsageError);
}

TEST_CASE("resolved config dump is sorted and lossless", "[runconfig]") {
  RunConfig rc = RunConfig::defaults();
  rc.set("sim.seed", "12345");
  auto dir = fs::temp_directory_path() / "chatemg_test_runconfig";
  fs::create_directories(dir);
  rc.write_resolved(dir / "resolved.cfg");

  RunConfig back = RunConfig::defaults();
  back.load_file(dir / "resolved.cfg");
  CHECK(back.get_u64("sim.seed") == 12345);
  CHECK(back.get_int("model.n_embed") == rc.get_int("model.n_embed"));

  // Sorted lines.
  std::ifstream in(dir / "resolved.cfg");
  std::string prev, line;
  bool sorted = true;
  while (std::getline(in, line)) {
    if (!prev.empty() && line < prev) sorted = false;
    prev = line;
  }
  CHECK(sorted);
}
