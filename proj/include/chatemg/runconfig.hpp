// Run configuration: a flat key=value store with namespaced keys, loaded from
// a config file and overridden by CLI flags (flag wins). Unknown keys are
// rejected; every command writes its fully resolved configuration next to its
// outputs.
#pragma once

#include <charconv>
#include <map>
#include <string>

#include "chatemg/classifiers.hpp"
#include "chatemg/datasim.hpp"
#include "chatemg/eval.hpp"
#include "chatemg/generator.hpp"
#include "chatemg/model.hpp"
#include "chatemg/recording_io.hpp"
#include "chatemg/trainer.hpp"

namespace chatemg {

class RunConfig {
 public:
  static RunConfig defaults() {
    RunConfig rc;
    auto& v = rc.values_;
    v["model.vocab_size"] = "1001";
    v["model.n_embed"] = "256";
    v["model.n_blocks"] = "12";
    v["model.n_heads"] = "8";
    v["model.context_len"] = "256";
    v["model.fc_layers"] = "3";
    v["model.dropout"] = "0.1";

    v["train.learning_rate"] = "0.0003";
    v["train.batch_size"] = "64";
    v["train.max_epochs"] = "10";
    v["train.max_steps"] = "0";
    v["train.patience"] = "3";
    v["train.val_interval"] = "0";
    v["train.val_max_batches"] = "0";
    v["train.grad_clip_norm"] = "1.0";
    v["train.train_fraction"] = "0.6";
    v["train.stride"] = "10";
    v["train.augment"] = "true";
    v["train.seed"] = "0";

    v["sample.temperature"] = "1.0";
    v["sample.top_k"] = "0";
    v["sample.n_per_intent"] = "1000";
    v["sample.prompt_len"] = "150";
    v["sample.target_len"] = "256";
    v["sample.seed"] = "0";

    v["clf.lda_shrinkage"] = "0.1";
    v["clf.rf_trees"] = "100";
    v["clf.rf_max_depth"] = "0";
    v["clf.tf_heads"] = "4";
    v["clf.tf_blocks"] = "1";
    v["clf.tf_mlp_layers"] = "3";
    v["clf.tf_embed"] = "64";
    v["clf.tf_epochs"] = "8";
    v["clf.tf_finetune_epochs"] = "4";
    v["clf.tf_batch"] = "32";
    v["clf.tf_lr"] = "0.003";
    v["clf.class_weighting"] = "false";
    v["clf.seed"] = "0";

    v["eval.window_stride"] = "10";
    v["eval.n_synthetic"] = "1000";
    v["eval.per_subject"] = "3";
    v["eval.seed"] = "0";

    v["sim.subjects"] = "5";
    v["sim.sessions"] = "2";
    v["sim.recordings_per_condition"] = "2";
    v["sim.seed"] = "0";
    return rc;
  }

  void set(const std::string& key, const std::string& value) {
    auto it = values_.find(key);
    if (it == values_.end()) {
      throw UsageError("unknown config key '" + key + "'");
    }
    it->second = value;
  }

  void load_file(const std::filesystem::path& path) {
    for (const auto& [key, value] : read_key_value_file(path)) {
      set(key, value);
    }
  }

  const std::string& get_string(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) throw UsageError("unknown config key '" + key + "'");
    return it->second;
  }

  long long get_int(const std::string& key) const {
    const std::string& s = get_string(key);
    long long v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size()) {
      throw UsageError("config key '" + key + "' expects an integer, got '" + s + "'");
    }
    return v;
  }

  double get_double(const std::string& key) const {
    const std::string& s = get_string(key);
    try {
      std::size_t used = 0;
      double v = std::stod(s, &used);
      if (used != s.size()) throw std::invalid_argument("trailing");
      return v;
    } catch (const std::exception&) {
      throw UsageError("config key '" + key + "' expects a number, got '" + s + "'");
    }
  }

  bool get_bool(const std::string& key) const {
    const std::string& s = get_string(key);
    if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
    if (s == "false" || s == "0" || s == "no" || s == "off") return false;
    throw UsageError("config key '" + key + "' expects a boolean, got '" + s + "'");
  }

  std::uint64_t get_u64(const std::string& key) const {
    const std::string& s = get_string(key);
    std::uint64_t v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size()) {
      throw UsageError("config key '" + key + "' expects an unsigned integer, got '" + s + "'");
    }
    return v;
  }

  // Sorted key=value dump; written next to every command's outputs.
  void write_resolved(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open for writing: " + path.string());
    for (const auto& [key, value] : values_) out << key << '=' << value << "\n";
  }

 private:
  std::map<std::string, std::string> values_;
};

// ---------------------------------------------------------------------------
// Typed views onto the flat store
// ---------------------------------------------------------------------------
inline ModelConfig model_config_from(const RunConfig& rc) {
  ModelConfig cfg;
  cfg.vocab_size = static_cast<int>(rc.get_int("model.vocab_size"));
  cfg.n_embed = static_cast<int>(rc.get_int("model.n_embed"));
  cfg.n_blocks_per_branch = static_cast<int>(rc.get_int("model.n_blocks"));
  cfg.n_heads = static_cast<int>(rc.get_int("model.n_heads"));
  cfg.context_len = static_cast<int>(rc.get_int("model.context_len"));
  cfg.fc_layers = static_cast<int>(rc.get_int("model.fc_layers"));
  cfg.dropout = rc.get_double("model.dropout");
  cfg.validate();
  return cfg;
}

inline TrainConfig train_config_from(const RunConfig& rc) {
  TrainConfig cfg;
  cfg.learning_rate = rc.get_double("train.learning_rate");
  cfg.batch_size = static_cast<int>(rc.get_int("train.batch_size"));
  cfg.max_epochs = static_cast<int>(rc.get_int("train.max_epochs"));
  cfg.max_steps = rc.get_int("train.max_steps");
  cfg.patience = static_cast<int>(rc.get_int("train.patience"));
  cfg.val_interval = rc.get_int("train.val_interval");
  cfg.val_max_batches = static_cast<int>(rc.get_int("train.val_max_batches"));
  cfg.grad_clip_norm = rc.get_double("train.grad_clip_norm");
  cfg.train_fraction = rc.get_double("train.train_fraction");
  cfg.rng_seed = rc.get_u64("train.seed");
  cfg.validate();
  return cfg;
}

inline SamplingConfig sampling_config_from(const RunConfig& rc) {
  SamplingConfig cfg;
  cfg.temperature = rc.get_double("sample.temperature");
  cfg.top_k = static_cast<int>(rc.get_int("sample.top_k"));
  cfg.rng_seed = rc.get_u64("sample.seed");
  return cfg;
}

inline ClfConfig clf_config_from(const RunConfig& rc, ClassifierKind kind) {
  ClfConfig cfg;
  cfg.kind = kind;
  cfg.lda.shrinkage = rc.get_double("clf.lda_shrinkage");
  cfg.rf.n_trees = static_cast<int>(rc.get_int("clf.rf_trees"));
  cfg.rf.max_depth = static_cast<int>(rc.get_int("clf.rf_max_depth"));
  cfg.rf.rng_seed = rc.get_u64("clf.seed");
  cfg.transformer.n_heads = static_cast<int>(rc.get_int("clf.tf_heads"));
  cfg.transformer.n_attention_blocks = static_cast<int>(rc.get_int("clf.tf_blocks"));
  cfg.transformer.mlp_layers = static_cast<int>(rc.get_int("clf.tf_mlp_layers"));
  cfg.transformer.embed_dim = static_cast<int>(rc.get_int("clf.tf_embed"));
  cfg.transformer.epochs = static_cast<int>(rc.get_int("clf.tf_epochs"));
  cfg.transformer.finetune_epochs = static_cast<int>(rc.get_int("clf.tf_finetune_epochs"));
  cfg.transformer.batch_size = static_cast<int>(rc.get_int("clf.tf_batch"));
  cfg.transformer.learning_rate = rc.get_double("clf.tf_lr");
  cfg.transformer.rng_seed = rc.get_u64("clf.seed");
  cfg.class_weighting = rc.get_bool("clf.class_weighting");
  return cfg;
}

inline EvalConfig eval_config_from(const RunConfig& rc) {
  EvalConfig cfg;
  cfg.window_len = static_cast<int>(rc.get_int("model.context_len"));
  cfg.window_stride = static_cast<int>(rc.get_int("eval.window_stride"));
  cfg.prompt_len = static_cast<int>(rc.get_int("sample.prompt_len"));
  cfg.n_synthetic = static_cast<int>(rc.get_int("eval.n_synthetic"));
  cfg.eval_per_subject = static_cast<int>(rc.get_int("eval.per_subject"));
  cfg.temperature = rc.get_double("sample.temperature");
  cfg.top_k = static_cast<int>(rc.get_int("sample.top_k"));
  cfg.rng_seed = rc.get_u64("eval.seed");
  return cfg;
}

inline CorpusSpec corpus_spec_from(const RunConfig& rc) {
  CorpusSpec spec;
  spec.n_subjects = static_cast<int>(rc.get_int("sim.subjects"));
  spec.n_sessions = static_cast<int>(rc.get_int("sim.sessions"));
  spec.recordings_per_condition = static_cast<int>(rc.get_int("sim.recordings_per_condition"));
  spec.master_seed = rc.get_u64("sim.seed");
  return spec;
}

}  // namespace chatemg
