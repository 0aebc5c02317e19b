// Adaptation-scenario evaluation: holdout construction for condition /
// session / subject adaptation, the self / fine-tune / prompt-augmented
// baselines, per-recording accuracy tables with rank-sum significance, and
// the NRMSE / t-SNE analyses of synthetic samples.
#pragma once

#include <map>
#include <optional>
#include <set>
#include <sstream>

#include "chatemg/classifiers.hpp"
#include "chatemg/dataset.hpp"
#include "chatemg/generator.hpp"
#include "chatemg/signal.hpp"
#include "chatemg/stats.hpp"
#include "chatemg/trainer.hpp"
#include "chatemg/tsne.hpp"

namespace chatemg {

enum class ScenarioKind : int { condition = 0, session = 1, subject = 2 };

inline const char* to_string(ScenarioKind kind) {
  switch (kind) {
    case ScenarioKind::condition: return "condition";
    case ScenarioKind::session: return "session";
    case ScenarioKind::subject: return "subject";
  }
  throw std::invalid_argument("unknown scenario kind");
}

inline ScenarioKind scenario_kind_from_string(const std::string& s) {
  if (s == "condition") return ScenarioKind::condition;
  if (s == "session") return ScenarioKind::session;
  if (s == "subject") return ScenarioKind::subject;
  throw std::invalid_argument("unknown scenario kind: '" + s + "'");
}

enum class Method : int { self = 0, fine_tune = 1, chatemg = 2 };

inline const char* to_string(Method m) {
  switch (m) {
    case Method::self: return "self";
    case Method::fine_tune: return "fine_tune";
    case Method::chatemg: return "chatemg";
  }
  throw std::invalid_argument("unknown method");
}

inline Method method_from_string(const std::string& s) {
  if (s == "self") return Method::self;
  if (s == "fine_tune") return Method::fine_tune;
  if (s == "chatemg") return Method::chatemg;
  throw std::invalid_argument("unknown method: '" + s + "'");
}

struct Scenario {
  ScenarioKind kind = ScenarioKind::condition;
  std::string holdout;  // subject id for subject scenarios, else empty
  std::vector<std::string> train_ids;
  std::vector<std::string> inferral_ids;
};

// Builds the scenario(s) for a corpus: one for condition/session adaptation,
// one per holdout subject for subject adaptation. Inferral recordings are
// capped per subject (the protocol evaluates 3), chosen in sorted-id order.
inline std::vector<Scenario> build_scenarios(const std::vector<Recording>& corpus,
                                             ScenarioKind kind, int eval_per_subject = 3) {
  if (eval_per_subject < 1) throw std::invalid_argument("eval_per_subject must be >= 1");
  std::set<std::string> subjects;
  std::map<std::string, std::string> subject_of;
  for (const auto& rec : corpus) {
    subjects.insert(rec.meta.subject_id);
    subject_of[rec.meta.id()] = rec.meta.subject_id;
  }
  if (subjects.empty()) throw InvalidCorpus("empty corpus");

  auto cap_per_subject = [&](std::vector<std::string>& ids) {
    std::sort(ids.begin(), ids.end());
    std::map<std::string, int> taken;
    std::vector<std::string> out;
    for (const auto& id : ids) {
      const std::string& subject = subject_of[id];
      if (taken[subject] < eval_per_subject) {
        out.push_back(id);
        taken[subject]++;
      }
    }
    ids = std::move(out);
  };

  std::vector<Scenario> scenarios;
  if (kind == ScenarioKind::condition) {
    Scenario s;
    s.kind = kind;
    for (const auto& rec : corpus) {
      if (rec.meta.motor_state != MotorState::off) continue;
      if (rec.meta.arm_position == ArmPosition::on_table) {
        s.train_ids.push_back(rec.meta.id());
      } else {
        s.inferral_ids.push_back(rec.meta.id());
      }
    }
    cap_per_subject(s.inferral_ids);
    std::sort(s.train_ids.begin(), s.train_ids.end());
    scenarios.push_back(std::move(s));
  } else if (kind == ScenarioKind::session) {
    Scenario s;
    s.kind = kind;
    for (const auto& rec : corpus) {
      if (rec.meta.session_index == 1) {
        s.train_ids.push_back(rec.meta.id());
      } else {
        s.inferral_ids.push_back(rec.meta.id());
      }
    }
    cap_per_subject(s.inferral_ids);
    std::sort(s.train_ids.begin(), s.train_ids.end());
    scenarios.push_back(std::move(s));
  } else {
    for (const auto& subject : subjects) {
      Scenario s;
      s.kind = kind;
      s.holdout = subject;
      for (const auto& rec : corpus) {
        if (rec.meta.subject_id == subject) {
          s.inferral_ids.push_back(rec.meta.id());
        } else {
          s.train_ids.push_back(rec.meta.id());
        }
      }
      cap_per_subject(s.inferral_ids);
      std::sort(s.train_ids.begin(), s.train_ids.end());
      scenarios.push_back(std::move(s));
    }
  }
  for (const auto& s : scenarios) {
    if (s.train_ids.empty() || s.inferral_ids.empty()) {
      throw InvalidCorpus(std::string("scenario '") + to_string(kind) +
                          "' has an empty train or inferral set");
    }
  }
  return scenarios;
}

struct EvalConfig {
  int window_len = kDefaultWindowLen;
  int window_stride = 10;
  int prompt_len = kDefaultPromptLen;
  int n_synthetic = 1000;
  int eval_per_subject = 3;
  double temperature = 1.0;
  int top_k = 0;
  int jobs = 1;
  std::uint64_t rng_seed = 0;
};

struct AccuracyRow {
  std::string scenario;
  std::string holdout;
  std::string classifier;
  std::string method;
  std::string subject;
  std::string recording_id;
  double accuracy = 0.0;
};

namespace detail {

inline void assert_no_leakage(const Scenario& scenario) {
  std::set<std::string> train(scenario.train_ids.begin(), scenario.train_ids.end());
  for (const auto& id : scenario.inferral_ids) {
    if (train.count(id)) {
      throw LeakageError("inferral recording '" + id + "' appears in the training recordings");
    }
  }
}

inline const Recording& find_recording(const std::vector<Recording>& corpus,
                                       const std::string& id) {
  for (const auto& rec : corpus) {
    if (rec.meta.id() == id) return rec;
  }
  throw InvalidCorpus("recording '" + id + "' not found in corpus");
}

}  // namespace detail

// Evaluates every (classifier, method) cell of one scenario. The model set
// must have been trained only on scenario.train_ids; disjointness is asserted
// before anything else runs.
inline std::vector<AccuracyRow> run_scenario(const Scenario& scenario,
                                             const std::vector<Recording>& corpus,
                                             const IntentModelSet& model_set,
                                             const std::vector<ClfConfig>& clf_configs,
                                             const std::vector<Method>& methods,
                                             const EvalConfig& cfg, std::ostream* log = nullptr) {
  detail::assert_no_leakage(scenario);
  if (clf_configs.empty() || methods.empty()) {
    throw std::invalid_argument("run_scenario: need at least one classifier and method");
  }

  const bool want_fine_tune =
      std::find(methods.begin(), methods.end(), Method::fine_tune) != methods.end();
  const bool want_chatemg =
      std::find(methods.begin(), methods.end(), Method::chatemg) != methods.end();

  // Offline data and per-kind pretraining, shared across inferral recordings.
  ClassifierSet offline_set;
  LdaStats offline_lda_stats;
  std::map<int, FittedClassifier> pretrained_transformers;
  if (want_fine_tune) {
    std::vector<Recording> train_recs;
    for (const auto& id : scenario.train_ids) {
      train_recs.push_back(detail::find_recording(corpus, id));
    }
    offline_set = windows_from_recordings(train_recs, cfg.window_len, cfg.window_stride);
    for (std::size_t k = 0; k < clf_configs.size(); ++k) {
      if (clf_configs[k].kind == ClassifierKind::lda) {
        if (offline_lda_stats.dim == 0) offline_lda_stats.add(offline_set);
      } else if (clf_configs[k].kind == ClassifierKind::transformer) {
        ClfConfig pre_cfg = clf_configs[k];
        pre_cfg.transformer.rng_seed =
            derive_seed(cfg.rng_seed, "pretrain", scenario.holdout, static_cast<std::uint64_t>(k));
        pretrained_transformers.emplace(static_cast<int>(k), fit(pre_cfg, offline_set));
        if (log) (*log) << "pretrained transformer classifier " << k << " on "
                        << offline_set.size() << " offline windows\n";
      }
    }
  }

  std::vector<AccuracyRow> rows;
  for (const auto& rec_id : scenario.inferral_ids) {
    const Recording& recording = detail::find_recording(corpus, rec_id);
    auto split = split_support_query(recording);
    ClassifierSet support_set =
        windows_from_recordings({split.support}, cfg.window_len, cfg.window_stride);
    ClassifierSet query_set =
        windows_from_recordings({split.query}, cfg.window_len, cfg.window_stride);
    if (support_set.size() == 0 || query_set.size() == 0) {
      throw InvalidCorpus("recording '" + rec_id + "' yields no support or query windows");
    }

    ClassifierSet augmented_set;
    if (want_chatemg) {
      SamplingConfig sampling;
      sampling.temperature = cfg.temperature;
      sampling.top_k = cfg.top_k;
      sampling.rng_seed = derive_seed(cfg.rng_seed, "generate", rec_id);
      auto batches = batch_generate(model_set, split.support, cfg.n_synthetic, sampling,
                                    cfg.prompt_len, cfg.window_len, cfg.jobs);
      augmented_set = support_set;
      for (const auto& batch : batches) {
        augmented_set.append(build_classifier_set(batch.windows));
      }
    }

    for (std::size_t k = 0; k < clf_configs.size(); ++k) {
      for (Method method : methods) {
        ClfConfig run_cfg = clf_configs[k];
        const std::uint64_t fit_seed = derive_seed(
            cfg.rng_seed, rec_id, to_string(run_cfg.kind), to_string(method));
        run_cfg.rf.rng_seed = fit_seed;
        run_cfg.transformer.rng_seed = fit_seed;
        run_cfg.jobs = cfg.jobs;

        FittedClassifier clf;
        switch (method) {
          case Method::self:
            clf = fit(run_cfg, support_set);
            break;
          case Method::fine_tune: {
            if (run_cfg.kind == ClassifierKind::lda) {
              LdaStats stats = offline_lda_stats;
              stats.add(support_set);
              clf = FittedClassifier::wrap(LdaModel::fit(run_cfg.lda, stats));
            } else if (run_cfg.kind == ClassifierKind::transformer) {
              clf = fine_tune(run_cfg, pretrained_transformers.at(static_cast<int>(k)),
                              offline_set, support_set);
            } else {
              clf = fine_tune(run_cfg, std::nullopt, offline_set, support_set);
            }
            break;
          }
          case Method::chatemg:
            clf = fit(run_cfg, augmented_set);
            break;
        }

        AccuracyRow row;
        row.scenario = to_string(scenario.kind);
        row.holdout = scenario.holdout;
        row.classifier = to_string(run_cfg.kind);
        row.method = to_string(method);
        row.subject = recording.meta.subject_id;
        row.recording_id = rec_id;
        row.accuracy = accuracy(clf, query_set);
        rows.push_back(row);
        if (log) {
          char line[256];
          std::snprintf(line, sizeof(line), "%s %s %s %s acc=%.4f\n", row.recording_id.c_str(),
                        row.classifier.c_str(), row.method.c_str(), row.subject.c_str(),
                        row.accuracy);
          (*log) << line;
        }
      }
    }
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Summaries: per-subject mean +- std over its recordings, overall means, and
// one-sided rank-sum p-values of chatemg against each other method over the
// per-recording accuracies.
// ---------------------------------------------------------------------------
struct SummaryRow {
  std::string scenario;
  std::string classifier;
  std::string method;
  std::string subject;  // "ALL" for the aggregate rows
  int n = 0;
  double mean = 0.0;
  double stddev = 0.0;
  double p_value_vs_chatemg = -1.0;  // < 0: not applicable
  bool significant = false;
};

constexpr double kSignificanceAlpha = 0.05;

inline std::vector<SummaryRow> summarize(const std::vector<AccuracyRow>& rows) {
  auto mean_std = [](const std::vector<double>& v) {
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    double var = 0.0;
    for (double x : v) var += (x - mean) * (x - mean);
    var = v.size() > 1 ? var / static_cast<double>(v.size() - 1) : 0.0;
    return std::pair<double, double>(mean, std::sqrt(var));
  };

  std::vector<SummaryRow> out;
  std::set<std::string> scenarios;
  for (const auto& r : rows) scenarios.insert(r.scenario);
  for (const auto& scenario : scenarios) {
    std::set<std::string> classifiers, methods, subjects;
    for (const auto& r : rows) {
      if (r.scenario != scenario) continue;
      classifiers.insert(r.classifier);
      methods.insert(r.method);
      subjects.insert(r.subject);
    }
    for (const auto& clf : classifiers) {
      auto collect = [&](const std::string& method, const std::string& subject) {
        std::vector<double> v;
        for (const auto& r : rows) {
          if (r.scenario == scenario && r.classifier == clf && r.method == method &&
              (subject.empty() || r.subject == subject)) {
            v.push_back(r.accuracy);
          }
        }
        return v;
      };
      for (const auto& method : methods) {
        for (const auto& subject : subjects) {
          auto v = collect(method, subject);
          if (v.empty()) continue;
          auto [mean, sd] = mean_std(v);
          out.push_back({scenario, clf, method, subject, static_cast<int>(v.size()), mean, sd,
                         -1.0, false});
        }
        auto all = collect(method, "");
        auto [mean, sd] = mean_std(all);
        SummaryRow row{scenario, clf, method, "ALL", static_cast<int>(all.size()), mean, sd, -1.0,
                       false};
        if (method != "chatemg" && methods.count("chatemg")) {
          auto chat = collect("chatemg", "");
          if (!chat.empty() && !all.empty()) {
            row.p_value_vs_chatemg = wilcoxon_rank_sum_one_sided(chat, all);
            row.significant = row.p_value_vs_chatemg < kSignificanceAlpha;
          }
        }
        out.push_back(std::move(row));
      }
    }
  }
  return out;
}

inline void write_report_csv(const std::vector<AccuracyRow>& rows,
                             const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out << "scenario,holdout,classifier,method,subject,recording,accuracy\n";
  char buf[64];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof(buf), "%.6f", r.accuracy);
    out << r.scenario << ',' << r.holdout << ',' << r.classifier << ',' << r.method << ','
        << r.subject << ',' << r.recording_id << ',' << buf << "\n";
  }
}

inline void write_summary_csv(const std::vector<SummaryRow>& rows,
                              const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out << "scenario,classifier,method,subject,n,mean_accuracy,std_accuracy,"
         "p_value_vs_chatemg,significant_at_0.05\n";
  char buf[128];
  for (const auto& r : rows) {
    out << r.scenario << ',' << r.classifier << ',' << r.method << ',' << r.subject << ',' << r.n;
    std::snprintf(buf, sizeof(buf), ",%.6f,%.6f", r.mean, r.stddev);
    out << buf;
    if (r.p_value_vs_chatemg >= 0.0) {
      std::snprintf(buf, sizeof(buf), ",%.6g,%s", r.p_value_vs_chatemg,
                    r.significant ? "yes" : "no");
      out << buf;
    } else {
      out << ",,";
    }
    out << "\n";
  }
}

// ---------------------------------------------------------------------------
// Synthetic-sample fidelity: complete prompts cut from real windows and
// compare against the real continuations.
// ---------------------------------------------------------------------------
struct NrmseReport {
  std::array<double, kNumIntents> per_intent{};
  std::array<int, kNumIntents> counts{};
  double overall = 0.0;
};

inline NrmseReport evaluate_generation_nrmse(const IntentModelSet& model_set,
                                             const std::vector<Recording>& recordings,
                                             int max_windows_per_intent = 20,
                                             int prompt_len = kDefaultPromptLen,
                                             int window_len = kDefaultWindowLen,
                                             const SamplingConfig& sampling = {}, int jobs = 1) {
  ClassifierSet windows = windows_from_recordings(recordings, window_len, window_len / 2);
  std::array<std::vector<const EmgWindow*>, kNumIntents> by_intent;
  for (const auto& w : windows.windows) {
    auto& bucket = by_intent[static_cast<std::size_t>(w.intent)];
    if (static_cast<int>(bucket.size()) < max_windows_per_intent) bucket.push_back(&w);
  }
  NrmseReport report;
  double total = 0.0;
  int count = 0;
  for (Intent intent : kAllIntents) {
    const auto& bucket = by_intent[static_cast<std::size_t>(intent)];
    ChatEmgModel model = model_view(model_set, intent);
    std::vector<double> errors(bucket.size(), 0.0);
    parallel_for(static_cast<std::int64_t>(bucket.size()), jobs, [&](std::int64_t i) {
      const EmgWindow& w = *bucket[static_cast<std::size_t>(i)];
      Prompt prompt;
      prompt.intent = intent;
      prompt.data = w.data.topRows(prompt_len);
      prompt.source = w.source;
      SamplingConfig s = sampling;
      s.rng_seed = derive_seed(sampling.rng_seed, "nrmse", to_string(intent),
                               static_cast<std::uint64_t>(i));
      auto rng = make_rng(s.rng_seed);
      U16Mat synth = detail::complete_with_rng(model, prompt, window_len, s, rng);
      errors[static_cast<std::size_t>(i)] = nrmse(synth, w.data, prompt_len);
    });
    double sum = 0.0;
    for (double e : errors) sum += e;
    report.counts[static_cast<std::size_t>(intent)] = static_cast<int>(bucket.size());
    report.per_intent[static_cast<std::size_t>(intent)] =
        bucket.empty() ? 0.0 : sum / static_cast<double>(bucket.size());
    total += sum;
    count += static_cast<int>(bucket.size());
  }
  report.overall = count > 0 ? total / count : 0.0;
  return report;
}

// ---------------------------------------------------------------------------
// Per-channel t-SNE export: each channel of each window becomes one sample of
// dimension window_len; every channel is embedded separately.
// ---------------------------------------------------------------------------
struct TsnePoint {
  std::string label;
  int window_index = 0;
  int channel = 0;
  double x = 0.0;
  double y = 0.0;
};

inline std::vector<TsnePoint> tsne_windows(
    const std::vector<std::pair<std::string, const std::vector<EmgWindow>*>>& groups,
    const TsneConfig& cfg) {
  std::size_t n = 0;
  int window_len = -1;
  for (const auto& [label, windows] : groups) {
    n += windows->size();
    for (const auto& w : *windows) {
      if (window_len < 0) window_len = w.length();
      if (w.length() != window_len) {
        throw std::invalid_argument("tsne_windows: inconsistent window lengths");
      }
    }
  }
  if (n < 3) throw std::invalid_argument("tsne_windows: need at least 3 windows");

  std::vector<TsnePoint> points;
  MatD data(static_cast<Eigen::Index>(n), window_len);
  for (int channel = 0; channel < kNumChannels; ++channel) {
    Eigen::Index row = 0;
    for (const auto& [label, windows] : groups) {
      for (const auto& w : *windows) {
        for (int t = 0; t < window_len; ++t) {
          data(row, t) = static_cast<double>(w.data(t, channel));
        }
        ++row;
      }
    }
    TsneConfig channel_cfg = cfg;
    channel_cfg.rng_seed = derive_seed(cfg.rng_seed, "channel", static_cast<std::uint64_t>(channel));
    TsneResult result = tsne_embed(data, channel_cfg);
    row = 0;
    for (const auto& [label, windows] : groups) {
      for (std::size_t i = 0; i < windows->size(); ++i, ++row) {
        points.push_back({label, static_cast<int>(i), channel + 1, result.points(row, 0),
                          result.points(row, 1)});
      }
    }
  }
  return points;
}

inline void write_tsne_csv(const std::vector<TsnePoint>& points,
                           const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out << "label,window,channel,x,y\n";
  char buf[96];
  for (const auto& p : points) {
    std::snprintf(buf, sizeof(buf), "%.6f,%.6f", p.x, p.y);
    out << p.label << ',' << p.window_index << ',' << p.channel << ',' << buf << "\n";
  }
}

}  // namespace chatemg
