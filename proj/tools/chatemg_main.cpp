// chatemg: surface-EMG synthesis and intent-inferral pipeline.
//
//   sim        simulate a data-collection corpus
//   train-gen  train one generative model per run on an intent's data
//   generate   prompt-conditioned synthetic windows from trained models
//   eval       adaptation-scenario evaluation with baselines and significance
//   plot       CSV plot data (signal traces, per-channel t-SNE embeddings)
//
// Exit codes: 0 success, 2 usage error, 3 data error, 4 numeric failure.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

#include "chatemg/datasim.hpp"
#include "chatemg/eval.hpp"
#include "chatemg/generator.hpp"
#include "chatemg/recording_io.hpp"
#include "chatemg/runconfig.hpp"
#include "chatemg/trainer.hpp"

namespace fs = std::filesystem;
using namespace chatemg;

namespace {

struct CommonOpts {
  std::string config_file;
  std::vector<std::string> overrides;
  int jobs = default_jobs();
};

void add_common(CLI::App* cmd, CommonOpts& common) {
  cmd->add_option("--config", common.config_file, "key=value config file");
  cmd->add_option("--set", common.overrides, "config override, key=value (repeatable)");
  cmd->add_option("--jobs", common.jobs, "worker thread cap");
}

RunConfig resolve_config(const CommonOpts& common) {
  RunConfig rc = RunConfig::defaults();
  if (!common.config_file.empty()) rc.load_file(common.config_file);
  for (const auto& kv : common.overrides) {
    auto eq = kv.find('=');
    if (eq == std::string::npos) throw UsageError("--set expects key=value, got '" + kv + "'");
    rc.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  return rc;
}

void write_profile_record(const std::vector<std::string>& subjects, std::uint64_t seed,
                          const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out << "profile_version=" << kDefaultProfileVersion << "\n";
  char buf[64];
  for (const auto& subject : subjects) {
    SubjectProfile p = make_subject_profile(subject, seed);
    auto field = [&](const std::string& key, double v) {
      std::snprintf(buf, sizeof(buf), "%.17g", v);
      out << subject << "." << key << "=" << buf << "\n";
    };
    for (int c = 0; c < kNumChannels; ++c) field("baseline" + std::to_string(c + 1), p.baseline[c]);
    for (Intent intent : kAllIntents) {
      for (int c = 0; c < kNumChannels; ++c) {
        field(std::string("amplitude_") + to_string(intent) + std::to_string(c + 1),
              p.amplitude[static_cast<std::size_t>(intent)][c]);
      }
    }
    field("rise_tau", p.rise_tau);
    field("decay_tau", p.decay_tau);
    field("noise_scale", p.noise_scale);
    field("drift_rate", p.drift_rate);
  }
}

// ---------------------------------------------------------------------------
int cmd_sim(const CommonOpts& common, const std::string& out_dir, std::uint64_t seed,
            int subjects, int sessions, int recordings) {
  RunConfig rc = resolve_config(common);
  if (seed != 0) rc.set("sim.seed", std::to_string(seed));
  if (subjects > 0) rc.set("sim.subjects", std::to_string(subjects));
  if (sessions > 0) rc.set("sim.sessions", std::to_string(sessions));
  if (recordings > 0) rc.set("sim.recordings_per_condition", std::to_string(recordings));

  CorpusSpec spec = corpus_spec_from(rc);
  auto corpus = simulate_corpus(spec);
  fs::create_directories(out_dir);
  for (const auto& rec : corpus) write_recording(rec, out_dir);

  std::vector<std::string> subject_names;
  for (int s = 0; s < spec.n_subjects; ++s) subject_names.push_back(subject_name(s));
  write_profile_record(subject_names, spec.master_seed, fs::path(out_dir) / "profiles.txt");
  rc.write_resolved(fs::path(out_dir) / "resolved_config.txt");

  std::cout << "wrote " << corpus.size() << " recordings (" << spec.n_subjects << " subjects x "
            << spec.n_sessions << " sessions x 4 conditions x " << spec.recordings_per_condition
            << " recordings, " << kRecordingFrames << " frames each) to " << out_dir << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
int cmd_train_gen(const CommonOpts& common, const std::string& data_dir,
                  const std::string& intent_name, const std::string& out_path,
                  std::uint64_t seed) {
  RunConfig rc = resolve_config(common);
  if (seed != 0) rc.set("train.seed", std::to_string(seed));
  Intent intent = intent_from_string(intent_name);
  ModelConfig model_cfg = model_config_from(rc);
  TrainConfig train_cfg = train_config_from(rc);
  const int stride = static_cast<int>(rc.get_int("train.stride"));
  const bool augment = rc.get_bool("train.augment");

  auto corpus = load_corpus(data_dir);
  GenerativeDataset probe(corpus, intent, model_cfg.context_len, stride, false);
  if (probe.empty()) {
    std::string available;
    for (Intent i : kAllIntents) {
      GenerativeDataset d(corpus, i, model_cfg.context_len, stride, false);
      if (!d.empty()) available += std::string(available.empty() ? "" : ", ") + to_string(i);
    }
    throw InvalidCorpus("no training windows for intent '" + intent_name +
                        "'; available intents: " + (available.empty() ? "none" : available));
  }

  std::vector<std::string> ids;
  for (const auto& rec : corpus) {
    GenerativeDataset d({rec}, intent, model_cfg.context_len, stride, false);
    if (!d.empty()) ids.push_back(rec.meta.id());
  }
  SplitSpec split = split_by_recording(ids, train_cfg.train_fraction,
                                       derive_seed(train_cfg.rng_seed, "split", intent_name));
  std::vector<Recording> train_recs, val_recs;
  for (const auto& rec : corpus) {
    const std::string id = rec.meta.id();
    if (std::find(split.train_recordings.begin(), split.train_recordings.end(), id) !=
        split.train_recordings.end()) {
      train_recs.push_back(rec);
    } else if (std::find(split.val_recordings.begin(), split.val_recordings.end(), id) !=
               split.val_recordings.end()) {
      val_recs.push_back(rec);
    }
  }
  GenerativeDataset train_set(train_recs, intent, model_cfg.context_len, stride, augment);
  GenerativeDataset val_set(val_recs, intent, model_cfg.context_len, stride, augment);

  fs::path out(out_path);
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  std::ofstream log(out_path + ".log", std::ios::binary);
  log << "intent=" << intent_name << " train_examples=" << train_set.size()
      << " val_examples=" << val_set.size() << "\n";
  auto [params, report] =
      train_intent_model(model_cfg, train_cfg, train_set, val_set, intent, &log);
  save_checkpoint(params, model_cfg, intent, out);
  char line[128];
  std::snprintf(line, sizeof(line), "best_val_loss=%.6f steps=%lld stopped_epoch=%d\n",
                report.best_val_loss, report.steps, report.stopped_epoch);
  log << line;
  write_id_manifest(split.train_recordings, out_path + ".train_split");
  write_id_manifest(split.val_recordings, out_path + ".val_split");
  rc.write_resolved(out_path + ".config");

  std::cout << "trained " << intent_name << " model: best val loss " << report.best_val_loss
            << " after " << report.steps << " steps; checkpoint " << out_path << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
int cmd_generate(const CommonOpts& common, const std::string& models_dir,
                 const std::string& support_file, int n, const std::string& out_dir,
                 std::uint64_t seed, bool first_motion_only) {
  RunConfig rc = resolve_config(common);
  if (seed != 0) rc.set("sample.seed", std::to_string(seed));
  if (n > 0) rc.set("sample.n_per_intent", std::to_string(n));
  SamplingConfig sampling = sampling_config_from(rc);
  const int n_per_intent = static_cast<int>(rc.get_int("sample.n_per_intent"));
  const int prompt_len = static_cast<int>(rc.get_int("sample.prompt_len"));
  const int target_len = static_cast<int>(rc.get_int("sample.target_len"));

  IntentModelSet models = load_model_set(models_dir);
  Recording support = read_recording(support_file);
  if (first_motion_only) support = split_support_query(support).support;

  auto batches =
      batch_generate(models, support, n_per_intent, sampling, prompt_len, target_len, common.jobs);
  fs::create_directories(out_dir);
  for (const auto& batch : batches) write_synthetic_batch(batch, out_dir);
  rc.write_resolved(fs::path(out_dir) / "resolved_config.txt");

  // Fidelity check against real continuations from the support data.
  NrmseReport nr = evaluate_generation_nrmse(models, {support}, 10, prompt_len, target_len,
                                             sampling, common.jobs);
  {
    std::ofstream summary(fs::path(out_dir) / "summary.txt", std::ios::binary);
    char buf[160];
    for (Intent intent : kAllIntents) {
      std::snprintf(buf, sizeof(buf), "%s: windows=%d nrmse=%.4f\n", to_string(intent),
                    nr.counts[static_cast<std::size_t>(intent)],
                    nr.per_intent[static_cast<std::size_t>(intent)]);
      summary << buf;
    }
    std::snprintf(buf, sizeof(buf), "overall_nrmse=%.4f\n", nr.overall);
    summary << buf;
  }
  std::cout << "generated " << n_per_intent << " windows per intent into " << out_dir
            << " (overall NRMSE vs real continuations: " << nr.overall << ")\n";
  return 0;
}

// ---------------------------------------------------------------------------
int cmd_eval(const CommonOpts& common, const std::string& scenario_name,
             const std::string& corpus_dir, const std::string& classifier_name,
             const std::string& methods_csv, const std::string& out_path, std::uint64_t seed) {
  RunConfig rc = resolve_config(common);
  if (seed != 0) rc.set("eval.seed", std::to_string(seed));
  ScenarioKind kind = scenario_kind_from_string(scenario_name);
  ModelConfig model_cfg = model_config_from(rc);
  TrainConfig train_cfg = train_config_from(rc);
  EvalConfig eval_cfg = eval_config_from(rc);
  eval_cfg.jobs = common.jobs;

  std::vector<ClfConfig> clf_configs;
  if (classifier_name == "all") {
    for (ClassifierKind k :
         {ClassifierKind::lda, ClassifierKind::rf, ClassifierKind::transformer}) {
      clf_configs.push_back(clf_config_from(rc, k));
    }
  } else {
    clf_configs.push_back(clf_config_from(rc, classifier_kind_from_string(classifier_name)));
  }
  std::vector<Method> methods;
  {
    std::stringstream ss(methods_csv);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
      if (!tok.empty()) methods.push_back(method_from_string(tok));
    }
  }
  if (methods.empty()) throw UsageError("--methods must name at least one method");

  auto corpus = load_corpus(corpus_dir);
  auto scenarios = build_scenarios(corpus, kind, eval_cfg.eval_per_subject);

  std::vector<AccuracyRow> all_rows;
  for (const auto& scenario : scenarios) {
    detail::assert_no_leakage(scenario);
    std::vector<Recording> train_recs;
    for (const auto& id : scenario.train_ids) {
      train_recs.push_back(detail::find_recording(corpus, id));
    }
    TrainConfig scenario_train = train_cfg;
    scenario_train.rng_seed = derive_seed(eval_cfg.rng_seed, "models", scenario.holdout);
    std::cout << "scenario " << to_string(kind)
              << (scenario.holdout.empty() ? "" : " holdout=" + scenario.holdout)
              << ": training generative models on " << train_recs.size() << " recordings\n";
    auto trained = train_all_intents(model_cfg, scenario_train, train_recs,
                                     static_cast<int>(rc.get_int("train.stride")),
                                     rc.get_bool("train.augment"));
    auto rows =
        run_scenario(scenario, corpus, trained.models, clf_configs, methods, eval_cfg, &std::cout);
    all_rows.insert(all_rows.end(), rows.begin(), rows.end());
  }

  fs::path out(out_path);
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  write_report_csv(all_rows, out);
  fs::path summary_path = out;
  summary_path.replace_extension("");
  summary_path += "_summary.csv";
  write_summary_csv(summarize(all_rows), summary_path);
  rc.write_resolved(out_path + ".config");

  std::cout << "wrote " << all_rows.size() << " accuracy rows to " << out_path
            << " and summary to " << summary_path.string() << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
int cmd_plot(const CommonOpts& common, const std::string& kind, const std::string& real_file,
             const std::string& synth_file, int index, const std::vector<std::string>& inputs,
             int max_windows, const std::string& out_path, std::uint64_t seed) {
  RunConfig rc = resolve_config(common);
  const int window_len = static_cast<int>(rc.get_int("sample.target_len"));
  fs::path out(out_path);
  if (out.has_parent_path()) fs::create_directories(out.parent_path());

  if (kind == "signals") {
    if (real_file.empty() || synth_file.empty()) {
      throw UsageError("plot --kind signals requires --real and --synth");
    }
    Recording real = read_recording(real_file);
    Recording synth = read_recording(synth_file);
    auto start_of = [&](const Recording& rec, const std::string& name) {
      const std::size_t start =
          static_cast<std::size_t>(index) * static_cast<std::size_t>(window_len);
      if (start + static_cast<std::size_t>(window_len) > rec.size()) {
        throw UsageError("window index " + std::to_string(index) + " out of range for " + name);
      }
      return start;
    };
    const std::size_t r0 = start_of(real, "--real");
    const std::size_t s0 = start_of(synth, "--synth");
    std::ofstream csv(out, std::ios::binary);
    if (!csv) throw IoError("cannot open for writing: " + out_path);
    csv << "t";
    for (int c = 1; c <= kNumChannels; ++c) csv << ",real_emg" << c;
    for (int c = 1; c <= kNumChannels; ++c) csv << ",synth_emg" << c;
    csv << "\n";
    for (int t = 0; t < window_len; ++t) {
      csv << t * 10;
      for (int c = 0; c < kNumChannels; ++c) {
        csv << ',' << real.frames[r0 + static_cast<std::size_t>(t)][c];
      }
      for (int c = 0; c < kNumChannels; ++c) {
        csv << ',' << synth.frames[s0 + static_cast<std::size_t>(t)][c];
      }
      csv << "\n";
    }
    std::cout << "wrote signal traces (" << window_len << " steps x 8 channels x 2 sources) to "
              << out_path << "\n";
    return 0;
  }

  if (kind == "tsne") {
    if (inputs.empty()) throw UsageError("plot --kind tsne requires at least one --in file");
    std::vector<std::vector<EmgWindow>> groups_storage;
    for (const auto& file : inputs) {
      Recording rec = read_recording(file);
      auto windows = segment_windows(rec, window_len, window_len);
      if (max_windows > 0 && static_cast<int>(windows.size()) > max_windows) {
        windows.resize(static_cast<std::size_t>(max_windows));
      }
      groups_storage.push_back(std::move(windows));
    }
    std::vector<std::pair<std::string, const std::vector<EmgWindow>*>> groups;
    for (std::size_t i = 0; i < inputs.size(); ++i) {
      groups.emplace_back(fs::path(inputs[i]).stem().string(), &groups_storage[i]);
    }
    TsneConfig tsne_cfg;
    tsne_cfg.rng_seed = seed;
    auto points = tsne_windows(groups, tsne_cfg);
    write_tsne_csv(points, out);
    std::cout << "wrote " << points.size() << " t-SNE points (8 channels) to " << out_path << "\n";
    return 0;
  }

  throw UsageError("unknown plot kind '" + kind + "' (expected signals or tsne)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"chatemg: EMG synthesis and intent-inferral pipeline"};
  app.require_subcommand(1);

  CommonOpts common;

  auto* sim = app.add_subcommand("sim", "simulate a data-collection corpus");
  std::string sim_out;
  std::uint64_t sim_seed = 0;
  int sim_subjects = 0, sim_sessions = 0, sim_recordings = 0;
  sim->add_option("--out", sim_out, "output directory")->required();
  sim->add_option("--seed", sim_seed, "master seed");
  sim->add_option("--subjects", sim_subjects, "number of subjects");
  sim->add_option("--sessions", sim_sessions, "sessions per subject");
  sim->add_option("--recordings", sim_recordings, "recordings per condition");
  add_common(sim, common);

  auto* train = app.add_subcommand("train-gen", "train a generative model for one intent");
  std::string train_data, train_intent, train_out;
  std::uint64_t train_seed = 0;
  train->add_option("--data", train_data, "corpus directory")->required();
  train->add_option("--intent", train_intent, "open|close|relax")->required();
  train->add_option("--out", train_out, "checkpoint path")->required();
  train->add_option("--seed", train_seed, "training seed");
  add_common(train, common);

  auto* gen = app.add_subcommand("generate", "generate synthetic windows from prompts");
  std::string gen_models, gen_support, gen_out;
  int gen_n = 0;
  std::uint64_t gen_seed = 0;
  bool gen_first_motion = false;
  gen->add_option("--models", gen_models, "directory with open/relax/close checkpoints")
      ->required();
  gen->add_option("--support", gen_support, "support recording file")->required();
  gen->add_option("--n", gen_n, "windows per intent");
  gen->add_option("--out", gen_out, "output directory")->required();
  gen->add_option("--seed", gen_seed, "sampling seed");
  gen->add_flag("--first-motion-only", gen_first_motion,
                "use only the first open-relax-close motion of the support file");
  add_common(gen, common);

  auto* ev = app.add_subcommand("eval", "run an adaptation scenario evaluation");
  std::string eval_scenario, eval_corpus, eval_classifier = "all";
  std::string eval_methods = "self,fine_tune,chatemg", eval_out;
  std::uint64_t eval_seed = 0;
  ev->add_option("--scenario", eval_scenario, "condition|session|subject")->required();
  ev->add_option("--corpus", eval_corpus, "corpus directory")->required();
  ev->add_option("--classifier", eval_classifier, "lda|rf|transformer|all");
  ev->add_option("--methods", eval_methods, "comma list of self,fine_tune,chatemg");
  ev->add_option("--out", eval_out, "report CSV path")->required();
  ev->add_option("--seed", eval_seed, "evaluation seed");
  add_common(ev, common);

  auto* plot = app.add_subcommand("plot", "emit plot data as CSV");
  std::string plot_kind, plot_real, plot_synth, plot_out;
  std::vector<std::string> plot_inputs;
  int plot_index = 0, plot_max_windows = 100;
  std::uint64_t plot_seed = 0;
  plot->add_option("--kind", plot_kind, "signals|tsne")->required();
  plot->add_option("--real", plot_real, "real recording file (signals)");
  plot->add_option("--synth", plot_synth, "synthetic recording file (signals)");
  plot->add_option("--index", plot_index, "window index (signals)");
  plot->add_option("--in", plot_inputs, "input recording files (tsne, repeatable)");
  plot->add_option("--max-windows", plot_max_windows, "window cap per input file (tsne)");
  plot->add_option("--out", plot_out, "output CSV path")->required();
  plot->add_option("--seed", plot_seed, "embedding seed");
  add_common(plot, common);

  try {
    app.parse(argc, argv);
    if (sim->parsed()) {
      return cmd_sim(common, sim_out, sim_seed, sim_subjects, sim_sessions, sim_recordings);
    }
    if (train->parsed()) {
      return cmd_train_gen(common, train_data, train_intent, train_out, train_seed);
    }
    if (gen->parsed()) {
      return cmd_generate(common, gen_models, gen_support, gen_n, gen_out, gen_seed,
                          gen_first_motion);
    }
    if (ev->parsed()) {
      return cmd_eval(common, eval_scenario, eval_corpus, eval_classifier, eval_methods, eval_out,
                      eval_seed);
    }
    if (plot->parsed()) {
      return cmd_plot(common, plot_kind, plot_real, plot_synth, plot_index, plot_inputs,
                      plot_max_windows, plot_out, plot_seed);
    }
    return 2;
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return 4;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
}
