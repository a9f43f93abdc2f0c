#include "grunt/cli.hpp"

#include <charconv>
#include <filesystem>
#include <optional>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "grunt/eval.hpp"
#include "grunt/features.hpp"
#include "grunt/io.hpp"
#include "grunt/learn/checkpoint.hpp"
#include "grunt/synth.hpp"

namespace grunt {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

std::map<std::string, std::string> parse_config_text(std::string_view text) {
  std::map<std::string, std::string> out;
  std::istringstream in{std::string(text)};
  std::string line;
  int number = 0;
  auto trim = [](std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return std::string();
    return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
  };
  while (std::getline(in, line)) {
    ++number;
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw FormatError("config line " + std::to_string(number) + ": expected key=value");
    }
    std::string key = trim(line.substr(0, eq));
    while (!key.empty() && key[0] == '-') key.erase(0, 1);
    if (key.empty()) throw FormatError("config line " + std::to_string(number) + ": empty key");
    if (!out.emplace(key, trim(line.substr(eq + 1))).second) {
      throw FormatError("config line " + std::to_string(number) + ": repeated key '" + key + "'");
    }
  }
  return out;
}

namespace {

/// Raw string flags of one subcommand plus the optional config file.
struct Flags {
  std::map<std::string, std::optional<std::string>> values;
  std::optional<std::string> config;
};

/// Resolves a setting as flag > config file > default.
class Settings {
 public:
  Settings(const Flags& flags, std::map<std::string, std::string> file) : flags_(flags), file_(std::move(file)) {
    for (const auto& [key, value] : file_) {
      if (!flags_.values.count(key)) throw ArgumentError("config file: unknown key '" + key + "'");
    }
  }

  std::optional<std::string> maybe(const std::string& key) const {
    if (const auto& f = flags_.values.at(key)) return *f;
    if (const auto it = file_.find(key); it != file_.end()) return it->second;
    return std::nullopt;
  }

  bool given(const std::string& key) const { return maybe(key).has_value(); }

  std::string str(const std::string& key, const std::string& def) const { return maybe(key).value_or(def); }

  std::string required(const std::string& key) const {
    if (auto v = maybe(key)) return *v;
    throw ArgumentError("--" + key + " is required");
  }

  long long integer(const std::string& key, long long def) const {
    const auto v = maybe(key);
    if (!v) return def;
    long long out = 0;
    const auto [ptr, ec] = std::from_chars(v->data(), v->data() + v->size(), out);
    if (ec != std::errc() || ptr != v->data() + v->size()) {
      throw ArgumentError("--" + key + ": '" + *v + "' is not an integer");
    }
    return out;
  }

 private:
  const Flags& flags_;
  std::map<std::string, std::string> file_;
};

double parse_real(const std::string& key, const std::string& s) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != s.size()) throw ArgumentError("--" + key + ": '" + s + "' is not a number");
  return v;
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(s);
  while (std::getline(in, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

void add_flag(CLI::App* app, Flags& flags, const std::string& name, const std::string& help) {
  app->add_option("--" + name, flags.values[name], help);
}

Settings settings_for(const Flags& flags) {
  std::map<std::string, std::string> file;
  if (flags.config) file = parse_config_text(read_text(*flags.config));
  return Settings(flags, std::move(file));
}

void log(std::ostream& err, const std::string& message) { err << "[grunt] " << message << "\n"; }

DatasetManifest load_manifest_checked(const fs::path& path) {
  if (!fs::exists(path)) throw Error("manifest not found: " + path.string());
  return load_manifest(path);
}

fs::path clips_dir(const Settings& s, const fs::path& manifest) {
  return s.given("clips") ? fs::path(s.str("clips", "")) : manifest.parent_path() / "clips";
}

/// Clips from the clip store; a missing clip file is cut from its recording.
ClipStore load_clips(const DatasetManifest& manifest, const fs::path& dir) {
  ClipStore store;
  std::map<std::string, AudioClip> recordings;
  for (const auto& r : manifest.records) {
    const fs::path path = dir / (r.clip_id() + ".wav");
    AudioClip clip;
    if (fs::exists(path)) {
      clip = read_wav(path);
    } else {
      const auto it = manifest.audio_paths.find(r.recording_id);
      if (it == manifest.audio_paths.end() || !fs::exists(it->second)) {
        throw Error("missing audio for clip " + r.clip_id() + " (no " + path.string() + " and no recording)");
      }
      auto rec = recordings.find(r.recording_id);
      if (rec == recordings.end()) rec = recordings.emplace(r.recording_id, read_wav(it->second)).first;
      clip = extract_clip(rec->second, r);
    }
    clip.source = r;
    store.put(r.clip_id(), std::move(clip));
  }
  return store;
}

FeatureTable features_for(const Settings& s, const DatasetManifest& manifest, const fs::path& manifest_path,
                          FeatureKind kind, int jobs, std::ostream& err) {
  const ClipStore clips = load_clips(manifest, clips_dir(s, manifest_path));
  std::optional<fs::path> cache;
  if (s.given("cache")) cache = fs::path(s.str("cache", ""));
  ExtractStats stats;
  auto table = extract_features(manifest, clips, kind, cache, jobs, &stats);
  log(err, std::string(to_string(kind)) + ": computed " + std::to_string(stats.computed) + ", reused " +
               std::to_string(stats.reused));
  return table;
}

int positive_int(const Settings& s, const std::string& key, long long def) {
  const long long v = s.integer(key, def);
  if (v < 1 || v > 1'000'000'000) throw ArgumentError("--" + key + " must be a positive integer");
  return static_cast<int>(v);
}

std::uint64_t seed_of(const Settings& s, long long def) {
  const long long v = s.integer("seed", def);
  if (v < 0) throw ArgumentError("--seed must be non-negative");
  return static_cast<std::uint64_t>(v);
}

// ---------------------------------------------------------------------------
// Experiment settings shared by crossval and train

struct Experiment {
  Task task = Task::sex;
  Subset subset = Subset::combined;
  FeatureSpec feature;
  std::vector<ModelSpec> grid;
  std::uint64_t seed = 0;
  int folds = 5;
  int jobs = 1;
};

const char* kExperimentFlags[][2] = {
    {"manifest", "Manifest CSV"},
    {"clips", "Clip store directory (default: <manifest dir>/clips)"},
    {"cache", "Feature cache directory (features are extracted on demand)"},
    {"task", "sex | score"},
    {"subset", "women | men | combined"},
    {"feature", "lld | mfcc | spectrogram | compare_functionals | egemaps_functionals"},
    {"aggregation", "mean | middle | flat (vector models on sequence features)"},
    {"model", "svm | lstm_rnn | crnn | constant"},
    {"hp", "HP set(s) for neural models: I..VI, comma list or 'all'"},
    {"c-grid", "SVM C values, comma list or 'default' (1e-5..1e1)"},
    {"epochs", "Training epochs for neural models"},
    {"svm-iterations", "SVM epochs"},
    {"lstm-hidden", "LSTM units per layer"},
    {"folds", "Number of player-independent folds"},
    {"seed", "Seed of fold planning and training"},
    {"jobs", "Worker threads"},
    {"out", "Output directory"},
};

Experiment resolve_experiment(const Settings& s) {
  Experiment e;
  e.task = parse_task(s.str("task", "sex"));
  e.subset = parse_subset(s.str("subset", "combined"));
  e.feature.kind = parse_feature(s.str("feature", "spectrogram"));
  e.feature.aggregation = parse_aggregation(s.str("aggregation", "flat"));
  e.seed = seed_of(s, 0);
  e.folds = positive_int(s, "folds", 5);
  e.jobs = positive_int(s, "jobs", 1);

  ModelSpec base;
  base.kind = parse_model(s.str("model", "svm"));
  base.svm_iterations = positive_int(s, "svm-iterations", 1000);
  base.train.epochs = positive_int(s, "epochs", base.train.epochs);
  base.lstm_hidden = positive_int(s, "lstm-hidden", base.lstm_hidden);
  const bool neural = base.kind == ModelKind::crnn || base.kind == ModelKind::lstm_rnn;
  if (!neural && s.given("hp")) throw ArgumentError("--hp applies to lstm_rnn and crnn only");
  if (base.kind != ModelKind::svm && s.given("c-grid")) throw ArgumentError("--c-grid applies to svm only");
  if (!is_sequence(e.feature.kind) && s.given("aggregation")) {
    throw ArgumentError("--aggregation applies to sequence features only");
  }

  if (base.kind == ModelKind::svm) {
    const std::string spec = s.str("c-grid", "default");
    std::vector<double> cs;
    if (spec == "default") {
      cs = default_c_grid();
    } else {
      for (const auto& item : split_list(spec)) cs.push_back(parse_real("c-grid", item));
    }
    if (cs.empty()) throw ArgumentError("--c-grid is empty");
    e.grid = c_grid(base, cs);
  } else if (neural) {
    const std::string spec = s.str("hp", "I");
    std::vector<HpSet> sets;
    if (spec == "all") {
      sets = hp_sets();
    } else {
      for (const auto& item : split_list(spec)) sets.push_back(hp_set(parse_hp(item)));
    }
    if (sets.empty()) throw ArgumentError("--hp is empty");
    e.grid = hp_grid(base, sets);
  } else {
    e.grid = {base};
  }
  for (const auto& m : e.grid) validate_combination(e.task, e.subset, e.feature, m);
  return e;
}

// ---------------------------------------------------------------------------
// Commands

int cmd_synth(const Settings& s, std::ostream& out, std::ostream& err) {
  SyntheticSpec spec;
  spec.n_players = positive_int(s, "players", spec.n_players);
  spec.clips_per_player = positive_int(s, "clips", spec.clips_per_player);
  spec.seed = seed_of(s, static_cast<long long>(spec.seed));
  spec.validate();
  const fs::path dir = s.required("out");
  log(err, "generating " + std::to_string(spec.n_players * spec.clips_per_player) + " clips");
  const auto corpus = generate_synthetic_corpus(spec);
  write_corpus(corpus, dir);
  const auto report = validate_manifest(corpus.manifest);
  out << report.to_text();
  out << "wrote " << corpus.manifest.records.size() << " clips to " << (dir / "clips").string() << "\n";
  return report.ok() ? kExitOk : kExitError;
}

int cmd_validate(const Settings& s, std::ostream& out, std::ostream&) {
  const auto manifest = load_manifest_checked(s.required("manifest"));
  const auto report = validate_manifest(manifest);
  out << report.to_text();
  return report.ok() ? kExitOk : kExitError;
}

int cmd_extract(const Settings& s, std::ostream& out, std::ostream& err) {
  const fs::path manifest_path = s.required("manifest");
  const auto kind = parse_feature(s.str("feature", "mfcc"));
  s.required("cache");
  const int jobs = positive_int(s, "jobs", 1);
  const auto manifest = load_manifest_checked(manifest_path);
  const auto table = features_for(s, manifest, manifest_path, kind, jobs, err);
  const auto& first = table.begin()->second;
  out << to_string(kind) << ": " << table.size() << " entries of shape " << first.rows() << "x" << first.cols()
      << "\n";
  return kExitOk;
}

int cmd_crossval(const Settings& s, std::ostream& out, std::ostream& err) {
  const fs::path manifest_path = s.required("manifest");
  const fs::path out_dir = s.required("out");
  const Experiment e = resolve_experiment(s);  // rejects bad combinations before any compute
  const auto manifest = filter_subset(load_manifest_checked(manifest_path), e.subset);
  if (manifest.records.empty()) throw ArgumentError("subset " + std::string(to_string(e.subset)) + " is empty");
  const auto table = features_for(s, manifest, manifest_path, e.feature.kind, e.jobs, err);

  CvOptions options{e.seed, e.jobs};
  std::vector<EvalReport> reports;
  for (std::size_t i = 0; i < e.grid.size(); ++i) {
    log(err, "grid point " + std::to_string(i + 1) + "/" + std::to_string(e.grid.size()));
    reports.push_back(run_experiment(manifest, table, e.task, e.subset, e.feature, e.grid[i], e.folds, e.seed, options));
  }
  const std::size_t best = best_report(reports);
  fs::create_directories(out_dir);
  write_text_atomic(out_dir / "report.json", report_document(reports, best, utc_timestamp()).dump(2) + "\n");
  const std::string text = render_table(reports);
  write_text_atomic(out_dir / "report.txt", text);
  out << text;
  return kExitOk;
}

int cmd_report(const std::vector<std::string>& paths, const Settings& s, std::ostream& out, std::ostream&) {
  if (paths.empty()) throw ArgumentError("report: at least one report.json is required");
  std::vector<EvalReport> reports;
  for (const auto& p : paths) {
    ojson doc;
    try {
      doc = ojson::parse(read_text(p));
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(p + ": " + e.what());
    }
    try {
      for (auto& r : parse_report_document(doc)) reports.push_back(std::move(r));
    } catch (const FormatError& e) {
      throw FormatError(p + ": " + e.what());
    }
  }
  const std::string text = render_table(reports);
  out << text;
  if (s.given("out")) {
    const fs::path dir = s.str("out", "");
    fs::create_directories(dir);
    write_text_atomic(dir / "report.json",
                      report_document(reports, best_report(reports), utc_timestamp()).dump(2) + "\n");
    write_text_atomic(dir / "report.txt", text);
  }
  return kExitOk;
}

ojson checkpoint_meta(const Experiment& e) {
  ojson j;
  j["task"] = to_string(e.task);
  j["subset"] = to_string(e.subset);
  j["feature"] = to_string(e.feature.kind);
  j["feature_schema"] = feature_schema_version(e.feature.kind);
  j["aggregation"] = to_string(e.feature.aggregation);
  return j;
}

int cmd_train(const Settings& s, std::ostream& out, std::ostream& err) {
  const fs::path manifest_path = s.required("manifest");
  const fs::path out_path = s.required("out");
  const Experiment e = resolve_experiment(s);
  if (e.grid.size() != 1) throw ArgumentError("train takes a single C value or HP set");
  const ModelSpec& m = e.grid.front();
  if (m.kind == ModelKind::constant) throw ArgumentError("the constant model has nothing to train");
  const auto manifest = filter_subset(load_manifest_checked(manifest_path), e.subset);
  const auto table = features_for(s, manifest, manifest_path, e.feature.kind, e.jobs, err);
  const auto labels = labels_for(manifest, e.task);

  Checkpoint ckpt;
  if (m.kind == ModelKind::svm) {
    RowMatrix x;
    for (std::size_t i = 0; i < manifest.records.size(); ++i) {
      const Vector v = feature_vector(table.at(manifest.records[i].clip_id()), e.feature);
      if (i == 0) x.resize(static_cast<Eigen::Index>(manifest.records.size()), v.size());
      x.row(static_cast<Eigen::Index>(i)) = v.transpose();
    }
    const Standardizer scaler = standardize_fit(x);
    SvmModel svm = svm_train(scaler.apply(x), labels, m.c, m.svm_iterations, e.seed);
    svm.standardizer = scaler;
    ckpt = svm_checkpoint(svm, checkpoint_meta(e));
  } else {
    std::vector<RowMatrix> seqs;
    for (const auto& r : manifest.records) seqs.push_back(table.at(r.clip_id()));
    const Standardizer scaler = standardize_fit_frames(seqs);
    for (auto& x : seqs) x = scaler.apply(x);
    const int t = static_cast<int>(seqs.front().rows());
    const int d = static_cast<int>(seqs.front().cols());
    const NetConfig config = m.kind == ModelKind::crnn
                                 ? crnn_config(sequence_feature(e.feature.kind), t, d, m.lstm_hidden)
                                 : lstm_rnn_config(t, d, m.lstm_hidden);
    TrainConfig tc = m.effective_train();
    tc.seed = e.seed;
    auto result = net_train(config, tc, seqs, labels, [&](int epoch, double loss) {
      log(err, "epoch " + std::to_string(epoch + 1) + " loss " + std::to_string(loss));
    });
    ckpt = net_checkpoint({std::move(result.params), scaler}, checkpoint_meta(e));
  }
  if (out_path.has_parent_path()) fs::create_directories(out_path.parent_path());
  save_checkpoint(out_path, ckpt);
  out << "wrote " << to_string(m.kind) << " model to " << out_path.string() << "\n";
  return kExitOk;
}

int cmd_predict(const Settings& s, std::ostream& out, std::ostream& err) {
  const fs::path manifest_path = s.required("manifest");
  const Checkpoint ckpt = load_checkpoint(s.required("checkpoint"));
  FeatureSpec feature;
  Task task = Task::sex;
  try {
    feature.kind = parse_feature(ckpt.config.at("feature").get<std::string>());
    feature.aggregation = parse_aggregation(ckpt.config.at("aggregation").get<std::string>());
    task = parse_task(ckpt.config.at("task").get<std::string>());
    if (ckpt.config.at("feature_schema").get<std::string>() != feature_schema_version(feature.kind)) {
      throw FormatError("checkpoint was trained on another feature schema");
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint metadata: ") + e.what());
  }
  const auto manifest = load_manifest_checked(manifest_path);
  const auto table = features_for(s, manifest, manifest_path, feature.kind, positive_int(s, "jobs", 1), err);

  std::vector<int> pred;
  const std::string kind = ckpt.config.at("model").get<std::string>();
  if (kind == "svm") {
    const SvmModel svm = svm_from_checkpoint(ckpt);
    RowMatrix x(static_cast<Eigen::Index>(manifest.records.size()), svm.weights.size());
    for (std::size_t i = 0; i < manifest.records.size(); ++i) {
      x.row(static_cast<Eigen::Index>(i)) = feature_vector(table.at(manifest.records[i].clip_id()), feature).transpose();
    }
    pred = svm_predict(svm, x).labels;
  } else {
    const NetModel net = net_from_checkpoint(ckpt);
    for (const auto& r : manifest.records) {
      pred.push_back(predict_class(net_forward(net.params, net.standardizer.apply(table.at(r.clip_id())), Mode::eval)));
    }
  }
  const auto names = class_names(task);
  const auto truth = labels_for(manifest, task);
  out << "clip_id,predicted,truth\n";
  for (std::size_t i = 0; i < pred.size(); ++i) {
    out << manifest.records[i].clip_id() << "," << names[static_cast<std::size_t>(pred[i])] << ","
        << names[static_cast<std::size_t>(truth[i])] << "\n";
  }
  try {
    log(err, "UAR " + std::to_string(uar(confusion(truth, pred))));
  } catch (const ArgumentError&) {
    // a single-class manifest has no UAR
  }
  return kExitOk;
}

int cmd_gradcheck(const Settings& s, std::ostream& out, std::ostream&) {
  const int trials = positive_int(s, "trials", 20);
  const std::uint64_t seed = seed_of(s, 1);
  NetConfig crnn;
  crnn.architecture = Architecture::crnn;
  crnn.time_steps = 8;
  crnn.features = 3;
  crnn.conv_blocks = {{2, 3}, {2, 3}, {2, 3}};
  crnn.lstm_hidden = 4;
  const NetConfig lstm = lstm_rnn_config(8, 3, 4);
  bool ok = true;
  for (const auto& [name, config] : {std::pair{"crnn", crnn}, std::pair{"lstm_rnn", lstm}}) {
    const auto r = grad_check(config, trials, seed);
    const bool pass = r.finite && r.max_rel_error < 1e-4;
    ok = ok && pass;
    out << name << ": trials " << r.trials << ", checked " << r.checked << ", skipped kinks " << r.skipped_kinks
        << ", max rel err " << r.max_rel_error << ", mean rel err " << r.mean_rel_error << (pass ? "" : "  FAIL")
        << "\n";
  }
  return ok ? kExitOk : kExitError;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Tennis grunt classification pipeline", "grunt"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);

  auto add_config = [](CLI::App* sub, Flags& flags) {
    sub->add_option("--config", flags.config, "key=value file; flags take precedence")->check(CLI::ExistingFile);
  };

  Flags synth_flags, validate_flags, extract_flags, crossval_flags, report_flags, train_flags, predict_flags,
      gradcheck_flags;
  std::vector<std::string> report_paths;

  auto* synth = app.add_subcommand("synth", "Generate a synthetic corpus");
  add_flag(synth, synth_flags, "players", "Number of players (even)");
  add_flag(synth, synth_flags, "clips", "Clips per player (even)");
  add_flag(synth, synth_flags, "seed", "Generator seed");
  add_flag(synth, synth_flags, "out", "Output directory");
  add_config(synth, synth_flags);

  auto* validate = app.add_subcommand("validate", "Check a manifest");
  add_flag(validate, validate_flags, "manifest", "Manifest CSV");
  add_config(validate, validate_flags);

  auto* extract = app.add_subcommand("extract", "Extract features into the cache");
  for (const char* name : {"manifest", "clips", "cache", "feature", "jobs"}) {
    add_flag(extract, extract_flags, name, "");
  }
  add_config(extract, extract_flags);

  auto* crossval = app.add_subcommand("crossval", "Player-independent cross-validation");
  for (const auto& [name, help] : kExperimentFlags) add_flag(crossval, crossval_flags, name, help);
  add_config(crossval, crossval_flags);

  auto* report = app.add_subcommand("report", "Merge report.json files into one table");
  report->add_option("reports", report_paths, "report.json files");
  add_flag(report, report_flags, "out", "Directory for the merged report.json and report.txt");
  add_config(report, report_flags);

  auto* train = app.add_subcommand("train", "Train one model on a whole subset and save a checkpoint");
  for (const auto& [name, help] : kExperimentFlags) add_flag(train, train_flags, name, help);
  add_config(train, train_flags);

  auto* predict = app.add_subcommand("predict", "Classify clips with a checkpoint");
  for (const char* name : {"manifest", "clips", "cache", "checkpoint", "jobs"}) add_flag(predict, predict_flags, name, "");
  add_config(predict, predict_flags);

  auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference check of the network gradients");
  add_flag(gradcheck, gradcheck_flags, "trials", "Randomized trials");
  add_flag(gradcheck, gradcheck_flags, "seed", "Seed");
  add_config(gradcheck, gradcheck_flags);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  if (!reversed.empty()) reversed.pop_back();  // program name
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*synth) return cmd_synth(settings_for(synth_flags), out, err);
    if (*validate) return cmd_validate(settings_for(validate_flags), out, err);
    if (*extract) return cmd_extract(settings_for(extract_flags), out, err);
    if (*crossval) return cmd_crossval(settings_for(crossval_flags), out, err);
    if (*report) return cmd_report(report_paths, settings_for(report_flags), out, err);
    if (*train) return cmd_train(settings_for(train_flags), out, err);
    if (*predict) return cmd_predict(settings_for(predict_flags), out, err);
    if (*gradcheck) return cmd_gradcheck(settings_for(gradcheck_flags), out, err);
  } catch (const LeakageError& e) {
    err << "grunt: leakage: " << e.what() << "\n";
    return kExitLeakage;
  } catch (const ArgumentError& e) {
    err << "grunt: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "grunt: " << e.what() << "\n";
    return kExitError;
  }
  return kExitUsage;
}

}  // namespace grunt
