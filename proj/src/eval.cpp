#include "grunt/eval.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include "grunt/parallel.hpp"

namespace grunt {

using ojson = nlohmann::ordered_json;

std::string_view to_string(Task t) { return t == Task::sex ? "sex" : "score"; }

Task parse_task(std::string_view s) {
  if (s == "sex") return Task::sex;
  if (s == "score") return Task::score;
  throw ArgumentError("unknown task '" + std::string(s) + "' (expected sex or score)");
}

std::string_view to_string(Subset s) {
  switch (s) {
    case Subset::women: return "women";
    case Subset::men: return "men";
    case Subset::combined: return "combined";
  }
  return "?";
}

Subset parse_subset(std::string_view s) {
  if (s == "women") return Subset::women;
  if (s == "men") return Subset::men;
  if (s == "combined") return Subset::combined;
  throw ArgumentError("unknown subset '" + std::string(s) + "' (expected women, men or combined)");
}

int label_of(const AnnotationRecord& r, Task task) {
  return task == Task::sex ? static_cast<int>(r.sex) : static_cast<int>(r.score);
}

std::vector<int> labels_for(const DatasetManifest& manifest, Task task) {
  std::vector<int> out;
  out.reserve(manifest.records.size());
  for (const auto& r : manifest.records) out.push_back(label_of(r, task));
  return out;
}

std::vector<std::string> class_names(Task task) {
  if (task == Task::sex) return {std::string(to_string(Sex::female)), std::string(to_string(Sex::male))};
  return {std::string(to_string(Score::scored)), std::string(to_string(Score::not_scored))};
}

DatasetManifest filter_subset(const DatasetManifest& manifest, Subset subset) {
  if (subset == Subset::combined) return manifest;
  const Sex keep = subset == Subset::women ? Sex::female : Sex::male;
  DatasetManifest out;
  for (const auto& r : manifest.records) {
    if (r.sex == keep) out.records.push_back(r);
  }
  for (const auto& [id, path] : manifest.audio_paths) {
    const bool used = std::any_of(out.records.begin(), out.records.end(),
                                  [&](const AnnotationRecord& r) { return r.recording_id == id; });
    if (used) out.audio_paths.emplace(id, path);
  }
  return out;
}

DatasetManifest shuffle_scores_within_players(const DatasetManifest& manifest, std::uint64_t seed) {
  DatasetManifest out = manifest;
  std::map<std::string, std::vector<std::size_t>> by_player;
  for (std::size_t i = 0; i < out.records.size(); ++i) by_player[out.records[i].player_id].push_back(i);
  Rng rng(seed);
  for (auto& [player, idx] : by_player) {
    std::vector<Score> scores;
    for (auto i : idx) scores.push_back(out.records[i].score);
    rng.shuffle(scores);
    for (std::size_t j = 0; j < idx.size(); ++j) out.records[idx[j]].score = scores[j];
  }
  return out;
}

// ---------------------------------------------------------------------------
// Folds

int FoldPlan::fold_of(const std::string& player_id) const {
  for (std::size_t f = 0; f < fold_members.size(); ++f) {
    if (std::find(fold_members[f].begin(), fold_members[f].end(), player_id) != fold_members[f].end()) {
      return static_cast<int>(f);
    }
  }
  throw ArgumentError("player '" + player_id + "' is not in the fold plan");
}

namespace {

/// player id -> sex, sorted by id.
std::map<std::string, Sex> player_sexes(const DatasetManifest& manifest) {
  std::map<std::string, Sex> out;
  for (const auto& r : manifest.records) out.emplace(r.player_id, r.sex);
  return out;
}

}  // namespace

FoldPlan plan_folds(const DatasetManifest& manifest, int k, std::uint64_t seed) {
  if (k < 2) throw ArgumentError("plan_folds: need at least 2 folds");
  const auto players = player_sexes(manifest);
  if (players.size() < static_cast<std::size_t>(k)) {
    throw ArgumentError("plan_folds: " + std::to_string(players.size()) + " players cannot fill " +
                        std::to_string(k) + " folds");
  }
  std::vector<std::string> female;
  std::vector<std::string> male;
  for (const auto& [id, sex] : players) (sex == Sex::female ? female : male).push_back(id);
  Rng rng(seed);
  rng.shuffle(female);
  rng.shuffle(male);

  FoldPlan plan;
  plan.k = k;
  plan.seed = seed;
  plan.fold_members.resize(static_cast<std::size_t>(k));
  std::size_t next = 0;
  for (const auto* group : {&female, &male}) {
    for (const auto& id : *group) {
      plan.fold_members[next].push_back(id);
      next = (next + 1) % static_cast<std::size_t>(k);
    }
  }
  return plan;
}

std::vector<std::string> fold_plan_violations(const FoldPlan& plan, const DatasetManifest& manifest) {
  std::vector<std::string> out;
  if (plan.fold_members.size() != static_cast<std::size_t>(plan.k)) {
    out.push_back("plan has " + std::to_string(plan.fold_members.size()) + " folds, expected " +
                  std::to_string(plan.k));
  }
  const auto players = player_sexes(manifest);
  std::map<std::string, int> seen;
  std::size_t min_size = SIZE_MAX, max_size = 0;
  std::size_t min_f = SIZE_MAX, max_f = 0, min_m = SIZE_MAX, max_m = 0;
  for (std::size_t f = 0; f < plan.fold_members.size(); ++f) {
    std::size_t nf = 0, nm = 0;
    for (const auto& id : plan.fold_members[f]) {
      if (++seen[id] > 1) out.push_back("player " + id + " appears in more than one fold");
      const auto it = players.find(id);
      if (it == players.end()) {
        out.push_back("player " + id + " is not in the manifest");
        continue;
      }
      (it->second == Sex::female ? nf : nm) += 1;
    }
    const std::size_t n = plan.fold_members[f].size();
    min_size = std::min(min_size, n);
    max_size = std::max(max_size, n);
    min_f = std::min(min_f, nf);
    max_f = std::max(max_f, nf);
    min_m = std::min(min_m, nm);
    max_m = std::max(max_m, nm);
  }
  for (const auto& [id, sex] : players) {
    if (!seen.count(id)) out.push_back("player " + id + " is in no fold");
  }
  if (!plan.fold_members.empty()) {
    if (max_size - min_size > 1) out.push_back("fold sizes differ by more than one player");
    if (max_f - min_f > 1) out.push_back("female players per fold differ by more than one");
    if (max_m - min_m > 1) out.push_back("male players per fold differ by more than one");
  }
  return out;
}

// ---------------------------------------------------------------------------
// Metrics

std::int64_t ConfusionMatrix::total() const { return std::accumulate(counts.begin(), counts.end(), std::int64_t{0}); }

std::int64_t ConfusionMatrix::row_total(int truth) const {
  std::int64_t s = 0;
  for (int j = 0; j < n_classes; ++j) s += at(truth, j);
  return s;
}

ConfusionMatrix& ConfusionMatrix::operator+=(const ConfusionMatrix& other) {
  if (other.n_classes != n_classes) throw ArgumentError("confusion matrices differ in class count");
  for (std::size_t i = 0; i < counts.size(); ++i) counts[i] += other.counts[i];
  return *this;
}

ConfusionMatrix confusion(std::span<const int> truth, std::span<const int> pred, int n_classes) {
  if (truth.size() != pred.size()) {
    throw ArgumentError("confusion: " + std::to_string(truth.size()) + " truths but " +
                        std::to_string(pred.size()) + " predictions");
  }
  ConfusionMatrix cm(n_classes);
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] < 0 || truth[i] >= n_classes || pred[i] < 0 || pred[i] >= n_classes) {
      throw ArgumentError("confusion: label outside [0, " + std::to_string(n_classes) + ") at index " +
                          std::to_string(i));
    }
    ++cm.at(truth[i], pred[i]);
  }
  return cm;
}

double uar(const ConfusionMatrix& cm) {
  double sum = 0.0;
  for (int c = 0; c < cm.n_classes; ++c) {
    const auto n = cm.row_total(c);
    if (n == 0) throw ArgumentError("uar: class " + std::to_string(c) + " has no ground-truth samples");
    sum += static_cast<double>(cm.at(c, c)) / static_cast<double>(n);
  }
  return sum / cm.n_classes;
}

double mean_of(std::span<const double> v) {
  if (v.empty()) return 0.0;
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double population_std(std::span<const double> v) {
  if (v.empty()) return 0.0;
  const double m = mean_of(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size()));
}

// ---------------------------------------------------------------------------
// Experiment description

std::string_view to_string(ModelKind m) {
  switch (m) {
    case ModelKind::svm: return "svm";
    case ModelKind::lstm_rnn: return "lstm_rnn";
    case ModelKind::crnn: return "crnn";
    case ModelKind::constant: return "constant";
  }
  return "?";
}

ModelKind parse_model(std::string_view s) {
  for (auto m : {ModelKind::svm, ModelKind::lstm_rnn, ModelKind::crnn, ModelKind::constant}) {
    if (s == to_string(m)) return m;
  }
  throw ArgumentError("unknown model '" + std::string(s) + "' (expected svm, lstm_rnn, crnn or constant)");
}

const std::vector<HpSet>& hp_sets() {
  static const std::vector<HpSet> sets = {
      {HpId::I, 16, 5e-5}, {HpId::II, 16, 1e-4}, {HpId::III, 16, 1e-3},
      {HpId::IV, 32, 1e-3}, {HpId::V, 64, 1e-4}, {HpId::VI, 64, 1e-5},
  };
  return sets;
}

HpSet hp_set(HpId id) { return hp_sets()[static_cast<std::size_t>(id) - 1]; }

std::string_view to_string(HpId id) {
  static constexpr std::string_view names[] = {"I", "II", "III", "IV", "V", "VI"};
  return names[static_cast<int>(id) - 1];
}

HpId parse_hp(std::string_view s) {
  for (const auto& set : hp_sets()) {
    if (s == to_string(set.id)) return set.id;
  }
  throw ArgumentError("unknown HP set '" + std::string(s) + "' (expected I..VI)");
}

std::vector<double> default_c_grid() { return {1e-5, 1e-4, 1e-3, 1e-2, 1e-1, 1e0, 1e1}; }

TrainConfig ModelSpec::effective_train() const {
  TrainConfig t = train;
  if (hp) {
    const auto set = hp_set(*hp);
    t.batch_size = set.batch_size;
    t.learning_rate = set.learning_rate;
  }
  return t;
}

void validate_combination(Task task, Subset subset, const FeatureSpec& feature, const ModelSpec& model) {
  if (task == Task::sex && subset != Subset::combined) {
    throw ArgumentError("the sex task needs the combined subset (a " + std::string(to_string(subset)) +
                        " subset has a single class)");
  }
  const bool neural = model.kind == ModelKind::crnn || model.kind == ModelKind::lstm_rnn;
  if (neural && !is_sequence(feature.kind)) {
    throw ArgumentError(std::string(to_string(model.kind)) + " needs a sequence feature (lld, mfcc or spectrogram), got " +
                        std::string(to_string(feature.kind)));
  }
  if (model.kind == ModelKind::svm && !(model.c > 0.0)) throw ArgumentError("svm C must be positive");
  if (model.kind == ModelKind::svm && model.svm_iterations < 1) throw ArgumentError("svm iterations must be >= 1");
  if (neural) {
    const auto t = model.effective_train();
    if (t.batch_size < 1) throw ArgumentError("batch size must be >= 1");
    if (!(t.learning_rate >= 0.0)) throw ArgumentError("learning rate must be >= 0");
    if (t.epochs < 1) throw ArgumentError("epochs must be >= 1");
    if (model.lstm_hidden < 1) throw ArgumentError("lstm hidden size must be >= 1");
  }
  if (model.kind == ModelKind::constant && (model.constant_class < 0 || model.constant_class > 1)) {
    throw ArgumentError("constant class must be 0 or 1");
  }
}

// ---------------------------------------------------------------------------
// Cross-validation

Vector feature_vector(const RowMatrix& m, const FeatureSpec& feature) {
  if (!is_sequence(feature.kind)) return Eigen::Map<const Vector>(m.data(), m.size());
  return aggregate(m, feature.aggregation).values;
}

SequenceFeature sequence_feature(FeatureKind k) {
  switch (k) {
    case FeatureKind::mfcc: return SequenceFeature::mfcc;
    case FeatureKind::spectrogram: return SequenceFeature::spectrogram;
    case FeatureKind::lld: return SequenceFeature::lld;
    default: throw ArgumentError("not a sequence feature: " + std::string(to_string(k)));
  }
}

namespace {

struct FoldData {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

std::vector<int> fit_predict_vector_model(const std::vector<const RowMatrix*>& clips, std::span<const int> labels,
                                          const FoldData& fold, const FeatureSpec& feature, const ModelSpec& model,
                                          std::uint64_t seed) {
  if (model.kind == ModelKind::constant) return std::vector<int>(fold.test.size(), model.constant_class);
  const Eigen::Index dims = feature_vector(*clips[fold.train.front()], feature).size();
  RowMatrix x_train(static_cast<Eigen::Index>(fold.train.size()), dims);
  std::vector<int> y_train;
  for (std::size_t i = 0; i < fold.train.size(); ++i) {
    x_train.row(static_cast<Eigen::Index>(i)) = feature_vector(*clips[fold.train[i]], feature).transpose();
    y_train.push_back(labels[fold.train[i]]);
  }
  const Standardizer scaler = standardize_fit(x_train);
  // In place: the flat spectrogram training matrix is large.
  x_train.rowwise() -= scaler.mean.transpose();
  x_train.array().rowwise() /= scaler.std.transpose().array();
  SvmModel svm = svm_train(x_train, y_train, model.c, model.svm_iterations, seed);
  x_train.resize(0, 0);
  svm.standardizer = scaler;

  RowMatrix x_test(static_cast<Eigen::Index>(fold.test.size()), dims);
  for (std::size_t i = 0; i < fold.test.size(); ++i) {
    x_test.row(static_cast<Eigen::Index>(i)) = feature_vector(*clips[fold.test[i]], feature).transpose();
  }
  return svm_predict(svm, x_test).labels;
}

std::vector<int> fit_predict_net(const std::vector<const RowMatrix*>& clips, std::span<const int> labels,
                                 const FoldData& fold, const FeatureSpec& feature, const ModelSpec& model,
                                 std::uint64_t seed) {
  std::vector<RowMatrix> train;
  std::vector<int> y_train;
  for (auto i : fold.train) {
    train.push_back(*clips[i]);
    y_train.push_back(labels[i]);
  }
  const Standardizer scaler = standardize_fit_frames(train);
  for (auto& m : train) m = scaler.apply(m);

  const int t = static_cast<int>(train.front().rows());
  const int d = static_cast<int>(train.front().cols());
  const NetConfig config = model.kind == ModelKind::crnn
                               ? crnn_config(sequence_feature(feature.kind), t, d, model.lstm_hidden)
                               : lstm_rnn_config(t, d, model.lstm_hidden);
  TrainConfig tc = model.effective_train();
  tc.seed = seed;
  const TrainResult trained = net_train(config, tc, train, y_train);

  std::vector<int> out;
  for (auto i : fold.test) {
    out.push_back(predict_class(net_forward(trained.params, scaler.apply(*clips[i]), Mode::eval)));
  }
  return out;
}

}  // namespace

EvalReport cross_validate(const DatasetManifest& manifest, const FoldPlan& plan, const FeatureTable& features,
                          Task task, Subset subset, const FeatureSpec& feature, const ModelSpec& model,
                          const CvOptions& options) {
  validate_combination(task, subset, feature, model);
  if (manifest.records.empty()) throw ArgumentError("cross_validate: empty manifest");
  std::set<std::string> planned;
  for (const auto& members : plan.fold_members) {
    for (const auto& p : members) {
      if (!planned.insert(p).second) throw LeakageError("player " + p + " is assigned to more than one fold");
    }
  }
  if (const auto problems = fold_plan_violations(plan, manifest); !problems.empty()) {
    throw ArgumentError("cross_validate: fold plan does not fit the manifest: " + problems.front());
  }

  const auto& records = manifest.records;
  const std::vector<int> labels = labels_for(manifest, task);
  std::vector<const RowMatrix*> clips;
  for (const auto& r : records) {
    const auto it = features.find(r.clip_id());
    if (it == features.end()) throw ArgumentError("cross_validate: no features for clip " + r.clip_id());
    if (!clips.empty() && (it->second.rows() != clips.front()->rows() || it->second.cols() != clips.front()->cols())) {
      throw ArgumentError("cross_validate: feature shape of " + r.clip_id() + " differs from the first clip");
    }
    clips.push_back(&it->second);
  }

  std::map<std::string, int> fold_of_player;
  for (std::size_t f = 0; f < plan.fold_members.size(); ++f) {
    for (const auto& p : plan.fold_members[f]) fold_of_player[p] = static_cast<int>(f);
  }
  std::vector<FoldData> folds(static_cast<std::size_t>(plan.k));
  for (std::size_t i = 0; i < records.size(); ++i) {
    const int f = fold_of_player.at(records[i].player_id);
    for (int g = 0; g < plan.k; ++g) {
      (g == f ? folds[static_cast<std::size_t>(g)].test : folds[static_cast<std::size_t>(g)].train).push_back(i);
    }
  }

  // Runtime leakage assertion, independent of how the split was built.
  for (std::size_t f = 0; f < folds.size(); ++f) {
    std::set<std::string> train_players;
    for (auto i : folds[f].train) train_players.insert(records[i].player_id);
    for (auto i : folds[f].test) {
      if (train_players.count(records[i].player_id)) {
        throw LeakageError("fold " + std::to_string(f) + ": player " + records[i].player_id +
                           " has clips in both training and test data");
      }
    }
    if (folds[f].train.size() + folds[f].test.size() != records.size()) {
      throw LeakageError("fold " + std::to_string(f) + ": split does not partition the clips");
    }
    if (folds[f].test.empty() || folds[f].train.empty()) {
      throw ArgumentError("fold " + std::to_string(f) + " has an empty training or test side");
    }
  }

  Rng seeder(options.seed);
  std::vector<std::uint64_t> fold_seeds;
  for (std::size_t f = 0; f < folds.size(); ++f) fold_seeds.push_back(seeder.fork(f).next());

  EvalReport report;
  report.task = task;
  report.subset = subset;
  report.feature = feature;
  report.model = model;
  report.plan_seed = plan.seed;
  report.model_seed = options.seed;
  report.folds.resize(folds.size());

  const bool neural = model.kind == ModelKind::crnn || model.kind == ModelKind::lstm_rnn;
  parallel_for(folds.size(), options.jobs, [&](std::size_t f) {
    const auto& fd = folds[f];
    const std::vector<int> pred = neural ? fit_predict_net(clips, labels, fd, feature, model, fold_seeds[f])
                                         : fit_predict_vector_model(clips, labels, fd, feature, model, fold_seeds[f]);
    std::vector<int> truth;
    for (auto i : fd.test) truth.push_back(labels[i]);
    FoldResult& out = report.folds[f];
    out.fold = static_cast<int>(f);
    out.test_players = plan.fold_members[f];
    std::sort(out.test_players.begin(), out.test_players.end());
    out.n_train = fd.train.size();
    out.n_test = fd.test.size();
    out.confusion = confusion(truth, pred, 2);
    out.uar = uar(out.confusion);
  });

  std::vector<double> uars;
  for (const auto& f : report.folds) uars.push_back(f.uar);
  report.uar_mean = mean_of(uars);
  report.uar_std = population_std(uars);
  return report;
}

EvalReport run_experiment(const DatasetManifest& manifest, const FeatureTable& features, Task task, Subset subset,
                          const FeatureSpec& feature, const ModelSpec& model, int k, std::uint64_t plan_seed,
                          const CvOptions& options) {
  validate_combination(task, subset, feature, model);
  const DatasetManifest filtered = filter_subset(manifest, subset);
  const FoldPlan plan = plan_folds(filtered, k, plan_seed);
  return cross_validate(filtered, plan, features, task, subset, feature, model, options);
}

std::size_t best_report(std::span<const EvalReport> reports) {
  if (reports.empty()) throw ArgumentError("best_report: no reports");
  std::size_t best = 0;
  for (std::size_t i = 1; i < reports.size(); ++i) {
    const auto& a = reports[i];
    const auto& b = reports[best];
    if (a.uar_mean > b.uar_mean || (a.uar_mean == b.uar_mean && a.uar_std < b.uar_std)) best = i;
  }
  return best;
}

GridResult grid_search(const DatasetManifest& manifest, const FeatureTable& features, Task task, Subset subset,
                       const FeatureSpec& feature, std::span<const ModelSpec> grid, int k, std::uint64_t plan_seed,
                       const CvOptions& options) {
  if (grid.empty()) throw ArgumentError("grid_search: empty grid");
  for (const auto& m : grid) validate_combination(task, subset, feature, m);
  GridResult out;
  for (const auto& m : grid) {
    out.reports.push_back(run_experiment(manifest, features, task, subset, feature, m, k, plan_seed, options));
  }
  out.best = best_report(out.reports);
  return out;
}

std::vector<ModelSpec> hp_grid(const ModelSpec& base, std::span<const HpSet> sets) {
  std::vector<ModelSpec> out;
  for (const auto& s : sets) {
    ModelSpec m = base;
    m.hp = s.id;
    out.push_back(m);
  }
  return out;
}

std::vector<ModelSpec> c_grid(const ModelSpec& base, std::span<const double> values) {
  std::vector<ModelSpec> out;
  for (double c : values) {
    ModelSpec m = base;
    m.c = c;
    out.push_back(m);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Reports

ConfusionMatrix EvalReport::pooled_confusion() const {
  ConfusionMatrix cm(2);
  for (const auto& f : folds) cm += f.confusion;
  return cm;
}

std::size_t EvalReport::total_samples() const {
  std::size_t n = 0;
  for (const auto& f : folds) n += f.n_test;
  return n;
}

namespace {

bool uses_aggregation(const EvalReport& r) {
  return is_sequence(r.feature.kind) && (r.model.kind == ModelKind::svm || r.model.kind == ModelKind::constant);
}

ojson feature_json(const EvalReport& r) {
  ojson j;
  j["name"] = to_string(r.feature.kind);
  j["schema_version"] = feature_schema_version(r.feature.kind);
  j["aggregation"] = uses_aggregation(r) ? ojson(to_string(r.feature.aggregation)) : ojson(nullptr);
  return j;
}

ojson model_json(const ModelSpec& m) {
  ojson j;
  j["kind"] = to_string(m.kind);
  switch (m.kind) {
    case ModelKind::svm:
      j["c"] = m.c;
      j["iterations"] = m.svm_iterations;
      break;
    case ModelKind::lstm_rnn:
    case ModelKind::crnn: {
      const auto t = m.effective_train();
      j["hp_set"] = m.hp ? ojson(to_string(*m.hp)) : ojson(nullptr);
      j["batch_size"] = t.batch_size;
      j["learning_rate"] = t.learning_rate;
      j["epochs"] = t.epochs;
      j["optimizer"] = to_string(t.optimizer);
      j["clip_norm"] = t.clip_norm;
      j["lstm_hidden"] = m.lstm_hidden;
      break;
    }
    case ModelKind::constant:
      j["constant_class"] = m.constant_class;
      break;
  }
  return j;
}

ModelSpec model_from_json(const ojson& j) {
  ModelSpec m;
  m.kind = parse_model(j.at("kind").get<std::string>());
  switch (m.kind) {
    case ModelKind::svm:
      m.c = j.at("c").get<double>();
      m.svm_iterations = j.at("iterations").get<int>();
      break;
    case ModelKind::lstm_rnn:
    case ModelKind::crnn:
      if (!j.at("hp_set").is_null()) m.hp = parse_hp(j.at("hp_set").get<std::string>());
      m.train.batch_size = j.at("batch_size").get<int>();
      m.train.learning_rate = j.at("learning_rate").get<double>();
      m.train.epochs = j.at("epochs").get<int>();
      m.train.optimizer = j.at("optimizer").get<std::string>() == "sgd" ? Optimizer::sgd : Optimizer::adam;
      m.train.clip_norm = j.at("clip_norm").get<double>();
      m.lstm_hidden = j.at("lstm_hidden").get<int>();
      break;
    case ModelKind::constant:
      m.constant_class = j.at("constant_class").get<int>();
      break;
  }
  return m;
}

ojson config_json(const EvalReport& r) {
  ojson j;
  j["task"] = to_string(r.task);
  j["subset"] = to_string(r.subset);
  j["feature"] = feature_json(r);
  j["model"] = model_json(r.model);
  j["plan_seed"] = r.plan_seed;
  j["model_seed"] = r.model_seed;
  j["k"] = r.folds.size();
  return j;
}

}  // namespace

std::string report_fingerprint(const EvalReport& report) {
  const std::string text = config_json(report).dump();
  return hex64(fnv1a(text.data(), text.size()));
}

ojson EvalReport::to_json() const {
  ojson j;
  j["schema_version"] = kReportSchemaVersion;
  j["task"] = to_string(task);
  j["subset"] = to_string(subset);
  j["class_order"] = class_names(task);
  j["feature"] = feature_json(*this);
  j["model"] = model_json(model);
  auto& fs = j["folds"] = ojson::array();
  for (const auto& f : folds) {
    ojson fj;
    fj["fold"] = f.fold;
    fj["test_players"] = f.test_players;
    fj["n_train"] = f.n_train;
    fj["n_test"] = f.n_test;
    fj["uar"] = f.uar;
    auto& rows = fj["confusion"] = ojson::array();
    for (int t = 0; t < f.confusion.n_classes; ++t) {
      ojson row = ojson::array();
      for (int p = 0; p < f.confusion.n_classes; ++p) row.push_back(f.confusion.at(t, p));
      rows.push_back(std::move(row));
    }
    fs.push_back(std::move(fj));
  }
  j["uar_mean"] = uar_mean;
  j["uar_std"] = uar_std;
  j["uar_std_kind"] = "population";
  ojson fp;
  fp["plan_seed"] = plan_seed;
  fp["model_seed"] = model_seed;
  fp["grunt_version"] = kVersion;
  fp["feature_schema"] = feature_schema_version(feature.kind);
  fp["report_schema"] = kReportSchemaVersion;
  fp["config_hash"] = report_fingerprint(*this);
  j["fingerprint"] = std::move(fp);
  return j;
}

EvalReport EvalReport::from_json(const ojson& j) {
  try {
    if (j.at("schema_version").get<std::string>() != kReportSchemaVersion) {
      throw FormatError("report schema version '" + j.at("schema_version").get<std::string>() + "', expected '" +
                        std::string(kReportSchemaVersion) + "'");
    }
    EvalReport r;
    r.task = parse_task(j.at("task").get<std::string>());
    r.subset = parse_subset(j.at("subset").get<std::string>());
    const auto& fj = j.at("feature");
    r.feature.kind = parse_feature(fj.at("name").get<std::string>());
    if (!fj.at("aggregation").is_null()) r.feature.aggregation = parse_aggregation(fj.at("aggregation").get<std::string>());
    r.model = model_from_json(j.at("model"));
    for (const auto& f : j.at("folds")) {
      FoldResult fr;
      fr.fold = f.at("fold").get<int>();
      fr.test_players = f.at("test_players").get<std::vector<std::string>>();
      fr.n_train = f.at("n_train").get<std::size_t>();
      fr.n_test = f.at("n_test").get<std::size_t>();
      fr.uar = f.at("uar").get<double>();
      const auto& rows = f.at("confusion");
      fr.confusion = ConfusionMatrix(static_cast<int>(rows.size()));
      for (std::size_t t = 0; t < rows.size(); ++t) {
        if (rows[t].size() != rows.size()) throw FormatError("report: confusion matrix is not square");
        for (std::size_t p = 0; p < rows.size(); ++p) {
          fr.confusion.at(static_cast<int>(t), static_cast<int>(p)) = rows[t][p].get<std::int64_t>();
        }
      }
      r.folds.push_back(std::move(fr));
    }
    r.uar_mean = j.at("uar_mean").get<double>();
    r.uar_std = j.at("uar_std").get<double>();
    r.plan_seed = j.at("fingerprint").at("plan_seed").get<std::uint64_t>();
    r.model_seed = j.at("fingerprint").at("model_seed").get<std::uint64_t>();
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("report: ") + e.what());
  } catch (const ArgumentError& e) {
    throw FormatError(std::string("report: ") + e.what());
  }
}

ojson report_document(std::span<const EvalReport> reports, std::size_t best, const std::string& generated_at) {
  ojson doc;
  doc["schema_version"] = kReportSchemaVersion;
  doc["generated_at"] = generated_at;
  doc["best_index"] = best;
  auto& list = doc["reports"] = ojson::array();
  for (const auto& r : reports) list.push_back(r.to_json());
  return doc;
}

std::vector<EvalReport> parse_report_document(const ojson& doc) {
  if (!doc.is_object() || !doc.contains("schema_version") || !doc["schema_version"].is_string()) {
    throw FormatError("report document has no schema_version");
  }
  if (doc["schema_version"].get<std::string>() != kReportSchemaVersion) {
    throw FormatError("report schema version '" + doc["schema_version"].get<std::string>() + "', expected '" +
                      std::string(kReportSchemaVersion) + "'");
  }
  if (!doc.contains("reports") || !doc["reports"].is_array()) throw FormatError("report document has no reports");
  std::vector<EvalReport> out;
  for (const auto& r : doc["reports"]) out.push_back(EvalReport::from_json(r));
  return out;
}

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

namespace {

std::size_t display_width(const std::string& s) {
  return static_cast<std::size_t>(std::count_if(s.begin(), s.end(), [](char c) { return (c & 0xC0) != 0x80; }));
}

std::string pad(const std::string& s, std::size_t width) { return s + std::string(width - display_width(s), ' '); }

std::string percent(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1f", 100.0 * v);
  return buf;
}

std::string shortest(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

std::string hp_cell(const EvalReport& r) {
  switch (r.model.kind) {
    case ModelKind::svm: return "C=" + shortest(r.model.c);
    case ModelKind::crnn:
    case ModelKind::lstm_rnn: {
      const auto t = r.model.effective_train();
      std::string s = r.model.hp ? std::string(to_string(*r.model.hp)) + " " : "";
      return s + "bs=" + std::to_string(t.batch_size) + " lr=" + shortest(t.learning_rate);
    }
    case ModelKind::constant: return "class=" + std::to_string(r.model.constant_class);
  }
  return "";
}

}  // namespace

std::string render_table(std::span<const EvalReport> reports) {
  std::vector<std::size_t> order(reports.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const auto& ra = reports[a];
    const auto& rb = reports[b];
    if (ra.task != rb.task) return ra.task < rb.task;
    if (ra.uar_mean != rb.uar_mean) return ra.uar_mean > rb.uar_mean;
    return ra.uar_std < rb.uar_std;
  });
  // Best per task/subset: the first row of each pair in sorted order.
  std::set<std::pair<Task, Subset>> marked;
  std::vector<bool> best(reports.size(), false);
  for (auto i : order) {
    if (marked.insert({reports[i].task, reports[i].subset}).second) best[i] = true;
  }

  const std::vector<std::string> header = {"", "subset", "feature", "aggregation", "model", "hp", "Ø UAR", "±"};
  std::vector<std::vector<std::string>> rows;
  for (auto i : order) {
    const auto& r = reports[i];
    rows.push_back({best[i] ? "*" : " ", std::string(to_string(r.subset)), std::string(to_string(r.feature.kind)),
                    uses_aggregation(r) ? std::string(to_string(r.feature.aggregation)) : "-",
                    std::string(to_string(r.model.kind)), hp_cell(r), percent(r.uar_mean), percent(r.uar_std)});
  }
  std::vector<std::size_t> widths(header.size());
  for (std::size_t c = 0; c < header.size(); ++c) {
    widths[c] = display_width(header[c]);
    for (const auto& row : rows) widths[c] = std::max(widths[c], display_width(row[c]));
  }
  auto line = [&](const std::vector<std::string>& cells) {
    std::string s;
    for (std::size_t c = 0; c < cells.size(); ++c) {
      const bool numeric = c >= cells.size() - 2;
      const std::string cell = numeric ? std::string(widths[c] - display_width(cells[c]), ' ') + cells[c]
                                       : pad(cells[c], widths[c]);
      s += (c ? "  " : "") + cell;
    }
    while (!s.empty() && s.back() == ' ') s.pop_back();
    return s + "\n";
  };

  std::ostringstream out;
  std::optional<Task> current;
  for (std::size_t k = 0; k < order.size(); ++k) {
    const auto& r = reports[order[k]];
    if (current != r.task) {
      if (current) out << "\n";
      current = r.task;
      out << "task: " << to_string(r.task) << "\n" << line(header);
    }
    out << line(rows[k]);
  }
  return out.str();
}

}  // namespace grunt
