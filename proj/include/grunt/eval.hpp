#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "grunt/features.hpp"
#include "grunt/ingest.hpp"
#include "grunt/learn/net.hpp"
#include "grunt/learn/svm.hpp"

namespace grunt {

enum class Task { sex, score };
std::string_view to_string(Task t);
Task parse_task(std::string_view s);

enum class Subset { women, men, combined };
std::string_view to_string(Subset s);
Subset parse_subset(std::string_view s);

/// Class id of a record for a task (female=0, male=1; scored=0, not_scored=1).
int label_of(const AnnotationRecord& r, Task task);
std::vector<int> labels_for(const DatasetManifest& manifest, Task task);
/// Display names of the class ids of a task, in id order.
std::vector<std::string> class_names(Task task);

/// Records of the subset; `combined` returns the manifest unchanged.
DatasetManifest filter_subset(const DatasetManifest& manifest, Subset subset);

/// Permutes the score labels among the clips of each player (a label-shuffle
/// control that keeps every player balanced).
DatasetManifest shuffle_scores_within_players(const DatasetManifest& manifest, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Folds

struct FoldPlan {
  int k = 5;
  std::vector<std::vector<std::string>> fold_members;  // player ids per fold
  std::uint64_t seed = 0;

  /// Fold index of a player; throws ArgumentError for unknown players.
  int fold_of(const std::string& player_id) const;

  bool operator==(const FoldPlan&) const = default;
};

/// Players are sorted, shuffled within each sex and dealt round-robin; male
/// dealing continues at the fold after the last female one so that fold
/// sizes differ by at most one.
FoldPlan plan_folds(const DatasetManifest& manifest, int k, std::uint64_t seed);

/// Broken invariants of a plan for a manifest (empty when the plan is sound).
std::vector<std::string> fold_plan_violations(const FoldPlan& plan, const DatasetManifest& manifest);

// ---------------------------------------------------------------------------
// Metrics

struct ConfusionMatrix {
  int n_classes = 2;
  std::vector<std::int64_t> counts;  // row-major, rows are truth

  ConfusionMatrix() = default;
  explicit ConfusionMatrix(int n) : n_classes(n), counts(static_cast<std::size_t>(n) * static_cast<std::size_t>(n), 0) {}

  std::int64_t& at(int truth, int pred) { return counts[static_cast<std::size_t>(truth * n_classes + pred)]; }
  std::int64_t at(int truth, int pred) const { return counts[static_cast<std::size_t>(truth * n_classes + pred)]; }
  std::int64_t total() const;
  std::int64_t row_total(int truth) const;

  ConfusionMatrix& operator+=(const ConfusionMatrix& other);
  bool operator==(const ConfusionMatrix&) const = default;
};

/// Throws ArgumentError on a length mismatch or a label outside [0, n).
ConfusionMatrix confusion(std::span<const int> truth, std::span<const int> pred, int n_classes = 2);

/// Mean per-class recall. Throws ArgumentError when a class has no samples.
double uar(const ConfusionMatrix& cm);

double mean_of(std::span<const double> v);
/// Population standard deviation (divides by n).
double population_std(std::span<const double> v);

// ---------------------------------------------------------------------------
// Experiment description

enum class ModelKind { svm, lstm_rnn, crnn, constant };
std::string_view to_string(ModelKind m);
ModelKind parse_model(std::string_view s);

enum class HpId { I = 1, II, III, IV, V, VI };

struct HpSet {
  HpId id = HpId::I;
  int batch_size = 16;
  double learning_rate = 5e-5;
};

/// The six batch size / learning rate pairs, in id order.
const std::vector<HpSet>& hp_sets();
HpSet hp_set(HpId id);
std::string_view to_string(HpId id);
HpId parse_hp(std::string_view s);

/// C values 1e-5, 1e-4, ..., 1e1.
std::vector<double> default_c_grid();

struct FeatureSpec {
  FeatureKind kind = FeatureKind::spectrogram;
  /// Collapses sequence features for the SVM and constant models.
  Aggregation aggregation = Aggregation::flat;

  bool operator==(const FeatureSpec&) const = default;
};

/// One vector per clip for the vector models: functional features as is,
/// sequence features collapsed by the aggregation.
Vector feature_vector(const RowMatrix& m, const FeatureSpec& feature);

/// CRNN convolution family of a sequence feature.
SequenceFeature sequence_feature(FeatureKind k);

struct ModelSpec {
  ModelKind kind = ModelKind::svm;
  // svm
  double c = 1e-3;
  int svm_iterations = 1000;
  // neural nets
  std::optional<HpId> hp;  // when set, overrides batch size and learning rate
  TrainConfig train;
  int lstm_hidden = 64;
  // constant
  int constant_class = 0;

  /// Training settings with the HP set applied.
  TrainConfig effective_train() const;

  bool operator==(const ModelSpec&) const = default;
};

/// Throws ArgumentError for combinations outside the supported matrix:
/// neural models need sequence features; sex needs the combined subset.
void validate_combination(Task task, Subset subset, const FeatureSpec& feature, const ModelSpec& model);

struct CvOptions {
  std::uint64_t seed = 0;  // model seeds derive from this and the fold index
  int jobs = 1;            // folds trained concurrently
};

// ---------------------------------------------------------------------------
// Reports

inline constexpr std::string_view kReportSchemaVersion = "grunt.eval_report/1";

struct FoldResult {
  int fold = 0;
  std::vector<std::string> test_players;
  std::size_t n_train = 0;
  std::size_t n_test = 0;
  ConfusionMatrix confusion;
  double uar = 0.0;
};

struct EvalReport {
  Task task = Task::sex;
  Subset subset = Subset::combined;
  FeatureSpec feature;
  ModelSpec model;
  std::uint64_t plan_seed = 0;
  std::uint64_t model_seed = 0;
  std::vector<FoldResult> folds;
  double uar_mean = 0.0;
  double uar_std = 0.0;

  ConfusionMatrix pooled_confusion() const;
  std::size_t total_samples() const;

  /// Fixed key order; the fingerprint covers seeds and schema versions.
  nlohmann::ordered_json to_json() const;
  static EvalReport from_json(const nlohmann::ordered_json& j);
};

/// Fingerprint of a report's configuration (not its results).
std::string report_fingerprint(const EvalReport& report);

/// Player-independent cross-validation over `manifest` (already filtered to
/// the subset) with the folds of `plan`. Every fold fits its standardizer on
/// training data only. Throws LeakageError if any test player's clip would
/// reach training.
EvalReport cross_validate(const DatasetManifest& manifest, const FoldPlan& plan, const FeatureTable& features,
                          Task task, Subset subset, const FeatureSpec& feature, const ModelSpec& model,
                          const CvOptions& options = {});

/// Filters to the subset, plans `k` folds with `plan_seed` and cross-validates.
EvalReport run_experiment(const DatasetManifest& manifest, const FeatureTable& features, Task task, Subset subset,
                          const FeatureSpec& feature, const ModelSpec& model, int k, std::uint64_t plan_seed,
                          const CvOptions& options = {});

struct GridResult {
  std::vector<EvalReport> reports;
  std::size_t best = 0;
};

/// Index of the best report: higher uar_mean, then lower uar_std, then the
/// earlier grid point.
std::size_t best_report(std::span<const EvalReport> reports);

/// One run_experiment per model spec. Throws ArgumentError on an empty grid.
GridResult grid_search(const DatasetManifest& manifest, const FeatureTable& features, Task task, Subset subset,
                       const FeatureSpec& feature, std::span<const ModelSpec> grid, int k, std::uint64_t plan_seed,
                       const CvOptions& options = {});

/// Copies of `base` with each HP set applied.
std::vector<ModelSpec> hp_grid(const ModelSpec& base, std::span<const HpSet> sets);
/// Copies of `base` with each C value applied.
std::vector<ModelSpec> c_grid(const ModelSpec& base, std::span<const double> values);

/// report.json: {"schema_version", "generated_at", "best_index", "reports"}.
nlohmann::ordered_json report_document(std::span<const EvalReport> reports, std::size_t best,
                                       const std::string& generated_at);
/// Reports of a report.json; throws FormatError on a schema mismatch.
std::vector<EvalReport> parse_report_document(const nlohmann::ordered_json& doc);

/// Current UTC time as ISO 8601.
std::string utc_timestamp();

/// Aligned text table, one row per report sorted by uar_mean (descending),
/// grouped by task, the best row of each task/subset marked with '*'.
std::string render_table(std::span<const EvalReport> reports);

}  // namespace grunt
