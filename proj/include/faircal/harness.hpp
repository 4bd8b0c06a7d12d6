#pragma once

#include "faircal/calibrators.hpp"
#include "faircal/core.hpp"
#include "faircal/data.hpp"
#include "faircal/metrics.hpp"
#include "faircal/models.hpp"
#include "faircal/multicalibration.hpp"
#include "faircal/tuning.hpp"

#include <array>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

namespace faircal {

/// Where the group column may be read. Ordered by rank.
enum class AvailabilityRegime { kNone = 0, kVal = 1, kTrainVal = 2, kTrainValInf = 3 };

inline int rank(AvailabilityRegime regime) { return static_cast<int>(regime); }
/// "none", "val", "train_val", "train_val_inf".
std::string to_string(AvailabilityRegime regime);
/// "None", "Val", "Train+Val", "Train+Val+Inf".
std::string display_name(AvailabilityRegime regime);
/// Accepts the identifiers and the display names.
AvailabilityRegime regime_from_string(const std::string& id);
AvailabilityRegime regime_from_rank(int rank);

enum class Stage { kTrain, kValidation, kInference, kEvaluation };
std::string to_string(Stage stage);

/// Evaluation is always permitted: worst-group metrics need the groups by definition.
bool regime_permits(AvailabilityRegime regime, Stage stage);

// ---------------------------------------------------------------------------
// Method specs

struct TuningSpec {
  TuneObjective objective = TuneObjective::kAccuracy;
  SearchVariant variant = SearchVariant::kPlain;
  int trials = 20;
  std::optional<SearchSpace> space;  // overrides default_search_space
};

struct MulticalibrationSpec {
  int candidates = 8;
  bool select_on_worst_group = false;  // reads validation groups
};

struct MethodSpec {
  std::string id;
  AvailabilityRegime regime = AvailabilityRegime::kNone;  // declared
  ModelKind model = ModelKind::kGbt;
  TuningSpec tuning;
  GroupFeatureMode group_mode = GroupFeatureMode::kNone;
  LossSpec loss;                                    // MLP training loss
  nlohmann::json fixed = nlohmann::json::object();  // merged over every tuned point
  std::optional<CalibratorSpec> calibrator;          // fit on validation scores
  std::optional<MulticalibrationSpec> multicalibration;

  nlohmann::json to_json() const;
  /// Missing keys keep their defaults. Throws ConfigError.
  static MethodSpec from_json(const nlohmann::json& j, ModelKind default_model = ModelKind::kGbt);
};

/// Stages whose group reads the spec implies, in pipeline order.
std::vector<Stage> group_reads(const MethodSpec& spec);

struct RegimeRequirement {
  AvailabilityRegime regime = AvailabilityRegime::kNone;
  std::vector<std::string> reasons;
};

/// Smallest regime that permits every read in group_reads(spec).
RegimeRequirement required_regime(const MethodSpec& spec);

/// Throws RegimeViolation when the declared regime is below the required one.
void check_regime(const MethodSpec& spec);

/// Method ids of the built-in catalog, in decreasing order of data requirements.
std::vector<std::string> catalog_method_ids();
/// Built-in method by id for the given model kind. Throws ConfigError for unknown ids.
MethodSpec catalog_method(const std::string& id, ModelKind model);
std::vector<MethodSpec> catalog_methods(ModelKind model);

// ---------------------------------------------------------------------------
// Runtime audit

struct AuditEntry {
  std::string method;
  int trial = 0;
  Stage stage = Stage::kTrain;
};

/// Append-only record of group-column reads. Thread safe.
class AuditLog {
 public:
  void append(AuditEntry entry);
  std::vector<AuditEntry> entries() const;

 private:
  mutable std::mutex mutex_;
  std::vector<AuditEntry> entries_;
};

/// Gatekeeper for one (method, trial): hands out group ids only for permitted stages and
/// logs every read.
class GroupAccess {
 public:
  GroupAccess(std::string method, int trial, AvailabilityRegime regime, AuditLog* log)
      : method_(std::move(method)), trial_(trial), regime_(regime), log_(log) {}

  /// Throws RegimeViolation when the stage is outside the regime.
  const IntVector& read(Stage stage, const Dataset& data) const;
  /// `data` with the group column visible when granted, stripped otherwise.
  Dataset view(Stage stage, const Dataset& data, bool needs_groups) const;

 private:
  std::string method_;
  int trial_;
  AvailabilityRegime regime_;
  AuditLog* log_;
};

/// Copy without group ids (roster kept so group counts stay known).
Dataset strip_groups(const Dataset& data);

// ---------------------------------------------------------------------------
// Experiment

struct EvaluationOptions {
  double kernel_width = 0.4;
  Index mmce_sampled_pairs = 0;  // 0 = exact
};

struct TrialResult {
  int trial = 0;
  double worst_group_ecce = 0.0;
  double worst_group_msce = 0.0;
  double worst_group_mmce = 0.0;
  double overall_ecce = 0.0;
  double accuracy = 0.0;
  int worst_group = 0;  // by ECCE
};

/// Names of the per-trial metrics in results.csv order.
const std::vector<std::string>& trial_metric_names();
double trial_metric(const TrialResult& trial, const std::string& name);
void set_trial_metric(TrialResult& trial, const std::string& name, double value);

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation, 0 for a single trial
};

struct MethodResult {
  std::string method;
  AvailabilityRegime regime = AvailabilityRegime::kNone;
  ModelKind model = ModelKind::kGbt;
  std::vector<TrialResult> trials;

  MeanStd aggregate(const std::string& metric) const;
};

MeanStd mean_std(const std::vector<double>& values);

/// Scores the test partition.
TrialResult evaluate_scores(const VectorCRef& scores, const Dataset& test, const EvaluationOptions& options);

struct ExperimentOptions {
  int trials = 3;
  std::uint64_t base_seed = 0;
  std::array<double, 3> split_ratios = kDefaultSplitRatios;
  std::optional<int> tuning_trials;  // overrides every spec's tuning.trials
  EvaluationOptions evaluation;
  int threads = 1;
};

struct ExperimentResult {
  std::vector<MethodResult> methods;
  std::vector<AuditEntry> audit;
};

/// Runs every spec on `trials` seeded splits. Specs are statically checked first; group
/// reads go through GroupAccess. Component failures are rethrown as ComponentError tagged with
/// the method and trial.
ExperimentResult run_experiment(const Dataset& data, const std::vector<MethodSpec>& specs,
                                const ExperimentOptions& options);

/// Scores of one spec on one split; exposed for tests and the CLI.
Vector run_method(const MethodSpec& spec, const Dataset& train, const Dataset& validation, const Dataset& test,
                  const GroupAccess& access, std::uint64_t seed, std::optional<int> tuning_trials = std::nullopt);

// ---------------------------------------------------------------------------
// Pareto analysis

struct ParetoPoint {
  std::string method;
  int rank = 0;
  double y = 0.0;
};

/// p dominates q iff rank(p) <= rank(q), y(p) <= y(q) and one of them is strict.
bool dominates(const ParetoPoint& p, const ParetoPoint& q);

/// Membership flag per input point.
std::vector<bool> pareto_mask(const std::vector<ParetoPoint>& points);

/// Non-dominated points sorted by rank then y (input order on full ties).
std::vector<ParetoPoint> pareto_front(const std::vector<ParetoPoint>& points);

/// One point per method: regime rank and mean worst-group ECCE.
std::vector<ParetoPoint> pareto_points(const std::vector<MethodResult>& results,
                                       const std::string& metric = "worst_group_ecce");

struct DatasetResults {
  std::string dataset;
  std::vector<MethodResult> methods;
};

struct RegimeSummary {
  AvailabilityRegime regime = AvailabilityRegime::kNone;
  int methods_tested = 0;
  int times_optimal = 0;
  std::string best_method;  // modal winner among the optimal datasets, empty if none
  int best_count = 0;
  std::vector<std::string> tied;  // other methods sharing the modal count

  /// "Train+Val+Inf | 7 | use_group (5/7)"
  std::string row() const;
};

struct DatasetSummary {
  std::string dataset;
  std::vector<std::string> best_per_regime;  // indexed by rank, empty when the regime has no method
  std::vector<bool> optimal_per_regime;
};

struct Summary {
  std::vector<RegimeSummary> regimes;  // highest rank first
  std::vector<DatasetSummary> datasets;

  std::string table() const;
  nlohmann::json to_json() const;
};

/// Best method per regime by mean worst-group metric (lowest id on ties), optimal iff that
/// point is on the dataset's front, counted across datasets.
Summary summarize(const std::vector<DatasetResults>& results, const std::string& metric = "worst_group_ecce");

// ---------------------------------------------------------------------------
// Config

struct DatasetSource {
  std::string name;
  std::string path;  // CSV, or empty for synthetic
  CsvLoadOptions csv;
  std::optional<SynthConfig> synth;

  Dataset load() const;
};

SynthConfig synth_config_from_json(const nlohmann::json& j);
nlohmann::json synth_config_to_json(const SynthConfig& config);

struct ExperimentConfig {
  std::vector<DatasetSource> datasets;
  std::vector<MethodSpec> methods;
  ExperimentOptions options;
  std::string output_dir;

  /// {"version": 1, "datasets": [...], "methods": [id | spec, ...], "model": "gbt", ...}.
  /// Relative dataset paths resolve against `base_dir`. Throws ConfigError.
  static ExperimentConfig from_json(const nlohmann::json& j, const std::string& base_dir = "");
  static ExperimentConfig load(const std::string& path);
};

}  // namespace faircal
