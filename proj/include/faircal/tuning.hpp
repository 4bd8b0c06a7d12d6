#pragma once

#include "faircal/core.hpp"
#include "faircal/data.hpp"
#include "faircal/models.hpp"

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

namespace faircal {

enum class TuneObjective { kAccuracy, kOverallEcce, kWorstGroupEcce };

std::string to_string(TuneObjective objective);
/// "accuracy", "overall_ecce", "worst_group_ecce".
TuneObjective tune_objective_from_string(const std::string& id);
inline bool is_maximized(TuneObjective objective) { return objective == TuneObjective::kAccuracy; }

/// One tunable hyperparameter: a finite choice set or a log-uniform range.
struct ParamDomain {
  enum class Kind { kChoice, kLogUniform };

  std::string name;
  Kind kind = Kind::kChoice;
  std::vector<nlohmann::json> choices;  // kChoice
  double low = 0.0;                     // kLogUniform
  double high = 0.0;
  nlohmann::json default_value;  // the starred grid entry

  static ParamDomain choice(std::string name, std::vector<nlohmann::json> choices, nlohmann::json default_value);
  static ParamDomain log_uniform(std::string name, double low, double high, double default_value);
};

enum class SearchVariant { kPlain, kCalibrationLoss, kGroupRobust };

std::string to_string(SearchVariant variant);
SearchVariant search_variant_from_string(const std::string& id);

struct SearchSpace {
  ModelKind model = ModelKind::kGbt;
  std::vector<ParamDomain> params;

  void validate() const;
  nlohmann::json to_json() const;
  static SearchSpace from_json(const nlohmann::json& j);
};

/// The published grids, starred values as defaults.
SearchSpace default_search_space(ModelKind model, SearchVariant variant);

/// Every parameter at its default.
nlohmann::json default_point(const SearchSpace& space);

/// Uniform over choices; exp(U(log low, log high)) for log-uniform ranges.
nlohmann::json sample_point(const SearchSpace& space, Rng& rng);

struct TuneResult {
  nlohmann::json best;
  double best_score = 0.0;
  int best_trial = 0;  // 0-based
  std::vector<nlohmann::json> points;
  std::vector<double> scores;
  std::optional<Model> best_model;  // set by tune()
};

/// Scores one configuration; larger is better iff `maximize` in random_search.
using TrialScorer = std::function<double(const nlohmann::json& point, int trial)>;

/// Trial 0 is default_point, later trials are sampled from a stream seeded by `seed`.
/// Ties keep the earlier trial.
TuneResult random_search(const SearchSpace& space, int n_trials, std::uint64_t seed, bool maximize,
                         const TrialScorer& scorer);

/// Training recipe shared by tuning and final fits.
struct FitRecipe {
  ModelKind model = ModelKind::kGbt;
  GroupFeatureMode group_mode = GroupFeatureMode::kNone;
  LossSpec loss;                                   // MLP only
  nlohmann::json fixed = nlohmann::json::object();  // merged over every point, e.g. {"objective":"brier"}
};

/// point (+ recipe.fixed) -> params -> trained model.
Model fit_point(const Dataset& train, const FitRecipe& recipe, const nlohmann::json& point, std::uint64_t seed);

/// Objective value of `scores` on a labeled partition. kWorstGroupEcce reads `groups`.
double score_objective(TuneObjective objective, const VectorCRef& scores, const VectorCRef& labels,
                       const IntVector& groups, int n_groups);

/// Fits each trial on `train` and scores it on `validation`. Validation groups are read only
/// for kWorstGroupEcce (and by as-feature models at predict time).
TuneResult tune(const Dataset& train, const Dataset& validation, const FitRecipe& recipe, const SearchSpace& space,
                TuneObjective objective, int n_trials, std::uint64_t seed);

}  // namespace faircal
