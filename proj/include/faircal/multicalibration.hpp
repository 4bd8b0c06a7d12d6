#pragma once

#include "faircal/core.hpp"
#include "faircal/tree.hpp"

#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "json.hpp"

namespace faircal {

enum class PartitionScheme { kEven, kQuantile };
enum class McSampling { kNone, kDisjoint, kBootstrap };
enum class ResidualModelKind { kRidge, kTree };
enum class UpdateRule { kAdditiveRepartition, kMultiplicativeFixed };

struct McConfig {
  Index n_partitions = 5;
  PartitionScheme partition_scheme = PartitionScheme::kQuantile;
  McSampling sampling = McSampling::kNone;
  Index disjoint_slices = 5;  // slice count for kDisjoint; iteration t uses slice t mod count
  ResidualModelKind residual_model = ResidualModelKind::kRidge;
  double ridge_lambda = 1.0;
  int tree_max_depth = 3;
  UpdateRule update_rule = UpdateRule::kAdditiveRepartition;
  double step_size = 1.0;
  double stop_threshold = 0.05;  // alpha
  int max_iterations = 10;

  void validate() const;
  nlohmann::json to_json() const;
  static McConfig from_json(const nlohmann::json& j);
};

/// Score-range partition. Even: bin floor(s B) (clamped). Quantile: stored upper edges, a score
/// goes to the first bin whose edge is >= s.
struct PartitionSpec {
  PartitionScheme scheme = PartitionScheme::kEven;
  Index n_partitions = 1;
  std::vector<double> edges;  // quantile only, B - 1 entries

  IntVector assign(const VectorCRef& scores) const;
  nlohmann::json to_json() const;
  static PartitionSpec from_json(const nlohmann::json& j);
};

/// Builds the spec from `scores` (quantile edges at order statistics floor((k+1) n / B) - 1).
PartitionSpec make_partition(const VectorCRef& scores, PartitionScheme scheme, Index n_partitions);

/// make_partition followed by assign.
IntVector partition(const VectorCRef& scores, PartitionScheme scheme, Index n_partitions);

/// |Pearson correlation|, 0 if either side is constant.
double miscalibration(const VectorCRef& predicted_residuals, const VectorCRef& observed_residuals);

/// Ridge (unpenalized intercept) or squared-error regression tree on the raw features.
struct ResidualModel {
  ResidualModelKind kind = ResidualModelKind::kRidge;
  Vector coefficients;
  double intercept = 0.0;
  RegressionTree tree;

  Vector predict(const MatrixCRef& features) const;
  nlohmann::json to_json() const;
  static ResidualModel from_json(const nlohmann::json& j);
};

ResidualModel fit_ridge(const MatrixCRef& features, const VectorCRef& targets, double lambda);
ResidualModel fit_residual_model(const McConfig& config, const MatrixCRef& features, const VectorCRef& targets);

struct McStep {
  int iteration = 0;
  PartitionSpec partition;
  Index chosen = 0;
  ResidualModel model;
  UpdateRule rule = UpdateRule::kAdditiveRepartition;
  double step_size = 1.0;
  double max_miscalibration = 0.0;
};

enum class McTerminal { kThreshold, kMaxIterations };

struct UpdateSequence {
  McConfig config;
  Index n_features = 0;
  std::vector<McStep> steps;
  std::vector<double> witnesses;  // max miscalibration per iteration, including a stopping one
  McTerminal terminal = McTerminal::kMaxIterations;
  int disjoint_wraparounds = 0;
  Vector final_scores;  // fit-time scores after the last update

  nlohmann::json to_json() const;
  static UpdateSequence from_json(const nlohmann::json& j);
};

UpdateSequence mc_fit(const VectorCRef& scores, const MatrixCRef& features, const VectorCRef& labels,
                      const McConfig& config, std::uint64_t seed);

/// Replays the recorded updates; no refitting.
Vector mc_apply(const UpdateSequence& sequence, const VectorCRef& scores, const MatrixCRef& features);

struct McSelection {
  McConfig config;
  UpdateSequence sequence;
  Index candidate = 0;
  std::vector<double> holdout_scores;  // ECCE on the 30% replay split per candidate
};

/// Seeded candidate configurations; the first is the McConfig defaults.
std::vector<McConfig> mc_config_grid(int count, std::uint64_t seed);

/// Fits every candidate on a seeded 70% split, replays on the other 30% and keeps the lowest
/// overall ECCE (earlier candidate on ties). With `groups`, worst-group ECCE is used instead.
McSelection mc_select(const VectorCRef& scores, const MatrixCRef& features, const VectorCRef& labels,
                      const std::vector<McConfig>& candidates, std::uint64_t seed,
                      const IntVector* groups = nullptr);

}  // namespace faircal
