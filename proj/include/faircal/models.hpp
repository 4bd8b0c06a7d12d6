#pragma once

#include "faircal/core.hpp"
#include "faircal/data.hpp"
#include "faircal/tree.hpp"

#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "json.hpp"

namespace faircal {

enum class ModelKind { kGbt, kMlp };
enum class GroupFeatureMode { kNone, kAsFeature };

std::string to_string(ModelKind kind);
ModelKind model_kind_from_string(const std::string& id);

// ---------------------------------------------------------------------------
// Group DRO

/// Exponentiated-gradient step q'_g = q_g exp(eta L_g) / sum_h q_h exp(eta L_h).
Vector group_dro_step(const VectorCRef& q, const VectorCRef& per_group_losses, double eta);

/// Same step restricted to the groups flagged in `active`; inactive groups keep their mass
/// share untouched relative to each other.
Vector group_dro_step(const VectorCRef& q, const VectorCRef& per_group_losses, double eta,
                      const std::vector<bool>& active);

// ---------------------------------------------------------------------------
// Gradient-boosted trees

enum class GbtObjective { kLogistic, kBrier };

struct GbtParams {
  double eta = 0.3;
  double min_split_loss = 0.0;
  int max_depth = 6;
  double colsample_bytree = 1.0;
  double colsample_bylevel = 1.0;
  int max_bin = 512;
  GrowPolicy grow_policy = GrowPolicy::kLossguide;
  int boosting_rounds = 25;
  GbtObjective objective = GbtObjective::kLogistic;
  double calibration_loss_weight = 0.0;  // gamma: weight of the added Brier term
  double dro_eta = 0.0;                  // eta of the per-round group reweighting
  std::uint64_t seed = 0;

  void validate() const;
  nlohmann::json to_json() const;
  /// Missing keys keep their defaults; unknown keys are ignored.
  static GbtParams from_json(const nlohmann::json& j);
};

/// Leaf regularization of every boosted tree.
inline constexpr double kGbtLambda = 1.0;
/// Lower clamp on per-sample hessians used for tree growth (the Brier hessian can be negative).
inline constexpr double kGbtHessianFloor = 1e-6;

/// Per-sample loss on the margin z with its first and second derivative.
struct ObjectiveTerms {
  double loss = 0.0;
  double gradient = 0.0;
  double hessian = 0.0;
};
ObjectiveTerms logistic_objective(double margin, double label);
ObjectiveTerms brier_objective(double margin, double label);

struct GbtModel {
  double base_margin = 0.0;
  std::vector<RegressionTree> trees;  // leaf values already include the learning rate
  std::vector<double> train_loss;     // objective on train, before round 1 and after each round
  std::vector<Vector> dro_weights;    // q per round when group reweighting is active

  Vector margin(const MatrixCRef& inputs) const;
  double margin_row(const Eigen::Ref<const Eigen::RowVectorXd>& row) const;
};

// ---------------------------------------------------------------------------
// Two-layer MLP

struct MlpParams {
  int layer1_units = 128;
  int layer2_units = 64;
  double learning_rate = 1e-3;
  double l2_regularization = 1e-5;
  int batch_size = 512;
  int num_epochs = 30;
  bool batch_norm = true;
  double momentum = 0.9;
  double calibration_loss_weight = 0.0;  // gamma
  double dro_eta = 0.0;                  // eta_q
  double dro_regularization = 0.0;       // C in C / sqrt(n_g)
  double kernel_width = 0.4;
  std::uint64_t seed = 0;

  void validate() const;
  nlohmann::json to_json() const;
  static MlpParams from_json(const nlohmann::json& j);
};

enum class LossKind { kBce, kBceMmce, kGroupDro };

struct LossSpec {
  LossKind kind = LossKind::kBce;
  /// Group DRO reweights only the calibration term; the BCE term stays the plain batch mean.
  bool dro_calibration_only = false;
};

std::string to_string(LossKind kind);

inline constexpr double kBatchNormEpsilon = 1e-5;
inline constexpr double kBatchNormMomentum = 0.9;

/// Parameters of input -> [Linear, BatchNorm, ReLU] x 2 -> Linear -> sigmoid.
struct MlpWeights {
  Matrix w1;  // h1 x p
  Vector b1;
  Vector gamma1;
  Vector beta1;
  Matrix w2;  // h2 x h1
  Vector b2;
  Vector gamma2;
  Vector beta2;
  Vector w3;  // h2
  double b3 = 0.0;
  Vector running_mean1;
  Vector running_var1;
  Vector running_mean2;
  Vector running_var2;
  bool batch_norm = true;

  static MlpWeights init(Index inputs, int units1, int units2, bool batch_norm, Rng& rng);

  /// Trainable parameters in a fixed order (w1, b1, gamma1, beta1, w2, b2, gamma2, beta2, w3, b3).
  Vector flatten() const;
  void assign(const VectorCRef& flat);
  Index n_parameters() const;
};

/// Everything the batch loss needs besides the weights.
struct BatchContext {
  LossSpec loss;
  double calibration_loss_weight = 0.0;
  double l2_regularization = 0.0;
  double kernel_width = 0.4;
  int n_groups = 1;
  Vector group_weights;  // q, used by kGroupDro
};

struct BatchLoss {
  double loss = 0.0;
  Vector gradient;  // same layout as MlpWeights::flatten()
  bool calibration_skipped = false;
  Vector per_group_loss;  // L_g without the C / sqrt(n_g) term (kGroupDro only)
};

/// Training-mode (batch statistics) loss and exact backpropagated gradient for one batch.
BatchLoss mlp_batch_loss(const MlpWeights& weights, const MatrixCRef& inputs, const VectorCRef& labels,
                         const IntVectorCRef& groups, const BatchContext& context);

/// Differentiable in-batch kernel calibration error (square root of the pairwise sum) with
/// its gradient w.r.t. the probabilities.
double mmce_with_gradient(const VectorCRef& probabilities, const VectorCRef& labels, double kernel_width,
                          Vector* gradient);

struct MlpModel {
  MlpWeights weights;
  std::vector<double> epoch_loss;
  Index skipped_calibration_batches = 0;
  Vector final_group_weights;

  Vector predict(const MatrixCRef& inputs) const;
};

// ---------------------------------------------------------------------------
// Model facade

class Model {
 public:
  ModelKind kind() const { return kind_; }
  GroupFeatureMode group_mode() const { return group_mode_; }
  int n_groups() const { return n_groups_; }
  /// Raw feature width, excluding appended group indicators.
  Index n_features() const { return n_features_; }
  const nlohmann::json& config() const { return config_; }

  const GbtModel& gbt() const { return std::get<GbtModel>(impl_); }
  const MlpModel& mlp() const { return std::get<MlpModel>(impl_); }

  /// Scores in (0, 1). `groups` is required exactly when the model was trained with group
  /// indicators and ignored otherwise.
  Vector predict(const MatrixCRef& features, const IntVector* groups = nullptr) const;

  /// Margin (pre-sigmoid) output; same contract as predict.
  Vector margin(const MatrixCRef& features, const IntVector* groups = nullptr) const;

  nlohmann::json to_json() const;
  static Model from_json(const nlohmann::json& j);

 private:
  friend Model gbt_train(const Dataset&, const GbtParams&, GroupFeatureMode);
  friend Model mlp_train(const Dataset&, const MlpParams&, const LossSpec&, GroupFeatureMode);

  Matrix model_inputs(const MatrixCRef& features, const IntVector* groups) const;

  ModelKind kind_ = ModelKind::kGbt;
  GroupFeatureMode group_mode_ = GroupFeatureMode::kNone;
  int n_groups_ = 1;
  Index n_features_ = 0;
  nlohmann::json config_;
  std::variant<GbtModel, MlpModel> impl_;
};

/// Newton boosting with histogram trees. Group reweighting runs when both
/// calibration_loss_weight and dro_eta are positive; it reads train.groups.
Model gbt_train(const Dataset& train, const GbtParams& params, GroupFeatureMode group_mode);

/// Minibatch SGD (with momentum) on the requested loss. kGroupDro reads train.groups.
Model mlp_train(const Dataset& train, const MlpParams& params, const LossSpec& loss, GroupFeatureMode group_mode);

/// True when training with these settings consults the group column.
bool gbt_reads_groups(const GbtParams& params, GroupFeatureMode mode);
bool mlp_reads_groups(const LossSpec& loss, GroupFeatureMode mode);

}  // namespace faircal
