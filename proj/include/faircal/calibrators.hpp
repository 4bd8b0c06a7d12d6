#pragma once

#include "faircal/core.hpp"
#include "faircal/metrics.hpp"
#include "faircal/models.hpp"

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "json.hpp"

namespace faircal {

enum class CalibratorKind {
  kHistogram,
  kIsotonic,
  kPlatt,
  kBeta,
  kTemperature,
  kBbq,
  kPlattBinner,
  kPerGroup,
  kGroupRobust,
};

std::string to_string(CalibratorKind kind);
/// Throws ConfigError for unknown ids; "enir" gets its own message.
CalibratorKind calibrator_kind_from_string(const std::string& id);

/// A fitted score mapping. Immutable after fitting; apply is pure.
class Calibrator {
 public:
  virtual ~Calibrator() = default;

  virtual CalibratorKind kind() const = 0;
  /// Per-group routing needs group ids at apply time; everything else ignores them.
  virtual bool needs_groups() const { return false; }
  virtual Vector apply(const VectorCRef& scores, const IntVector* groups = nullptr) const = 0;
  virtual nlohmann::json params() const = 0;

  /// {kind, params, version}
  nlohmann::json to_json() const;
  static std::shared_ptr<const Calibrator> from_json(const nlohmann::json& j);
};

using CalibratorPtr = std::shared_ptr<const Calibrator>;

// ---------------------------------------------------------------------------
// Isotonic

/// Non-decreasing step function over sorted distinct knots. Evaluation is left-continuous:
/// f(s) = value of the first knot >= s, the last value beyond the final knot.
struct StepFunction {
  std::vector<double> knots;
  std::vector<double> values;

  double operator()(double s) const;
};

/// Weighted pool-adjacent-violators on the per-distinct-score label means.
StepFunction pava(const VectorCRef& scores, const VectorCRef& labels);

class IsotonicCalibrator final : public Calibrator {
 public:
  explicit IsotonicCalibrator(StepFunction f) : f_(std::move(f)) {}
  CalibratorKind kind() const override { return CalibratorKind::kIsotonic; }
  Vector apply(const VectorCRef& scores, const IntVector* groups = nullptr) const override;
  nlohmann::json params() const override;
  const StepFunction& function() const { return f_; }

 private:
  StepFunction f_;
};

CalibratorPtr fit_isotonic(const VectorCRef& scores, const VectorCRef& labels);

// ---------------------------------------------------------------------------
// Histogram binning

/// M bins split by M - 1 interior edges. With ties_go_left a score equal to an edge falls in
/// the lower bin (equal-mass fits); otherwise in the upper one, i.e. floor(s M) for
/// equal-width edges.
class HistogramCalibrator final : public Calibrator {
 public:
  HistogramCalibrator(std::vector<double> edges, std::vector<double> values, bool ties_go_left);
  CalibratorKind kind() const override { return CalibratorKind::kHistogram; }
  Vector apply(const VectorCRef& scores, const IntVector* groups = nullptr) const override;
  nlohmann::json params() const override;

  Index bin(double s) const;
  const std::vector<double>& values() const { return values_; }
  const std::vector<double>& edges() const { return edges_; }

 private:
  std::vector<double> edges_;
  std::vector<double> values_;
  bool ties_go_left_;
};

/// Equal-width edges k/M or equal-mass edges at the training-score order statistics.
/// Empty bins take the global label mean.
std::shared_ptr<const HistogramCalibrator> fit_histogram(const VectorCRef& scores, const VectorCRef& labels, Index bins,
                                                         Binning scheme);

// ---------------------------------------------------------------------------
// Parametric

inline constexpr int kNewtonMaxIterations = 100;

class PlattCalibrator final : public Calibrator {
 public:
  PlattCalibrator(double a, double b) : a_(a), b_(b) {}
  CalibratorKind kind() const override { return CalibratorKind::kPlatt; }
  Vector apply(const VectorCRef& scores, const IntVector* groups = nullptr) const override;
  nlohmann::json params() const override { return {{"a", a_}, {"b", b_}}; }
  double a() const { return a_; }
  double b() const { return b_; }

 private:
  double a_;
  double b_;
};

/// sigmoid(a logit(s) + b) by Newton on the Bernoulli likelihood.
std::shared_ptr<const PlattCalibrator> fit_platt(const VectorCRef& scores, const VectorCRef& labels,
                                                 bool use_target_smoothing = false);

class BetaCalibrator final : public Calibrator {
 public:
  BetaCalibrator(double a, double b, double c) : a_(a), b_(b), c_(c) {}
  CalibratorKind kind() const override { return CalibratorKind::kBeta; }
  Vector apply(const VectorCRef& scores, const IntVector* groups = nullptr) const override;
  nlohmann::json params() const override { return {{"a", a_}, {"b", b_}, {"c", c_}}; }
  double a() const { return a_; }
  double b() const { return b_; }
  double c() const { return c_; }

 private:
  double a_;
  double b_;
  double c_;
};

/// sigmoid(a ln s - b ln(1 - s) + c) with a, b >= 0 (projected Newton).
std::shared_ptr<const BetaCalibrator> fit_beta(const VectorCRef& scores, const VectorCRef& labels);

class TemperatureCalibrator final : public Calibrator {
 public:
  explicit TemperatureCalibrator(double t) : t_(t) {}
  CalibratorKind kind() const override { return CalibratorKind::kTemperature; }
  Vector apply(const VectorCRef& scores, const IntVector* groups = nullptr) const override;
  nlohmann::json params() const override { return {{"temperature", t_}}; }
  double temperature() const { return t_; }

 private:
  double t_;
};

struct TemperatureBounds {
  double low = 0.01;
  double high = 100.0;
};

/// Golden-section search on log T; an optimum at or beyond a bound returns that bound.
std::shared_ptr<const TemperatureCalibrator> fit_temperature(const VectorCRef& scores, const VectorCRef& labels,
                                                             TemperatureBounds bounds = {});

// ---------------------------------------------------------------------------
// Ensembles and compositions

class BbqCalibrator final : public Calibrator {
 public:
  BbqCalibrator(std::vector<std::shared_ptr<const HistogramCalibrator>> members, std::vector<double> weights);
  CalibratorKind kind() const override { return CalibratorKind::kBbq; }
  Vector apply(const VectorCRef& scores, const IntVector* groups = nullptr) const override;
  nlohmann::json params() const override;
  const std::vector<double>& weights() const { return weights_; }
  const std::vector<std::shared_ptr<const HistogramCalibrator>>& members() const { return members_; }

 private:
  std::vector<std::shared_ptr<const HistogramCalibrator>> members_;
  std::vector<double> weights_;
};

/// log of the Beta(1,1)-Binomial marginal likelihood of a fitted equal-mass histogram.
double bbq_log_score(const HistogramCalibrator& member, const VectorCRef& scores, const VectorCRef& labels);

inline const std::vector<Index> kDefaultBbqBinCounts{5, 10, 20, 50};

std::shared_ptr<const BbqCalibrator> fit_bbq(const VectorCRef& scores, const VectorCRef& labels,
                                             const std::vector<Index>& bin_counts = kDefaultBbqBinCounts);

class PlattBinnerCalibrator final : public Calibrator {
 public:
  PlattBinnerCalibrator(std::shared_ptr<const PlattCalibrator> platt, std::shared_ptr<const HistogramCalibrator> binner)
      : platt_(std::move(platt)), binner_(std::move(binner)) {}
  CalibratorKind kind() const override { return CalibratorKind::kPlattBinner; }
  Vector apply(const VectorCRef& scores, const IntVector* groups = nullptr) const override;
  nlohmann::json params() const override;
  const PlattCalibrator& platt() const { return *platt_; }
  const HistogramCalibrator& binner() const { return *binner_; }

 private:
  std::shared_ptr<const PlattCalibrator> platt_;
  std::shared_ptr<const HistogramCalibrator> binner_;
};

/// Seeded shuffle, Platt on the even positions, equal-mass binning of the Platt outputs on
/// the odd positions; each bin maps to the mean Platt output inside it.
std::shared_ptr<const PlattBinnerCalibrator> fit_platt_binner(const VectorCRef& scores, const VectorCRef& labels,
                                                              Index bins = 10, std::uint64_t seed = 0);

// ---------------------------------------------------------------------------
// Group-aware

/// Kind plus kind-specific parameters, as written in experiment configs.
struct CalibratorSpec {
  CalibratorKind kind = CalibratorKind::kIsotonic;
  nlohmann::json params = nlohmann::json::object();

  static CalibratorSpec from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

class PerGroupCalibrator final : public Calibrator {
 public:
  PerGroupCalibrator(CalibratorKind inner, std::map<int, CalibratorPtr> members)
      : inner_(inner), members_(std::move(members)) {}
  CalibratorKind kind() const override { return CalibratorKind::kPerGroup; }
  bool needs_groups() const override { return true; }
  Vector apply(const VectorCRef& scores, const IntVector* groups = nullptr) const override;
  nlohmann::json params() const override;
  CalibratorKind inner_kind() const { return inner_; }
  const std::map<int, CalibratorPtr>& members() const { return members_; }

 private:
  CalibratorKind inner_;
  std::map<int, CalibratorPtr> members_;
};

/// One inner calibrator per group present in `groups`.
std::shared_ptr<const PerGroupCalibrator> fit_per_group(const VectorCRef& scores, const VectorCRef& labels,
                                                        const IntVectorCRef& groups, const CalibratorSpec& inner);

class GroupRobustCalibrator final : public Calibrator {
 public:
  explicit GroupRobustCalibrator(Model model) : model_(std::move(model)) {}
  CalibratorKind kind() const override { return CalibratorKind::kGroupRobust; }
  Vector apply(const VectorCRef& scores, const IntVector* groups = nullptr) const override;
  nlohmann::json params() const override { return model_.to_json(); }
  const Model& model() const { return model_; }

 private:
  Model model_;
};

/// Defaults for the score-only boosted calibrator: Brier objective with group reweighting.
GbtParams default_group_robust_params();

/// GBT on the single feature s with the Brier objective; groups drive the per-round
/// reweighting only. Objective is forced to Brier.
std::shared_ptr<const GroupRobustCalibrator> fit_group_robust(const VectorCRef& scores, const VectorCRef& labels,
                                                              const IntVectorCRef& groups,
                                                              GbtParams params = default_group_robust_params());

/// Dispatches on spec.kind. `groups` is required for kPerGroup and kGroupRobust.
CalibratorPtr fit_calibrator(const CalibratorSpec& spec, const VectorCRef& scores, const VectorCRef& labels,
                             const IntVector* groups = nullptr);

}  // namespace faircal
