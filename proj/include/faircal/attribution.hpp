#pragma once

#include "faircal/core.hpp"
#include "faircal/models.hpp"

#include <functional>
#include <string>
#include <vector>

#include "json.hpp"

namespace faircal {

enum class AttributionMethod { kExactShapley, kTreePath };
enum class AttributionScale { kProbability, kMargin };

std::string to_string(AttributionMethod method);
AttributionMethod attribution_method_from_string(const std::string& id);

/// phi sums to output_value - baseline_value.
struct AttributionVector {
  Vector phi;
  double baseline_value = 0.0;
  double output_value = 0.0;

  double efficiency_residual() const { return std::abs(phi.sum() - (output_value - baseline_value)); }
};

/// Batch model evaluation, one output per row.
using ModelFunction = std::function<Vector(const MatrixCRef&)>;

inline constexpr Index kMaxShapleyFeatures = 15;

/// Interventional Shapley values against a single reference: absent features take the
/// baseline's values. Enumerates all 2^p coalitions; p <= 15.
AttributionVector exact_shapley(const ModelFunction& f, const Eigen::Ref<const Eigen::RowVectorXd>& instance,
                                const Eigen::Ref<const Eigen::RowVectorXd>& baseline);

/// Same values for many instances sharing one baseline (rows of the result are phi).
Matrix exact_shapley_batch(const ModelFunction& f, const MatrixCRef& instances,
                           const Eigen::Ref<const Eigen::RowVectorXd>& baseline);

/// Margin-scale path attribution for boosted trees. Every node is valued at the subtree
/// prediction for the baseline; walking the instance's path, each split credits its feature
/// with value(child) - value(node). Per tree the credits sum to leaf(x) - leaf(baseline).
AttributionVector tree_path(const GbtModel& model, const Eigen::Ref<const Eigen::RowVectorXd>& instance,
                            const Eigen::Ref<const Eigen::RowVectorXd>& baseline);

/// Dispatch on a trained Model (raw features; as-feature models are not supported).
/// tree_path requires a GBT and the margin scale.
AttributionVector attribute(const Model& model, const Eigen::Ref<const Eigen::RowVectorXd>& instance,
                            const Eigen::Ref<const Eigen::RowVectorXd>& baseline, AttributionMethod method,
                            AttributionScale scale = AttributionScale::kProbability);

// ---------------------------------------------------------------------------
// Quantile bias metrics

/// Membership per row: 0 for the i-side, 1 for the j-side, anything else is ignored.
IntVector group_sides(const IntVectorCRef& groups, const std::vector<int>& side_i, const std::vector<int>& side_j);

/// E_b[S | i] - E_b[S | j] over rows with bins == bin.
double qdd(const VectorCRef& scores, const IntVectorCRef& sides, const IntVectorCRef& bins, int bin);
/// Same over labels.
double qpd(const VectorCRef& labels, const IntVectorCRef& sides, const IntVectorCRef& bins, int bin);

/// Two-group conveniences: side i is group i, side j is group j.
double qdd(const VectorCRef& scores, const IntVectorCRef& groups, const IntVectorCRef& bins, int bin, int i, int j);
double qpd(const VectorCRef& labels, const IntVectorCRef& groups, const IntVectorCRef& bins, int bin, int i, int j);

struct QpdBin {
  int bin = 0;
  Index n_i = 0;
  Index n_j = 0;
  double qpd = 0.0;            // labels
  double qdd = 0.0;            // proxy scores on the attribution scale
  Vector qpda;                 // per feature
  double identity_residual = 0.0;  // |sum_f qpda - qdd|
};

struct QpdReport {
  std::vector<QpdBin> bins;  // only bins with both sides present
  std::vector<std::string> feature_names;
  AttributionMethod method = AttributionMethod::kExactShapley;
  AttributionScale scale = AttributionScale::kProbability;

  nlohmann::json to_json() const;
  /// bin x feature matrix as CSV rows: bin,n_i,n_j,qpd,qdd,<features...>
  std::string to_csv() const;
};

/// Per-bin mean attribution differences of the proxy between the two sides. The proxy sees
/// `features` as is.
QpdReport qpd_attribution(const Model& proxy, const MatrixCRef& features, const VectorCRef& labels,
                          const IntVectorCRef& bins, const IntVectorCRef& sides, AttributionMethod method,
                          const Eigen::Ref<const Eigen::RowVectorXd>& baseline,
                          std::vector<std::string> feature_names = {});

struct FeatureSelectionOptions {
  Index n_bins = 10;
  AttributionMethod method = AttributionMethod::kExactShapley;
  GbtParams proxy_params;
};

struct FeatureSelection {
  std::vector<Index> ranking;  // candidate column indices, best first, length k
  Vector aggregate;            // count-weighted mean |QPDA| per candidate
  std::vector<int> worst_groups;
  QpdReport report;
};

/// Splits groups into the worst ceil(G/2) by ECCE of the base scores and the rest, trains a
/// proxy GBT on [base | candidates], bins the base scores into quantile bins and ranks
/// candidates by count-weighted |QPDA| (ties to the lower index).
FeatureSelection select_feature(const VectorCRef& base_scores, const MatrixCRef& base_features,
                                const MatrixCRef& candidate_features, const VectorCRef& labels,
                                const IntVectorCRef& groups, int n_groups, Index k,
                                const FeatureSelectionOptions& options = {});

}  // namespace faircal
