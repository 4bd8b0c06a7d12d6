#pragma once

#include "faircal/core.hpp"

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"

namespace faircal {

using BinMatrix = MatrixX<std::uint16_t>;

/// Per-feature cut points learned from training values. bin(x) counts cuts <= x, so
/// "x < cuts[k]" is exactly "bin(x) <= k"; values outside the training range clamp to
/// the first or last bin.
class FeatureBinner {
 public:
  FeatureBinner() = default;

  /// Low-cardinality features get midpoints between distinct values; others get
  /// training-split quantiles. max_bin in [2, 65535].
  static FeatureBinner fit(const MatrixCRef& features, int max_bin);

  BinMatrix transform(const MatrixCRef& features) const;
  Index n_features() const { return static_cast<Index>(cuts_.size()); }
  int n_bins(Index feature) const { return static_cast<int>(cuts_[static_cast<std::size_t>(feature)].size()) + 1; }
  double cut(Index feature, int k) const { return cuts_[static_cast<std::size_t>(feature)][static_cast<std::size_t>(k)]; }

 private:
  std::vector<std::vector<double>> cuts_;
};

struct TreeNode {
  int feature = -1;  // -1 for leaves
  double threshold = 0.0;  // rows with x[feature] < threshold go left
  int left = -1;
  int right = -1;
  double value = 0.0;  // -G / (H + lambda), scaled by the caller's learning rate for leaves
  double cover = 0.0;  // sum of hessians
  double gain = 0.0;
  int depth = 0;

  bool is_leaf() const { return feature < 0; }
};

/// Binary regression tree; node 0 is the root.
struct RegressionTree {
  std::vector<TreeNode> nodes;

  int leaf_index(const Eigen::Ref<const Eigen::RowVectorXd>& row) const;
  double predict_row(const Eigen::Ref<const Eigen::RowVectorXd>& row) const {
    return nodes[static_cast<std::size_t>(leaf_index(row))].value;
  }
  Vector predict(const MatrixCRef& features) const;
  int depth() const;
  void scale_leaves(double factor);

  nlohmann::json to_json() const;
  static RegressionTree from_json(const nlohmann::json& j);
};

enum class GrowPolicy { kDepthwise, kLossguide };

struct TreeGrowParams {
  int max_depth = 6;
  double lambda = 1.0;
  double min_split_loss = 0.0;
  double min_child_weight = 1.0;
  double colsample_bytree = 1.0;
  double colsample_bylevel = 1.0;
  GrowPolicy policy = GrowPolicy::kLossguide;
};

/// Greedy second-order tree on binned features. gradients/hessians already carry sample
/// weights. A split is taken only if its gain exceeds min_split_loss and both children
/// keep at least min_child_weight hessian mass. Leaf values are not shrunk by any
/// learning rate here.
RegressionTree grow_tree(const BinMatrix& bins, const FeatureBinner& binner, const VectorCRef& gradients,
                         const VectorCRef& hessians, const TreeGrowParams& params, Rng& rng);

/// Same, restricted to a subset of rows.
RegressionTree grow_tree(const BinMatrix& bins, const FeatureBinner& binner, const VectorCRef& gradients,
                         const VectorCRef& hessians, std::vector<Index> rows, const TreeGrowParams& params, Rng& rng);

/// Squared-error regression tree (g = -target, h = 1, lambda = 0): leaves hold target means.
RegressionTree fit_regression_tree(const MatrixCRef& features, const VectorCRef& targets, int max_depth,
                                   int max_bin = 256);

}  // namespace faircal
