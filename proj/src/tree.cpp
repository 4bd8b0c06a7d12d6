#include "faircal/tree.hpp"

#include <algorithm>
#include <numeric>
#include <queue>

namespace faircal {

FeatureBinner FeatureBinner::fit(const MatrixCRef& features, int max_bin) {
  if (max_bin < 2 || max_bin > 65535) {
    throw Error("FeatureBinner: max_bin must lie in [2, 65535]");
  }
  FeatureBinner binner;
  binner.cuts_.resize(static_cast<std::size_t>(features.cols()));
  std::vector<double> column;
  for (Index j = 0; j < features.cols(); ++j) {
    column.assign(features.col(j).data(), features.col(j).data() + features.rows());
    std::sort(column.begin(), column.end());
    std::vector<double> distinct = column;
    distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
    auto& cuts = binner.cuts_[static_cast<std::size_t>(j)];
    if (static_cast<int>(distinct.size()) <= max_bin) {
      for (std::size_t k = 1; k < distinct.size(); ++k) {
        cuts.push_back(0.5 * (distinct[k - 1] + distinct[k]));
      }
    } else {
      const auto m = column.size();
      for (int q = 1; q < max_bin; ++q) {
        const auto pos = static_cast<std::size_t>(q) * m / static_cast<std::size_t>(max_bin);
        const double v = column[pos];
        if (v > column.front() && (cuts.empty() || v > cuts.back())) {
          cuts.push_back(v);
        }
      }
    }
  }
  return binner;
}

BinMatrix FeatureBinner::transform(const MatrixCRef& features) const {
  if (features.cols() != n_features()) {
    throw Error("FeatureBinner: expected " + std::to_string(n_features()) + " features, got " +
                std::to_string(features.cols()));
  }
  BinMatrix bins(features.rows(), features.cols());
  for (Index j = 0; j < features.cols(); ++j) {
    const auto& cuts = cuts_[static_cast<std::size_t>(j)];
    for (Index i = 0; i < features.rows(); ++i) {
      bins(i, j) = static_cast<std::uint16_t>(std::upper_bound(cuts.begin(), cuts.end(), features(i, j)) - cuts.begin());
    }
  }
  return bins;
}

int RegressionTree::leaf_index(const Eigen::Ref<const Eigen::RowVectorXd>& row) const {
  int node = 0;
  while (!nodes[static_cast<std::size_t>(node)].is_leaf()) {
    const auto& n = nodes[static_cast<std::size_t>(node)];
    node = row[n.feature] < n.threshold ? n.left : n.right;
  }
  return node;
}

Vector RegressionTree::predict(const MatrixCRef& features) const {
  Vector out(features.rows());
  for (Index i = 0; i < features.rows(); ++i) {
    out[i] = predict_row(features.row(i));
  }
  return out;
}

int RegressionTree::depth() const {
  int d = 0;
  for (const auto& n : nodes) {
    d = std::max(d, n.depth);
  }
  return d;
}

void RegressionTree::scale_leaves(double factor) {
  for (auto& n : nodes) {
    n.value *= factor;
  }
}

namespace {

nlohmann::json node_to_json(const RegressionTree& tree, int index) {
  const auto& n = tree.nodes[static_cast<std::size_t>(index)];
  nlohmann::json j{{"value", n.value}, {"cover", n.cover}};
  if (!n.is_leaf()) {
    j["feature"] = n.feature;
    j["threshold"] = n.threshold;
    j["gain"] = n.gain;
    j["left"] = node_to_json(tree, n.left);
    j["right"] = node_to_json(tree, n.right);
  }
  return j;
}

int node_from_json(RegressionTree& tree, const nlohmann::json& j, int depth) {
  const int index = static_cast<int>(tree.nodes.size());
  tree.nodes.emplace_back();
  {
    auto& n = tree.nodes.back();
    n.value = j.at("value").get<double>();
    n.cover = j.value("cover", 0.0);
    n.depth = depth;
  }
  if (j.contains("feature")) {
    const int left = node_from_json(tree, j.at("left"), depth + 1);
    const int right = node_from_json(tree, j.at("right"), depth + 1);
    auto& n = tree.nodes[static_cast<std::size_t>(index)];
    n.feature = j.at("feature").get<int>();
    n.threshold = j.at("threshold").get<double>();
    n.gain = j.value("gain", 0.0);
    n.left = left;
    n.right = right;
  }
  return index;
}

std::vector<Index> sample_columns(const std::vector<Index>& from, double fraction, Rng& rng) {
  if (fraction >= 1.0 || from.size() <= 1) {
    return from;
  }
  const auto keep = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(fraction * static_cast<double>(from.size()))));
  std::vector<Index> shuffled = from;
  std::shuffle(shuffled.begin(), shuffled.end(), rng);
  shuffled.resize(keep);
  std::sort(shuffled.begin(), shuffled.end());
  return shuffled;
}

struct SplitChoice {
  bool valid = false;
  double gain = 0.0;
  Index feature = -1;
  int bin = -1;  // rows with bin <= this go left
};

struct Grower {
  const BinMatrix& bins;
  const FeatureBinner& binner;
  const VectorCRef& grad;
  const VectorCRef& hess;
  const TreeGrowParams& params;

  double score(double g, double h) const { return g * g / (h + params.lambda); }

  SplitChoice best_split(const std::vector<Index>& rows, double g_total, double h_total,
                         const std::vector<Index>& features) const {
    SplitChoice best;
    const double parent = score(g_total, h_total);
    std::vector<double> hg;
    std::vector<double> hh;
    for (Index f : features) {
      const int nb = binner.n_bins(f);
      if (nb < 2) {
        continue;
      }
      hg.assign(static_cast<std::size_t>(nb), 0.0);
      hh.assign(static_cast<std::size_t>(nb), 0.0);
      for (Index r : rows) {
        const auto b = bins(r, f);
        hg[b] += grad[r];
        hh[b] += hess[r];
      }
      double gl = 0.0;
      double hl = 0.0;
      for (int b = 0; b + 1 < nb; ++b) {
        gl += hg[static_cast<std::size_t>(b)];
        hl += hh[static_cast<std::size_t>(b)];
        const double gr = g_total - gl;
        const double hr = h_total - hl;
        if (hl < params.min_child_weight || hr < params.min_child_weight) {
          continue;
        }
        const double gain = 0.5 * (score(gl, hl) + score(gr, hr) - parent);
        if (gain > params.min_split_loss && gain > best.gain) {
          best = {true, gain, f, b};
        }
      }
    }
    return best;
  }
};

}  // namespace

nlohmann::json RegressionTree::to_json() const { return node_to_json(*this, 0); }

RegressionTree RegressionTree::from_json(const nlohmann::json& j) {
  RegressionTree tree;
  node_from_json(tree, j, 0);
  return tree;
}

RegressionTree grow_tree(const BinMatrix& bins, const FeatureBinner& binner, const VectorCRef& gradients,
                         const VectorCRef& hessians, const TreeGrowParams& params, Rng& rng) {
  std::vector<Index> rows(static_cast<std::size_t>(bins.rows()));
  std::iota(rows.begin(), rows.end(), Index{0});
  return grow_tree(bins, binner, gradients, hessians, std::move(rows), params, rng);
}

RegressionTree grow_tree(const BinMatrix& bins, const FeatureBinner& binner, const VectorCRef& gradients,
                         const VectorCRef& hessians, std::vector<Index> rows, const TreeGrowParams& params, Rng& rng) {
  if (params.max_depth < 1) {
    throw Error("grow_tree: max_depth must be >= 1");
  }
  if (rows.empty()) {
    throw Error("grow_tree: no rows");
  }
  std::vector<Index> all(static_cast<std::size_t>(bins.cols()));
  std::iota(all.begin(), all.end(), Index{0});
  const auto tree_features = sample_columns(all, params.colsample_bytree, rng);
  std::vector<std::vector<Index>> level_features;
  for (int d = 0; d < params.max_depth; ++d) {
    level_features.push_back(sample_columns(tree_features, params.colsample_bylevel, rng));
  }

  const Grower grower{bins, binner, gradients, hessians, params};
  RegressionTree tree;
  std::vector<std::vector<Index>> node_rows;
  std::vector<SplitChoice> node_split;

  auto add_node = [&](std::vector<Index> r, int depth) {
    double g = 0.0;
    double h = 0.0;
    for (Index i : r) {
      g += gradients[i];
      h += hessians[i];
    }
    TreeNode node;
    node.value = -g / (h + params.lambda);
    node.cover = h;
    node.depth = depth;
    SplitChoice split;
    if (depth < params.max_depth) {
      split = grower.best_split(r, g, h, level_features[static_cast<std::size_t>(depth)]);
    }
    tree.nodes.push_back(node);
    node_rows.push_back(std::move(r));
    node_split.push_back(split);
    return static_cast<int>(tree.nodes.size()) - 1;
  };

  auto expand = [&](int index, std::vector<int>& created) {
    const SplitChoice split = node_split[static_cast<std::size_t>(index)];
    std::vector<Index> left;
    std::vector<Index> right;
    for (Index r : node_rows[static_cast<std::size_t>(index)]) {
      (bins(r, split.feature) <= split.bin ? left : right).push_back(r);
    }
    node_rows[static_cast<std::size_t>(index)].clear();
    node_rows[static_cast<std::size_t>(index)].shrink_to_fit();
    const int depth = tree.nodes[static_cast<std::size_t>(index)].depth + 1;
    const int l = add_node(std::move(left), depth);
    const int r = add_node(std::move(right), depth);
    auto& node = tree.nodes[static_cast<std::size_t>(index)];
    node.feature = static_cast<int>(split.feature);
    node.threshold = binner.cut(split.feature, split.bin);
    node.gain = split.gain;
    node.left = l;
    node.right = r;
    created.push_back(l);
    created.push_back(r);
  };

  add_node(std::move(rows), 0);
  if (params.policy == GrowPolicy::kDepthwise) {
    std::vector<int> frontier{0};
    while (!frontier.empty()) {
      std::vector<int> next;
      for (int index : frontier) {
        if (node_split[static_cast<std::size_t>(index)].valid) {
          expand(index, next);
        }
      }
      frontier = std::move(next);
    }
  } else {
    // Best-gain-first; ties go to the older node.
    auto worse = [&](int a, int b) {
      const double ga = node_split[static_cast<std::size_t>(a)].gain;
      const double gb = node_split[static_cast<std::size_t>(b)].gain;
      return ga != gb ? ga < gb : a > b;
    };
    std::priority_queue<int, std::vector<int>, decltype(worse)> open(worse);
    open.push(0);
    while (!open.empty()) {
      const int index = open.top();
      open.pop();
      if (!node_split[static_cast<std::size_t>(index)].valid) {
        continue;
      }
      std::vector<int> created;
      expand(index, created);
      for (int c : created) {
        open.push(c);
      }
    }
  }
  return tree;
}

RegressionTree fit_regression_tree(const MatrixCRef& features, const VectorCRef& targets, int max_depth, int max_bin) {
  const auto binner = FeatureBinner::fit(features, max_bin);
  const BinMatrix bins = binner.transform(features);
  const Vector grad = -targets;
  const Vector hess = Vector::Ones(targets.size());
  TreeGrowParams params;
  params.max_depth = max_depth;
  params.lambda = 0.0;
  params.min_split_loss = 0.0;
  params.min_child_weight = 1.0;
  params.policy = GrowPolicy::kDepthwise;
  Rng rng(0);
  return grow_tree(bins, binner, grad, hess, params, rng);
}

}  // namespace faircal
