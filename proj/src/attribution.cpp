#include "faircal/attribution.hpp"

#include "faircal/metrics.hpp"
#include "faircal/multicalibration.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace faircal {

std::string to_string(AttributionMethod method) {
  return method == AttributionMethod::kExactShapley ? "exact_shapley" : "tree_path";
}

AttributionMethod attribution_method_from_string(const std::string& id) {
  if (id == "exact_shapley") return AttributionMethod::kExactShapley;
  if (id == "tree_path") return AttributionMethod::kTreePath;
  throw ConfigError("unknown attribution method '" + id + "'");
}

namespace {

std::vector<double> shapley_weights(Index p) {
  // w[s] = s! (p - s - 1)! / p!
  std::vector<double> w(static_cast<std::size_t>(p));
  for (Index s = 0; s < p; ++s) {
    w[static_cast<std::size_t>(s)] =
        std::exp(std::lgamma(static_cast<double>(s) + 1.0) + std::lgamma(static_cast<double>(p - s)) -
                 std::lgamma(static_cast<double>(p) + 1.0));
  }
  return w;
}

}  // namespace

Matrix exact_shapley_batch(const ModelFunction& f, const MatrixCRef& instances,
                           const Eigen::Ref<const Eigen::RowVectorXd>& baseline) {
  const Index p = instances.cols();
  if (p > kMaxShapleyFeatures) {
    throw Error("exact_shapley: " + std::to_string(p) + " features exceed the limit of " +
                std::to_string(kMaxShapleyFeatures));
  }
  if (baseline.size() != p) {
    throw Error("exact_shapley: baseline width mismatch");
  }
  const Index coalitions = Index{1} << p;
  const auto weights = shapley_weights(p);
  std::vector<int> popcount(static_cast<std::size_t>(coalitions));
  for (Index mask = 0; mask < coalitions; ++mask) popcount[static_cast<std::size_t>(mask)] = __builtin_popcountll(static_cast<unsigned long long>(mask));

  Matrix phi = Matrix::Zero(instances.rows(), p);
  Matrix hybrid(coalitions, p);
  for (Index r = 0; r < instances.rows(); ++r) {
    for (Index mask = 0; mask < coalitions; ++mask) {
      for (Index j = 0; j < p; ++j) {
        hybrid(mask, j) = (mask >> j) & 1 ? instances(r, j) : baseline[j];
      }
    }
    const Vector v = f(hybrid);
    for (Index j = 0; j < p; ++j) {
      const Index bit = Index{1} << j;
      double total = 0.0;
      for (Index mask = 0; mask < coalitions; ++mask) {
        if (mask & bit) continue;
        total += weights[static_cast<std::size_t>(popcount[static_cast<std::size_t>(mask)])] * (v[mask | bit] - v[mask]);
      }
      phi(r, j) = total;
    }
  }
  return phi;
}

AttributionVector exact_shapley(const ModelFunction& f, const Eigen::Ref<const Eigen::RowVectorXd>& instance,
                                const Eigen::Ref<const Eigen::RowVectorXd>& baseline) {
  const Matrix row = instance;
  AttributionVector out;
  out.phi = exact_shapley_batch(f, row, baseline).row(0).transpose();
  Matrix ends(2, instance.size());
  ends.row(0) = instance;
  ends.row(1) = baseline;
  const Vector v = f(ends);
  out.output_value = v[0];
  out.baseline_value = v[1];
  return out;
}

AttributionVector tree_path(const GbtModel& model, const Eigen::Ref<const Eigen::RowVectorXd>& instance,
                            const Eigen::Ref<const Eigen::RowVectorXd>& baseline) {
  if (instance.size() != baseline.size()) {
    throw Error("tree_path: instance and baseline widths differ");
  }
  AttributionVector out;
  out.phi = Vector::Zero(instance.size());
  out.output_value = model.margin_row(instance);
  out.baseline_value = model.margin_row(baseline);
  for (const auto& tree : model.trees) {
    auto baseline_value = [&](int node) {
      while (!tree.nodes[static_cast<std::size_t>(node)].is_leaf()) {
        const auto& n = tree.nodes[static_cast<std::size_t>(node)];
        node = baseline[n.feature] < n.threshold ? n.left : n.right;
      }
      return tree.nodes[static_cast<std::size_t>(node)].value;
    };
    int node = 0;
    double current = baseline_value(0);
    while (!tree.nodes[static_cast<std::size_t>(node)].is_leaf()) {
      const auto& n = tree.nodes[static_cast<std::size_t>(node)];
      if (n.feature >= instance.size()) {
        throw Error("tree_path: tree splits on a feature beyond the instance width");
      }
      const int child = instance[n.feature] < n.threshold ? n.left : n.right;
      const double next = baseline_value(child);
      out.phi[n.feature] += next - current;
      current = next;
      node = child;
    }
  }
  return out;
}

namespace {

ModelFunction model_function(const Model& model, AttributionScale scale) {
  if (model.group_mode() != GroupFeatureMode::kNone) {
    throw Error("attribute: models with group indicators are not supported");
  }
  if (scale == AttributionScale::kMargin) {
    return [&model](const MatrixCRef& x) { return model.margin(x); };
  }
  return [&model](const MatrixCRef& x) { return model.predict(x); };
}

}  // namespace

AttributionVector attribute(const Model& model, const Eigen::Ref<const Eigen::RowVectorXd>& instance,
                            const Eigen::Ref<const Eigen::RowVectorXd>& baseline, AttributionMethod method,
                            AttributionScale scale) {
  if (method == AttributionMethod::kTreePath) {
    if (model.kind() != ModelKind::kGbt) throw Error("attribute: tree_path needs a boosted-tree model");
    if (scale != AttributionScale::kMargin) throw Error("attribute: tree_path is additive on the margin scale only");
    if (model.group_mode() != GroupFeatureMode::kNone) {
      throw Error("attribute: models with group indicators are not supported");
    }
    if (instance.size() != model.n_features()) throw Error("attribute: instance width mismatch");
    return tree_path(model.gbt(), instance, baseline);
  }
  return exact_shapley(model_function(model, scale), instance, baseline);
}

// ---------------------------------------------------------------------------
// QDD / QPD

IntVector group_sides(const IntVectorCRef& groups, const std::vector<int>& side_i, const std::vector<int>& side_j) {
  IntVector sides = IntVector::Constant(groups.size(), -1);
  for (Index r = 0; r < groups.size(); ++r) {
    if (std::find(side_i.begin(), side_i.end(), groups[r]) != side_i.end()) {
      sides[r] = 0;
    } else if (std::find(side_j.begin(), side_j.end(), groups[r]) != side_j.end()) {
      sides[r] = 1;
    }
  }
  return sides;
}

namespace {

double side_mean_difference(const VectorCRef& values, const IntVectorCRef& sides, const IntVectorCRef& bins, int bin,
                            const char* who) {
  if (values.size() != sides.size() || values.size() != bins.size()) {
    throw Error(std::string(who) + ": inputs differ in length");
  }
  double sum[2] = {0.0, 0.0};
  double count[2] = {0.0, 0.0};
  for (Index r = 0; r < values.size(); ++r) {
    if (bins[r] != bin || (sides[r] != 0 && sides[r] != 1)) continue;
    sum[sides[r]] += values[r];
    count[sides[r]] += 1.0;
  }
  if (count[0] == 0.0 || count[1] == 0.0) {
    throw Error(std::string(who) + ": bin " + std::to_string(bin) + " has no member of one side");
  }
  return sum[0] / count[0] - sum[1] / count[1];
}

}  // namespace

double qdd(const VectorCRef& scores, const IntVectorCRef& sides, const IntVectorCRef& bins, int bin) {
  return side_mean_difference(scores, sides, bins, bin, "qdd");
}

double qpd(const VectorCRef& labels, const IntVectorCRef& sides, const IntVectorCRef& bins, int bin) {
  return side_mean_difference(labels, sides, bins, bin, "qpd");
}

double qdd(const VectorCRef& scores, const IntVectorCRef& groups, const IntVectorCRef& bins, int bin, int i, int j) {
  return qdd(scores, group_sides(groups, {i}, {j}), bins, bin);
}

double qpd(const VectorCRef& labels, const IntVectorCRef& groups, const IntVectorCRef& bins, int bin, int i, int j) {
  return qpd(labels, group_sides(groups, {i}, {j}), bins, bin);
}

nlohmann::json QpdReport::to_json() const {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& b : bins) {
    rows.push_back({{"bin", b.bin},
                    {"n_i", b.n_i},
                    {"n_j", b.n_j},
                    {"qpd", b.qpd},
                    {"qdd", b.qdd},
                    {"qpda", std::vector<double>(b.qpda.data(), b.qpda.data() + b.qpda.size())},
                    {"identity_residual", b.identity_residual}});
  }
  return {{"method", faircal::to_string(method)},
          {"scale", scale == AttributionScale::kMargin ? "margin" : "probability"},
          {"features", feature_names},
          {"bins", std::move(rows)}};
}

std::string QpdReport::to_csv() const {
  std::ostringstream out;
  out << "bin,n_i,n_j,qpd,qdd";
  for (const auto& f : feature_names) out << ',' << f;
  out << '\n';
  for (const auto& b : bins) {
    out << b.bin << ',' << b.n_i << ',' << b.n_j << ',' << b.qpd << ',' << b.qdd;
    for (Index f = 0; f < b.qpda.size(); ++f) out << ',' << b.qpda[f];
    out << '\n';
  }
  return out.str();
}

QpdReport qpd_attribution(const Model& proxy, const MatrixCRef& features, const VectorCRef& labels,
                          const IntVectorCRef& bins, const IntVectorCRef& sides, AttributionMethod method,
                          const Eigen::Ref<const Eigen::RowVectorXd>& baseline, std::vector<std::string> feature_names) {
  const Index n = features.rows();
  if (labels.size() != n || bins.size() != n || sides.size() != n) {
    throw Error("qpd_attribution: inputs must be aligned");
  }
  const Index p = features.cols();
  if (feature_names.empty()) {
    for (Index f = 0; f < p; ++f) feature_names.push_back("x" + std::to_string(f));
  }
  QpdReport report;
  report.feature_names = std::move(feature_names);
  report.method = method;
  report.scale = method == AttributionMethod::kTreePath ? AttributionScale::kMargin : AttributionScale::kProbability;

  std::vector<Index> rows;
  for (Index r = 0; r < n; ++r) {
    if (sides[r] == 0 || sides[r] == 1) rows.push_back(r);
  }
  Matrix phi(static_cast<Index>(rows.size()), p);
  Vector output(static_cast<Index>(rows.size()));
  const Matrix x = take_rows(features, rows);
  if (method == AttributionMethod::kExactShapley) {
    const auto f = [&proxy](const MatrixCRef& m) { return proxy.predict(m); };
    phi = exact_shapley_batch(f, x, baseline);
    output = proxy.predict(x);
  } else {
    if (proxy.kind() != ModelKind::kGbt) throw Error("qpd_attribution: tree_path needs a boosted-tree proxy");
    for (Index k = 0; k < x.rows(); ++k) {
      const auto a = tree_path(proxy.gbt(), x.row(k), baseline);
      phi.row(k) = a.phi.transpose();
      output[k] = a.output_value;
    }
  }

  const int n_bins = bins.size() > 0 ? bins.maxCoeff() + 1 : 0;
  for (int b = 0; b < n_bins; ++b) {
    QpdBin out;
    out.bin = b;
    Vector sum_phi[2] = {Vector::Zero(p), Vector::Zero(p)};
    double sum_out[2] = {0.0, 0.0};
    double sum_y[2] = {0.0, 0.0};
    Index count[2] = {0, 0};
    for (std::size_t k = 0; k < rows.size(); ++k) {
      const Index r = rows[k];
      if (bins[r] != b) continue;
      const int s = sides[r];
      sum_phi[s] += phi.row(static_cast<Index>(k)).transpose();
      sum_out[s] += output[static_cast<Index>(k)];
      sum_y[s] += labels[r];
      ++count[s];
    }
    if (count[0] == 0 || count[1] == 0) continue;
    const double ni = static_cast<double>(count[0]);
    const double nj = static_cast<double>(count[1]);
    out.n_i = count[0];
    out.n_j = count[1];
    out.qpd = sum_y[0] / ni - sum_y[1] / nj;
    out.qdd = sum_out[0] / ni - sum_out[1] / nj;
    out.qpda = sum_phi[0] / ni - sum_phi[1] / nj;
    out.identity_residual = std::abs(out.qpda.sum() - out.qdd);
    report.bins.push_back(std::move(out));
  }
  return report;
}

FeatureSelection select_feature(const VectorCRef& base_scores, const MatrixCRef& base_features,
                                const MatrixCRef& candidate_features, const VectorCRef& labels,
                                const IntVectorCRef& groups, int n_groups, Index k,
                                const FeatureSelectionOptions& options) {
  const Index n = base_scores.size();
  const Index c = candidate_features.cols();
  if (c == 0) {
    throw Error("select_feature: no candidate features");
  }
  if (base_features.rows() != n || candidate_features.rows() != n || labels.size() != n || groups.size() != n) {
    throw Error("select_feature: inputs must be aligned");
  }
  if (n_groups < 2) {
    throw Error("select_feature: need at least two groups");
  }
  k = std::clamp<Index>(k, 1, c);

  MetricSpec spec;
  const auto per_group = worst_group(base_scores, labels, groups, n_groups, spec).per_group;
  std::vector<int> order(static_cast<std::size_t>(n_groups));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return per_group[static_cast<std::size_t>(a)].value > per_group[static_cast<std::size_t>(b)].value;
  });
  const auto n_worst = static_cast<std::size_t>((n_groups + 1) / 2);
  FeatureSelection result;
  result.worst_groups.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_worst));
  const std::vector<int> rest(order.begin() + static_cast<std::ptrdiff_t>(n_worst), order.end());
  const IntVector sides = group_sides(groups, result.worst_groups, rest);

  Dataset proxy_data;
  proxy_data.features.resize(n, base_features.cols() + c);
  proxy_data.features << base_features, candidate_features;
  proxy_data.labels = labels;
  proxy_data.groups = groups;
  for (Index f = 0; f < proxy_data.features.cols(); ++f) {
    proxy_data.feature_names.push_back(f < base_features.cols() ? "base" + std::to_string(f)
                                                                : "candidate" + std::to_string(f - base_features.cols()));
  }
  for (int g = 0; g < n_groups; ++g) proxy_data.group_names.push_back(std::to_string(g));
  Model proxy;
  try {
    proxy = gbt_train(proxy_data, options.proxy_params, GroupFeatureMode::kNone);
  } catch (const Error& e) {
    throw ComponentError(std::string("select_feature: proxy training failed: ") + e.what());
  }

  const IntVector bins = partition(base_scores, PartitionScheme::kQuantile, std::min(options.n_bins, n));
  const Eigen::RowVectorXd baseline = proxy_data.features.colwise().mean();
  const AttributionMethod method = proxy_data.features.cols() > kMaxShapleyFeatures ? AttributionMethod::kTreePath
                                                                                    : options.method;
  result.report = qpd_attribution(proxy, proxy_data.features, labels, bins, sides, method, baseline,
                                  proxy_data.feature_names);

  result.aggregate = Vector::Zero(c);
  double weight = 0.0;
  for (const auto& b : result.report.bins) {
    const double w = static_cast<double>(b.n_i + b.n_j);
    result.aggregate += w * b.qpda.tail(c).cwiseAbs();
    weight += w;
  }
  if (weight > 0.0) result.aggregate /= weight;

  std::vector<Index> ranking(static_cast<std::size_t>(c));
  std::iota(ranking.begin(), ranking.end(), Index{0});
  std::stable_sort(ranking.begin(), ranking.end(),
                   [&](Index a, Index b) { return result.aggregate[a] > result.aggregate[b]; });
  ranking.resize(static_cast<std::size_t>(k));
  result.ranking = std::move(ranking);
  return result;
}

}  // namespace faircal
