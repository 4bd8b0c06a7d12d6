#include "faircal/models.hpp"

#include <algorithm>
#include <cmath>

namespace faircal {

Vector group_dro_step(const VectorCRef& q, const VectorCRef& per_group_losses, double eta) {
  return group_dro_step(q, per_group_losses, eta, std::vector<bool>(static_cast<std::size_t>(q.size()), true));
}

Vector group_dro_step(const VectorCRef& q, const VectorCRef& per_group_losses, double eta,
                      const std::vector<bool>& active) {
  if (q.size() != per_group_losses.size() || static_cast<Index>(active.size()) != q.size()) {
    throw Error("group_dro_step: q and losses differ in length");
  }
  if (!per_group_losses.allFinite()) {
    throw Error("group_dro_step: non-finite group loss");
  }
  // Log-domain update; the shift by the max exponent cancels in the normalization.
  Vector log_q(q.size());
  double top = -std::numeric_limits<double>::infinity();
  for (Index g = 0; g < q.size(); ++g) {
    const double step = active[static_cast<std::size_t>(g)] ? eta * per_group_losses[g] : 0.0;
    log_q[g] = q[g] > 0.0 ? std::log(q[g]) + step : -std::numeric_limits<double>::infinity();
    top = std::max(top, log_q[g]);
  }
  if (!std::isfinite(top)) {
    throw Error("group_dro_step: q has no positive mass");
  }
  Vector out = (log_q.array() - top).exp().matrix();
  return out / out.sum();
}

namespace {

double softplus(double z) { return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z))); }

}  // namespace

ObjectiveTerms logistic_objective(double margin, double label) {
  const double p = sigmoid(margin);
  return {softplus(margin) - label * margin, p - label, p * (1.0 - p)};
}

ObjectiveTerms brier_objective(double margin, double label) {
  const double p = sigmoid(margin);
  const double slope = p * (1.0 - p);
  const double residual = p - label;
  return {residual * residual, 2.0 * residual * slope, 2.0 * slope * slope + 2.0 * residual * slope * (1.0 - 2.0 * p)};
}

void GbtParams::validate() const {
  if (!(eta > 0.0)) throw Error("gbt: eta must be positive");
  if (min_split_loss < 0.0) throw Error("gbt: min_split_loss must be >= 0");
  if (max_depth < 1) throw Error("gbt: max_depth must be >= 1");
  if (!(colsample_bytree > 0.0 && colsample_bytree <= 1.0)) throw Error("gbt: colsample_bytree must lie in (0, 1]");
  if (!(colsample_bylevel > 0.0 && colsample_bylevel <= 1.0)) throw Error("gbt: colsample_bylevel must lie in (0, 1]");
  if (max_bin < 2) throw Error("gbt: max_bin must be >= 2");
  if (boosting_rounds < 1) throw Error("gbt: boosting_rounds must be >= 1");
  if (calibration_loss_weight < 0.0) throw Error("gbt: calibration_loss_weight must be >= 0");
  if (dro_eta < 0.0) throw Error("gbt: dro_eta must be >= 0");
}

nlohmann::json GbtParams::to_json() const {
  return {{"eta", eta},
          {"min_split_loss", min_split_loss},
          {"max_depth", max_depth},
          {"colsample_bytree", colsample_bytree},
          {"colsample_bylevel", colsample_bylevel},
          {"max_bin", max_bin},
          {"grow_policy", grow_policy == GrowPolicy::kDepthwise ? "depthwise" : "lossguide"},
          {"boosting_rounds", boosting_rounds},
          {"objective", objective == GbtObjective::kLogistic ? "logistic" : "brier"},
          {"calibration_loss_weight", calibration_loss_weight},
          {"dro_eta", dro_eta},
          {"seed", seed}};
}

GbtParams GbtParams::from_json(const nlohmann::json& j) {
  GbtParams p;
  p.eta = j.value("eta", p.eta);
  p.min_split_loss = j.value("min_split_loss", p.min_split_loss);
  p.max_depth = j.value("max_depth", p.max_depth);
  p.colsample_bytree = j.value("colsample_bytree", p.colsample_bytree);
  p.colsample_bylevel = j.value("colsample_bylevel", p.colsample_bylevel);
  p.max_bin = j.value("max_bin", p.max_bin);
  if (j.contains("grow_policy")) {
    const auto policy = j.at("grow_policy").get<std::string>();
    if (policy == "depthwise") {
      p.grow_policy = GrowPolicy::kDepthwise;
    } else if (policy == "lossguide") {
      p.grow_policy = GrowPolicy::kLossguide;
    } else {
      throw ConfigError("gbt: unknown grow_policy '" + policy + "'");
    }
  }
  p.boosting_rounds = j.value("boosting_rounds", p.boosting_rounds);
  if (j.contains("objective")) {
    const auto objective = j.at("objective").get<std::string>();
    if (objective == "logistic") {
      p.objective = GbtObjective::kLogistic;
    } else if (objective == "brier") {
      p.objective = GbtObjective::kBrier;
    } else {
      throw ConfigError("gbt: unknown objective '" + objective + "'");
    }
  }
  p.calibration_loss_weight = j.value("calibration_loss_weight", p.calibration_loss_weight);
  p.dro_eta = j.value("dro_eta", p.dro_eta);
  p.seed = j.value("seed", p.seed);
  return p;
}

Vector GbtModel::margin(const MatrixCRef& inputs) const {
  Vector out = Vector::Constant(inputs.rows(), base_margin);
  for (const auto& tree : trees) {
    out += tree.predict(inputs);
  }
  return out;
}

double GbtModel::margin_row(const Eigen::Ref<const Eigen::RowVectorXd>& row) const {
  double out = base_margin;
  for (const auto& tree : trees) {
    out += tree.predict_row(row);
  }
  return out;
}

bool gbt_reads_groups(const GbtParams& params, GroupFeatureMode mode) {
  return mode == GroupFeatureMode::kAsFeature || (params.calibration_loss_weight > 0.0 && params.dro_eta > 0.0);
}

Model gbt_train(const Dataset& train, const GbtParams& params, GroupFeatureMode group_mode) {
  params.validate();
  const Index n = train.size();
  if (n < 1) {
    throw Error("gbt_train: empty training partition");
  }
  const bool reweight = params.calibration_loss_weight > 0.0 && params.dro_eta > 0.0;
  const bool needs_groups = group_mode == GroupFeatureMode::kAsFeature || reweight;
  if (needs_groups && train.groups.size() != n) {
    throw Error("gbt_train: group column required but unavailable");
  }
  const int n_groups = std::max(1, train.n_groups());
  const Matrix inputs = group_mode == GroupFeatureMode::kAsFeature ? train.features_with_group_indicators()
                                                                   : train.features;

  const auto binner = FeatureBinner::fit(inputs, params.max_bin);
  const BinMatrix bins = binner.transform(inputs);

  const double gamma = params.calibration_loss_weight;
  auto terms = [&](double z, double y) {
    ObjectiveTerms t = params.objective == GbtObjective::kLogistic ? logistic_objective(z, y) : brier_objective(z, y);
    if (gamma > 0.0) {
      const ObjectiveTerms b = brier_objective(z, y);
      t.loss += gamma * b.loss;
      t.gradient += gamma * b.gradient;
      t.hessian += gamma * b.hessian;
    }
    return t;
  };

  GbtModel model;
  model.base_margin = logit(train.labels.mean());
  Vector margins = Vector::Constant(n, model.base_margin);
  auto mean_loss = [&] {
    double total = 0.0;
    for (Index i = 0; i < n; ++i) total += terms(margins[i], train.labels[i]).loss;
    return total / static_cast<double>(n);
  };
  model.train_loss.push_back(mean_loss());

  Vector q = Vector::Constant(n_groups, 1.0 / n_groups);
  Vector sample_weight = Vector::Ones(n);
  Vector grad(n);
  Vector hess(n);
  TreeGrowParams tree_params;
  tree_params.max_depth = params.max_depth;
  tree_params.lambda = kGbtLambda;
  tree_params.min_split_loss = params.min_split_loss;
  tree_params.colsample_bytree = params.colsample_bytree;
  tree_params.colsample_bylevel = params.colsample_bylevel;
  tree_params.policy = params.grow_policy;

  for (int round = 0; round < params.boosting_rounds; ++round) {
    if (reweight) {
      Vector group_loss = Vector::Zero(n_groups);
      Vector group_count = Vector::Zero(n_groups);
      for (Index i = 0; i < n; ++i) {
        const double r = sigmoid(margins[i]) - train.labels[i];
        group_loss[train.groups[i]] += r * r;
        group_count[train.groups[i]] += 1.0;
      }
      std::vector<bool> active(static_cast<std::size_t>(n_groups));
      for (int g = 0; g < n_groups; ++g) {
        active[static_cast<std::size_t>(g)] = group_count[g] > 0.0;
        if (group_count[g] > 0.0) group_loss[g] /= group_count[g];
      }
      q = group_dro_step(q, group_loss, params.dro_eta, active);
      model.dro_weights.push_back(q);
      for (Index i = 0; i < n; ++i) {
        sample_weight[i] = static_cast<double>(n_groups) * q[train.groups[i]];
      }
    }
    for (Index i = 0; i < n; ++i) {
      const ObjectiveTerms t = terms(margins[i], train.labels[i]);
      grad[i] = sample_weight[i] * t.gradient;
      hess[i] = sample_weight[i] * std::max(t.hessian, kGbtHessianFloor);
    }
    Rng rng(derive_seed(params.seed, static_cast<std::uint64_t>(round)));
    RegressionTree tree = grow_tree(bins, binner, grad, hess, tree_params, rng);
    tree.scale_leaves(params.eta);
    margins += tree.predict(inputs);
    model.trees.push_back(std::move(tree));
    model.train_loss.push_back(mean_loss());
  }

  Model out;
  out.kind_ = ModelKind::kGbt;
  out.group_mode_ = group_mode;
  out.n_groups_ = n_groups;
  out.n_features_ = train.n_features();
  out.config_ = params.to_json();
  out.impl_ = std::move(model);
  return out;
}

}  // namespace faircal
