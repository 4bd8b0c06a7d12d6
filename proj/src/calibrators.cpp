#include "faircal/calibrators.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace faircal {

namespace {

constexpr int kCalibratorFormatVersion = 1;

void check_inputs(const VectorCRef& scores, const VectorCRef& labels, const char* who) {
  if (scores.size() != labels.size()) {
    throw Error(std::string(who) + ": scores and labels differ in length");
  }
  if (scores.size() == 0) {
    throw Error(std::string(who) + ": no samples");
  }
}

void require_both_classes(const VectorCRef& labels, const char* who) {
  const bool any_pos = (labels.array() > 0.5).any();
  const bool any_neg = (labels.array() < 0.5).any();
  if (!any_pos || !any_neg) {
    throw Error(std::string(who) + ": single-class labels");
  }
}

std::vector<Index> stable_order(const VectorCRef& scores) {
  std::vector<Index> order(static_cast<std::size_t>(scores.size()));
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) { return scores[a] < scores[b]; });
  return order;
}

double softplus(double z) { return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z))); }

/// Mean Bernoulli NLL of sigmoid(X theta) against targets t, minimized by (projected) Newton
/// with backtracking. Coordinates flagged in `nonnegative` are kept >= 0.
Vector fit_logistic(const Matrix& x, const Vector& t, Vector theta, const std::vector<bool>& nonnegative,
                    const char* who) {
  const Index n = x.rows();
  const Index k = x.cols();
  const double inv_n = 1.0 / static_cast<double>(n);
  auto loss = [&](const Vector& th) {
    const Vector z = x * th;
    double total = 0.0;
    for (Index i = 0; i < n; ++i) total += softplus(z[i]) - t[i] * z[i];
    return total * inv_n;
  };
  auto project = [&](Vector th) {
    for (Index j = 0; j < k; ++j) {
      if (nonnegative[static_cast<std::size_t>(j)]) th[j] = std::max(th[j], 0.0);
    }
    return th;
  };
  theta = project(std::move(theta));
  double current = loss(theta);
  double grad_norm = 0.0;
  for (int iter = 0; iter < kNewtonMaxIterations; ++iter) {
    const Vector p = sigmoid(x * theta);
    const Vector grad = x.transpose() * (p - t) * inv_n;
    const Vector curvature = p.array() * (1.0 - p.array());
    Matrix hess = x.transpose() * curvature.asDiagonal() * x * inv_n;

    std::vector<bool> active(static_cast<std::size_t>(k), false);
    grad_norm = 0.0;
    for (Index j = 0; j < k; ++j) {
      active[static_cast<std::size_t>(j)] = nonnegative[static_cast<std::size_t>(j)] && theta[j] <= 0.0 && grad[j] > 0.0;
      if (!active[static_cast<std::size_t>(j)]) grad_norm = std::max(grad_norm, std::abs(grad[j]));
    }
    if (grad_norm < 1e-9) {
      return theta;
    }
    std::vector<Index> free;
    for (Index j = 0; j < k; ++j) {
      if (!active[static_cast<std::size_t>(j)]) free.push_back(j);
    }
    const auto m = static_cast<Index>(free.size());
    Matrix hf(m, m);
    Vector gf(m);
    for (Index a = 0; a < m; ++a) {
      gf[a] = grad[free[static_cast<std::size_t>(a)]];
      for (Index b = 0; b < m; ++b) hf(a, b) = hess(free[static_cast<std::size_t>(a)], free[static_cast<std::size_t>(b)]);
    }
    hf.diagonal().array() += 1e-12;
    const Vector df = -hf.ldlt().solve(gf);
    Vector direction = Vector::Zero(k);
    for (Index a = 0; a < m; ++a) direction[free[static_cast<std::size_t>(a)]] = df[a];

    double step = 1.0;
    bool moved = false;
    for (int halving = 0; halving < 60; ++halving, step *= 0.5) {
      Vector candidate = project(theta + step * direction);
      const double value = loss(candidate);
      if (value < current) {
        theta = std::move(candidate);
        current = value;
        moved = true;
        break;
      }
    }
    if (!moved) {
      return theta;  // no representable decrease left along the Newton direction
    }
  }
  throw ComponentError(std::string(who) + ": Newton did not converge in " + std::to_string(kNewtonMaxIterations) +
                       " iterations (gradient norm " + std::to_string(grad_norm) + ")");
}

}  // namespace

std::string to_string(CalibratorKind kind) {
  switch (kind) {
    case CalibratorKind::kHistogram: return "histogram";
    case CalibratorKind::kIsotonic: return "isotonic";
    case CalibratorKind::kPlatt: return "platt";
    case CalibratorKind::kBeta: return "beta";
    case CalibratorKind::kTemperature: return "temperature";
    case CalibratorKind::kBbq: return "bbq";
    case CalibratorKind::kPlattBinner: return "platt_binner";
    case CalibratorKind::kPerGroup: return "per_group";
    case CalibratorKind::kGroupRobust: return "group_robust";
  }
  return "unknown";
}

CalibratorKind calibrator_kind_from_string(const std::string& id) {
  static const std::pair<const char*, CalibratorKind> table[] = {
      {"histogram", CalibratorKind::kHistogram},     {"isotonic", CalibratorKind::kIsotonic},
      {"platt", CalibratorKind::kPlatt},             {"beta", CalibratorKind::kBeta},
      {"temperature", CalibratorKind::kTemperature}, {"bbq", CalibratorKind::kBbq},
      {"platt_binner", CalibratorKind::kPlattBinner}, {"per_group", CalibratorKind::kPerGroup},
      {"group_robust", CalibratorKind::kGroupRobust},
  };
  for (const auto& [name, kind] : table) {
    if (id == name) return kind;
  }
  if (id == "enir") {
    throw ConfigError("calibrator 'enir' (ensemble of near-isotonic regressions) is not implemented; "
                      "use 'isotonic' or 'bbq'");
  }
  throw ConfigError("unknown calibrator kind '" + id + "'");
}

nlohmann::json Calibrator::to_json() const {
  return {{"kind", to_string(kind())}, {"params", params()}, {"version", kCalibratorFormatVersion}};
}

// ---------------------------------------------------------------------------
// Isotonic

double StepFunction::operator()(double s) const {
  const auto it = std::lower_bound(knots.begin(), knots.end(), s);
  if (it == knots.end()) {
    return values.back();
  }
  return values[static_cast<std::size_t>(it - knots.begin())];
}

StepFunction pava(const VectorCRef& scores, const VectorCRef& labels) {
  check_inputs(scores, labels, "pava");
  const auto order = stable_order(scores);

  struct Block {
    double sum;
    double weight;
    std::size_t knots;  // distinct scores pooled into this block
  };
  StepFunction f;
  std::vector<Block> blocks;
  for (std::size_t k = 0; k < order.size();) {
    const double s = scores[order[k]];
    double sum = 0.0;
    double weight = 0.0;
    while (k < order.size() && scores[order[k]] == s) {
      sum += labels[order[k]];
      weight += 1.0;
      ++k;
    }
    f.knots.push_back(s);
    blocks.push_back({sum, weight, 1});
    // Merge while the previous block mean exceeds the last one (cross-multiplied, exact for integer sums).
    while (blocks.size() > 1) {
      const Block& last = blocks.back();
      const Block& prev = blocks[blocks.size() - 2];
      if (prev.sum * last.weight <= last.sum * prev.weight) break;
      Block merged{prev.sum + last.sum, prev.weight + last.weight, prev.knots + last.knots};
      blocks.pop_back();
      blocks.back() = merged;
    }
  }
  for (const auto& b : blocks) {
    f.values.insert(f.values.end(), b.knots, b.sum / b.weight);
  }
  return f;
}

Vector IsotonicCalibrator::apply(const VectorCRef& scores, const IntVector*) const {
  return scores.unaryExpr([this](double s) { return f_(s); });
}

nlohmann::json IsotonicCalibrator::params() const { return {{"knots", f_.knots}, {"values", f_.values}}; }

CalibratorPtr fit_isotonic(const VectorCRef& scores, const VectorCRef& labels) {
  return std::make_shared<IsotonicCalibrator>(pava(scores, labels));
}

// ---------------------------------------------------------------------------
// Histogram

HistogramCalibrator::HistogramCalibrator(std::vector<double> edges, std::vector<double> values, bool ties_go_left)
    : edges_(std::move(edges)), values_(std::move(values)), ties_go_left_(ties_go_left) {
  if (values_.empty() || values_.size() != edges_.size() + 1) {
    throw Error("histogram: need exactly one more value than interior edges");
  }
}

Index HistogramCalibrator::bin(double s) const {
  const auto it = ties_go_left_ ? std::lower_bound(edges_.begin(), edges_.end(), s)
                                : std::upper_bound(edges_.begin(), edges_.end(), s);
  return static_cast<Index>(it - edges_.begin());
}

Vector HistogramCalibrator::apply(const VectorCRef& scores, const IntVector*) const {
  return scores.unaryExpr([this](double s) { return values_[static_cast<std::size_t>(bin(s))]; });
}

nlohmann::json HistogramCalibrator::params() const {
  return {{"edges", edges_}, {"values", values_}, {"ties_go_left", ties_go_left_}};
}

std::shared_ptr<const HistogramCalibrator> fit_histogram(const VectorCRef& scores, const VectorCRef& labels, Index bins,
                                                         Binning scheme) {
  check_inputs(scores, labels, "histogram");
  if (bins < 1) {
    throw Error("histogram: need at least one bin");
  }
  const Index n = scores.size();
  std::vector<double> edges;
  bool ties_go_left = false;
  if (scheme == Binning::kEqualWidth) {
    for (Index k = 1; k < bins; ++k) edges.push_back(static_cast<double>(k) / static_cast<double>(bins));
  } else {
    if (bins > n) {
      throw Error("histogram: " + std::to_string(bins) + " equal-mass bins exceed " + std::to_string(n) + " samples");
    }
    const auto order = stable_order(scores);
    for (Index k = 1; k < bins; ++k) {
      const Index boundary = k * n / bins;
      edges.push_back(scores[order[static_cast<std::size_t>(boundary - 1)]]);
    }
    ties_go_left = true;
  }
  const HistogramCalibrator shape(edges, std::vector<double>(edges.size() + 1, 0.0), ties_go_left);
  std::vector<double> sum(static_cast<std::size_t>(bins), 0.0);
  std::vector<double> count(static_cast<std::size_t>(bins), 0.0);
  for (Index i = 0; i < n; ++i) {
    const auto b = static_cast<std::size_t>(shape.bin(scores[i]));
    sum[b] += labels[i];
    count[b] += 1.0;
  }
  const double global = labels.mean();
  std::vector<double> values(static_cast<std::size_t>(bins));
  for (std::size_t b = 0; b < values.size(); ++b) {
    values[b] = count[b] > 0.0 ? sum[b] / count[b] : global;
  }
  return std::make_shared<HistogramCalibrator>(std::move(edges), std::move(values), ties_go_left);
}

// ---------------------------------------------------------------------------
// Platt, beta, temperature

Vector PlattCalibrator::apply(const VectorCRef& scores, const IntVector*) const {
  return scores.unaryExpr([this](double s) { return sigmoid(a_ * logit(s) + b_); });
}

std::shared_ptr<const PlattCalibrator> fit_platt(const VectorCRef& scores, const VectorCRef& labels,
                                                 bool use_target_smoothing) {
  check_inputs(scores, labels, "platt");
  require_both_classes(labels, "platt");
  const Index n = scores.size();
  Matrix x(n, 2);
  x.col(0) = logit(scores);
  x.col(1).setOnes();
  Vector t = labels;
  if (use_target_smoothing) {
    const double positives = labels.sum();
    const double negatives = static_cast<double>(n) - positives;
    const double hi = (positives + 1.0) / (positives + 2.0);
    const double lo = 1.0 / (negatives + 2.0);
    t = labels.unaryExpr([&](double y) { return y > 0.5 ? hi : lo; });
  }
  const Vector theta = fit_logistic(x, t, Vector::Zero(2), {false, false}, "platt");
  return std::make_shared<PlattCalibrator>(theta[0], theta[1]);
}

Vector BetaCalibrator::apply(const VectorCRef& scores, const IntVector*) const {
  return scores.unaryExpr([this](double s) {
    const double c = clip_score(s);
    return sigmoid(a_ * std::log(c) - b_ * std::log1p(-c) + c_);
  });
}

std::shared_ptr<const BetaCalibrator> fit_beta(const VectorCRef& scores, const VectorCRef& labels) {
  check_inputs(scores, labels, "beta");
  require_both_classes(labels, "beta");
  const Index n = scores.size();
  Matrix x(n, 3);
  for (Index i = 0; i < n; ++i) {
    const double c = clip_score(scores[i]);
    x(i, 0) = std::log(c);
    x(i, 1) = -std::log1p(-c);
    x(i, 2) = 1.0;
  }
  Vector start(3);
  start << 1.0, 1.0, 0.0;
  const Vector theta = fit_logistic(x, labels, start, {true, true, false}, "beta");
  return std::make_shared<BetaCalibrator>(theta[0], theta[1], theta[2]);
}

Vector TemperatureCalibrator::apply(const VectorCRef& scores, const IntVector*) const {
  return scores.unaryExpr([this](double s) { return sigmoid(logit(s) / t_); });
}

std::shared_ptr<const TemperatureCalibrator> fit_temperature(const VectorCRef& scores, const VectorCRef& labels,
                                                             TemperatureBounds bounds) {
  check_inputs(scores, labels, "temperature");
  require_both_classes(labels, "temperature");
  if (!(bounds.low > 0.0 && bounds.high > bounds.low)) {
    throw Error("temperature: bounds must satisfy 0 < low < high");
  }
  const Vector z = logit(scores);
  auto nll = [&](double t) {
    double total = 0.0;
    for (Index i = 0; i < z.size(); ++i) total += softplus(z[i] / t) - labels[i] * z[i] / t;
    return total / static_cast<double>(z.size());
  };
  const double ratio = (std::sqrt(5.0) - 1.0) / 2.0;
  double lo = std::log(bounds.low);
  double hi = std::log(bounds.high);
  double c = hi - ratio * (hi - lo);
  double d = lo + ratio * (hi - lo);
  double fc = nll(std::exp(c));
  double fd = nll(std::exp(d));
  for (int iter = 0; iter < 200 && hi - lo > 1e-12; ++iter) {
    if (fc <= fd) {
      hi = d;
      d = c;
      fd = fc;
      c = hi - ratio * (hi - lo);
      fc = nll(std::exp(c));
    } else {
      lo = c;
      c = d;
      fc = fd;
      d = lo + ratio * (hi - lo);
      fd = nll(std::exp(d));
    }
  }
  double best_t = std::exp(0.5 * (lo + hi));
  double best = nll(best_t);
  for (double edge : {bounds.low, bounds.high}) {
    const double value = nll(edge);
    if (value < best) {
      best = value;
      best_t = edge;
    }
  }
  return std::make_shared<TemperatureCalibrator>(best_t);
}

// ---------------------------------------------------------------------------
// BBQ and PlattBinner

BbqCalibrator::BbqCalibrator(std::vector<std::shared_ptr<const HistogramCalibrator>> members, std::vector<double> weights)
    : members_(std::move(members)), weights_(std::move(weights)) {
  if (members_.empty() || members_.size() != weights_.size()) {
    throw Error("bbq: members and weights must be non-empty and aligned");
  }
}

Vector BbqCalibrator::apply(const VectorCRef& scores, const IntVector*) const {
  Vector out = Vector::Zero(scores.size());
  for (std::size_t m = 0; m < members_.size(); ++m) {
    out += weights_[m] * members_[m]->apply(scores);
  }
  return out.cwiseMax(0.0).cwiseMin(1.0);
}

nlohmann::json BbqCalibrator::params() const {
  nlohmann::json members = nlohmann::json::array();
  for (const auto& m : members_) members.push_back(m->params());
  return {{"members", std::move(members)}, {"weights", weights_}};
}

double bbq_log_score(const HistogramCalibrator& member, const VectorCRef& scores, const VectorCRef& labels) {
  const std::size_t bins = member.values().size();
  std::vector<double> n(bins, 0.0);
  std::vector<double> k(bins, 0.0);
  for (Index i = 0; i < scores.size(); ++i) {
    const auto b = static_cast<std::size_t>(member.bin(scores[i]));
    n[b] += 1.0;
    k[b] += labels[i];
  }
  // Beta(1,1) prior: integral of p^k (1-p)^(n-k) dp = k! (n-k)! / (n+1)!
  double total = 0.0;
  for (std::size_t b = 0; b < bins; ++b) {
    total += std::lgamma(k[b] + 1.0) + std::lgamma(n[b] - k[b] + 1.0) - std::lgamma(n[b] + 2.0);
  }
  return total;
}

std::shared_ptr<const BbqCalibrator> fit_bbq(const VectorCRef& scores, const VectorCRef& labels,
                                             const std::vector<Index>& bin_counts) {
  check_inputs(scores, labels, "bbq");
  if (bin_counts.empty()) {
    throw Error("bbq: bin_counts is empty");
  }
  std::vector<std::shared_ptr<const HistogramCalibrator>> members;
  std::vector<double> log_scores;
  for (Index m : bin_counts) {
    members.push_back(fit_histogram(scores, labels, m, Binning::kEqualMass));
    log_scores.push_back(bbq_log_score(*members.back(), scores, labels));
  }
  const double top = *std::max_element(log_scores.begin(), log_scores.end());
  std::vector<double> weights;
  double total = 0.0;
  for (double s : log_scores) {
    weights.push_back(std::exp(s - top));
    total += weights.back();
  }
  for (double& w : weights) w /= total;
  return std::make_shared<BbqCalibrator>(std::move(members), std::move(weights));
}

Vector PlattBinnerCalibrator::apply(const VectorCRef& scores, const IntVector*) const {
  return binner_->apply(platt_->apply(scores));
}

nlohmann::json PlattBinnerCalibrator::params() const {
  return {{"platt", platt_->params()}, {"binner", binner_->params()}};
}

std::shared_ptr<const PlattBinnerCalibrator> fit_platt_binner(const VectorCRef& scores, const VectorCRef& labels,
                                                              Index bins, std::uint64_t seed) {
  check_inputs(scores, labels, "platt_binner");
  if (bins < 1) {
    throw Error("platt_binner: need at least one bin");
  }
  Rng rng(seed);
  const auto order = permutation(scores.size(), rng);
  std::vector<Index> first;
  std::vector<Index> second;
  for (std::size_t k = 0; k < order.size(); ++k) {
    (k % 2 == 0 ? first : second).push_back(order[k]);
  }
  if (second.empty()) {
    throw Error("platt_binner: need at least two samples");
  }
  auto platt = fit_platt(take(scores, first), take(labels, first));
  // Bin values are means of the Platt outputs, not of the labels: the discretized map keeps
  // the scaler's low variance while becoming measurable by binned estimators.
  const Vector mapped = platt->apply(take(scores, second));
  auto binner = fit_histogram(mapped, mapped, bins, Binning::kEqualMass);
  return std::make_shared<PlattBinnerCalibrator>(std::move(platt), std::move(binner));
}

// ---------------------------------------------------------------------------
// Group-aware

CalibratorSpec CalibratorSpec::from_json(const nlohmann::json& j) {
  CalibratorSpec spec;
  if (j.is_string()) {
    spec.kind = calibrator_kind_from_string(j.get<std::string>());
    return spec;
  }
  spec.kind = calibrator_kind_from_string(j.at("kind").get<std::string>());
  spec.params = j.value("params", nlohmann::json::object());
  return spec;
}

nlohmann::json CalibratorSpec::to_json() const { return {{"kind", to_string(kind)}, {"params", params}}; }

Vector PerGroupCalibrator::apply(const VectorCRef& scores, const IntVector* groups) const {
  if (groups == nullptr) {
    throw Error("per_group calibrator: group ids are required at apply time");
  }
  if (groups->size() != scores.size()) {
    throw Error("per_group calibrator: scores and groups differ in length");
  }
  Vector out(scores.size());
  std::map<int, std::vector<Index>> rows;
  for (Index i = 0; i < groups->size(); ++i) rows[(*groups)[i]].push_back(i);
  for (const auto& [g, idx] : rows) {
    const auto it = members_.find(g);
    if (it == members_.end()) {
      throw Error("per_group calibrator: no calibrator fitted for group " + std::to_string(g));
    }
    const Vector mapped = it->second->apply(take(scores, idx));
    for (std::size_t k = 0; k < idx.size(); ++k) out[idx[k]] = mapped[static_cast<Index>(k)];
  }
  return out;
}

nlohmann::json PerGroupCalibrator::params() const {
  nlohmann::json members = nlohmann::json::object();
  for (const auto& [g, c] : members_) members[std::to_string(g)] = c->to_json();
  return {{"inner", to_string(inner_)}, {"members", std::move(members)}};
}

std::shared_ptr<const PerGroupCalibrator> fit_per_group(const VectorCRef& scores, const VectorCRef& labels,
                                                        const IntVectorCRef& groups, const CalibratorSpec& inner) {
  check_inputs(scores, labels, "per_group");
  if (groups.size() != scores.size()) {
    throw Error("per_group: scores and groups differ in length");
  }
  if (inner.kind == CalibratorKind::kPerGroup || inner.kind == CalibratorKind::kGroupRobust) {
    throw ConfigError("per_group: inner calibrator must be score-only");
  }
  std::map<int, std::vector<Index>> rows;
  for (Index i = 0; i < groups.size(); ++i) rows[groups[i]].push_back(i);
  std::map<int, CalibratorPtr> members;
  for (const auto& [g, idx] : rows) {
    try {
      members[g] = fit_calibrator(inner, take(scores, idx), take(labels, idx));
    } catch (const ConfigError&) {
      throw;
    } catch (const Error& e) {
      throw Error("per_group: group " + std::to_string(g) + ": " + e.what());
    }
  }
  return std::make_shared<PerGroupCalibrator>(inner.kind, std::move(members));
}

Vector GroupRobustCalibrator::apply(const VectorCRef& scores, const IntVector*) const {
  const Matrix x = scores;
  return model_.predict(x);
}

GbtParams default_group_robust_params() {
  GbtParams p;
  p.eta = 0.3;
  p.max_depth = 3;
  p.boosting_rounds = 25;
  p.max_bin = 256;
  p.objective = GbtObjective::kBrier;
  p.calibration_loss_weight = 1.0;
  p.dro_eta = 2.0;
  return p;
}

std::shared_ptr<const GroupRobustCalibrator> fit_group_robust(const VectorCRef& scores, const VectorCRef& labels,
                                                              const IntVectorCRef& groups, GbtParams params) {
  check_inputs(scores, labels, "group_robust");
  if (groups.size() != scores.size()) {
    throw Error("group_robust: scores and groups differ in length");
  }
  Dataset data;
  data.features = scores;
  data.labels = labels;
  data.groups = groups;
  data.feature_names = {"score"};
  const int n_groups = groups.size() > 0 ? groups.maxCoeff() + 1 : 1;
  for (int g = 0; g < n_groups; ++g) data.group_names.push_back(std::to_string(g));
  params.objective = GbtObjective::kBrier;
  return std::make_shared<GroupRobustCalibrator>(gbt_train(data, params, GroupFeatureMode::kNone));
}

CalibratorPtr fit_calibrator(const CalibratorSpec& spec, const VectorCRef& scores, const VectorCRef& labels,
                             const IntVector* groups) {
  const auto& p = spec.params;
  switch (spec.kind) {
    case CalibratorKind::kHistogram: {
      const auto scheme = p.value("binning", std::string("equal_width"));
      if (scheme != "equal_width" && scheme != "equal_mass") {
        throw ConfigError("histogram: unknown binning '" + scheme + "'");
      }
      return fit_histogram(scores, labels, p.value("bins", Index{10}),
                           scheme == "equal_mass" ? Binning::kEqualMass : Binning::kEqualWidth);
    }
    case CalibratorKind::kIsotonic: return fit_isotonic(scores, labels);
    case CalibratorKind::kPlatt: return fit_platt(scores, labels, p.value("target_smoothing", false));
    case CalibratorKind::kBeta: return fit_beta(scores, labels);
    case CalibratorKind::kTemperature: {
      TemperatureBounds bounds;
      bounds.low = p.value("t_low", bounds.low);
      bounds.high = p.value("t_high", bounds.high);
      return fit_temperature(scores, labels, bounds);
    }
    case CalibratorKind::kBbq: {
      auto counts = p.value("bin_counts", kDefaultBbqBinCounts);
      // Candidates larger than the sample cannot be filled.
      counts.erase(std::remove_if(counts.begin(), counts.end(), [&](Index m) { return m > scores.size(); }),
                   counts.end());
      if (counts.empty()) counts.push_back(1);
      return fit_bbq(scores, labels, counts);
    }
    case CalibratorKind::kPlattBinner:
      return fit_platt_binner(scores, labels, p.value("bins", Index{10}), p.value("seed", std::uint64_t{0}));
    case CalibratorKind::kPerGroup: {
      if (groups == nullptr) throw Error("per_group calibrator needs group ids");
      CalibratorSpec inner;
      inner.kind = calibrator_kind_from_string(p.value("inner", std::string("isotonic")));
      inner.params = p.value("inner_params", nlohmann::json::object());
      return fit_per_group(scores, labels, *groups, inner);
    }
    case CalibratorKind::kGroupRobust: {
      if (groups == nullptr) throw Error("group_robust calibrator needs group ids");
      nlohmann::json merged = default_group_robust_params().to_json();
      merged.update(p);
      return fit_group_robust(scores, labels, *groups, GbtParams::from_json(merged));
    }
  }
  throw ConfigError("unsupported calibrator kind");
}

std::shared_ptr<const Calibrator> Calibrator::from_json(const nlohmann::json& j) {
  const int version = j.value("version", 0);
  if (version != kCalibratorFormatVersion) {
    throw Error("calibrator json: unsupported version " + std::to_string(version));
  }
  const auto kind = calibrator_kind_from_string(j.at("kind").get<std::string>());
  const auto& p = j.at("params");
  auto histogram = [](const nlohmann::json& h) {
    return std::make_shared<HistogramCalibrator>(h.at("edges").get<std::vector<double>>(),
                                                 h.at("values").get<std::vector<double>>(),
                                                 h.at("ties_go_left").get<bool>());
  };
  switch (kind) {
    case CalibratorKind::kHistogram: return histogram(p);
    case CalibratorKind::kIsotonic: {
      StepFunction f{p.at("knots").get<std::vector<double>>(), p.at("values").get<std::vector<double>>()};
      if (f.knots.empty() || f.knots.size() != f.values.size()) throw Error("calibrator json: malformed isotonic");
      return std::make_shared<IsotonicCalibrator>(std::move(f));
    }
    case CalibratorKind::kPlatt: return std::make_shared<PlattCalibrator>(p.at("a").get<double>(), p.at("b").get<double>());
    case CalibratorKind::kBeta:
      return std::make_shared<BetaCalibrator>(p.at("a").get<double>(), p.at("b").get<double>(), p.at("c").get<double>());
    case CalibratorKind::kTemperature: return std::make_shared<TemperatureCalibrator>(p.at("temperature").get<double>());
    case CalibratorKind::kBbq: {
      std::vector<std::shared_ptr<const HistogramCalibrator>> members;
      for (const auto& m : p.at("members")) members.push_back(histogram(m));
      return std::make_shared<BbqCalibrator>(std::move(members), p.at("weights").get<std::vector<double>>());
    }
    case CalibratorKind::kPlattBinner: {
      const auto& pl = p.at("platt");
      return std::make_shared<PlattBinnerCalibrator>(
          std::make_shared<PlattCalibrator>(pl.at("a").get<double>(), pl.at("b").get<double>()),
          histogram(p.at("binner")));
    }
    case CalibratorKind::kPerGroup: {
      std::map<int, CalibratorPtr> members;
      for (const auto& [g, c] : p.at("members").items()) members[std::stoi(g)] = from_json(c);
      return std::make_shared<PerGroupCalibrator>(calibrator_kind_from_string(p.at("inner").get<std::string>()),
                                                  std::move(members));
    }
    case CalibratorKind::kGroupRobust: return std::make_shared<GroupRobustCalibrator>(Model::from_json(p));
  }
  throw Error("calibrator json: unsupported kind");
}

}  // namespace faircal
