#include "faircal/multicalibration.hpp"

#include "faircal/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace faircal {

namespace {

constexpr int kSequenceFormatVersion = 1;

template <typename Enum>
struct EnumName {
  Enum value;
  const char* name;
};

constexpr EnumName<PartitionScheme> kSchemes[] = {{PartitionScheme::kEven, "even"},
                                                  {PartitionScheme::kQuantile, "quantile"}};
constexpr EnumName<McSampling> kSamplings[] = {
    {McSampling::kNone, "none"}, {McSampling::kDisjoint, "disjoint"}, {McSampling::kBootstrap, "bootstrap"}};
constexpr EnumName<ResidualModelKind> kResiduals[] = {{ResidualModelKind::kRidge, "ridge"},
                                                      {ResidualModelKind::kTree, "tree"}};
constexpr EnumName<UpdateRule> kRules[] = {{UpdateRule::kAdditiveRepartition, "additive_repartition"},
                                           {UpdateRule::kMultiplicativeFixed, "multiplicative_fixed"}};

template <typename Enum, std::size_t N>
const char* name_of(const EnumName<Enum> (&table)[N], Enum value) {
  for (const auto& e : table) {
    if (e.value == value) return e.name;
  }
  return "unknown";
}

template <typename Enum, std::size_t N>
Enum parse(const EnumName<Enum> (&table)[N], const std::string& name, const char* what) {
  for (const auto& e : table) {
    if (name == e.name) return e.value;
  }
  throw ConfigError(std::string("multicalibration: unknown ") + what + " '" + name + "'");
}

std::vector<Index> rows_in(const IntVector& assignment, Index part, const std::vector<Index>& candidates) {
  std::vector<Index> rows;
  for (Index r : candidates) {
    if (assignment[r] == part) rows.push_back(r);
  }
  return rows;
}

/// The single update path shared by fitting and replay.
void apply_step(const McStep& step, const VectorCRef& initial, Vector& current, const MatrixCRef& features) {
  const IntVector assignment =
      step.partition.assign(step.rule == UpdateRule::kMultiplicativeFixed ? Vector(initial) : current);
  std::vector<Index> rows;
  for (Index i = 0; i < assignment.size(); ++i) {
    if (assignment[i] == step.chosen) rows.push_back(i);
  }
  if (rows.empty()) {
    return;
  }
  const Vector predicted = step.model.predict(take_rows(features, rows));
  for (std::size_t k = 0; k < rows.size(); ++k) {
    const Index i = rows[k];
    const double r = predicted[static_cast<Index>(k)];
    const double updated = step.rule == UpdateRule::kAdditiveRepartition ? current[i] + step.step_size * r
                                                                         : current[i] * std::exp(step.step_size * r);
    current[i] = clip_score(updated);
  }
}

}  // namespace

void McConfig::validate() const {
  if (n_partitions < 1) throw ConfigError("multicalibration: n_partitions must be >= 1");
  if (!(step_size > 0.0)) throw ConfigError("multicalibration: step_size must be positive");
  if (stop_threshold < 0.0) throw ConfigError("multicalibration: stop_threshold must be >= 0");
  if (max_iterations < 1) throw ConfigError("multicalibration: max_iterations must be >= 1");
  if (disjoint_slices < 1) throw ConfigError("multicalibration: disjoint_slices must be >= 1");
  if (ridge_lambda < 0.0) throw ConfigError("multicalibration: ridge_lambda must be >= 0");
  if (tree_max_depth < 1) throw ConfigError("multicalibration: tree_max_depth must be >= 1");
}

nlohmann::json McConfig::to_json() const {
  return {{"n_partitions", n_partitions},
          {"partition_scheme", name_of(kSchemes, partition_scheme)},
          {"sampling", name_of(kSamplings, sampling)},
          {"disjoint_slices", disjoint_slices},
          {"residual_model", name_of(kResiduals, residual_model)},
          {"ridge_lambda", ridge_lambda},
          {"tree_max_depth", tree_max_depth},
          {"update_rule", name_of(kRules, update_rule)},
          {"step_size", step_size},
          {"stop_threshold", stop_threshold},
          {"max_iterations", max_iterations}};
}

McConfig McConfig::from_json(const nlohmann::json& j) {
  McConfig c;
  c.n_partitions = j.value("n_partitions", c.n_partitions);
  if (j.contains("partition_scheme")) c.partition_scheme = parse(kSchemes, j.at("partition_scheme"), "partition scheme");
  if (j.contains("sampling")) c.sampling = parse(kSamplings, j.at("sampling"), "sampling rule");
  c.disjoint_slices = j.value("disjoint_slices", c.disjoint_slices);
  if (j.contains("residual_model")) c.residual_model = parse(kResiduals, j.at("residual_model"), "residual model");
  c.ridge_lambda = j.value("ridge_lambda", c.ridge_lambda);
  c.tree_max_depth = j.value("tree_max_depth", c.tree_max_depth);
  if (j.contains("update_rule")) c.update_rule = parse(kRules, j.at("update_rule"), "update rule");
  c.step_size = j.value("step_size", c.step_size);
  c.stop_threshold = j.value("stop_threshold", c.stop_threshold);
  c.max_iterations = j.value("max_iterations", c.max_iterations);
  c.validate();
  return c;
}

// ---------------------------------------------------------------------------
// Partitions

IntVector PartitionSpec::assign(const VectorCRef& scores) const {
  IntVector out(scores.size());
  for (Index i = 0; i < scores.size(); ++i) {
    if (scheme == PartitionScheme::kEven) {
      const auto b = static_cast<Index>(std::floor(scores[i] * static_cast<double>(n_partitions)));
      out[i] = static_cast<int>(std::clamp<Index>(b, 0, n_partitions - 1));
    } else {
      out[i] = static_cast<int>(std::lower_bound(edges.begin(), edges.end(), scores[i]) - edges.begin());
    }
  }
  return out;
}

nlohmann::json PartitionSpec::to_json() const {
  return {{"scheme", name_of(kSchemes, scheme)}, {"n_partitions", n_partitions}, {"edges", edges}};
}

PartitionSpec PartitionSpec::from_json(const nlohmann::json& j) {
  PartitionSpec p;
  p.scheme = parse(kSchemes, j.at("scheme"), "partition scheme");
  p.n_partitions = j.at("n_partitions").get<Index>();
  p.edges = j.value("edges", std::vector<double>{});
  return p;
}

PartitionSpec make_partition(const VectorCRef& scores, PartitionScheme scheme, Index n_partitions) {
  if (n_partitions < 1) {
    throw Error("partition: B must be >= 1");
  }
  PartitionSpec spec;
  spec.scheme = scheme;
  spec.n_partitions = n_partitions;
  if (scheme == PartitionScheme::kQuantile) {
    const Index n = scores.size();
    if (n_partitions > n) {
      throw Error("partition: " + std::to_string(n_partitions) + " quantile partitions exceed " + std::to_string(n) +
                  " scores");
    }
    std::vector<double> sorted(scores.data(), scores.data() + n);
    std::sort(sorted.begin(), sorted.end());
    for (Index k = 0; k + 1 < n_partitions; ++k) {
      spec.edges.push_back(sorted[static_cast<std::size_t>((k + 1) * n / n_partitions - 1)]);
    }
  }
  return spec;
}

IntVector partition(const VectorCRef& scores, PartitionScheme scheme, Index n_partitions) {
  return make_partition(scores, scheme, n_partitions).assign(scores);
}

double miscalibration(const VectorCRef& predicted, const VectorCRef& observed) {
  if (predicted.size() != observed.size()) {
    throw Error("miscalibration: length mismatch");
  }
  if (predicted.size() < 2) {
    return 0.0;
  }
  const Vector a = predicted.array() - predicted.mean();
  const Vector b = observed.array() - observed.mean();
  const double saa = a.squaredNorm();
  const double sbb = b.squaredNorm();
  if (saa == 0.0 || sbb == 0.0) {
    return 0.0;
  }
  return std::min(1.0, std::abs(a.dot(b)) / std::sqrt(saa * sbb));
}

// ---------------------------------------------------------------------------
// Residual models

Vector ResidualModel::predict(const MatrixCRef& features) const {
  if (kind == ResidualModelKind::kRidge) {
    if (features.cols() != coefficients.size()) {
      throw Error("residual model: feature width mismatch");
    }
    return (features * coefficients).array() + intercept;
  }
  return tree.predict(features);
}

nlohmann::json ResidualModel::to_json() const {
  if (kind == ResidualModelKind::kRidge) {
    return {{"kind", "ridge"},
            {"coefficients", std::vector<double>(coefficients.data(), coefficients.data() + coefficients.size())},
            {"intercept", intercept}};
  }
  return {{"kind", "tree"}, {"tree", tree.to_json()}};
}

ResidualModel ResidualModel::from_json(const nlohmann::json& j) {
  ResidualModel m;
  m.kind = parse(kResiduals, j.at("kind"), "residual model");
  if (m.kind == ResidualModelKind::kRidge) {
    const auto c = j.at("coefficients").get<std::vector<double>>();
    m.coefficients = Eigen::Map<const Vector>(c.data(), static_cast<Index>(c.size()));
    m.intercept = j.at("intercept").get<double>();
  } else {
    m.tree = RegressionTree::from_json(j.at("tree"));
  }
  return m;
}

ResidualModel fit_ridge(const MatrixCRef& features, const VectorCRef& targets, double lambda) {
  ResidualModel m;
  m.kind = ResidualModelKind::kRidge;
  const Eigen::RowVectorXd mean_x = features.colwise().mean();
  const double mean_y = targets.mean();
  const Matrix xc = features.rowwise() - mean_x;
  const Vector yc = targets.array() - mean_y;
  Matrix gram = xc.transpose() * xc;
  gram.diagonal().array() += lambda + 1e-12;
  m.coefficients = gram.ldlt().solve(xc.transpose() * yc);
  m.intercept = mean_y - mean_x.dot(m.coefficients);
  return m;
}

ResidualModel fit_residual_model(const McConfig& config, const MatrixCRef& features, const VectorCRef& targets) {
  if (config.residual_model == ResidualModelKind::kRidge) {
    return fit_ridge(features, targets, config.ridge_lambda);
  }
  ResidualModel m;
  m.kind = ResidualModelKind::kTree;
  m.tree = fit_regression_tree(features, targets, config.tree_max_depth);
  return m;
}

// ---------------------------------------------------------------------------
// Fit and replay

UpdateSequence mc_fit(const VectorCRef& scores, const MatrixCRef& features, const VectorCRef& labels,
                      const McConfig& config, std::uint64_t seed) {
  config.validate();
  const Index n = scores.size();
  if (features.rows() != n || labels.size() != n) {
    throw Error("mc_fit: scores, features and labels must be aligned");
  }
  if (n < 2) {
    throw Error("mc_fit: need at least two samples");
  }
  UpdateSequence seq;
  seq.config = config;
  seq.n_features = features.cols();
  const Vector initial = scores;
  Vector current = scores;
  Rng rng(seed);

  std::vector<std::vector<Index>> slices;
  if (config.sampling == McSampling::kDisjoint) {
    const auto order = permutation(n, rng);
    const Index count = std::min<Index>(config.disjoint_slices, n);
    for (Index s = 0; s < count; ++s) {
      slices.emplace_back(order.begin() + s * n / count, order.begin() + (s + 1) * n / count);
    }
  }
  std::vector<Index> all(static_cast<std::size_t>(n));
  std::iota(all.begin(), all.end(), Index{0});

  std::optional<PartitionSpec> fixed;
  if (config.update_rule == UpdateRule::kMultiplicativeFixed) {
    fixed = make_partition(initial, config.partition_scheme, config.n_partitions);
  }

  seq.terminal = McTerminal::kMaxIterations;
  for (int t = 0; t < config.max_iterations; ++t) {
    std::vector<Index> working;
    switch (config.sampling) {
      case McSampling::kNone: working = all; break;
      case McSampling::kDisjoint:
        if (t >= static_cast<int>(slices.size())) ++seq.disjoint_wraparounds;
        working = slices[static_cast<std::size_t>(t) % slices.size()];
        break;
      case McSampling::kBootstrap: {
        std::uniform_int_distribution<Index> pick(0, n - 1);
        working.resize(static_cast<std::size_t>(n));
        for (auto& r : working) r = pick(rng);
        break;
      }
    }
    const PartitionSpec spec =
        fixed ? *fixed : make_partition(take(current, working), config.partition_scheme, config.n_partitions);
    const IntVector assignment = spec.assign(config.update_rule == UpdateRule::kMultiplicativeFixed ? initial : current);

    double best = -1.0;
    Index chosen = 0;
    ResidualModel chosen_model;
    for (Index part = 0; part < spec.n_partitions; ++part) {
      const auto rows = rows_in(assignment, part, working);
      if (rows.size() < 2) {
        continue;
      }
      const Matrix x = take_rows(features, rows);
      const Vector observed = take(labels, rows) - take(current, rows);
      ResidualModel model = fit_residual_model(config, x, observed);
      const double value = miscalibration(model.predict(x), observed);
      if (value > best) {
        best = value;
        chosen = part;
        chosen_model = std::move(model);
      }
    }
    const double witness = std::max(best, 0.0);
    seq.witnesses.push_back(witness);
    if (best < 0.0 || witness < config.stop_threshold) {
      seq.terminal = McTerminal::kThreshold;
      break;
    }
    McStep step;
    step.iteration = t;
    step.partition = spec;
    step.chosen = chosen;
    step.model = std::move(chosen_model);
    step.rule = config.update_rule;
    step.step_size = config.step_size;
    step.max_miscalibration = witness;
    apply_step(step, initial, current, features);
    seq.steps.push_back(std::move(step));
  }
  seq.final_scores = current;
  return seq;
}

Vector mc_apply(const UpdateSequence& sequence, const VectorCRef& scores, const MatrixCRef& features) {
  if (features.cols() != sequence.n_features) {
    throw Error("mc_apply: expected " + std::to_string(sequence.n_features) + " features, got " +
                std::to_string(features.cols()));
  }
  if (features.rows() != scores.size()) {
    throw Error("mc_apply: scores and features differ in length");
  }
  Vector current = scores;
  for (const auto& step : sequence.steps) {
    apply_step(step, scores, current, features);
  }
  return current;
}

nlohmann::json UpdateSequence::to_json() const {
  nlohmann::json steps_json = nlohmann::json::array();
  for (const auto& s : steps) {
    steps_json.push_back({{"iteration", s.iteration},
                          {"partition", s.partition.to_json()},
                          {"chosen", s.chosen},
                          {"model", s.model.to_json()},
                          {"rule", name_of(kRules, s.rule)},
                          {"step_size", s.step_size},
                          {"max_miscalibration", s.max_miscalibration}});
  }
  return {{"version", kSequenceFormatVersion},
          {"config", config.to_json()},
          {"n_features", n_features},
          {"steps", std::move(steps_json)},
          {"witnesses", witnesses},
          {"terminal", terminal == McTerminal::kThreshold ? "threshold" : "max_iter"},
          {"disjoint_wraparounds", disjoint_wraparounds}};
}

UpdateSequence UpdateSequence::from_json(const nlohmann::json& j) {
  if (j.value("version", 0) != kSequenceFormatVersion) {
    throw Error("update sequence json: unsupported version");
  }
  UpdateSequence seq;
  seq.config = McConfig::from_json(j.at("config"));
  seq.n_features = j.at("n_features").get<Index>();
  for (const auto& s : j.at("steps")) {
    McStep step;
    step.iteration = s.at("iteration").get<int>();
    step.partition = PartitionSpec::from_json(s.at("partition"));
    step.chosen = s.at("chosen").get<Index>();
    step.model = ResidualModel::from_json(s.at("model"));
    step.rule = parse(kRules, s.at("rule"), "update rule");
    step.step_size = s.at("step_size").get<double>();
    step.max_miscalibration = s.value("max_miscalibration", 0.0);
    seq.steps.push_back(std::move(step));
  }
  seq.witnesses = j.value("witnesses", std::vector<double>{});
  seq.terminal = j.value("terminal", std::string("max_iter")) == "threshold" ? McTerminal::kThreshold
                                                                             : McTerminal::kMaxIterations;
  seq.disjoint_wraparounds = j.value("disjoint_wraparounds", 0);
  return seq;
}

// ---------------------------------------------------------------------------
// Selection

std::vector<McConfig> mc_config_grid(int count, std::uint64_t seed) {
  if (count < 1) {
    throw ConfigError("mc_config_grid: count must be >= 1");
  }
  std::vector<McConfig> out{McConfig{}};
  Rng rng(seed);
  auto pick = [&rng](const auto& options) {
    std::uniform_int_distribution<std::size_t> d(0, std::size(options) - 1);
    return options[d(rng)];
  };
  const Index partitions[] = {1, 2, 5, 10};
  const PartitionScheme schemes[] = {PartitionScheme::kEven, PartitionScheme::kQuantile};
  const McSampling samplings[] = {McSampling::kNone, McSampling::kDisjoint, McSampling::kBootstrap};
  const ResidualModelKind residuals[] = {ResidualModelKind::kRidge, ResidualModelKind::kTree};
  const double lambdas[] = {0.1, 1.0, 10.0};
  const int depths[] = {2, 3, 5};
  const UpdateRule rules[] = {UpdateRule::kAdditiveRepartition, UpdateRule::kMultiplicativeFixed};
  const double steps[] = {0.5, 1.0};
  const double thresholds[] = {0.01, 0.05, 0.1};
  const int iterations[] = {5, 10, 20};
  while (static_cast<int>(out.size()) < count) {
    McConfig c;
    c.n_partitions = pick(partitions);
    c.partition_scheme = pick(schemes);
    c.sampling = pick(samplings);
    c.residual_model = pick(residuals);
    c.ridge_lambda = pick(lambdas);
    c.tree_max_depth = pick(depths);
    c.update_rule = pick(rules);
    c.step_size = pick(steps);
    c.stop_threshold = pick(thresholds);
    c.max_iterations = pick(iterations);
    out.push_back(c);
  }
  return out;
}

McSelection mc_select(const VectorCRef& scores, const MatrixCRef& features, const VectorCRef& labels,
                      const std::vector<McConfig>& candidates, std::uint64_t seed, const IntVector* groups) {
  if (candidates.empty()) {
    throw ConfigError("mc_select: no candidate configurations");
  }
  const Index n = scores.size();
  if (n < 4) {
    throw Error("mc_select: need at least four samples for a 70/30 split");
  }
  Rng rng(seed);
  const auto order = permutation(n, rng);
  const Index n_fit = std::clamp<Index>(static_cast<Index>(std::floor(0.7 * static_cast<double>(n))), 2, n - 2);
  const std::vector<Index> fit_rows(order.begin(), order.begin() + n_fit);
  const std::vector<Index> hold_rows(order.begin() + n_fit, order.end());
  const Vector fit_scores = take(scores, fit_rows);
  const Matrix fit_x = take_rows(features, fit_rows);
  const Vector fit_y = take(labels, fit_rows);
  const Vector hold_scores = take(scores, hold_rows);
  const Matrix hold_x = take_rows(features, hold_rows);
  const Vector hold_y = take(labels, hold_rows);
  IntVector hold_groups;
  int n_groups = 0;
  if (groups != nullptr) {
    hold_groups = take(*groups, hold_rows);
    n_groups = groups->maxCoeff() + 1;
  }

  McSelection best;
  double best_value = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < candidates.size(); ++c) {
    UpdateSequence seq = mc_fit(fit_scores, fit_x, fit_y, candidates[c], derive_seed(seed, c));
    const Vector replayed = mc_apply(seq, hold_scores, hold_x);
    double value = 0.0;
    if (groups == nullptr) {
      value = ecce(replayed, hold_y).value;
    } else {
      MetricSpec spec;
      std::vector<bool> present(static_cast<std::size_t>(n_groups), false);
      for (Index i = 0; i < hold_groups.size(); ++i) present[static_cast<std::size_t>(hold_groups[i])] = true;
      // Groups absent from the replay split are scored on what is there.
      std::vector<int> remap(static_cast<std::size_t>(n_groups), -1);
      int dense = 0;
      for (int g = 0; g < n_groups; ++g) {
        if (present[static_cast<std::size_t>(g)]) remap[static_cast<std::size_t>(g)] = dense++;
      }
      const IntVector local = hold_groups.unaryExpr([&](int g) { return remap[static_cast<std::size_t>(g)]; });
      value = worst_group(replayed, hold_y, local, dense, spec).value.value;
    }
    best.holdout_scores.push_back(value);
    if (value < best_value) {
      best_value = value;
      best.config = candidates[c];
      best.sequence = std::move(seq);
      best.candidate = static_cast<Index>(c);
    }
  }
  return best;
}

}  // namespace faircal
