#include "faircal/tuning.hpp"

#include "faircal/metrics.hpp"

#include <cmath>

namespace faircal {

std::string to_string(TuneObjective objective) {
  switch (objective) {
    case TuneObjective::kAccuracy: return "accuracy";
    case TuneObjective::kOverallEcce: return "overall_ecce";
    case TuneObjective::kWorstGroupEcce: return "worst_group_ecce";
  }
  return "unknown";
}

TuneObjective tune_objective_from_string(const std::string& id) {
  if (id == "accuracy") return TuneObjective::kAccuracy;
  if (id == "overall_ecce") return TuneObjective::kOverallEcce;
  if (id == "worst_group_ecce") return TuneObjective::kWorstGroupEcce;
  throw ConfigError("unknown tuning objective '" + id + "'");
}

std::string to_string(SearchVariant variant) {
  switch (variant) {
    case SearchVariant::kPlain: return "plain";
    case SearchVariant::kCalibrationLoss: return "calibration_loss";
    case SearchVariant::kGroupRobust: return "group_robust";
  }
  return "unknown";
}

SearchVariant search_variant_from_string(const std::string& id) {
  if (id == "plain") return SearchVariant::kPlain;
  if (id == "calibration_loss") return SearchVariant::kCalibrationLoss;
  if (id == "group_robust") return SearchVariant::kGroupRobust;
  throw ConfigError("unknown search variant '" + id + "'");
}

ParamDomain ParamDomain::choice(std::string name, std::vector<nlohmann::json> choices, nlohmann::json default_value) {
  ParamDomain d;
  d.name = std::move(name);
  d.kind = Kind::kChoice;
  d.choices = std::move(choices);
  d.default_value = std::move(default_value);
  return d;
}

ParamDomain ParamDomain::log_uniform(std::string name, double low, double high, double default_value) {
  ParamDomain d;
  d.name = std::move(name);
  d.kind = Kind::kLogUniform;
  d.low = low;
  d.high = high;
  d.default_value = default_value;
  return d;
}

void SearchSpace::validate() const {
  for (const auto& d : params) {
    if (d.kind == ParamDomain::Kind::kChoice) {
      if (d.choices.empty()) {
        throw ConfigError("search space: '" + d.name + "' has no choices");
      }
    } else if (!(d.low > 0.0 && d.high >= d.low)) {
      throw ConfigError("search space: '" + d.name + "' needs 0 < low <= high");
    }
  }
}

nlohmann::json SearchSpace::to_json() const {
  nlohmann::json params_json = nlohmann::json::object();
  for (const auto& d : params) {
    if (d.kind == ParamDomain::Kind::kChoice) {
      params_json[d.name] = {{"choice", d.choices}, {"default", d.default_value}};
    } else {
      params_json[d.name] = {{"loguniform", {d.low, d.high}}, {"default", d.default_value}};
    }
  }
  return {{"model", to_string(model)}, {"params", params_json}};
}

SearchSpace SearchSpace::from_json(const nlohmann::json& j) {
  SearchSpace space;
  space.model = model_kind_from_string(j.at("model").get<std::string>());
  for (const auto& [name, body] : j.at("params").items()) {
    if (body.contains("choice")) {
      auto choices = body.at("choice").get<std::vector<nlohmann::json>>();
      nlohmann::json def = body.contains("default") ? body.at("default") : choices.front();
      space.params.push_back(ParamDomain::choice(name, std::move(choices), std::move(def)));
    } else if (body.contains("loguniform")) {
      const auto range = body.at("loguniform").get<std::vector<double>>();
      if (range.size() != 2) {
        throw ConfigError("search space: '" + name + "' loguniform needs [low, high]");
      }
      const double def = body.value("default", std::sqrt(range[0] * range[1]));
      space.params.push_back(ParamDomain::log_uniform(name, range[0], range[1], def));
    } else {
      throw ConfigError("search space: '" + name + "' needs 'choice' or 'loguniform'");
    }
  }
  space.validate();
  return space;
}

SearchSpace default_search_space(ModelKind model, SearchVariant variant) {
  using J = nlohmann::json;
  SearchSpace s;
  s.model = model;
  if (model == ModelKind::kGbt) {
    s.params = {
        ParamDomain::choice("eta", {0.1, 0.3, 1.0}, 0.3),
        ParamDomain::choice("min_split_loss", {0.0, 0.1, 0.5}, 0.0),
        ParamDomain::choice("max_depth", {4, 6, 8}, 6),
        ParamDomain::choice("colsample_bytree", {0.7, 0.9, 1.0}, 1.0),
        ParamDomain::choice("colsample_bylevel", {0.7, 0.9, 1.0}, 1.0),
        ParamDomain::choice("max_bin", {128, 256, 512}, 512),
        ParamDomain::choice("grow_policy", {J("depthwise"), J("lossguide")}, "lossguide"),
        ParamDomain::choice("boosting_rounds", {10, 25, 50, 100}, 25),
    };
    if (variant != SearchVariant::kPlain) {
      s.params.push_back(ParamDomain::choice("calibration_loss_weight", {1e-3, 1e-2, 1e-1, 1.0, 2.0}, 1e-1));
    }
    if (variant == SearchVariant::kGroupRobust) {
      s.params.push_back(ParamDomain::choice("dro_eta", {1.0, 2.0, 5.0, 10.0}, 2.0));
    }
  } else {
    s.params = {
        ParamDomain::choice("layer1_units", {16, 32, 64, 128, 256, 512}, 128),
        ParamDomain::choice("layer2_units", {16, 32, 64, 128, 256, 512}, 64),
        ParamDomain::log_uniform("learning_rate", 1e-4, 1e-2, 1e-3),
        ParamDomain::log_uniform("l2_regularization", 1e-6, 1e-2, 1e-5),
        ParamDomain::choice("batch_size", {64, 128, 512, 1024}, 512),
        ParamDomain::choice("num_epochs", {10, 20, 30, 40, 50}, 30),
    };
    if (variant != SearchVariant::kPlain) {
      s.params.push_back(ParamDomain::log_uniform("calibration_loss_weight", 1e-3, 1.0, 1e-2));
    }
    if (variant == SearchVariant::kGroupRobust) {
      s.params.push_back(ParamDomain::log_uniform("dro_eta", 1e-4, 1.0, 1e-3));
      s.params.push_back(ParamDomain::log_uniform("dro_regularization", 1e-3, 1.0, 1e-2));
    }
  }
  return s;
}

nlohmann::json default_point(const SearchSpace& space) {
  nlohmann::json point = nlohmann::json::object();
  for (const auto& d : space.params) {
    point[d.name] = d.default_value;
  }
  return point;
}

nlohmann::json sample_point(const SearchSpace& space, Rng& rng) {
  nlohmann::json point = nlohmann::json::object();
  for (const auto& d : space.params) {
    if (d.kind == ParamDomain::Kind::kChoice) {
      std::uniform_int_distribution<std::size_t> pick(0, d.choices.size() - 1);
      point[d.name] = d.choices[pick(rng)];
    } else {
      std::uniform_real_distribution<double> u(std::log(d.low), std::log(d.high));
      point[d.name] = std::exp(u(rng));
    }
  }
  return point;
}

TuneResult random_search(const SearchSpace& space, int n_trials, std::uint64_t seed, bool maximize,
                         const TrialScorer& scorer) {
  if (n_trials < 1) {
    throw ConfigError("tune: n_trials must be >= 1");
  }
  space.validate();
  Rng rng(seed);
  TuneResult result;
  for (int t = 0; t < n_trials; ++t) {
    nlohmann::json point = t == 0 ? default_point(space) : sample_point(space, rng);
    const double score = scorer(point, t);
    if (!std::isfinite(score)) {
      throw ComponentError("tune: trial " + std::to_string(t) + " produced a non-finite score");
    }
    const bool better = t == 0 || (maximize ? score > result.best_score : score < result.best_score);
    if (better) {
      result.best = point;
      result.best_score = score;
      result.best_trial = t;
    }
    result.points.push_back(std::move(point));
    result.scores.push_back(score);
  }
  return result;
}

Model fit_point(const Dataset& train, const FitRecipe& recipe, const nlohmann::json& point, std::uint64_t seed) {
  nlohmann::json merged = point;
  merged.update(recipe.fixed);
  merged["seed"] = seed;
  if (recipe.model == ModelKind::kGbt) {
    return gbt_train(train, GbtParams::from_json(merged), recipe.group_mode);
  }
  return mlp_train(train, MlpParams::from_json(merged), recipe.loss, recipe.group_mode);
}

double score_objective(TuneObjective objective, const VectorCRef& scores, const VectorCRef& labels,
                       const IntVector& groups, int n_groups) {
  switch (objective) {
    case TuneObjective::kAccuracy: return accuracy(scores, labels).value;
    case TuneObjective::kOverallEcce: return ecce(scores, labels).value;
    case TuneObjective::kWorstGroupEcce: {
      MetricSpec spec;
      spec.kind = MetricKind::kEcceMean;
      return worst_group(scores, labels, groups, n_groups, spec).value.value;
    }
  }
  return 0.0;
}

TuneResult tune(const Dataset& train, const Dataset& validation, const FitRecipe& recipe, const SearchSpace& space,
                TuneObjective objective, int n_trials, std::uint64_t seed) {
  if (space.model != recipe.model) {
    throw ConfigError("tune: search space is for " + to_string(space.model) + ", recipe trains " +
                      to_string(recipe.model));
  }
  const IntVector* val_groups = recipe.group_mode == GroupFeatureMode::kAsFeature ? &validation.groups : nullptr;
  const bool maximize = is_maximized(objective);
  std::optional<Model> best;
  double best_score = 0.0;
  TuneResult result = random_search(space, n_trials, seed, maximize, [&](const nlohmann::json& point, int trial) {
    Model model = fit_point(train, recipe, point, derive_seed(seed, static_cast<std::uint64_t>(trial)));
    const Vector scores = model.predict(validation.features, val_groups);
    const double score =
        score_objective(objective, scores, validation.labels, validation.groups, validation.n_groups());
    if (trial == 0 || (maximize ? score > best_score : score < best_score)) {
      best = std::move(model);
      best_score = score;
    }
    return score;
  });
  result.best_model = std::move(best);
  return result;
}

}  // namespace faircal
