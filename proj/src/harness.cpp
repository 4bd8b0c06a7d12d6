#include "faircal/harness.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <set>
#include <sstream>
#include <thread>

namespace faircal {

std::string to_string(AvailabilityRegime regime) {
  switch (regime) {
    case AvailabilityRegime::kNone: return "none";
    case AvailabilityRegime::kVal: return "val";
    case AvailabilityRegime::kTrainVal: return "train_val";
    case AvailabilityRegime::kTrainValInf: return "train_val_inf";
  }
  return "unknown";
}

std::string display_name(AvailabilityRegime regime) {
  switch (regime) {
    case AvailabilityRegime::kNone: return "None";
    case AvailabilityRegime::kVal: return "Val";
    case AvailabilityRegime::kTrainVal: return "Train+Val";
    case AvailabilityRegime::kTrainValInf: return "Train+Val+Inf";
  }
  return "unknown";
}

AvailabilityRegime regime_from_string(const std::string& id) {
  for (int r = 0; r <= 3; ++r) {
    const auto regime = static_cast<AvailabilityRegime>(r);
    if (id == to_string(regime) || id == display_name(regime)) return regime;
  }
  throw ConfigError("unknown availability regime '" + id + "'");
}

AvailabilityRegime regime_from_rank(int rank) {
  if (rank < 0 || rank > 3) throw ConfigError("regime rank must be in 0..3");
  return static_cast<AvailabilityRegime>(rank);
}

std::string to_string(Stage stage) {
  switch (stage) {
    case Stage::kTrain: return "train";
    case Stage::kValidation: return "validation";
    case Stage::kInference: return "inference";
    case Stage::kEvaluation: return "evaluation";
  }
  return "unknown";
}

bool regime_permits(AvailabilityRegime regime, Stage stage) {
  switch (stage) {
    case Stage::kEvaluation: return true;
    case Stage::kValidation: return regime != AvailabilityRegime::kNone;
    case Stage::kTrain: return rank(regime) >= rank(AvailabilityRegime::kTrainVal);
    case Stage::kInference: return regime == AvailabilityRegime::kTrainValInf;
  }
  return false;
}

// ---------------------------------------------------------------------------
// Method specs

namespace {

std::string group_mode_name(GroupFeatureMode mode) { return mode == GroupFeatureMode::kAsFeature ? "as_feature" : "none"; }

GroupFeatureMode group_mode_from_string(const std::string& id) {
  if (id == "none") return GroupFeatureMode::kNone;
  if (id == "as_feature") return GroupFeatureMode::kAsFeature;
  throw ConfigError("unknown group_mode '" + id + "'");
}

LossKind loss_kind_from_string(const std::string& id) {
  if (id == "bce") return LossKind::kBce;
  if (id == "bce_mmce") return LossKind::kBceMmce;
  if (id == "group_dro") return LossKind::kGroupDro;
  throw ConfigError("unknown loss '" + id + "'");
}

bool training_reads_groups(const MethodSpec& spec) {
  if (spec.group_mode == GroupFeatureMode::kAsFeature) return true;
  if (spec.model == ModelKind::kMlp) return mlp_reads_groups(spec.loss, spec.group_mode);
  if (spec.tuning.variant == SearchVariant::kGroupRobust) return true;
  const double gamma = spec.fixed.value("calibration_loss_weight", 0.0);
  const double eta = spec.fixed.value("dro_eta", 0.0);
  return gamma > 0.0 && eta > 0.0;
}

bool calibrator_reads_groups(const MethodSpec& spec) {
  return spec.calibrator &&
         (spec.calibrator->kind == CalibratorKind::kPerGroup || spec.calibrator->kind == CalibratorKind::kGroupRobust);
}

bool inference_reads_groups(const MethodSpec& spec) {
  return spec.group_mode == GroupFeatureMode::kAsFeature ||
         (spec.calibrator && spec.calibrator->kind == CalibratorKind::kPerGroup);
}

bool validation_reads_groups(const MethodSpec& spec) {
  return spec.group_mode == GroupFeatureMode::kAsFeature ||
         spec.tuning.objective == TuneObjective::kWorstGroupEcce || calibrator_reads_groups(spec) ||
         (spec.multicalibration && spec.multicalibration->select_on_worst_group);
}

}  // namespace

nlohmann::json MethodSpec::to_json() const {
  nlohmann::json j = {{"id", id},
                      {"regime", faircal::to_string(regime)},
                      {"model", faircal::to_string(model)},
                      {"tuning",
                       {{"objective", faircal::to_string(tuning.objective)},
                        {"variant", faircal::to_string(tuning.variant)},
                        {"trials", tuning.trials}}},
                      {"group_mode", group_mode_name(group_mode)},
                      {"loss", {{"kind", faircal::to_string(loss.kind)}, {"dro_calibration_only", loss.dro_calibration_only}}},
                      {"fixed", fixed}};
  if (tuning.space) j["tuning"]["space"] = tuning.space->to_json();
  if (calibrator) j["calibrator"] = calibrator->to_json();
  if (multicalibration) {
    j["multicalibration"] = {{"candidates", multicalibration->candidates},
                             {"select_on_worst_group", multicalibration->select_on_worst_group}};
  }
  return j;
}

MethodSpec MethodSpec::from_json(const nlohmann::json& j, ModelKind default_model) {
  if (j.is_string()) {
    return catalog_method(j.get<std::string>(), default_model);
  }
  if (!j.is_object()) {
    throw ConfigError("method spec must be a string or an object");
  }
  try {
    const ModelKind model = j.contains("model") ? model_kind_from_string(j.at("model").get<std::string>()) : default_model;
    MethodSpec s;
    if (j.contains("base")) {
      s = catalog_method(j.at("base").get<std::string>(), model);
    } else {
      if (!j.contains("id")) throw ConfigError("method spec needs an id");
      if (!j.contains("regime")) throw ConfigError("method spec '" + j.at("id").get<std::string>() + "' needs a regime");
      s.model = model;
    }
    s.model = model;
    if (j.contains("id")) s.id = j.at("id").get<std::string>();
    if (j.contains("regime")) s.regime = regime_from_string(j.at("regime").get<std::string>());
    if (j.contains("tuning")) {
      const auto& t = j.at("tuning");
      if (t.contains("objective")) s.tuning.objective = tune_objective_from_string(t.at("objective").get<std::string>());
      if (t.contains("variant")) s.tuning.variant = search_variant_from_string(t.at("variant").get<std::string>());
      if (t.contains("trials")) s.tuning.trials = t.at("trials").get<int>();
      if (t.contains("space")) s.tuning.space = SearchSpace::from_json(t.at("space"));
    }
    if (j.contains("group_mode")) s.group_mode = group_mode_from_string(j.at("group_mode").get<std::string>());
    if (j.contains("loss")) {
      const auto& l = j.at("loss");
      if (l.is_string()) {
        s.loss.kind = loss_kind_from_string(l.get<std::string>());
      } else {
        if (l.contains("kind")) s.loss.kind = loss_kind_from_string(l.at("kind").get<std::string>());
        s.loss.dro_calibration_only = l.value("dro_calibration_only", s.loss.dro_calibration_only);
      }
    }
    if (j.contains("fixed")) s.fixed = j.at("fixed");
    if (j.contains("calibrator")) {
      if (j.at("calibrator").is_null()) {
        s.calibrator.reset();
      } else {
        s.calibrator = CalibratorSpec::from_json(j.at("calibrator"));
      }
    }
    if (j.contains("multicalibration")) {
      const auto& m = j.at("multicalibration");
      if (m.is_null()) {
        s.multicalibration.reset();
      } else {
        MulticalibrationSpec mc;
        mc.candidates = m.value("candidates", mc.candidates);
        mc.select_on_worst_group = m.value("select_on_worst_group", mc.select_on_worst_group);
        s.multicalibration = mc;
      }
    }
    if (s.tuning.trials < 1) throw ConfigError("method '" + s.id + "': tuning trials must be >= 1");
    if (s.tuning.space && s.tuning.space->model != s.model) {
      throw ConfigError("method '" + s.id + "': search space model does not match");
    }
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("method spec: ") + e.what());
  }
}

std::vector<Stage> group_reads(const MethodSpec& spec) {
  std::vector<Stage> stages;
  if (training_reads_groups(spec)) stages.push_back(Stage::kTrain);
  if (validation_reads_groups(spec)) stages.push_back(Stage::kValidation);
  if (inference_reads_groups(spec)) stages.push_back(Stage::kInference);
  return stages;
}

RegimeRequirement required_regime(const MethodSpec& spec) {
  RegimeRequirement req;
  auto need = [&](AvailabilityRegime r, std::string why) {
    req.regime = std::max(req.regime, r, [](auto a, auto b) { return rank(a) < rank(b); });
    req.reasons.push_back(std::move(why));
  };
  if (spec.group_mode == GroupFeatureMode::kAsFeature) {
    need(AvailabilityRegime::kTrainValInf, "group indicators are model inputs");
  }
  if (spec.calibrator && spec.calibrator->kind == CalibratorKind::kPerGroup) {
    need(AvailabilityRegime::kTrainValInf, "per-group calibrator routes scores by group at inference");
  }
  if (spec.group_mode != GroupFeatureMode::kAsFeature && training_reads_groups(spec)) {
    need(AvailabilityRegime::kTrainVal, "training loss reweights groups");
  }
  if (spec.tuning.objective == TuneObjective::kWorstGroupEcce) {
    need(AvailabilityRegime::kVal, "tuning scores worst-group calibration on validation");
  }
  if (spec.calibrator && spec.calibrator->kind == CalibratorKind::kGroupRobust) {
    need(AvailabilityRegime::kVal, "group-robust calibrator is fit with validation groups");
  }
  if (spec.multicalibration && spec.multicalibration->select_on_worst_group) {
    need(AvailabilityRegime::kVal, "multicalibration selection scores worst-group calibration");
  }
  return req;
}

void check_regime(const MethodSpec& spec) {
  const auto req = required_regime(spec);
  if (rank(req.regime) > rank(spec.regime)) {
    std::string why;
    for (const auto& r : req.reasons) why += (why.empty() ? "" : "; ") + r;
    throw RegimeViolation("method '" + spec.id + "' is declared " + display_name(spec.regime) + " but needs " +
                          display_name(req.regime) + " (" + why + ")");
  }
}

std::vector<std::string> catalog_method_ids() {
  return {"use_group",       "per_group_calibrator", "group_robust_training", "tune_worst_group",
          "group_robust_calibrator", "tune_accuracy", "tune_overall_ecce", "calibration_loss",
          "multicalibration", "histogram",  "isotonic", "platt", "bbq", "beta", "platt_binner", "temperature"};
}

MethodSpec catalog_method(const std::string& id, ModelKind model) {
  MethodSpec s;
  s.id = id;
  s.model = model;
  auto calibrate = [&](CalibratorKind kind) { s.calibrator = CalibratorSpec{kind, nlohmann::json::object()}; };
  if (id == "use_group") {
    s.regime = AvailabilityRegime::kTrainValInf;
    s.group_mode = GroupFeatureMode::kAsFeature;
  } else if (id == "per_group_calibrator") {
    s.regime = AvailabilityRegime::kTrainValInf;
    s.calibrator = CalibratorSpec{CalibratorKind::kPerGroup, {{"inner", "isotonic"}}};
  } else if (id == "group_robust_training") {
    s.regime = AvailabilityRegime::kTrainVal;
    s.tuning.variant = SearchVariant::kGroupRobust;
    s.tuning.objective = TuneObjective::kWorstGroupEcce;
    if (model == ModelKind::kMlp) s.loss.kind = LossKind::kGroupDro;
  } else if (id == "tune_worst_group") {
    s.regime = AvailabilityRegime::kVal;
    s.tuning.objective = TuneObjective::kWorstGroupEcce;
  } else if (id == "group_robust_calibrator") {
    s.regime = AvailabilityRegime::kVal;
    calibrate(CalibratorKind::kGroupRobust);
  } else if (id == "tune_accuracy") {
    s.regime = AvailabilityRegime::kNone;
  } else if (id == "tune_overall_ecce") {
    s.regime = AvailabilityRegime::kNone;
    s.tuning.objective = TuneObjective::kOverallEcce;
  } else if (id == "calibration_loss") {
    s.regime = AvailabilityRegime::kNone;
    s.tuning.variant = SearchVariant::kCalibrationLoss;
    if (model == ModelKind::kMlp) s.loss.kind = LossKind::kBceMmce;
  } else if (id == "multicalibration") {
    s.regime = AvailabilityRegime::kNone;
    s.multicalibration = MulticalibrationSpec{};
  } else if (id == "histogram") {
    calibrate(CalibratorKind::kHistogram);
  } else if (id == "isotonic") {
    calibrate(CalibratorKind::kIsotonic);
  } else if (id == "platt") {
    calibrate(CalibratorKind::kPlatt);
  } else if (id == "bbq") {
    calibrate(CalibratorKind::kBbq);
  } else if (id == "beta") {
    calibrate(CalibratorKind::kBeta);
  } else if (id == "platt_binner") {
    calibrate(CalibratorKind::kPlattBinner);
  } else if (id == "temperature") {
    calibrate(CalibratorKind::kTemperature);
  } else {
    throw ConfigError("unknown catalog method '" + id + "'");
  }
  return s;
}

std::vector<MethodSpec> catalog_methods(ModelKind model) {
  std::vector<MethodSpec> out;
  for (const auto& id : catalog_method_ids()) out.push_back(catalog_method(id, model));
  return out;
}

// ---------------------------------------------------------------------------
// Audit

void AuditLog::append(AuditEntry entry) {
  std::lock_guard lock(mutex_);
  entries_.push_back(std::move(entry));
}

std::vector<AuditEntry> AuditLog::entries() const {
  std::lock_guard lock(mutex_);
  return entries_;
}

const IntVector& GroupAccess::read(Stage stage, const Dataset& data) const {
  if (!regime_permits(regime_, stage)) {
    throw RegimeViolation("method '" + method_ + "' (" + display_name(regime_) + ") read groups during " +
                          to_string(stage) + " in trial " + std::to_string(trial_));
  }
  if (log_) log_->append({method_, trial_, stage});
  return data.groups;
}

Dataset GroupAccess::view(Stage stage, const Dataset& data, bool needs_groups) const {
  if (!needs_groups) return strip_groups(data);
  read(stage, data);
  return data;
}

Dataset strip_groups(const Dataset& data) {
  Dataset out;
  out.features = data.features;
  out.labels = data.labels;
  out.feature_names = data.feature_names;
  out.group_names = data.group_names;
  return out;
}

// ---------------------------------------------------------------------------
// Results

const std::vector<std::string>& trial_metric_names() {
  static const std::vector<std::string> names = {"worst_group_ecce", "worst_group_msce", "worst_group_mmce",
                                                 "overall_ecce",     "accuracy",         "worst_group"};
  return names;
}

double trial_metric(const TrialResult& t, const std::string& name) {
  if (name == "worst_group_ecce") return t.worst_group_ecce;
  if (name == "worst_group_msce") return t.worst_group_msce;
  if (name == "worst_group_mmce") return t.worst_group_mmce;
  if (name == "overall_ecce") return t.overall_ecce;
  if (name == "accuracy") return t.accuracy;
  if (name == "worst_group") return t.worst_group;
  throw ConfigError("unknown result metric '" + name + "'");
}

void set_trial_metric(TrialResult& t, const std::string& name, double value) {
  if (name == "worst_group_ecce") t.worst_group_ecce = value;
  else if (name == "worst_group_msce") t.worst_group_msce = value;
  else if (name == "worst_group_mmce") t.worst_group_mmce = value;
  else if (name == "overall_ecce") t.overall_ecce = value;
  else if (name == "accuracy") t.accuracy = value;
  else if (name == "worst_group") t.worst_group = static_cast<int>(value);
  else throw ConfigError("unknown result metric '" + name + "'");
}

MeanStd mean_std(const std::vector<double>& values) {
  MeanStd out;
  if (values.empty()) return out;
  double sum = 0.0;
  for (double v : values) sum += v;
  out.mean = sum / static_cast<double>(values.size());
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - out.mean) * (v - out.mean);
    out.std = std::sqrt(ss / static_cast<double>(values.size() - 1));
  }
  return out;
}

MeanStd MethodResult::aggregate(const std::string& metric) const {
  std::vector<double> values;
  for (const auto& t : trials) values.push_back(trial_metric(t, metric));
  return mean_std(values);
}

TrialResult evaluate_scores(const VectorCRef& scores, const Dataset& test, const EvaluationOptions& options) {
  const int g = test.n_groups();
  TrialResult out;
  MetricSpec spec;
  spec.kind = MetricKind::kEcceMean;
  const auto wg = worst_group(scores, test.labels, test.groups, g, spec);
  out.worst_group_ecce = wg.value.value;
  out.worst_group = wg.group;
  spec.kind = MetricKind::kMsce;
  out.worst_group_msce = worst_group(scores, test.labels, test.groups, g, spec).value.value;
  spec.kind = MetricKind::kMmce;
  spec.kernel_width = options.kernel_width;
  spec.sampled_pairs = options.mmce_sampled_pairs;
  if (spec.sampled_pairs > 0) spec.seed = 0;
  out.worst_group_mmce = worst_group(scores, test.labels, test.groups, g, spec).value.value;
  out.overall_ecce = ecce(scores, test.labels).value;
  out.accuracy = accuracy(scores, test.labels).value;
  return out;
}

// ---------------------------------------------------------------------------
// Running methods

namespace {

struct BaseFit {
  Model model;
  Vector validation_scores;
  Vector test_scores;
};

using BaseCache = std::map<std::string, std::shared_ptr<const BaseFit>>;

std::string base_key(const MethodSpec& spec, int trials) {
  nlohmann::json k = {{"model", to_string(spec.model)},
                      {"objective", to_string(spec.tuning.objective)},
                      {"variant", to_string(spec.tuning.variant)},
                      {"trials", trials},
                      {"group_mode", group_mode_name(spec.group_mode)},
                      {"loss", to_string(spec.loss.kind)},
                      {"dro_calibration_only", spec.loss.dro_calibration_only},
                      {"fixed", spec.fixed}};
  if (spec.tuning.space) k["space"] = spec.tuning.space->to_json();
  return k.dump();
}

Vector run_method_cached(const MethodSpec& spec, const Dataset& train, const Dataset& validation,
                         const Dataset& test, const GroupAccess& access, std::uint64_t seed,
                         std::optional<int> tuning_trials, BaseCache* cache) {
  const int trials = tuning_trials.value_or(spec.tuning.trials);
  const bool as_feature = spec.group_mode == GroupFeatureMode::kAsFeature;

  // Every read is charged to this method, cached or not.
  const Dataset train_view = access.view(Stage::kTrain, train, training_reads_groups(spec));
  const bool base_val_groups = as_feature || spec.tuning.objective == TuneObjective::kWorstGroupEcce;
  const Dataset val_view = access.view(Stage::kValidation, validation, base_val_groups);
  const Dataset test_view = access.view(Stage::kInference, test, inference_reads_groups(spec));

  const std::string key = base_key(spec, trials);
  std::shared_ptr<const BaseFit> base;
  if (cache) {
    if (auto it = cache->find(key); it != cache->end()) base = it->second;
  }
  if (!base) {
    FitRecipe recipe{spec.model, spec.group_mode, spec.loss, spec.fixed};
    const SearchSpace space = spec.tuning.space ? *spec.tuning.space : default_search_space(spec.model, spec.tuning.variant);
    TuneResult tuned = tune(train_view, val_view, recipe, space, spec.tuning.objective, trials, seed);
    auto fit = std::make_shared<BaseFit>();
    fit->model = std::move(*tuned.best_model);
    fit->validation_scores = fit->model.predict(val_view.features, as_feature ? &val_view.groups : nullptr);
    fit->test_scores = fit->model.predict(test_view.features, as_feature ? &test_view.groups : nullptr);
    base = fit;
    if (cache) (*cache)[key] = base;
  }

  Vector val_scores = base->validation_scores;
  Vector test_scores = base->test_scores;
  const std::uint64_t post_seed = derive_seed(seed, 1);

  if (spec.calibrator) {
    const IntVector* fit_groups = calibrator_reads_groups(spec) ? &access.read(Stage::kValidation, validation) : nullptr;
    const CalibratorPtr cal = fit_calibrator(*spec.calibrator, val_scores, validation.labels, fit_groups);
    const IntVector* apply_groups = cal->needs_groups() ? &access.read(Stage::kInference, test) : nullptr;
    val_scores = cal->apply(val_scores, fit_groups);
    test_scores = cal->apply(test_scores, apply_groups);
  }
  if (spec.multicalibration) {
    const auto& mc = *spec.multicalibration;
    const IntVector* select_groups =
        mc.select_on_worst_group ? &access.read(Stage::kValidation, validation) : nullptr;
    const auto selection = mc_select(val_scores, validation.features, validation.labels,
                                     mc_config_grid(mc.candidates, post_seed), post_seed, select_groups);
    test_scores = mc_apply(selection.sequence, test_scores, test.features);
  }
  return test_scores;
}

}  // namespace

Vector run_method(const MethodSpec& spec, const Dataset& train, const Dataset& validation, const Dataset& test,
                  const GroupAccess& access, std::uint64_t seed, std::optional<int> tuning_trials) {
  return run_method_cached(spec, train, validation, test, access, seed, tuning_trials, nullptr);
}

ExperimentResult run_experiment(const Dataset& data, const std::vector<MethodSpec>& specs,
                                const ExperimentOptions& options) {
  if (options.trials < 1) throw ConfigError("experiment: trials must be >= 1");
  data.validate();
  std::set<std::string> ids;
  for (const auto& spec : specs) {
    check_regime(spec);
    if (!ids.insert(spec.id).second) throw ConfigError("experiment: duplicate method id '" + spec.id + "'");
  }

  ExperimentResult result;
  for (const auto& spec : specs) result.methods.push_back({spec.id, spec.regime, spec.model, {}});
  for (auto& m : result.methods) m.trials.resize(static_cast<std::size_t>(options.trials));

  AuditLog log;
  std::vector<std::exception_ptr> failures(static_cast<std::size_t>(options.trials));
  auto run_trial = [&](int t) {
    try {
      const std::uint64_t seed = options.base_seed + static_cast<std::uint64_t>(t);
      const auto parts = split(data, options.split_ratios, seed);
      const Dataset train = data.subset(parts.train);
      const Dataset validation = data.subset(parts.validation);
      const Dataset test = data.subset(parts.test);
      BaseCache cache;
      for (std::size_t m = 0; m < specs.size(); ++m) {
        const auto& spec = specs[m];
        const GroupAccess access(spec.id, t, spec.regime, &log);
        try {
          const Vector scores =
              run_method_cached(spec, train, validation, test, access, derive_seed(seed, 0), options.tuning_trials, &cache);
          access.read(Stage::kEvaluation, test);
          TrialResult r = evaluate_scores(scores, test, options.evaluation);
          r.trial = t;
          result.methods[m].trials[static_cast<std::size_t>(t)] = r;
        } catch (const RegimeViolation&) {
          throw;
        } catch (const ConfigError&) {
          throw;
        } catch (const std::exception& e) {
          throw ComponentError("method '" + spec.id + "' trial " + std::to_string(t) + ": " + e.what());
        }
      }
    } catch (...) {
      failures[static_cast<std::size_t>(t)] = std::current_exception();
    }
  };

  const int threads = std::clamp(options.threads, 1, options.trials);
  if (threads == 1) {
    for (int t = 0; t < options.trials; ++t) run_trial(t);
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < threads; ++w) {
      pool.emplace_back([&, w] {
        for (int t = w; t < options.trials; t += threads) run_trial(t);
      });
    }
    for (auto& th : pool) th.join();
  }
  for (const auto& f : failures) {
    if (f) std::rethrow_exception(f);
  }
  result.audit = log.entries();
  std::stable_sort(result.audit.begin(), result.audit.end(),
                   [](const AuditEntry& a, const AuditEntry& b) { return a.trial < b.trial; });
  return result;
}

// ---------------------------------------------------------------------------
// Pareto

bool dominates(const ParetoPoint& p, const ParetoPoint& q) {
  return p.rank <= q.rank && p.y <= q.y && (p.rank < q.rank || p.y < q.y);
}

std::vector<bool> pareto_mask(const std::vector<ParetoPoint>& points) {
  std::vector<bool> mask(points.size(), true);
  for (std::size_t i = 0; i < points.size(); ++i) {
    for (std::size_t j = 0; j < points.size() && mask[i]; ++j) {
      if (j != i && dominates(points[j], points[i])) mask[i] = false;
    }
  }
  return mask;
}

std::vector<ParetoPoint> pareto_front(const std::vector<ParetoPoint>& points) {
  const auto mask = pareto_mask(points);
  std::vector<ParetoPoint> front;
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (mask[i]) front.push_back(points[i]);
  }
  std::stable_sort(front.begin(), front.end(), [](const ParetoPoint& a, const ParetoPoint& b) {
    return a.rank != b.rank ? a.rank < b.rank : a.y < b.y;
  });
  return front;
}

std::vector<ParetoPoint> pareto_points(const std::vector<MethodResult>& results, const std::string& metric) {
  std::vector<ParetoPoint> points;
  for (const auto& r : results) points.push_back({r.method, rank(r.regime), r.aggregate(metric).mean});
  return points;
}

// ---------------------------------------------------------------------------
// Summary

std::string RegimeSummary::row() const {
  std::ostringstream out;
  out << display_name(regime) << " | " << times_optimal << " | ";
  if (best_method.empty()) {
    out << "-";
  } else {
    out << best_method << " (" << best_count << "/" << times_optimal << ")";
  }
  if (!tied.empty()) {
    out << " [tie with";
    for (const auto& t : tied) out << ' ' << t;
    out << ']';
  }
  return out.str();
}

std::string Summary::table() const {
  std::string out = "Data Availability | # Times Optimal | Best Pareto Optimal Method\n";
  for (const auto& r : regimes) out += r.row() + "\n";
  return out;
}

nlohmann::json Summary::to_json() const {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : regimes) {
    rows.push_back({{"regime", to_string(r.regime)},
                    {"methods_tested", r.methods_tested},
                    {"times_optimal", r.times_optimal},
                    {"best_method", r.best_method},
                    {"best_count", r.best_count},
                    {"tied", r.tied},
                    {"row", r.row()}});
  }
  nlohmann::json per_dataset = nlohmann::json::array();
  for (const auto& d : datasets) {
    nlohmann::json regimes_json = nlohmann::json::object();
    for (int k = 0; k < static_cast<int>(d.best_per_regime.size()); ++k) {
      if (d.best_per_regime[static_cast<std::size_t>(k)].empty()) continue;
      regimes_json[to_string(regime_from_rank(k))] = {{"best", d.best_per_regime[static_cast<std::size_t>(k)]},
                                                      {"optimal", static_cast<bool>(d.optimal_per_regime[static_cast<std::size_t>(k)])}};
    }
    per_dataset.push_back({{"dataset", d.dataset}, {"regimes", regimes_json}});
  }
  return {{"regimes", rows}, {"datasets", per_dataset}};
}

Summary summarize(const std::vector<DatasetResults>& results, const std::string& metric) {
  Summary summary;
  std::array<std::set<std::string>, 4> tested;
  std::array<std::map<std::string, int>, 4> wins;
  std::array<int, 4> optimal{};
  for (const auto& d : results) {
    const auto points = pareto_points(d.methods, metric);
    const auto mask = pareto_mask(points);
    DatasetSummary ds;
    ds.dataset = d.dataset;
    ds.best_per_regime.assign(4, "");
    ds.optimal_per_regime.assign(4, false);
    for (int k = 0; k < 4; ++k) {
      std::optional<std::size_t> best;
      for (std::size_t i = 0; i < points.size(); ++i) {
        if (points[i].rank != k) continue;
        tested[static_cast<std::size_t>(k)].insert(points[i].method);
        if (!best || points[i].y < points[*best].y ||
            (points[i].y == points[*best].y && points[i].method < points[*best].method)) {
          best = i;
        }
      }
      if (!best) continue;
      ds.best_per_regime[static_cast<std::size_t>(k)] = points[*best].method;
      if (mask[*best]) {
        ds.optimal_per_regime[static_cast<std::size_t>(k)] = true;
        ++optimal[static_cast<std::size_t>(k)];
        ++wins[static_cast<std::size_t>(k)][points[*best].method];
      }
    }
    summary.datasets.push_back(std::move(ds));
  }
  for (int k = 3; k >= 0; --k) {
    const auto kk = static_cast<std::size_t>(k);
    RegimeSummary r;
    r.regime = regime_from_rank(k);
    r.methods_tested = static_cast<int>(tested[kk].size());
    r.times_optimal = optimal[kk];
    // std::map iterates ids in ascending order, so the first maximum is the lowest id.
    for (const auto& [method, count] : wins[kk]) {
      if (count > r.best_count) {
        r.best_method = method;
        r.best_count = count;
        r.tied.clear();
      } else if (count == r.best_count && count > 0) {
        r.tied.push_back(method);
      }
    }
    summary.regimes.push_back(std::move(r));
  }
  return summary;
}

// ---------------------------------------------------------------------------
// Config

namespace {

Vector vector_from_json(const nlohmann::json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Vector>(v.data(), static_cast<Index>(v.size()));
}

}  // namespace

SynthConfig synth_config_from_json(const nlohmann::json& j) {
  try {
    SynthConfig c;
    c.n = j.value("n", c.n);
    c.p = j.value("p", c.p);
    c.seed = j.value("seed", c.seed);
    c.group_bias = vector_from_json(j.at("group_bias"));
    const auto rows = j.at("group_weights").get<std::vector<std::vector<double>>>();
    c.group_weights.resize(static_cast<Index>(rows.size()), c.p);
    for (std::size_t g = 0; g < rows.size(); ++g) {
      if (static_cast<Index>(rows[g].size()) != c.p) throw ConfigError("synth: group_weights rows must have p entries");
      for (Index f = 0; f < c.p; ++f) c.group_weights(static_cast<Index>(g), f) = rows[g][static_cast<std::size_t>(f)];
    }
    if (j.contains("group_proportions")) {
      c.group_proportions = vector_from_json(j.at("group_proportions"));
    } else {
      c.group_proportions = Vector::Constant(c.group_bias.size(), 1.0 / static_cast<double>(c.group_bias.size()));
    }
    c.validate();
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("synth config: ") + e.what());
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(std::string("synth config: ") + e.what());
  }
}

nlohmann::json synth_config_to_json(const SynthConfig& c) {
  std::vector<std::vector<double>> rows;
  for (Index g = 0; g < c.group_weights.rows(); ++g) {
    rows.emplace_back();
    for (Index f = 0; f < c.group_weights.cols(); ++f) rows.back().push_back(c.group_weights(g, f));
  }
  return {{"n", c.n},
          {"p", c.p},
          {"seed", c.seed},
          {"group_weights", rows},
          {"group_bias", std::vector<double>(c.group_bias.data(), c.group_bias.data() + c.group_bias.size())},
          {"group_proportions",
           std::vector<double>(c.group_proportions.data(), c.group_proportions.data() + c.group_proportions.size())}};
}

Dataset DatasetSource::load() const {
  if (synth) return synth_generate(*synth).data;
  return load_csv(path, csv);
}

ExperimentConfig ExperimentConfig::from_json(const nlohmann::json& j, const std::string& base_dir) {
  try {
    if (!j.is_object()) throw ConfigError("experiment config must be a JSON object");
    const int version = j.value("version", 1);
    if (version != 1) throw ConfigError("unsupported experiment config version " + std::to_string(version));
    ExperimentConfig c;
    const ModelKind model = model_kind_from_string(j.value("model", std::string("gbt")));
    if (!j.contains("datasets") || j.at("datasets").empty()) throw ConfigError("experiment config lists no datasets");
    for (const auto& d : j.at("datasets")) {
      DatasetSource src;
      src.name = d.at("name").get<std::string>();
      if (d.contains("synth")) {
        src.synth = synth_config_from_json(d.at("synth"));
      } else {
        std::filesystem::path p = d.at("path").get<std::string>();
        if (p.is_relative() && !base_dir.empty()) p = std::filesystem::path(base_dir) / p;
        src.path = p.string();
        src.csv.label_column = d.value("label_column", std::string("label"));
        src.csv.group_column = d.value("group_column", std::string("group"));
        src.csv.categorical_columns = d.value("categorical_columns", std::vector<std::string>{});
      }
      c.datasets.push_back(std::move(src));
    }
    if (!j.contains("methods") || j.at("methods").empty()) throw ConfigError("experiment config lists no methods");
    const auto& methods = j.at("methods");
    if (methods.is_string() && methods.get<std::string>() == "catalog") {
      c.methods = catalog_methods(model);
    } else {
      for (const auto& m : methods) c.methods.push_back(MethodSpec::from_json(m, model));
    }
    c.options.trials = j.value("trials", c.options.trials);
    c.options.base_seed = j.value("base_seed", c.options.base_seed);
    c.options.threads = j.value("threads", c.options.threads);
    if (j.contains("tuning_trials")) c.options.tuning_trials = j.at("tuning_trials").get<int>();
    if (j.contains("split")) {
      const auto r = j.at("split").get<std::vector<double>>();
      if (r.size() != 3) throw ConfigError("split needs three ratios");
      c.options.split_ratios = {r[0], r[1], r[2]};
    }
    if (j.contains("evaluation")) {
      const auto& e = j.at("evaluation");
      c.options.evaluation.kernel_width = e.value("kernel_width", c.options.evaluation.kernel_width);
      c.options.evaluation.mmce_sampled_pairs = e.value("mmce_sampled_pairs", c.options.evaluation.mmce_sampled_pairs);
    }
    c.output_dir = j.value("output", std::string());
    if (c.options.trials < 1) throw ConfigError("trials must be >= 1");
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("experiment config: ") + e.what());
  }
}

ExperimentConfig ExperimentConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open experiment config '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("experiment config '" + path + "': " + e.what());
  }
  return from_json(j, std::filesystem::path(path).parent_path().string());
}

}  // namespace faircal
