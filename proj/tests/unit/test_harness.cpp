#include "faircal/csv.hpp"
#include "faircal/harness.hpp"
#include "faircal/report.hpp"

#include "../support/scenarios.hpp"

#include <filesystem>
#include <fstream>

#include "doctest.h"

using namespace faircal;

namespace {

MethodResult constant_result(const std::string& id, AvailabilityRegime regime, double y, double accuracy = 0.8) {
  MethodResult r{id, regime, ModelKind::kGbt, {}};
  TrialResult t;
  t.worst_group_ecce = y;
  t.accuracy = accuracy;
  r.trials.push_back(t);
  return r;
}

std::string read_all(const std::string& path) {
  std::ifstream in(path);
  return {std::istreambuf_iterator<char>(in), {}};
}

std::filesystem::path fresh_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("faircal_" + name);
  std::filesystem::remove_all(dir);
  return dir;
}

}  // namespace

TEST_CASE("regimes and stages") {
  CHECK(regime_permits(AvailabilityRegime::kNone, Stage::kEvaluation));
  CHECK_FALSE(regime_permits(AvailabilityRegime::kNone, Stage::kValidation));
  CHECK(regime_permits(AvailabilityRegime::kVal, Stage::kValidation));
  CHECK_FALSE(regime_permits(AvailabilityRegime::kVal, Stage::kTrain));
  CHECK(regime_permits(AvailabilityRegime::kTrainVal, Stage::kTrain));
  CHECK_FALSE(regime_permits(AvailabilityRegime::kTrainVal, Stage::kInference));
  CHECK(regime_permits(AvailabilityRegime::kTrainValInf, Stage::kInference));
  for (int r = 0; r < 4; ++r) {
    const auto regime = regime_from_rank(r);
    CHECK(regime_from_string(to_string(regime)) == regime);
    CHECK(regime_from_string(display_name(regime)) == regime);
  }
  CHECK_THROWS_AS(regime_from_string("all"), ConfigError);
}

TEST_CASE("static regime check") {
  for (auto model : {ModelKind::kGbt, ModelKind::kMlp}) {
    for (const auto& spec : catalog_methods(model)) {
      CAPTURE(spec.id);
      CHECK_NOTHROW(check_regime(spec));
      CHECK(required_regime(spec).regime == spec.regime);
      CHECK(MethodSpec::from_json(spec.to_json(), model).to_json() == spec.to_json());
    }
  }
  auto miswired = catalog_method("per_group_calibrator", ModelKind::kGbt);
  miswired.regime = AvailabilityRegime::kVal;
  CHECK_THROWS_AS(check_regime(miswired), RegimeViolation);
  const auto from_json = MethodSpec::from_json({{"base", "group_robust_training"}, {"regime", "none"}});
  CHECK_THROWS_AS(check_regime(from_json), RegimeViolation);
  CHECK(required_regime(catalog_method("group_robust_calibrator", ModelKind::kGbt)).regime == AvailabilityRegime::kVal);
  CHECK(required_regime(catalog_method("group_robust_training", ModelKind::kMlp)).regime == AvailabilityRegime::kTrainVal);
  CHECK_THROWS_AS(MethodSpec::from_json({{"id", "x"}}), ConfigError);
  CHECK_THROWS_AS(catalog_method("enir", ModelKind::kGbt), ConfigError);
}

TEST_CASE("group access audit") {
  AuditLog log;
  const auto d = testing::opposite_bias(100, 1).data;
  const GroupAccess none("m", 0, AvailabilityRegime::kNone, &log);
  CHECK_THROWS_AS(none.read(Stage::kValidation, d), RegimeViolation);
  CHECK(none.view(Stage::kTrain, d, false).groups.size() == 0);
  CHECK_NOTHROW(none.read(Stage::kEvaluation, d));
  const GroupAccess val("m", 0, AvailabilityRegime::kVal, &log);
  CHECK(val.view(Stage::kValidation, d, true).groups == d.groups);
  CHECK_THROWS_AS(val.read(Stage::kInference, d), RegimeViolation);
  const auto entries = log.entries();
  REQUIRE(entries.size() == 2);
  CHECK(entries[0].stage == Stage::kEvaluation);
  CHECK(entries[1].stage == Stage::kValidation);
}

TEST_CASE("run_experiment") {
  const auto d = testing::opposite_bias(3000, 2).data;
  ExperimentOptions opt;
  opt.trials = 3;
  opt.base_seed = 10;
  opt.tuning_trials = 2;
  auto base = catalog_method("tune_accuracy", ModelKind::kGbt);
  base.fixed = {{"boosting_rounds", 10}};
  auto twin = base;
  twin.id = "tune_accuracy_twin";
  auto per_group = catalog_method("per_group_calibrator", ModelKind::kGbt);
  per_group.fixed = base.fixed;
  const auto r = run_experiment(d, {base, twin, per_group}, opt);
  REQUIRE(r.methods.size() == 3);
  CHECK(r.methods[0].trials.size() == 3);
  for (const auto& e : r.audit) {
    if (e.method == base.id) CHECK(e.stage == Stage::kEvaluation);
  }
  const auto a = r.methods[0].aggregate("worst_group_ecce");
  CHECK(a.std > 0.0);
  for (std::size_t t = 0; t < 3; ++t) {
    for (const auto& name : trial_metric_names()) {
      CHECK(trial_metric(r.methods[0].trials[t], name) == trial_metric(r.methods[1].trials[t], name));
    }
  }
  CHECK(r.methods[2].aggregate("worst_group_ecce").mean < a.mean);

  opt.threads = 3;
  const auto parallel = run_experiment(d, {base, twin, per_group}, opt);
  for (std::size_t m = 0; m < 3; ++m) {
    for (std::size_t t = 0; t < 3; ++t) {
      CHECK(parallel.methods[m].trials[t].worst_group_ecce == r.methods[m].trials[t].worst_group_ecce);
    }
  }
  auto miswired = per_group;
  miswired.regime = AvailabilityRegime::kVal;
  CHECK_THROWS_AS(run_experiment(d, {miswired}, opt), RegimeViolation);
  CHECK_THROWS_AS(run_experiment(d, {base, base}, opt), ConfigError);

  // Bypassing the static check, the runtime gate still refuses the read.
  AuditLog log;
  const GroupAccess access(miswired.id, 0, miswired.regime, &log);
  const auto parts = split(d, kDefaultSplitRatios, 0);
  CHECK_THROWS_AS(run_method(miswired, d.subset(parts.train), d.subset(parts.validation), d.subset(parts.test), access, 0, 1),
                  RegimeViolation);
}

TEST_CASE("mean_std") {
  CHECK(mean_std({0.5}).std == 0.0);
  const auto s = mean_std({1.0, 2.0, 3.0});
  CHECK(s.mean == doctest::Approx(2.0));
  CHECK(s.std == doctest::Approx(1.0));
}

TEST_CASE("pareto front") {
  CHECK(pareto_front({{"a", 0, 0.3}}).size() == 1);
  const auto f = pareto_front({{"none", 0, 0.5}, {"val", 1, 0.4}, {"tvi", 3, 0.45}});
  REQUIRE(f.size() == 2);
  CHECK(f[0].method == "none");
  CHECK(f[1].method == "val");
  CHECK(pareto_front({{"a", 1, 0.2}, {"b", 1, 0.2}}).size() == 2);

  Rng rng(4);
  std::uniform_int_distribution<int> rank(0, 3);
  std::uniform_real_distribution<double> y(0.0, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<ParetoPoint> pts;
    for (int i = 0; i < 60; ++i) pts.push_back({"m" + std::to_string(i), rank(rng), std::round(y(rng) * 20) / 20});
    const auto mask = pareto_mask(pts);
    for (std::size_t i = 0; i < pts.size(); ++i) {
      bool dominated = false;
      for (std::size_t j = 0; j < pts.size(); ++j) dominated = dominated || (i != j && dominates(pts[j], pts[i]));
      CHECK(mask[i] == !dominated);
    }
  }
}

TEST_CASE("summarize") {
  std::vector<DatasetResults> data;
  for (int k = 0; k < 10; ++k) {
    DatasetResults d{"d" + std::to_string(k), {}};
    double use_group = 0.01, per_group = 0.02;
    if (k == 5 || k == 6) std::swap(use_group, per_group);
    if (k >= 7) {
      use_group = 0.5;
      per_group = 0.6;
    }
    d.methods.push_back(constant_result("use_group", AvailabilityRegime::kTrainValInf, use_group));
    d.methods.push_back(constant_result("per_group_calibrator", AvailabilityRegime::kTrainValInf, per_group));
    d.methods.push_back(constant_result("tune_accuracy", AvailabilityRegime::kNone, 0.1));
    data.push_back(d);
  }
  const auto s = summarize(data);
  REQUIRE(s.regimes.size() == 4);
  CHECK(s.regimes[0].row() == "Train+Val+Inf | 7 | use_group (5/7)");
  CHECK(s.regimes[0].methods_tested == 2);
  CHECK(s.regimes[3].row() == "None | 10 | tune_accuracy (10/10)");
  CHECK(s.regimes[1].row() == "Train+Val | 0 | -");

  const auto one = summarize({{"only", {constant_result("tune_accuracy", AvailabilityRegime::kNone, 0.2)}}});
  CHECK(one.regimes[3].row() == "None | 1 | tune_accuracy (1/1)");

  std::vector<DatasetResults> tie;
  tie.push_back({"a", {constant_result("zeta", AvailabilityRegime::kVal, 0.1), constant_result("alpha", AvailabilityRegime::kVal, 0.2)}});
  tie.push_back({"b", {constant_result("zeta", AvailabilityRegime::kVal, 0.3), constant_result("alpha", AvailabilityRegime::kVal, 0.2)}});
  const auto t = summarize(tie);
  CHECK(t.regimes[2].best_method == "alpha");
  CHECK(t.regimes[2].row() == "Val | 2 | alpha (1/2) [tie with zeta]");
}

TEST_CASE("report files") {
  const auto empty_dir = fresh_dir("report_empty");
  const auto written = write_report({}, empty_dir.string());
  CHECK(written.size() == 3);
  CHECK(read_all((empty_dir / "results.csv").string()) == "dataset,method,regime,model,metric,trial,value\n");
  CHECK(csv::read_file((empty_dir / "frontier.csv").string()).rows.empty());
  const auto summary = nlohmann::json::parse(read_all((empty_dir / "summary.json").string()));
  CHECK(summary["regimes"].empty());
  CHECK_FALSE(std::filesystem::exists(empty_dir / "frontier.svg"));

  std::vector<DatasetResults> data;
  for (int k = 0; k < 2; ++k) {
    DatasetResults d{"d" + std::to_string(k), {}};
    for (int m = 0; m < 4; ++m) {
      MethodResult r{"m" + std::to_string(m), regime_from_rank(m), m % 2 ? ModelKind::kMlp : ModelKind::kGbt, {}};
      for (int t = 0; t < 3; ++t) {
        TrialResult tr;
        tr.trial = t;
        tr.worst_group_ecce = 0.1 * (4 - m) + 0.013 * t + 0.001 * k;
        tr.worst_group_msce = 0.2 / 3.0;
        tr.worst_group_mmce = 1e-17 * (t + 1);
        tr.overall_ecce = 0.05;
        tr.accuracy = 0.7 + 0.01 * m;
        tr.worst_group = t % 2;
        r.trials.push_back(tr);
      }
      d.methods.push_back(r);
    }
    data.push_back(d);
  }
  const auto dir = fresh_dir("report_full");
  write_report(data, dir.string());
  CHECK(std::filesystem::exists(dir / "frontier.svg"));
  const auto back = read_results_csv((dir / "results.csv").string());
  REQUIRE(back.size() == data.size());
  for (std::size_t k = 0; k < data.size(); ++k) {
    REQUIRE(back[k].methods.size() == data[k].methods.size());
    for (std::size_t m = 0; m < data[k].methods.size(); ++m) {
      CHECK(back[k].methods[m].regime == data[k].methods[m].regime);
      CHECK(back[k].methods[m].model == data[k].methods[m].model);
      for (const auto& name : trial_metric_names()) {
        CHECK(back[k].methods[m].aggregate(name).mean == data[k].methods[m].aggregate(name).mean);
        CHECK(back[k].methods[m].aggregate(name).std == data[k].methods[m].aggregate(name).std);
      }
    }
  }
  CHECK(summarize(back).to_json() == summarize(data).to_json());

  const auto rows = frontier_rows(data);
  const auto table = csv::read_file((dir / "frontier.csv").string());
  const int flag = table.column("on_front");
  for (auto model : {ModelKind::kGbt, ModelKind::kMlp}) {
    std::vector<ParetoPoint> pts;
    std::vector<std::string> flagged;
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (rows[i].model != model) continue;
      pts.push_back({rows[i].method, rank(rows[i].regime), rows[i].y});
      if (table.rows[i][static_cast<std::size_t>(flag)] == "1") flagged.push_back(rows[i].method);
    }
    std::vector<std::string> front;
    for (const auto& p : pareto_front(pts)) front.push_back(p.method);
    std::sort(front.begin(), front.end());
    std::sort(flagged.begin(), flagged.end());
    CHECK(front == flagged);
  }
}

TEST_CASE("experiment config") {
  const nlohmann::json j = {
      {"version", 1},
      {"model", "mlp"},
      {"datasets", {{{"name", "s"}, {"synth", {{"n", 300}, {"p", 1}, {"group_weights", {{1.0}, {1.0}}}, {"group_bias", {0.5, -0.5}}}}}}},
      {"methods", {"tune_accuracy", {{"base", "per_group_calibrator"}, {"id", "pg"}}}},
      {"trials", 2},
      {"tuning_trials", 1}};
  const auto c = ExperimentConfig::from_json(j);
  REQUIRE(c.methods.size() == 2);
  CHECK(c.methods[0].model == ModelKind::kMlp);
  CHECK(c.methods[1].id == "pg");
  CHECK(c.methods[1].regime == AvailabilityRegime::kTrainValInf);
  CHECK(c.options.trials == 2);
  CHECK(c.datasets[0].load().size() == 300);
  CHECK_THROWS_AS(ExperimentConfig::from_json({{"version", 2}}), ConfigError);
  CHECK_THROWS_AS(ExperimentConfig::from_json({{"datasets", nlohmann::json::array()}}), ConfigError);
  CHECK_THROWS_AS(ExperimentConfig::load("/nonexistent/x.json"), ConfigError);
}
