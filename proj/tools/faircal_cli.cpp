#include "faircal/calibrators.hpp"
#include "faircal/csv.hpp"
#include "faircal/harness.hpp"
#include "faircal/metrics.hpp"
#include "faircal/report.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "json.hpp"

using namespace faircal;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitRegime = 3;
constexpr int kExitComponent = 4;

struct ScoreFile {
  Vector scores;
  Vector labels;
  IntVector groups;
  bool has_labels = false;
  bool has_groups = false;
  std::vector<std::string> group_names;
};

ScoreFile read_scores(const std::string& path) {
  const auto table = csv::read_file(path);
  const int s_col = table.column("score");
  if (s_col < 0) throw ConfigError("'" + path + "' has no score column");
  const int y_col = table.column("label");
  const int g_col = table.column("group");
  ScoreFile f;
  const auto n = static_cast<Index>(table.rows.size());
  f.scores.resize(n);
  f.labels.resize(y_col >= 0 ? n : 0);
  f.groups.resize(g_col >= 0 ? n : 0);
  f.has_labels = y_col >= 0;
  f.has_groups = g_col >= 0;
  for (Index r = 0; r < n; ++r) {
    const auto& row = table.rows[static_cast<std::size_t>(r)];
    if (!csv::parse_double(row.at(static_cast<std::size_t>(s_col)), f.scores[r])) {
      throw ConfigError("'" + path + "': bad score on row " + std::to_string(r + 2));
    }
    if (f.has_labels) {
      const auto& cell = row.at(static_cast<std::size_t>(y_col));
      if (cell == "1" || cell == "true") f.labels[r] = 1.0;
      else if (cell == "0" || cell == "false") f.labels[r] = 0.0;
      else throw ConfigError("'" + path + "': label must be 0/1 on row " + std::to_string(r + 2));
    }
    if (f.has_groups) {
      const auto& cell = row.at(static_cast<std::size_t>(g_col));
      auto it = std::find(f.group_names.begin(), f.group_names.end(), cell);
      if (it == f.group_names.end()) {
        f.group_names.push_back(cell);
        it = std::prev(f.group_names.end());
      }
      f.groups[r] = static_cast<int>(it - f.group_names.begin());
    }
  }
  return f;
}

nlohmann::json parse_json_arg(const std::string& text) {
  if (text.empty()) return nlohmann::json::object();
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad JSON argument: ") + e.what());
  }
}

nlohmann::json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open '" + path + "'");
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("'" + path + "': " + e.what());
  }
}

SynthConfig opposite_bias_preset(Index n, double bias, std::uint64_t seed) {
  SynthConfig c;
  c.n = n;
  c.p = 2;
  c.group_weights = Matrix(2, 2);
  c.group_weights << 1.0, -0.5, 1.0, -0.5;
  c.group_bias = Vector(2);
  c.group_bias << bias, -bias;
  c.group_proportions = Vector::Constant(2, 0.5);
  c.seed = seed;
  return c;
}

int run_synth(const std::string& config_path, const std::string& preset, Index n, double bias, std::uint64_t seed,
              const std::string& out, bool with_truth) {
  SynthConfig config;
  if (!config_path.empty()) {
    config = synth_config_from_json(read_json_file(config_path));
  } else if (preset == "opposite_bias") {
    config = opposite_bias_preset(n, bias, seed);
  } else {
    throw ConfigError("synth needs --config or --preset opposite_bias");
  }
  const auto synth = synth_generate(config);
  write_csv(synth.data, out, "label", "group", with_truth ? &synth.true_probabilities : nullptr);
  std::cout << "wrote " << synth.data.size() << " rows to " << out << "\n";
  return 0;
}

int run_bench(const std::string& config_path, std::string out_dir, int threads, int trials) {
  auto config = ExperimentConfig::load(config_path);
  if (threads > 0) config.options.threads = threads;
  if (trials > 0) config.options.trials = trials;
  if (out_dir.empty()) out_dir = config.output_dir.empty() ? "results" : config.output_dir;
  for (const auto& spec : config.methods) check_regime(spec);
  std::vector<DatasetResults> all;
  nlohmann::json audit = nlohmann::json::array();
  for (const auto& source : config.datasets) {
    const Dataset data = source.load();
    std::cerr << "dataset " << source.name << ": " << data.size() << " rows, " << config.methods.size()
              << " methods, " << config.options.trials << " trials\n";
    auto result = run_experiment(data, config.methods, config.options);
    for (const auto& e : result.audit) {
      audit.push_back({{"dataset", source.name}, {"method", e.method}, {"trial", e.trial}, {"stage", to_string(e.stage)}});
    }
    all.push_back({source.name, std::move(result.methods)});
  }
  for (const auto& path : write_report(all, out_dir)) std::cout << "wrote " << path << "\n";
  const auto audit_path = (std::filesystem::path(out_dir) / "audit.json").string();
  std::ofstream(audit_path) << audit.dump(2) << '\n';
  std::cout << "wrote " << audit_path << "\n";
  std::cout << summarize(all).table();
  return 0;
}

int run_pareto(const std::string& results_path, const std::string& metric) {
  const auto results = read_results_csv(results_path);
  for (const auto& d : results) {
    std::cout << d.dataset << "\n";
    for (const auto& p : pareto_front(pareto_points(d.methods, metric))) {
      std::cout << "  " << display_name(regime_from_rank(p.rank)) << "\t" << p.method << "\t" << csv::format_double(p.y)
                << "\n";
    }
  }
  if (!results.empty()) std::cout << summarize(results, metric).table();
  return 0;
}

int run_report(const std::string& results_path, const std::string& out_dir, bool no_svg) {
  const auto results = read_results_csv(results_path);
  ReportFormats formats;
  formats.svg = !no_svg;
  for (const auto& path : write_report(results, out_dir, formats)) std::cout << "wrote " << path << "\n";
  return 0;
}

int run_calibrate(const std::string& fit_path, const std::string& apply_path, const std::string& method,
                  const std::string& params, const std::string& out, const std::string& save) {
  const auto fit = read_scores(fit_path);
  if (!fit.has_labels) throw ConfigError("calibrate: '" + fit_path + "' needs a label column");
  CalibratorSpec spec;
  spec.kind = calibrator_kind_from_string(method);
  spec.params = parse_json_arg(params);
  const auto cal = fit_calibrator(spec, fit.scores, fit.labels, fit.has_groups ? &fit.groups : nullptr);
  if (!save.empty()) std::ofstream(save) << cal->to_json().dump(2) << '\n';

  const auto target = apply_path.empty() ? fit : read_scores(apply_path);
  IntVector mapped_groups;
  if (cal->needs_groups()) {
    if (!target.has_groups) throw ConfigError("calibrate: the per-group calibrator needs a group column");
    // Group ids must mean the same thing in both files.
    mapped_groups.resize(target.groups.size());
    for (Index r = 0; r < target.groups.size(); ++r) {
      const auto& name = target.group_names[static_cast<std::size_t>(target.groups[r])];
      const auto it = std::find(fit.group_names.begin(), fit.group_names.end(), name);
      mapped_groups[r] = it == fit.group_names.end() ? -1 : static_cast<int>(it - fit.group_names.begin());
    }
  }
  const Vector calibrated = cal->apply(target.scores, cal->needs_groups() ? &mapped_groups : nullptr);

  std::ofstream file;
  std::ostream* os = &std::cout;
  if (!out.empty()) {
    file.open(out);
    if (!file) throw Error("cannot write '" + out + "'");
    os = &file;
  }
  csv::Row header{"score", "calibrated"};
  if (target.has_labels) header.push_back("label");
  if (target.has_groups) header.push_back("group");
  csv::write_row(*os, header);
  for (Index r = 0; r < calibrated.size(); ++r) {
    csv::Row row{csv::format_double(target.scores[r]), csv::format_double(calibrated[r])};
    if (target.has_labels) row.push_back(target.labels[r] > 0.5 ? "1" : "0");
    if (target.has_groups) row.push_back(target.group_names[static_cast<std::size_t>(target.groups[r])]);
    csv::write_row(*os, row);
  }
  return 0;
}

int run_evaluate(const std::string& path, const std::vector<std::string>& metrics, Index bins, Index sampled_pairs,
                 std::uint64_t seed) {
  const auto f = read_scores(path);
  if (!f.has_labels) throw ConfigError("evaluate: '" + path + "' needs a label column");
  nlohmann::json out = nlohmann::json::object();
  for (const auto& id : metrics) {
    MetricSpec spec;
    spec.kind = metric_kind_from_string(id);
    spec.bins = bins;
    spec.sampled_pairs = sampled_pairs;
    if (sampled_pairs > 0) spec.seed = seed;
    nlohmann::json entry = {{"overall", evaluate(spec, f.scores, f.labels).value}};
    if (f.has_groups) {
      const auto wg = worst_group(f.scores, f.labels, f.groups, static_cast<int>(f.group_names.size()), spec);
      entry["worst_group"] = wg.value.value;
      entry["worst_group_id"] = f.group_names[static_cast<std::size_t>(wg.group)];
      nlohmann::json per = nlohmann::json::object();
      for (std::size_t g = 0; g < wg.per_group.size(); ++g) per[f.group_names[g]] = wg.per_group[g].value;
      entry["per_group"] = per;
    }
    out[id] = entry;
  }
  std::cout << out.dump(2) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"faircal: calibration fairness toolkit and benchmark harness"};
  app.require_subcommand(1);

  auto* synth = app.add_subcommand("synth", "Generate a synthetic dataset");
  std::string synth_config, synth_preset, synth_out;
  Index synth_n = 20000;
  double synth_bias = 1.0;
  std::uint64_t synth_seed = 0;
  bool synth_truth = false;
  synth->add_option("--config", synth_config, "Synthetic generator JSON");
  synth->add_option("--preset", synth_preset, "Built-in generator (opposite_bias)");
  synth->add_option("-n,--rows", synth_n, "Rows for a preset");
  synth->add_option("--bias", synth_bias, "Group offset for opposite_bias");
  synth->add_option("--seed", synth_seed, "Seed for a preset");
  synth->add_option("-o,--out", synth_out, "Output CSV")->required();
  synth->add_flag("--with-truth", synth_truth, "Add the __true_p sidecar column");

  auto* bench = app.add_subcommand("bench", "Run an experiment config");
  std::string bench_config, bench_out;
  int bench_threads = 0, bench_trials = 0;
  bench->add_option("config", bench_config, "Experiment JSON")->required();
  bench->add_option("-o,--out", bench_out, "Output directory");
  bench->add_option("--threads", bench_threads, "Parallel trials");
  bench->add_option("--trials", bench_trials, "Override the trial count");

  auto* pareto = app.add_subcommand("pareto", "Pareto fronts from results.csv");
  std::string pareto_results, pareto_metric = "worst_group_ecce";
  pareto->add_option("results", pareto_results, "results.csv")->required();
  pareto->add_option("--metric", pareto_metric, "Per-trial metric on the y axis");

  auto* report = app.add_subcommand("report", "Emit report files from results.csv");
  std::string report_results, report_out;
  bool report_no_svg = false;
  report->add_option("results", report_results, "results.csv")->required();
  report->add_option("-o,--out", report_out, "Output directory")->required();
  report->add_flag("--no-svg", report_no_svg, "Skip frontier.svg");

  auto* calibrate = app.add_subcommand("calibrate", "Fit a calibrator on a score CSV (score,label[,group])");
  std::string cal_fit, cal_apply, cal_method = "isotonic", cal_params, cal_out, cal_save;
  calibrate->add_option("scores", cal_fit, "Fitting CSV")->required();
  calibrate->add_option("--apply", cal_apply, "CSV to calibrate (defaults to the fitting CSV)");
  calibrate->add_option("-m,--method", cal_method, "Calibrator kind");
  calibrate->add_option("--params", cal_params, "Calibrator parameters as JSON");
  calibrate->add_option("-o,--out", cal_out, "Output CSV (stdout by default)");
  calibrate->add_option("--save", cal_save, "Write the fitted calibrator as JSON");

  auto* evaluate_cmd = app.add_subcommand("evaluate", "Calibration metrics for a score CSV");
  std::string eval_path;
  std::vector<std::string> eval_metrics{"ecce_mean", "ece", "msce", "mmce", "brier", "accuracy"};
  Index eval_bins = 10, eval_pairs = 0;
  std::uint64_t eval_seed = 0;
  evaluate_cmd->add_option("scores", eval_path, "CSV with score,label[,group]")->required();
  evaluate_cmd->add_option("--metrics", eval_metrics, "Metric ids");
  evaluate_cmd->add_option("--bins", eval_bins, "ECE bins");
  evaluate_cmd->add_option("--mmce-pairs", eval_pairs, "Sampled MMCE pairs (0 = exact)");
  evaluate_cmd->add_option("--seed", eval_seed, "Seed for sampled MMCE");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (*synth) return run_synth(synth_config, synth_preset, synth_n, synth_bias, synth_seed, synth_out, synth_truth);
    if (*bench) return run_bench(bench_config, bench_out, bench_threads, bench_trials);
    if (*pareto) return run_pareto(pareto_results, pareto_metric);
    if (*report) return run_report(report_results, report_out, report_no_svg);
    if (*calibrate) return run_calibrate(cal_fit, cal_apply, cal_method, cal_params, cal_out, cal_save);
    if (*evaluate_cmd) return run_evaluate(eval_path, eval_metrics, eval_bins, eval_pairs, eval_seed);
  } catch (const RegimeViolation& e) {
    std::cerr << "regime violation: " << e.what() << "\n";
    return kExitRegime;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitComponent;
  }
  return 0;
}
