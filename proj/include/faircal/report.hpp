#pragma once

#include "faircal/harness.hpp"

#include <string>
#include <vector>

namespace faircal {

/// Long format: dataset,method,regime,model,metric,trial,value.
void write_results_csv(const std::vector<DatasetResults>& results, const std::string& path);
std::vector<DatasetResults> read_results_csv(const std::string& path);

/// One aggregated point per (model kind, method): means over datasets of the per-dataset
/// trial means; `ci` is the mean of the per-dataset standard deviations.
struct FrontierRow {
  ModelKind model = ModelKind::kGbt;
  std::string method;
  AvailabilityRegime regime = AvailabilityRegime::kNone;
  double y = 0.0;
  double ci = 0.0;
  double accuracy = 0.0;
  bool on_front = false;
  double accuracy_min = 0.0;  // over all methods of this model kind
  double accuracy_max = 0.0;
};

/// Front membership comes from pareto_mask over each model kind's points.
std::vector<FrontierRow> frontier_rows(const std::vector<DatasetResults>& results,
                                       const std::string& metric = "worst_group_ecce");

void write_frontier_csv(const std::vector<FrontierRow>& rows, const std::string& path);
/// Scatter of regime rank vs y per model kind with front points joined and labelled.
std::string frontier_svg(const std::vector<FrontierRow>& rows);

struct ReportFormats {
  bool csv = true;
  bool json = true;
  bool svg = true;
};

/// results.csv, summary.json, frontier.csv, frontier.svg (skipped when there are no results).
/// Returns the written paths. Throws Error on IO failure.
std::vector<std::string> write_report(const std::vector<DatasetResults>& results, const std::string& out_dir,
                                      const ReportFormats& formats = {});

}  // namespace faircal
