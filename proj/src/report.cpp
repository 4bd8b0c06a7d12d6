#include "faircal/report.hpp"

#include "faircal/csv.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

namespace faircal {

namespace {

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write '" + path + "'");
  return out;
}

void check_written(std::ofstream& out, const std::string& path) {
  out.flush();
  if (!out) throw Error("write failed for '" + path + "'");
}

std::string svg_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace

void write_results_csv(const std::vector<DatasetResults>& results, const std::string& path) {
  auto out = open_out(path);
  csv::write_row(out, {"dataset", "method", "regime", "model", "metric", "trial", "value"});
  for (const auto& d : results) {
    for (const auto& m : d.methods) {
      for (const auto& t : m.trials) {
        for (const auto& name : trial_metric_names()) {
          csv::write_row(out, {d.dataset, m.method, to_string(m.regime), to_string(m.model), name,
                               std::to_string(t.trial), csv::format_double(trial_metric(t, name))});
        }
      }
    }
  }
  check_written(out, path);
}

std::vector<DatasetResults> read_results_csv(const std::string& path) {
  const auto table = csv::read_file(path);
  const char* names[] = {"dataset", "method", "regime", "model", "metric", "trial", "value"};
  int col[7];
  for (int k = 0; k < 7; ++k) {
    col[k] = table.column(names[k]);
    if (col[k] < 0) throw ConfigError("results csv '" + path + "' lacks column '" + names[k] + "'");
  }
  std::vector<DatasetResults> out;
  std::map<std::string, std::size_t> dataset_index;
  std::map<std::pair<std::size_t, std::string>, std::size_t> method_index;
  std::map<std::tuple<std::size_t, std::size_t, int>, std::size_t> trial_index;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    auto cell = [&](int k) -> const std::string& { return row.at(static_cast<std::size_t>(col[k])); };
    double value = 0.0;
    double trial_value = 0.0;
    if (!csv::parse_double(cell(6), value) || !csv::parse_double(cell(5), trial_value)) {
      throw ConfigError("results csv '" + path + "': bad number on row " + std::to_string(r + 2));
    }
    auto [dit, dnew] = dataset_index.try_emplace(cell(0), out.size());
    if (dnew) out.push_back({cell(0), {}});
    auto& dataset = out[dit->second];
    auto [mit, mnew] = method_index.try_emplace({dit->second, cell(1)}, dataset.methods.size());
    if (mnew) {
      dataset.methods.push_back({cell(1), regime_from_string(cell(2)), model_kind_from_string(cell(3)), {}});
    }
    auto& method = dataset.methods[mit->second];
    const int trial = static_cast<int>(trial_value);
    auto [tit, tnew] = trial_index.try_emplace({dit->second, mit->second, trial}, method.trials.size());
    if (tnew) {
      TrialResult t;
      t.trial = trial;
      method.trials.push_back(t);
    }
    set_trial_metric(method.trials[tit->second], cell(4), value);
  }
  return out;
}

std::vector<FrontierRow> frontier_rows(const std::vector<DatasetResults>& results, const std::string& metric) {
  struct Acc {
    AvailabilityRegime regime;
    std::vector<double> y, ci, accuracy;
  };
  // model kind -> method -> per-dataset statistics, methods in first-appearance order
  std::map<ModelKind, std::vector<std::pair<std::string, Acc>>> by_model;
  for (const auto& d : results) {
    for (const auto& m : d.methods) {
      auto& list = by_model[m.model];
      auto it = std::find_if(list.begin(), list.end(), [&](const auto& e) { return e.first == m.method; });
      if (it == list.end()) {
        list.push_back({m.method, Acc{m.regime, {}, {}, {}}});
        it = std::prev(list.end());
      }
      const auto s = m.aggregate(metric);
      it->second.y.push_back(s.mean);
      it->second.ci.push_back(s.std);
      it->second.accuracy.push_back(m.aggregate("accuracy").mean);
    }
  }
  auto mean = [](const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return v.empty() ? 0.0 : s / static_cast<double>(v.size());
  };
  std::vector<FrontierRow> rows;
  for (const auto& [model, list] : by_model) {
    std::vector<FrontierRow> group;
    std::vector<ParetoPoint> points;
    for (const auto& [method, acc] : list) {
      FrontierRow row;
      row.model = model;
      row.method = method;
      row.regime = acc.regime;
      row.y = mean(acc.y);
      row.ci = mean(acc.ci);
      row.accuracy = mean(acc.accuracy);
      points.push_back({method, rank(acc.regime), row.y});
      group.push_back(row);
    }
    const auto mask = pareto_mask(points);
    double lo = group.front().accuracy;
    double hi = lo;
    for (const auto& g : group) {
      lo = std::min(lo, g.accuracy);
      hi = std::max(hi, g.accuracy);
    }
    for (std::size_t i = 0; i < group.size(); ++i) {
      group[i].on_front = mask[i];
      group[i].accuracy_min = lo;
      group[i].accuracy_max = hi;
      rows.push_back(group[i]);
    }
  }
  return rows;
}

void write_frontier_csv(const std::vector<FrontierRow>& rows, const std::string& path) {
  auto out = open_out(path);
  csv::write_row(out, {"model", "method", "regime", "rank", "y", "ci", "accuracy", "on_front", "accuracy_min",
                       "accuracy_max"});
  for (const auto& r : rows) {
    csv::write_row(out, {to_string(r.model), r.method, to_string(r.regime), std::to_string(rank(r.regime)),
                         csv::format_double(r.y), csv::format_double(r.ci), csv::format_double(r.accuracy),
                         r.on_front ? "1" : "0", csv::format_double(r.accuracy_min),
                         csv::format_double(r.accuracy_max)});
  }
  check_written(out, path);
}

std::string frontier_svg(const std::vector<FrontierRow>& rows) {
  constexpr double kWidth = 720, kHeight = 480, kLeft = 70, kRight = 200, kTop = 30, kBottom = 60;
  double y_max = 0.0;
  for (const auto& r : rows) y_max = std::max(y_max, r.y + r.ci);
  if (y_max <= 0.0) y_max = 1.0;
  y_max *= 1.1;
  const double plot_w = kWidth - kLeft - kRight;
  const double plot_h = kHeight - kTop - kBottom;
  auto px = [&](int rank) { return kLeft + plot_w * (0.1 + 0.8 * rank / 3.0); };
  auto py = [&](double y) { return kTop + plot_h * (1.0 - y / y_max); };
  const char* colors[] = {"#1f77b4", "#d62728"};

  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight << "\">\n";
  s << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  s << "<line x1=\"" << kLeft << "\" y1=\"" << kTop + plot_h << "\" x2=\"" << kLeft + plot_w << "\" y2=\""
    << kTop + plot_h << "\" stroke=\"black\"/>\n";
  s << "<line x1=\"" << kLeft << "\" y1=\"" << kTop << "\" x2=\"" << kLeft << "\" y2=\"" << kTop + plot_h
    << "\" stroke=\"black\"/>\n";
  for (int k = 0; k < 4; ++k) {
    s << "<text x=\"" << px(k) << "\" y=\"" << kTop + plot_h + 20 << "\" text-anchor=\"middle\" font-size=\"12\">"
      << svg_escape(display_name(regime_from_rank(k))) << "</text>\n";
  }
  for (int k = 0; k <= 4; ++k) {
    const double y = y_max * k / 4.0;
    s << "<text x=\"" << kLeft - 8 << "\" y=\"" << py(y) + 4 << "\" text-anchor=\"end\" font-size=\"11\">"
      << csv::format_double(std::round(y * 1e4) / 1e4) << "</text>\n";
  }
  s << "<text x=\"" << kLeft + plot_w / 2 << "\" y=\"" << kHeight - 15
    << "\" text-anchor=\"middle\" font-size=\"13\">group data availability</text>\n";
  s << "<text x=\"18\" y=\"" << kTop + plot_h / 2 << "\" transform=\"rotate(-90 18 " << kTop + plot_h / 2
    << ")\" text-anchor=\"middle\" font-size=\"13\">worst-group calibration error</text>\n";

  std::vector<ModelKind> models;
  for (const auto& r : rows) {
    if (std::find(models.begin(), models.end(), r.model) == models.end()) models.push_back(r.model);
  }
  for (std::size_t m = 0; m < models.size(); ++m) {
    const char* color = colors[m % 2];
    std::vector<const FrontierRow*> front;
    for (const auto& r : rows) {
      if (r.model != models[m]) continue;
      const double x = px(rank(r.regime)) + (static_cast<double>(m) - 0.5) * 8.0;
      s << "<line x1=\"" << x << "\" y1=\"" << py(std::max(0.0, r.y - r.ci)) << "\" x2=\"" << x << "\" y2=\""
        << py(r.y + r.ci) << "\" stroke=\"" << color << "\" stroke-opacity=\"0.4\"/>\n";
      s << "<circle cx=\"" << x << "\" cy=\"" << py(r.y) << "\" r=\"" << (r.on_front ? 5 : 3) << "\" fill=\""
        << (r.on_front ? color : "none") << "\" stroke=\"" << color << "\"><title>" << svg_escape(r.method)
        << "</title></circle>\n";
      if (r.on_front) front.push_back(&r);
    }
    std::stable_sort(front.begin(), front.end(), [](const FrontierRow* a, const FrontierRow* b) {
      return rank(a->regime) != rank(b->regime) ? rank(a->regime) < rank(b->regime) : a->y < b->y;
    });
    if (!front.empty()) {
      s << "<polyline fill=\"none\" stroke=\"" << color << "\" points=\"";
      for (const auto* r : front) s << px(rank(r->regime)) + (static_cast<double>(m) - 0.5) * 8.0 << ',' << py(r->y) << ' ';
      s << "\"/>\n";
      for (const auto* r : front) {
        s << "<text x=\"" << px(rank(r->regime)) + 8 << "\" y=\"" << py(r->y) - 6 << "\" font-size=\"10\" fill=\""
          << color << "\">" << svg_escape(r->method) << "</text>\n";
      }
    }
    const auto& any = *std::find_if(rows.begin(), rows.end(), [&](const FrontierRow& r) { return r.model == models[m]; });
    const double ly = kTop + 20.0 + 20.0 * static_cast<double>(m);
    s << "<circle cx=\"" << kLeft + plot_w + 20 << "\" cy=\"" << ly - 4 << "\" r=\"5\" fill=\"" << color << "\"/>\n";
    s << "<text x=\"" << kLeft + plot_w + 30 << "\" y=\"" << ly << "\" font-size=\"11\">" << to_string(models[m])
      << " acc " << csv::format_double(std::round(any.accuracy_min * 1e3) / 1e3) << "-"
      << csv::format_double(std::round(any.accuracy_max * 1e3) / 1e3) << "</text>\n";
  }
  s << "</svg>\n";
  return s.str();
}

std::vector<std::string> write_report(const std::vector<DatasetResults>& results, const std::string& out_dir,
                                      const ReportFormats& formats) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw Error("cannot create '" + out_dir + "': " + ec.message());
  const std::filesystem::path dir(out_dir);
  std::vector<std::string> written;
  const auto rows = frontier_rows(results);
  if (formats.csv) {
    const auto results_path = (dir / "results.csv").string();
    write_results_csv(results, results_path);
    written.push_back(results_path);
    const auto frontier_path = (dir / "frontier.csv").string();
    write_frontier_csv(rows, frontier_path);
    written.push_back(frontier_path);
  }
  if (formats.json) {
    const auto path = (dir / "summary.json").string();
    nlohmann::json j = nlohmann::json::object();
    if (results.empty()) {
      j = {{"regimes", nlohmann::json::array()}, {"datasets", nlohmann::json::array()}};
    } else {
      j = summarize(results).to_json();
      j["table"] = summarize(results).table();
    }
    auto out = open_out(path);
    out << j.dump(2) << '\n';
    check_written(out, path);
    written.push_back(path);
  }
  if (formats.svg && !rows.empty()) {
    const auto path = (dir / "frontier.svg").string();
    auto out = open_out(path);
    out << frontier_svg(rows);
    check_written(out, path);
    written.push_back(path);
  }
  return written;
}

}  // namespace faircal
