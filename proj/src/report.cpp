// Copyright 2026 The mmtraj Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "json.hpp"

#include "csv.hpp"
#include "mmtraj/errors.hpp"
#include "mmtraj/pipeline.hpp"
#include "svg.hpp"

namespace mmtraj {

namespace fs = std::filesystem;

namespace {

// Header-keyed CSV table; an absent file yields an empty table.
struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  static Table read(const fs::path& path) {
    Table t;
    std::ifstream in(path);
    if (!in) return t;
    std::string line;
    if (!std::getline(in, line)) return t;
    for (auto c : csv::split(csv::trim(line))) t.header.emplace_back(c);
    while (std::getline(in, line)) {
      if (csv::trim(line).empty()) continue;
      std::vector<std::string> row;
      for (auto c : csv::split(line)) row.emplace_back(csv::trim(c));
      row.resize(t.header.size());
      t.rows.push_back(std::move(row));
    }
    return t;
  }

  std::size_t col(const std::string& name) const {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw DataError("CSV column '" + name + "' missing");
    return static_cast<std::size_t>(it - header.begin());
  }

  std::vector<double> numbers(const std::string& name) const {
    const std::size_t c = col(name);
    std::vector<double> out;
    for (const auto& r : rows) out.push_back(csv::parse_double(r[c]).value_or(std::nan("")));
    return out;
  }

  bool empty() const { return rows.empty(); }
};

std::string FoldLabel(int fold) { return "fold " + std::to_string(fold); }

void Write(const fs::path& dir, const std::string& name, const std::string& content,
           std::vector<std::string>& written) {
  svg::write_file(dir / name, content);
  written.push_back(name);
}

void CurveFigures(const fs::path& out, const std::vector<int>& ok_folds, const fs::path& figures,
                  std::vector<std::string>& written) {
  std::vector<svg::Series> roc, prc, fbeta;
  for (int fold : ok_folds) {
    const Table v = Table::read(fold_directory(out, fold) / "annotator_curve_validation.csv");
    if (!v.empty()) {
      auto fpr = v.numbers("false_positive_rate");
      auto tpr = v.numbers("recall");
      fpr.insert(fpr.begin(), 1.0);  // threshold below every score
      tpr.insert(tpr.begin(), 1.0);
      fpr.push_back(0.0);
      tpr.push_back(0.0);
      roc.push_back({FoldLabel(fold), fpr, tpr, false});
      prc.push_back({FoldLabel(fold), v.numbers("recall"), v.numbers("precision"), false});
    }
    const Table t = Table::read(fold_directory(out, fold) / "fbeta_curve_train.csv");
    if (!t.empty()) fbeta.push_back({FoldLabel(fold), t.numbers("threshold"), t.numbers("fbeta"), false});
  }
  const auto unit = std::make_pair(0.0, 1.0);
  Write(figures, "annotator_roc.svg",
        roc.empty() ? svg::message("Annotator ROC", "no completed folds")
                    : svg::line_plot({"Annotator ROC (validation)", "false positive rate",
                                      "sensitivity", unit, unit, true},
                                     roc),
        written);
  Write(figures, "annotator_prc.svg",
        prc.empty() ? svg::message("Annotator PRC", "no completed folds")
                    : svg::line_plot({"Annotator precision-recall (validation)", "recall",
                                      "precision", unit, unit, false},
                                     prc),
        written);
  Write(figures, "fbeta_threshold.svg",
        fbeta.empty() ? svg::message("F-beta calibration", "no completed folds")
                      : svg::line_plot({"F-beta over threshold (training)", "threshold", "F-beta",
                                        unit, unit, false},
                                       fbeta),
        written);
}

void MetricFigures(const std::vector<MetricRow>& rows, const std::vector<int>& ok_folds,
                   std::size_t k, const fs::path& figures, std::vector<std::string>& written) {
  std::vector<svg::Series> horizon, moments;
  for (int fold : ok_folds) {
    svg::Series h{FoldLabel(fold), {}, {}, false};
    svg::Series m{FoldLabel(fold), {}, {}, false};
    for (const auto& r : rows) {
      if (r.fold != fold || !r.horizon) continue;
      if (r.metric == "combined_auroc" && !r.n_prior) {
        h.x.push_back(static_cast<double>(*r.horizon));
        h.y.push_back(r.value);
      }
      if (r.metric == "moment_r2") {
        m.x.push_back(static_cast<double>(*r.horizon));
        m.y.push_back(r.value);
      }
    }
    if (!h.x.empty()) horizon.push_back(h);
    if (!m.x.empty()) moments.push_back(m);
  }
  Write(figures, "combined_auroc_by_horizon.svg",
        horizon.empty() ? svg::message("Combined AUROC", "no completed folds")
                        : svg::line_plot({"Combined pipeline AUROC by horizon",
                                          "horizon (3-month steps)", "AUROC", {},
                                          std::make_pair(0.4, 1.0), false},
                                         horizon),
        written);
  Write(figures, "moment_r2_by_lag.svg",
        moments.empty() ? svg::message("Moment fits", "no completed folds")
                        : svg::line_plot({"Forecast vs observed correlation fit", "lag (visits)",
                                          "R squared", {}, std::make_pair(0.0, 1.0), false},
                                         moments),
        written);

  // Heatmap: fold-mean AUROC per (n_prior, horizon).
  std::map<std::pair<std::size_t, std::size_t>, std::vector<double>> cells;
  std::set<std::size_t> ns;
  std::size_t max_h = 0;
  for (const auto& r : rows) {
    if (r.metric != "combined_auroc" || !r.n_prior || !r.horizon) continue;
    cells[{*r.n_prior, *r.horizon}].push_back(r.value);
    ns.insert(*r.n_prior);
    max_h = std::max(max_h, *r.horizon);
  }
  if (cells.empty()) {
    Write(figures, "combined_auroc_grid.svg",
          svg::message("Combined AUROC grid", "no completed folds"), written);
  } else {
    const std::vector<std::size_t> n_list(ns.begin(), ns.end());
    Matrix values(n_list.size(), max_h, std::nan(""));
    std::vector<std::string> row_labels, col_labels;
    for (std::size_t r = 0; r < n_list.size(); ++r) {
      row_labels.push_back(std::to_string(n_list[r]));
      for (std::size_t m = 1; m <= max_h; ++m) {
        const auto it = cells.find({n_list[r], m});
        if (it != cells.end()) values(r, m - 1) = mean_sd(it->second).mean;
      }
    }
    for (std::size_t m = 1; m <= max_h; ++m) col_labels.push_back(std::to_string(3 * m) + " mo");
    Write(figures, "combined_auroc_grid.svg",
          svg::heatmap({"Combined AUROC, mean over " + std::to_string(ok_folds.size()) + " of " +
                            std::to_string(k) + " folds",
                        "horizon", "observed visits", {}, {}, false},
                       row_labels, col_labels, values, 0.5, 1.0),
          written);
  }
}

void FoldFigures(const fs::path& out, int fold, const fs::path& figures,
                 std::vector<std::string>& written) {
  const fs::path dir = fold_directory(out, fold);
  const std::string tag = "fold" + std::to_string(fold) + "_";
  const Table moments = Table::read(dir / "moments.csv");
  if (!moments.empty()) {
    const std::size_t lag_col = moments.col("lag");
    std::vector<svg::Series> series;
    for (std::string lag : {"0", "1", "3", "5"}) {
      svg::Series s{"lag " + lag, {}, {}, true};
      const std::size_t a = moments.col("feature_a"), b = moments.col("feature_b");
      const std::size_t o = moments.col("observed"), f = moments.col("forecast");
      for (const auto& r : moments.rows) {
        if (r[lag_col] != lag || (lag == "0" && r[a] == r[b])) continue;
        const auto x = csv::parse_double(r[o]);
        const auto y = csv::parse_double(r[f]);
        if (x && y) {
          s.x.push_back(*x);
          s.y.push_back(*y);
        }
      }
      series.push_back(s);
    }
    Write(figures, tag + "moment_scatter.svg",
          svg::line_plot({"Correlation coefficients, fold " + std::to_string(fold),
                          "observed", "forecast", std::make_pair(-1.0, 1.0),
                          std::make_pair(-1.0, 1.0), true},
                         series),
          written);
  }
  const Table sleeves = Table::read(dir / "sleeves.csv");
  if (!sleeves.empty()) {
    const std::string patient = sleeves.rows.front()[sleeves.col("patient_id")];
    for (std::string feature : {"mpr", "hb", "sfl_kappa"}) {
      std::vector<double> x, lo, hi, mid;
      svg::Series actual{"observed", {}, {}, false};
      for (const auto& r : sleeves.rows) {
        if (r[sleeves.col("patient_id")] != patient || r[sleeves.col("feature")] != feature) continue;
        const double t = csv::parse_double(r[sleeves.col("visit")]).value_or(0);
        actual.x.push_back(t);
        actual.y.push_back(csv::parse_double(r[sleeves.col("actual")]).value_or(std::nan("")));
        const auto m = csv::parse_double(r[sleeves.col("mean")]);
        if (m) {
          x.push_back(t);
          mid.push_back(*m);
          lo.push_back(csv::parse_double(r[sleeves.col("lo95")]).value_or(*m));
          hi.push_back(csv::parse_double(r[sleeves.col("hi95")]).value_or(*m));
        }
      }
      Write(figures, tag + "sleeve_" + feature + ".svg",
            svg::band_plot({"Patient " + patient + ", " + feature + " (transformed)", "visit",
                            feature, {}, {}, false},
                           x, lo, hi, mid, actual),
            written);
    }
  }
  const Table qq = Table::read(dir / "qq.csv");
  if (!qq.empty()) {
    std::map<std::string, svg::Series> by_feature;
    std::vector<std::string> order;
    for (const auto& r : qq.rows) {
      const std::string& name = r[qq.col("feature")];
      if (!by_feature.count(name)) {
        order.push_back(name);
        by_feature[name] = {name, {}, {}, true};
      }
      by_feature[name].x.push_back(csv::parse_double(r[qq.col("theoretical")]).value_or(0));
      by_feature[name].y.push_back(csv::parse_double(r[qq.col("sample")]).value_or(0));
    }
    std::vector<svg::Series> series;
    for (const auto& name : order) series.push_back(by_feature[name]);
    Write(figures, tag + "qq.svg",
          svg::line_plot({"Normal QQ of transformed training labs, fold " + std::to_string(fold),
                          "theoretical quantile", "sample quantile", {}, {}, true},
                         series),
          written);
  }
}

std::string Format(double v) {
  if (std::isnan(v)) return "n/a";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  return buf;
}

}  // namespace

void emit_report(const fs::path& out) {
  if (!fs::is_directory(out)) throw DataError("report directory " + out.string() + " does not exist");
  const fs::path figures = out / "figures";
  fs::create_directories(figures);

  std::size_t k = 0;
  {
    std::ifstream in(out / "manifest.json");
    if (in) {
      const auto manifest = nlohmann::json::parse(in, nullptr, false);
      if (!manifest.is_discarded() && manifest.contains("config")) {
        k = manifest["config"].value("k", 0);
      }
    }
  }
  std::map<int, std::pair<std::string, std::string>> status;
  const Table st = Table::read(out / "status.csv");
  for (const auto& r : st.rows) {
    const auto fold = csv::parse_int<int>(r[st.col("fold")]);
    if (fold) status[*fold] = {r[st.col("status")], r[st.col("message")]};
  }
  if (k == 0 && !status.empty()) k = static_cast<std::size_t>(status.rbegin()->first + 1);

  std::vector<int> ok_folds;
  for (const auto& [fold, s] : status) {
    if (s.first == "ok") ok_folds.push_back(fold);
  }
  std::vector<MetricRow> rows;
  if (fs::exists(out / "metrics.csv")) rows = read_metrics_csv(out / "metrics.csv");

  std::vector<std::string> written;
  CurveFigures(out, ok_folds, figures, written);
  MetricFigures(rows, ok_folds, k, figures, written);
  for (int fold : ok_folds) FoldFigures(out, fold, figures, written);

  std::ostringstream md;
  md << "# Cross-validation report\n\n## Folds\n\n| fold | status | note |\n|---|---|---|\n";
  for (std::size_t f = 0; f < k; ++f) {
    const auto it = status.find(static_cast<int>(f));
    const std::string s = it == status.end() || it->second.first != "ok"
                              ? (it == status.end() ? "missing" : it->second.first)
                              : "ok";
    md << "| " << f << " | " << s << " | " << (it == status.end() ? "" : it->second.second)
       << " |\n";
  }
  md << "\n## Summary (mean +- sd over completed folds)\n\n| metric | horizon | mean | sd | folds |\n"
     << "|---|---|---|---|---|\n";
  const Table summary = Table::read(out / "summary.csv");
  for (const auto& r : summary.rows) {
    if (!r[summary.col("n_prior")].empty()) continue;  // grid cells live in the CSV
    md << "| " << r[summary.col("metric")] << " | " << r[summary.col("horizon")] << " | "
       << Format(csv::parse_double(r[summary.col("mean")]).value_or(std::nan(""))) << " | "
       << Format(csv::parse_double(r[summary.col("sd")]).value_or(std::nan(""))) << " | "
       << r[summary.col("folds")] << " |\n";
  }
  md << "\n## Figures\n\n";
  for (const auto& name : written) md << "- figures/" << name << "\n";
  svg::write_file(out / "report.md", md.str());
}

}  // namespace mmtraj
