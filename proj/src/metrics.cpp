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

#include "mmtraj/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "mmtraj/errors.hpp"
#include "mmtraj/synthgen.hpp"

namespace mmtraj {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

void CheckPaired(std::span<const double> x, std::size_t y_size, const char* what) {
  if (x.size() != y_size) throw DataError(std::string(what) + ": inputs differ in length");
}

struct ClassCounts {
  std::size_t positives = 0;
  std::size_t negatives = 0;
};

ClassCounts CountClasses(std::span<const int> labels) {
  ClassCounts c;
  for (int y : labels) (y != 0 ? c.positives : c.negatives)++;
  return c;
}

// Indices ordered by descending score.
std::vector<std::size_t> DescendingOrder(std::span<const double> scores) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  return order;
}

}  // namespace

double pearson_r(std::span<const double> x, std::span<const double> y) {
  CheckPaired(x, y.size(), "pearson_r");
  if (x.size() < 3) throw DataError("pearson_r needs at least 3 points");
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxx = 0.0, syy = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  if (sxx <= 0.0 || syy <= 0.0) throw DataError("pearson_r: zero variance");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

LinearFit linear_fit(std::span<const double> x, std::span<const double> y) {
  CheckPaired(x, y.size(), "linear_fit");
  if (x.size() < 3) throw DataError("linear_fit needs at least 3 points");
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxx = 0.0, syy = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  if (sxx <= 0.0) throw DataError("linear_fit: x has zero variance");
  LinearFit fit;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  fit.r_squared = syy > 0.0 ? std::clamp(sxy * sxy / (sxx * syy), 0.0, 1.0) : 0.0;
  return fit;
}

double auroc(std::span<const double> scores, std::span<const int> labels) {
  CheckPaired(scores, labels.size(), "auroc");
  const ClassCounts c = CountClasses(labels);
  if (c.positives == 0 || c.negatives == 0) throw DataError("auroc needs both classes");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double positive_rank_sum = 0.0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
    const double midrank = 0.5 * static_cast<double>(i + 1 + j);  // mean of ranks i+1..j
    for (std::size_t k = i; k < j; ++k) {
      if (labels[order[k]] != 0) positive_rank_sum += midrank;
    }
    i = j;
  }
  const double p = static_cast<double>(c.positives);
  const double n = static_cast<double>(c.negatives);
  return (positive_rank_sum - p * (p + 1.0) / 2.0) / (p * n);
}

double auprc(std::span<const double> scores, std::span<const int> labels) {
  CheckPaired(scores, labels.size(), "auprc");
  const ClassCounts c = CountClasses(labels);
  if (c.positives == 0) throw DataError("auprc needs at least one positive");
  const auto order = DescendingOrder(scores);
  double tp = 0.0, fp = 0.0, previous_recall = 0.0, ap = 0.0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) {
      (labels[order[j]] != 0 ? tp : fp) += 1.0;
      ++j;
    }
    const double recall = tp / static_cast<double>(c.positives);
    ap += (recall - previous_recall) * tp / (tp + fp);
    previous_recall = recall;
    i = j;
  }
  return ap;
}

SensSpec sens_spec(std::span<const double> scores, std::span<const int> labels, double threshold) {
  CheckPaired(scores, labels.size(), "sens_spec");
  double tp = 0, fn = 0, tn = 0, fp = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const bool flag = scores[i] >= threshold;
    if (labels[i] != 0) {
      (flag ? tp : fn) += 1;
    } else {
      (flag ? fp : tn) += 1;
    }
  }
  return {tp + fn > 0 ? tp / (tp + fn) : kNaN, tn + fp > 0 ? tn / (tn + fp) : kNaN};
}

double fbeta(double precision, double recall, double beta) {
  const double b2 = beta * beta;
  const double denom = b2 * precision + recall;
  return denom > 0.0 ? (1.0 + b2) * precision * recall / denom : 0.0;
}

std::vector<CurvePoint> threshold_curve(std::span<const double> scores,
                                        std::span<const int> labels, double beta) {
  CheckPaired(scores, labels.size(), "threshold_curve");
  const ClassCounts c = CountClasses(labels);
  const auto order = DescendingOrder(scores);
  std::vector<CurvePoint> curve;
  double tp = 0.0, fp = 0.0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) {
      (labels[order[j]] != 0 ? tp : fp) += 1.0;
      ++j;
    }
    CurvePoint pt;
    pt.threshold = scores[order[i]];
    pt.precision = tp / (tp + fp);
    pt.recall = c.positives > 0 ? tp / static_cast<double>(c.positives) : kNaN;
    pt.false_positive_rate = c.negatives > 0 ? fp / static_cast<double>(c.negatives) : kNaN;
    pt.fbeta = fbeta(pt.precision, c.positives > 0 ? pt.recall : 0.0, beta);
    curve.push_back(pt);
    i = j;
  }
  std::reverse(curve.begin(), curve.end());
  return curve;
}

std::optional<RocSummary> summarize_scores(std::span<const double> scores,
                                           std::span<const int> labels, double threshold) {
  const ClassCounts c = CountClasses(labels);
  if (c.positives == 0 || c.negatives == 0) return std::nullopt;
  RocSummary s;
  s.auroc = auroc(scores, labels);
  s.auprc = auprc(scores, labels);
  const SensSpec ss = sens_spec(scores, labels, threshold);
  s.sensitivity = ss.sensitivity;
  s.specificity = ss.specificity;
  s.threshold = threshold;
  s.instances = scores.size();
  s.positives = c.positives;
  return s;
}

std::vector<LinearFit> moment_comparison(const std::vector<Matrix>& observed,
                                         const std::vector<Matrix>& forecasted, int max_lag) {
  if (observed.size() != forecasted.size()) {
    throw DataError("moment_comparison: observed and forecasted cohorts differ in size");
  }
  for (std::size_t p = 0; p < observed.size(); ++p) {
    if (observed[p].rows() != forecasted[p].rows() || observed[p].cols() != forecasted[p].cols()) {
      throw DataError("moment_comparison: patient " + std::to_string(p) +
                      " has mismatched visit coverage");
    }
  }
  const Moments obs = empirical_moments(observed, max_lag);
  const Moments fc = empirical_moments(forecasted, max_lag);
  std::vector<LinearFit> fits;
  for (int lag = 0; lag <= max_lag; ++lag) {
    const Matrix& a = obs.lag_corr[static_cast<std::size_t>(lag)];
    const Matrix& b = fc.lag_corr[static_cast<std::size_t>(lag)];
    std::vector<double> x, y;
    for (std::size_t i = 0; i < a.rows(); ++i) {
      for (std::size_t j = 0; j < a.cols(); ++j) {
        if (lag == 0 && i == j) continue;
        if (std::isnan(a(i, j)) || std::isnan(b(i, j))) continue;
        x.push_back(a(i, j));
        y.push_back(b(i, j));
      }
    }
    LinearFit fit{kNaN, kNaN, kNaN};
    if (x.size() >= 3) {
      try {
        fit = linear_fit(x, y);
      } catch (const DataError&) {
        // constant observed coefficients: no fit
      }
    }
    fits.push_back(fit);
  }
  return fits;
}

MeanSd mean_sd(std::span<const double> values) {
  MeanSd out;
  double sum = 0.0;
  for (double v : values) {
    if (std::isnan(v)) continue;
    sum += v;
    ++out.count;
  }
  if (out.count == 0) return {kNaN, kNaN, 0};
  out.mean = sum / static_cast<double>(out.count);
  double ss = 0.0;
  for (double v : values) {
    if (!std::isnan(v)) ss += (v - out.mean) * (v - out.mean);
  }
  out.sd = out.count > 1 ? std::sqrt(ss / static_cast<double>(out.count - 1)) : 0.0;
  return out;
}

}  // namespace mmtraj
