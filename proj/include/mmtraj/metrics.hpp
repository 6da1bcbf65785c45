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

#pragma once

// Validation statistics: correlations, linear fits, ranking metrics and the
// F-beta threshold sweep.

#include <optional>
#include <span>
#include <vector>

#include "mmtraj/matrix.hpp"

namespace mmtraj {

// Product-moment correlation. Throws DataError for fewer than 3 points,
// unequal lengths or a zero variance.
double pearson_r(std::span<const double> x, std::span<const double> y);

struct LinearFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r_squared = 0.0;
};

// Least squares y = slope * x + intercept. r_squared is 0 when y is
// constant. Throws DataError for fewer than 3 points or constant x.
LinearFit linear_fit(std::span<const double> x, std::span<const double> y);

// Probability that a random positive outranks a random negative, ties
// counted one half (midrank statistic). Throws DataError unless both classes
// are present.
double auroc(std::span<const double> scores, std::span<const int> labels);

// Step-wise average precision: sum_k (R_k - R_{k-1}) P_k over descending
// distinct score thresholds. Throws DataError without positives.
double auprc(std::span<const double> scores, std::span<const int> labels);

struct SensSpec {
  double sensitivity = 0.0;
  double specificity = 0.0;
};
// Flags score >= threshold. A class without members yields NaN for its rate.
SensSpec sens_spec(std::span<const double> scores, std::span<const int> labels, double threshold);

// (1 + b^2) P R / (b^2 P + R), 0 when P = R = 0.
double fbeta(double precision, double recall, double beta);

struct CurvePoint {
  double threshold = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double false_positive_rate = 0.0;
  double fbeta = 0.0;
};

// One point per distinct score, ascending threshold, flags score >= threshold.
// fbeta is filled with the given beta.
std::vector<CurvePoint> threshold_curve(std::span<const double> scores,
                                        std::span<const int> labels, double beta = 1.0);

struct RocSummary {
  double auroc = 0.0;
  double auprc = 0.0;
  double sensitivity = 0.0;
  double specificity = 0.0;
  double threshold = 0.0;
  std::size_t instances = 0;
  std::size_t positives = 0;
};

// Empty when a class is missing.
std::optional<RocSummary> summarize_scores(std::span<const double> scores,
                                           std::span<const int> labels, double threshold);

// Fits forecasted against observed moment coefficients, one fit per lag
// 0..max_lag. Lag 0 uses the off-diagonal cross-correlations; other lags use
// every entry. Entries missing on either side are skipped; a lag with fewer
// than 3 usable entries gets a NaN fit.
std::vector<LinearFit> moment_comparison(const std::vector<Matrix>& observed,
                                         const std::vector<Matrix>& forecasted, int max_lag);

struct MeanSd {
  double mean = 0.0;
  double sd = 0.0;  // sample sd, 0 for a single value
  std::size_t count = 0;
};
// NaN entries are ignored.
MeanSd mean_sd(std::span<const double> values);

}  // namespace mmtraj
