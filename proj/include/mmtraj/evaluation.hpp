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

// Combined forecaster + annotator evaluation on validation patients: for
// every patient and every count n of observed visits, the next m visits are
// forecast from visits 0..n-1 only, the annotator reads the observed visits
// followed by the forecast mean trajectory, and its probability at the
// forecast visit n+m-1 is scored against the true label there.

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "mmtraj/annotator.hpp"
#include "mmtraj/crbm.hpp"
#include "mmtraj/forecaster.hpp"
#include "mmtraj/matrix.hpp"
#include "mmtraj/metrics.hpp"
#include "mmtraj/preprocess.hpp"

namespace mmtraj {

struct FoldModels {
  ForecasterParams forecaster;
  TransformParams lab_transform;  // 10 labs
  AnnotatorParams annotator;
  TransformParams feature_transform;  // 6 annotation features
  SflDifference mode = SflDifference::temporal;
  double threshold = 0.5;
};

struct CasePrediction {
  std::vector<double> scores;  // progression probability at n, n+1, ..., n+horizon-1
  Matrix forecast_mean;        // horizon x 10, transformed space
};

// Called with the patient index, the raw imputed visits 0..n-1 and the
// horizon. Never sees later visits.
using CasePredictor =
    std::function<CasePrediction(std::size_t patient, const Matrix& raw_history, std::size_t horizon)>;

// Forecaster trajectories (chains seeded per patient and n) followed by the
// annotator over observed + forecast raw values.
CasePredictor model_predictor(const FoldModels& models, const GibbsChainConfig& chains);

struct CombinedEvalConfig {
  std::size_t max_horizon = 5;
  std::size_t min_history = 1;
};

struct EvalInstance {
  std::size_t patient = 0;
  std::size_t n_prior = 0;
  std::size_t horizon = 0;
  double score = 0.0;
  int label = 0;
};

struct FeatureCorrelations {
  std::vector<double> forecast_r;         // r(forecast mean, actual), per feature
  std::vector<double> baseline_r;         // r(last observation, actual)
  std::vector<double> forecast_delta_r;   // r(forecast - last, actual - last)
};

struct CombinedEvaluation {
  std::size_t max_horizon = 0;
  std::vector<std::size_t> n_values;                          // grid rows
  std::vector<EvalInstance> instances;
  std::vector<std::optional<RocSummary>> per_horizon;         // pooled over n
  std::vector<std::vector<std::optional<RocSummary>>> grid;   // [row][horizon - 1]
  // One-step forecasts at every visit t >= min_history, per patient,
  // transformed space: observed rows, forecast means, last observations.
  std::vector<Matrix> observed_next;
  std::vector<Matrix> forecast_next;
  std::vector<Matrix> last_observed;
};

// raw_labs: imputed raw visits x 10 per patient; labels per visit. Cells with
// a single class are left empty.
CombinedEvaluation combined_pipeline_eval(const std::vector<Matrix>& raw_labs,
                                          const std::vector<std::vector<int>>& labels,
                                          const TransformParams& lab_transform,
                                          const CasePredictor& predictor,
                                          const CombinedEvalConfig& config, double threshold);

FeatureCorrelations feature_correlations(const CombinedEvaluation& eval);

}  // namespace mmtraj
