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

#include "mmtraj/evaluation.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include "mmtraj/errors.hpp"

namespace mmtraj {

CasePredictor model_predictor(const FoldModels& models, const GibbsChainConfig& chains) {
  validate(chains);
  return [&models, chains](std::size_t patient, const Matrix& raw_history, std::size_t horizon) {
    const std::size_t n = raw_history.rows();
    GibbsChainConfig config = chains;
    config.seed = derive_seed(chains.seed, "combined.case", {patient, n});
    const Matrix history = models.lab_transform.apply(raw_history);
    ForecastDistribution dist = forecast_trajectory(models.forecaster, history, horizon, config);
    Matrix sequence = raw_history;
    const Matrix raw_forecast = models.lab_transform.invert(dist.mean);
    for (std::size_t s = 0; s < horizon; ++s) sequence.append_row(raw_forecast.row(s));
    const auto probs =
        annotate(models.annotator, derive_features(sequence, models.feature_transform, models.mode));
    CasePrediction out;
    out.scores.assign(probs.begin() + static_cast<std::ptrdiff_t>(n), probs.end());
    out.forecast_mean = std::move(dist.mean);
    return out;
  };
}

CombinedEvaluation combined_pipeline_eval(const std::vector<Matrix>& raw_labs,
                                          const std::vector<std::vector<int>>& labels,
                                          const TransformParams& lab_transform,
                                          const CasePredictor& predictor,
                                          const CombinedEvalConfig& config, double threshold) {
  if (raw_labs.size() != labels.size()) throw DataError("labels missing for some patients");
  if (config.max_horizon < 1 || config.min_history < 1) {
    throw std::invalid_argument("combined evaluation needs max_horizon >= 1 and min_history >= 1");
  }
  CombinedEvaluation eval;
  eval.max_horizon = config.max_horizon;
  std::size_t longest = 0;
  for (const auto& m : raw_labs) longest = std::max(longest, m.rows());
  for (std::size_t n = config.min_history; n < longest; ++n) eval.n_values.push_back(n);

  for (std::size_t p = 0; p < raw_labs.size(); ++p) {
    const Matrix& raw = raw_labs[p];
    const std::size_t visits = raw.rows();
    if (labels[p].size() != visits) throw DataError("label count differs from visit count");
    const Matrix transformed = lab_transform.apply(raw);
    Matrix observed, forecast, last;
    for (std::size_t n = config.min_history; n < visits; ++n) {
      const std::size_t horizon = std::min(config.max_horizon, visits - n);
      const CasePrediction pred = predictor(p, raw.head(n), horizon);
      if (pred.scores.size() != horizon || pred.forecast_mean.rows() != horizon) {
        throw std::logic_error("case predictor returned the wrong horizon");
      }
      for (std::size_t m = 1; m <= horizon; ++m) {
        eval.instances.push_back({p, n, m, pred.scores[m - 1], labels[p][n + m - 1]});
      }
      observed.append_row(transformed.row(n));
      forecast.append_row(pred.forecast_mean.row(0));
      last.append_row(transformed.row(n - 1));
    }
    eval.observed_next.push_back(std::move(observed));
    eval.forecast_next.push_back(std::move(forecast));
    eval.last_observed.push_back(std::move(last));
  }

  // Pooled per horizon, then per (n, m) cell; instances are in fixed order.
  eval.per_horizon.resize(config.max_horizon);
  eval.grid.assign(eval.n_values.size(),
                   std::vector<std::optional<RocSummary>>(config.max_horizon));
  for (std::size_t m = 1; m <= config.max_horizon; ++m) {
    std::vector<double> scores;
    std::vector<int> truth;
    std::vector<std::vector<double>> cell_scores(eval.n_values.size());
    std::vector<std::vector<int>> cell_truth(eval.n_values.size());
    for (const auto& inst : eval.instances) {
      if (inst.horizon != m) continue;
      scores.push_back(inst.score);
      truth.push_back(inst.label);
      const std::size_t row = inst.n_prior - config.min_history;
      cell_scores[row].push_back(inst.score);
      cell_truth[row].push_back(inst.label);
    }
    eval.per_horizon[m - 1] = summarize_scores(scores, truth, threshold);
    for (std::size_t row = 0; row < eval.n_values.size(); ++row) {
      eval.grid[row][m - 1] = summarize_scores(cell_scores[row], cell_truth[row], threshold);
    }
  }
  return eval;
}

FeatureCorrelations feature_correlations(const CombinedEvaluation& eval) {
  const Matrix observed = stack_rows(eval.observed_next);
  const Matrix forecast = stack_rows(eval.forecast_next);
  const Matrix last = stack_rows(eval.last_observed);
  FeatureCorrelations out;
  const double nan = std::numeric_limits<double>::quiet_NaN();
  auto safe_r = [&](const std::vector<double>& x, const std::vector<double>& y) {
    try {
      return pearson_r(x, y);
    } catch (const DataError&) {
      return nan;
    }
  };
  for (std::size_t f = 0; f < observed.cols(); ++f) {
    std::vector<double> actual, fc, lo, d_actual, d_fc;
    for (std::size_t r = 0; r < observed.rows(); ++r) {
      actual.push_back(observed(r, f));
      fc.push_back(forecast(r, f));
      lo.push_back(last(r, f));
      d_actual.push_back(observed(r, f) - last(r, f));
      d_fc.push_back(forecast(r, f) - last(r, f));
    }
    out.forecast_r.push_back(safe_r(fc, actual));
    out.baseline_r.push_back(safe_r(lo, actual));
    out.forecast_delta_r.push_back(safe_r(d_fc, d_actual));
  }
  return out;
}

}  // namespace mmtraj
