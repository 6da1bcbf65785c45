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


#include <cmath>

#include "doctest.h"
#include "mmtraj/evaluation.hpp"
#include "mmtraj/metrics.hpp"
#include "mmtraj/preprocess.hpp"
#include "support.hpp"

using namespace mmtraj;

namespace {

struct Toy {
  std::vector<Matrix> raw;
  std::vector<std::vector<int>> labels;
  TransformParams transform;
};

Toy MakeToy(std::size_t patients, std::uint64_t seed) {
  Rng rng(seed);
  Toy toy;
  for (std::size_t p = 0; p < patients; ++p) {
    const std::size_t visits = 2 + uniform_index(rng, 12);
    Matrix m(visits, kNumLabs);
    for (auto& v : m.values()) v = 0.5 + 4.0 * uniform01(rng);
    std::vector<int> y(visits);
    for (auto& v : y) v = uniform01(rng) < 0.3 ? 1 : 0;
    toy.raw.push_back(m);
    toy.labels.push_back(y);
  }
  toy.transform = fit_power_transform(stack_rows(toy.raw));
  return toy;
}

}  // namespace

TEST_CASE("cases cover every history length and horizon exactly once") {
  const Toy toy = MakeToy(30, 1);
  std::size_t calls = 0;
  const CasePredictor constant = [&](std::size_t, const Matrix&, std::size_t h) {
    ++calls;
    return CasePrediction{std::vector<double>(h, 0.5), Matrix(h, kNumLabs)};
  };
  const CombinedEvalConfig config;
  const CombinedEvaluation eval = combined_pipeline_eval(toy.raw, toy.labels, toy.transform, constant, config, 0.5);
  std::size_t expect_cases = 0, expect_instances = 0;
  for (const auto& m : toy.raw) {
    for (std::size_t n = 1; n < m.rows(); ++n) {
      ++expect_cases;
      expect_instances += std::min<std::size_t>(5, m.rows() - n);
    }
  }
  CHECK(calls == expect_cases);
  CHECK(eval.instances.size() == expect_instances);
  CHECK(eval.per_horizon.size() == 5);
  for (const auto& inst : eval.instances) {
    CHECK(inst.label == toy.labels[inst.patient][inst.n_prior + inst.horizon - 1]);
    CHECK(inst.n_prior + inst.horizon <= toy.raw[inst.patient].rows());
  }
  for (const auto& h : eval.per_horizon) {
    REQUIRE(h);
    CHECK(h->auroc == 0.5);
  }
  for (const auto& row : eval.grid) CHECK(row.size() == 5);
}

TEST_CASE("an oracle annotator on exact forecasts scores perfectly") {
  const Toy toy = MakeToy(60, 2);
  const CasePredictor oracle = [&](std::size_t p, const Matrix& history, std::size_t h) {
    CasePrediction out;
    const std::size_t n = history.rows();
    for (std::size_t m = 1; m <= h; ++m) out.scores.push_back(toy.labels[p][n + m - 1]);
    const Matrix truth = toy.transform.apply(toy.raw[p]);
    out.forecast_mean = Matrix(h, kNumLabs);
    for (std::size_t m = 0; m < h; ++m) {
      std::copy(truth.row(n + m).begin(), truth.row(n + m).end(), out.forecast_mean.row(m).begin());
    }
    return out;
  };
  const CombinedEvaluation eval =
      combined_pipeline_eval(toy.raw, toy.labels, toy.transform, oracle, CombinedEvalConfig{}, 0.5);
  for (const auto& h : eval.per_horizon) {
    REQUIRE(h);
    CHECK(h->auroc == 1.0);
    CHECK(h->auprc == 1.0);
    CHECK(h->sensitivity == 1.0);
    CHECK(h->specificity == 1.0);
  }
  std::size_t cells = 0;
  for (const auto& row : eval.grid) {
    for (const auto& cell : row) {
      if (cell) {
        CHECK(cell->auroc == 1.0);
        ++cells;
      }
    }
  }
  CHECK(cells > 0);
  const FeatureCorrelations r = feature_correlations(eval);
  for (double v : r.forecast_r) CHECK(v == doctest::Approx(1.0).epsilon(1e-12));
  for (double v : r.forecast_delta_r) CHECK(v == doctest::Approx(1.0).epsilon(1e-12));
  for (double v : r.baseline_r) CHECK(v < 0.5);
}

TEST_CASE("cells with a single class are left missing") {
  Toy toy = MakeToy(5, 3);
  for (auto& y : toy.labels) std::fill(y.begin(), y.end(), 0);
  toy.labels[0].back() = 1;
  const CasePredictor flat = [](std::size_t, const Matrix&, std::size_t h) {
    return CasePrediction{std::vector<double>(h, 0.1), Matrix(h, kNumLabs)};
  };
  const CombinedEvaluation eval =
      combined_pipeline_eval(toy.raw, toy.labels, toy.transform, flat, CombinedEvalConfig{}, 0.5);
  std::size_t present = 0;
  for (const auto& row : eval.grid) {
    for (const auto& cell : row) present += cell.has_value();
  }
  std::size_t with_both = 0;
  for (std::size_t row = 0; row < eval.n_values.size(); ++row) {
    for (std::size_t m = 1; m <= 5; ++m) {
      bool pos = false, neg = false;
      for (const auto& inst : eval.instances) {
        if (inst.n_prior == eval.n_values[row] && inst.horizon == m) (inst.label ? pos : neg) = true;
      }
      with_both += pos && neg;
    }
  }
  CHECK(present == with_both);
}

TEST_CASE("causality audit: the model predictor sees only the first n visits") {
  const Toy toy = MakeToy(12, 4);
  FoldModels models;
  models.forecaster = ForecasterParams::initialized(5);
  models.lab_transform = toy.transform;
  models.annotator = AnnotatorParams::initialized(6);
  std::vector<Matrix> features;
  for (const auto& m : toy.raw) features.push_back(derive_raw_features(m));
  models.feature_transform = fit_power_transform(stack_rows(features), annotation_feature_names(models.mode));
  GibbsChainConfig chains;
  chains.n_samples = 20;
  chains.seed = 7;
  const CasePredictor inner = model_predictor(models, chains);

  std::size_t audited = 0;
  const CasePredictor audit = [&](std::size_t p, const Matrix& history, std::size_t h) {
    const std::size_t n = history.rows();
    REQUIRE(n >= 1);
    CHECK(history == toy.raw[p].head(n));
    // Corrupting everything after visit n must not change the prediction.
    Matrix poisoned = toy.raw[p];
    for (std::size_t t = n; t < poisoned.rows(); ++t) {
      for (std::size_t f = 0; f < kNumLabs; ++f) poisoned(t, f) = 1e6;
    }
    const CasePrediction a = inner(p, history, h);
    const CasePrediction b = inner(p, poisoned.head(n), h);
    CHECK(a.scores == b.scores);
    CHECK(a.forecast_mean == b.forecast_mean);
    ++audited;
    return a;
  };
  const CombinedEvaluation eval =
      combined_pipeline_eval(toy.raw, toy.labels, toy.transform, audit, CombinedEvalConfig{}, 0.5);
  CHECK(audited > 0);
  CHECK(eval.instances.size() >= audited);
}

TEST_CASE("model predictor scores the observed history joined to the forecast mean") {
  const Toy toy = MakeToy(3, 8);
  FoldModels models;
  models.forecaster = ForecasterParams::initialized(1);
  models.lab_transform = toy.transform;
  models.annotator = AnnotatorParams::initialized(2);
  std::vector<Matrix> features;
  for (const auto& m : toy.raw) features.push_back(derive_raw_features(m));
  models.feature_transform = fit_power_transform(stack_rows(features), annotation_feature_names(models.mode));
  GibbsChainConfig chains;
  chains.n_samples = 30;
  chains.seed = 3;
  const CasePredictor predictor = model_predictor(models, chains);
  const std::size_t p = 0;
  const Matrix& raw = toy.raw[p];
  REQUIRE(raw.rows() >= 2);
  const std::size_t n = 1;
  const std::size_t h = std::min<std::size_t>(3, raw.rows() - n);
  const CasePrediction got = predictor(p, raw.head(n), h);

  GibbsChainConfig case_chains = chains;
  case_chains.seed = derive_seed(chains.seed, "combined.case", {p, n});
  const ForecastDistribution dist =
      forecast_trajectory(models.forecaster, toy.transform.apply(raw.head(n)), h, case_chains);
  Matrix joined = raw.head(n);
  const Matrix back = toy.transform.invert(dist.mean);
  for (std::size_t s = 0; s < h; ++s) joined.append_row(back.row(s));
  const auto probs = annotate(models.annotator, derive_features(joined, models.feature_transform));
  REQUIRE(got.scores.size() == h);
  for (std::size_t m = 0; m < h; ++m) CHECK(got.scores[m] == probs[n + m]);
  CHECK(got.forecast_mean == dist.mean);
}
