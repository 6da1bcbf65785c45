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
#include <sstream>

#include "doctest.h"
#include "mmtraj/errors.hpp"
#include "mmtraj/forecaster.hpp"
#include "mmtraj/metrics.hpp"
#include "mmtraj/preprocess.hpp"
#include "mmtraj/synthgen.hpp"
#include "support.hpp"

using namespace mmtraj;

namespace {

const std::vector<double> kConstant = {0.5, -0.3, 1.0, 0.0, -1.2, 0.8, 0.2, -0.6, 0.4, -0.1};

std::vector<Matrix> ConstantCohort(std::size_t patients, std::size_t visits) {
  Matrix m(visits, kNumLabs);
  for (std::size_t t = 0; t < visits; ++t) std::copy(kConstant.begin(), kConstant.end(), m.row(t).begin());
  return std::vector<Matrix>(patients, m);
}

ForecasterParams TrainConstantModel() {
  ForecasterTrainConfig config;
  config.epochs = 150;
  config.learning_rate = 3e-3;
  config.seed = 4;
  return train_forecaster(ConstantCohort(40, 8), config);
}

const ForecasterParams& ConstantModel() {
  static const ForecasterParams model = TrainConstantModel();
  return model;
}

GibbsChainConfig Chains(std::uint64_t seed, std::size_t n = 1000) {
  GibbsChainConfig c;
  c.seed = seed;
  c.n_samples = n;
  return c;
}

ForecasterParams SmallRandomModel(std::uint64_t seed) {
  ForecasterParams p = ForecasterParams::initialized(seed);
  return p;
}

}  // namespace

TEST_CASE("the forecaster has 11,572 parameters") {
  const ForecasterParams p = ForecasterParams::zeros();
  CHECK(p.parameter_count() == 11572);
  CHECK(p.lstm.parameter_count() + p.nets.parameter_count() == 5632 + 5940);
  CHECK_NOTHROW(p.check_parameter_count());
  ForecasterParams wrong = p;
  wrong.nets = ConditioningNets::zeros(kContextSize, kVisibleUnits, 8);
  CHECK_THROWS(wrong.check_parameter_count());
}

TEST_CASE("training pairs pair every visit after the first with its history") {
  Rng rng(1);
  const std::vector<Matrix> series = {testing::random_matrix(3, kNumLabs, rng),
                                      testing::random_matrix(2, kNumLabs, rng)};
  const auto pairs = make_training_pairs(series);
  const std::vector<TrainingPair> expect = {{0, 1}, {0, 2}, {1, 1}};
  CHECK(pairs == expect);

  SynthConfig c;
  c.n_patients = 700;
  const Cohort cohort = synthesize_cohort(c);
  std::vector<Matrix> all;
  for (const auto& p : cohort.patients) all.push_back(p.lab_matrix());
  const std::size_t n = make_training_pairs(all).size();
  CHECK(n == cohort.visit_count() - 700);
  CHECK(n > 11500);
  CHECK(n < 13500);
}

TEST_CASE("forecaster contrastive gradient passes finite differences on every parameter") {
  Rng rng(21);
  std::vector<Matrix> series;
  for (std::size_t p = 0; p < 3; ++p) series.push_back(testing::random_matrix(4 + p, kNumLabs, rng));
  const std::vector<std::pair<std::size_t, std::size_t>> batch = {
      {0, 1}, {0, 3}, {1, 2}, {1, 4}, {2, 1}, {2, 5}};
  std::vector<std::vector<double>> negatives;
  for (std::size_t i = 0; i < batch.size(); ++i) negatives.push_back(testing::random_vector(kNumLabs, rng));
  const NegativeSampler fixed = [&](std::size_t i, std::span<const double>, const CrbmCond&) {
    return negatives[i];
  };
  ForecasterParams params = ForecasterParams::initialized(8);
  ForecasterParams grads = ForecasterParams::zeros();
  const double loss0 = forecaster_contrastive_loss(params, series, batch, fixed, grads);
  auto loss = [&] {
    ForecasterParams scratch = ForecasterParams::zeros();
    return forecaster_contrastive_loss(params, series, batch, fixed, scratch);
  };
  const auto report = nn::grad_check(params.tensors(), std::as_const(grads).tensors(), loss);
  CHECK(report.checked == ForecasterParams::kParameterCount);
  CHECK(report.max_relative_error < 1e-4);

  // The loss is the mean free-energy gap with each context encoded afresh.
  double expect = 0.0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto [p, t] = batch[i];
    const nn::LstmState state = encode(params, series[p].head(t));
    const CrbmCond cond = condition(params.nets, state.hidden);
    expect += free_energy(series[p].row(t), cond) - free_energy(negatives[i], cond);
  }
  CHECK(loss0 == doctest::Approx(expect / batch.size()).epsilon(1e-12));
}

TEST_CASE("untrained zero parameters forecast the zero vector") {
  Rng rng(2);
  const Matrix history = testing::random_matrix(4, kNumLabs, rng);
  const ForecastDistribution d = forecast_next(ForecasterParams::zeros(), history, Chains(7));
  const double sigma = 1.0 / std::sqrt(std::log(2.0) + kPrecisionFloor);
  for (std::size_t f = 0; f < kNumLabs; ++f) {
    CHECK(std::abs(d.mean(0, f)) < 4.0 * sigma / std::sqrt(1000.0));
  }
}

TEST_CASE("forecast distributions are reproducible and internally consistent") {
  const ForecasterParams model = SmallRandomModel(3);
  Rng rng(3);
  const Matrix history = testing::random_matrix(5, kNumLabs, rng);
  const ForecastDistribution a = forecast_trajectory(model, history, 4, Chains(9, 300));
  const ForecastDistribution b = forecast_trajectory(model, history, 4, Chains(9, 300));
  CHECK(a.samples == b.samples);
  CHECK(a.mean == b.mean);
  REQUIRE(a.samples.size() == 300 * 4 * kNumLabs);

  const ForecastDistribution next = forecast_next(model, history, Chains(9, 300));
  const ForecastDistribution one = forecast_trajectory(model, history, 1, Chains(9, 300));
  CHECK(next.samples == one.samples);

  for (std::size_t step = 0; step < 4; ++step) {
    for (std::size_t f = 0; f < kNumLabs; ++f) {
      std::vector<double> column;
      for (std::size_t s = 0; s < 300; ++s) column.push_back(a.sample(s, step, f));
      double mean = 0.0;
      for (double v : column) mean += v / 300.0;
      CHECK(a.mean(step, f) == doctest::Approx(mean).epsilon(1e-12));
      CHECK(a.mean(step, f) >= *std::min_element(column.begin(), column.end()));
      CHECK(a.mean(step, f) <= *std::max_element(column.begin(), column.end()));
      CHECK(a.lo95(step, f) == percentile(column, 0.025));
      CHECK(a.hi95(step, f) == percentile(column, 0.975));
      CHECK(a.lo95(step, f) <= a.mean(step, f));
      CHECK(a.mean(step, f) <= a.hi95(step, f));
    }
  }
  // Identical histories still give distinct chains at step 2.
  double spread = 0.0;
  for (std::size_t s = 1; s < 300; ++s) spread += std::abs(a.sample(s, 1, 0) - a.sample(0, 1, 0));
  CHECK(spread > 0.0);
  CHECK(a.trajectory(5).rows() == 4);
  CHECK(a.trajectory(5)(2, 3) == a.sample(5, 2, 3));
}

TEST_CASE("percentiles interpolate between order statistics") {
  const std::vector<double> v = {4.0, 1.0, 3.0, 2.0};
  CHECK(percentile(v, 0.0) == 1.0);
  CHECK(percentile(v, 1.0) == 4.0);
  CHECK(percentile(v, 0.5) == 2.5);
  CHECK(percentile(v, 0.025) == doctest::Approx(1.075));
  CHECK_THROWS(percentile({}, 0.5));
}

TEST_CASE("forecasts depend only on the history they are given") {
  const ForecasterParams model = SmallRandomModel(5);
  Rng rng(5);
  const Matrix full = testing::random_matrix(8, kNumLabs, rng);
  for (std::size_t t = 1; t < 8; ++t) {
    Matrix edited = full;
    for (std::size_t k = t; k < 8; ++k) {
      for (std::size_t f = 0; f < kNumLabs; ++f) edited(k, f) = -full(k, f) + 5.0;
    }
    CHECK(encode(model, full.head(t)) == encode(model, edited.head(t)));
    const auto a = forecast_trajectory(model, full.head(t), 2, Chains(1, 50));
    const auto b = forecast_trajectory(model, edited.head(t), 2, Chains(1, 50));
    CHECK(a.samples == b.samples);
  }
}

TEST_CASE("the spread of the ensemble mean matches the Monte Carlo standard error") {
  const ForecasterParams model = SmallRandomModel(6);
  Rng rng(6);
  const Matrix history = testing::random_matrix(3, kNumLabs, rng);
  constexpr int kRepeats = 100;
  std::vector<std::vector<double>> means(kNumLabs);
  std::vector<double> within(kNumLabs, 0.0);
  for (int r = 0; r < kRepeats; ++r) {
    const ForecastDistribution d = forecast_next(model, history, Chains(1000 + r));
    for (std::size_t f = 0; f < kNumLabs; ++f) {
      means[f].push_back(d.mean(0, f));
      double var = 0.0;
      for (std::size_t s = 0; s < d.n_samples; ++s) var += std::pow(d.sample(s, 0, f) - d.mean(0, f), 2);
      within[f] += var / (d.n_samples - 1) / kRepeats;
    }
  }
  for (std::size_t f = 0; f < kNumLabs; ++f) {
    const MeanSd m = mean_sd(means[f]);
    const double ratio = m.sd * m.sd / (within[f] / 1000.0);
    CAPTURE(f);
    // 99 degrees of freedom: the variance ratio has relative sd about 0.14.
    CHECK(ratio > 0.6);
    CHECK(ratio < 1.5);
  }
}

TEST_CASE("training is deterministic and checkpoints round-trip") {
  Rng rng(7);
  std::vector<Matrix> series;
  for (int p = 0; p < 5; ++p) series.push_back(testing::random_matrix(4, kNumLabs, rng));
  ForecasterTrainConfig config;
  config.epochs = 2;
  config.batch_size = 4;
  config.seed = 8;
  const auto dir = testing::scratch_dir("forecaster");
  const ForecasterParams a = train_forecaster(series, config);
  save_forecaster(dir / "a", a);
  save_forecaster(dir / "b", train_forecaster(series, config));
  CHECK(testing::read_file(dir / "a.bin") == testing::read_file(dir / "b.bin"));
  CHECK(testing::read_file(dir / "a.manifest.csv") == testing::read_file(dir / "b.manifest.csv"));
  const ForecasterParams back = load_forecaster(dir / "a");
  CHECK(back.lstm.w_ih == a.lstm.w_ih);
  CHECK(back.nets.weights_net.weight == a.nets.weights_net.weight);
  config.seed = 9;
  save_forecaster(dir / "c", train_forecaster(series, config));
  CHECK(testing::read_file(dir / "a.bin") != testing::read_file(dir / "c.bin"));
}

TEST_CASE("invalid training input is rejected") {
  ForecasterTrainConfig config;
  config.epochs = 1;
  CHECK_THROWS_AS(train_forecaster({Matrix(1, kNumLabs)}, config), DataError);
  CHECK_THROWS_AS(train_forecaster({Matrix(3, 4)}, config), DataError);
  Matrix bad(3, kNumLabs, 1e300);
  bad(1, 0) = -1e300;
  CHECK_THROWS_AS(train_forecaster({bad}, config), NumericalError);
}

TEST_CASE("a model trained on constant sequences forecasts the constant") {
  const ForecasterParams& model = ConstantModel();
  const Matrix history = ConstantCohort(1, 5).front();
  const ForecastDistribution d = forecast_trajectory(model, history, 3, Chains(11));
  for (std::size_t step = 0; step < 3; ++step) {
    for (std::size_t f = 0; f < kNumLabs; ++f) {
      CAPTURE(step);
      CAPTURE(f);
      CHECK(std::abs(d.mean(step, f) - kConstant[f]) < 0.1);
    }
  }
}

TEST_CASE("sleeves of the constant model cover the constant") {
  const ForecasterParams& model = ConstantModel();
  std::size_t covered = 0, total = 0;
  for (std::size_t len : {2u, 4u, 7u}) {
    const Matrix history = ConstantCohort(1, len).front();
    for (std::uint64_t run = 0; run < 5; ++run) {
      const ForecastDistribution d = forecast_trajectory(model, history, 3, Chains(100 + run, 400));
      for (std::size_t step = 0; step < 3; ++step) {
        for (std::size_t f = 0; f < kNumLabs; ++f) {
          covered += d.lo95(step, f) <= kConstant[f] && kConstant[f] <= d.hi95(step, f);
          ++total;
        }
      }
    }
  }
  CHECK(double(covered) >= 0.95 * double(total));
}

TEST_CASE("forecast CSV columns") {
  const ForecastDistribution d =
      forecast_next(ForecasterParams::zeros(), Matrix(2, kNumLabs), Chains(1, 20));
  std::ostringstream plain, raw;
  write_forecast_csv(plain, "P", d, nullptr, true);
  CHECK(plain.str().rfind("patient_id,step,feature,mean,lo95,hi95\nP,1,hb,", 0) == 0);
  TransformParams t;
  for (std::size_t f = 0; f < kNumLabs; ++f) t.features.push_back({std::string(kLabNames[f]), 1.0, 0.0, 1.0});
  write_forecast_csv(raw, "P", d, &t, true);
  CHECK(raw.str().rfind("patient_id,step,feature,mean,lo95,hi95,mean_raw,lo95_raw,hi95_raw\n", 0) == 0);
}
