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
#include "mmtraj/annotator.hpp"
#include "mmtraj/errors.hpp"
#include "mmtraj/metrics.hpp"
#include "mmtraj/preprocess.hpp"
#include "mmtraj/synthgen.hpp"
#include "support.hpp"

using namespace mmtraj;

namespace {

Matrix RawLabs(std::size_t visits, Rng& rng) {
  Matrix m(visits, kNumLabs);
  for (auto& v : m.values()) v = 0.5 + 5.0 * uniform01(rng);
  return m;
}

AnnotatorParams RandomParams(std::uint64_t seed, double scale = 0.4) {
  AnnotatorParams p = AnnotatorParams::zeros();
  Rng rng(seed);
  std::normal_distribution<double> normal(0.0, scale);
  for (auto& t : p.tensors()) {
    for (double& v : t.data) v = normal(rng);
  }
  return p;
}

struct Split {
  std::vector<AnnotatedSeries> train;
  std::vector<AnnotatedSeries> validation;
};

// Rule-labelled synthetic cohort, first 700 patients for training.
Split RuleLabelledSplit(bool shuffle_labels) {
  const Cohort cohort = synthesize_cohort(SynthConfig{});
  std::vector<Matrix> raw_features;
  std::vector<std::vector<int>> labels;
  for (const auto& p : cohort.patients) {
    raw_features.push_back(derive_raw_features(p));
    std::vector<int> y;
    for (bool b : p.labels()) y.push_back(b ? 1 : 0);
    labels.push_back(y);
  }
  constexpr std::size_t kTrain = 700;
  if (shuffle_labels) {
    // Training and held-out labels are permuted separately.
    Rng rng(99);
    for (const auto [begin, end] : {std::pair{std::size_t{0}, kTrain}, std::pair{kTrain, labels.size()}}) {
      std::vector<int> pooled;
      for (std::size_t p = begin; p < end; ++p) pooled.insert(pooled.end(), labels[p].begin(), labels[p].end());
      shuffle(std::span<int>(pooled), rng);
      std::size_t k = 0;
      for (std::size_t p = begin; p < end; ++p) {
        for (auto& y : labels[p]) y = pooled[k++];
      }
    }
  }
  const TransformParams transform = fit_power_transform(
      stack_rows({raw_features.begin(), raw_features.begin() + kTrain}),
      annotation_feature_names(SflDifference::temporal));
  Split s;
  for (std::size_t p = 0; p < raw_features.size(); ++p) {
    AnnotatedSeries a{transform.apply(raw_features[p]), labels[p]};
    (p < kTrain ? s.train : s.validation).push_back(std::move(a));
  }
  return s;
}

double HeldOutAuroc(const AnnotatorParams& params, const std::vector<AnnotatedSeries>& data) {
  std::vector<double> scores;
  std::vector<int> labels;
  for (const auto& a : data) {
    const auto p = annotate(params, a.features);
    scores.insert(scores.end(), p.begin(), p.end());
    labels.insert(labels.end(), a.labels.begin(), a.labels.end());
  }
  return auroc(scores, labels);
}

}  // namespace

TEST_CASE("the annotator has 530 parameters") {
  const AnnotatorParams p = AnnotatorParams::zeros();
  CHECK(p.parameter_count() == 530);
  CHECK(AnnotatorParams::kParameterCount == 530);
  CHECK_NOTHROW(p.check_parameter_count());
  CHECK(p.lstm.parameter_count() == 512);
  CHECK(p.head.parameter_count() == 18);
  AnnotatorParams wrong = p;
  wrong.head = nn::DenseParams::zeros(8, 3);
  CHECK_THROWS(wrong.check_parameter_count());
}

TEST_CASE("annotation features") {
  Rng rng(1);
  SUBCASE("equal light chains give a unit ratio") {
    Matrix raw = RawLabs(5, rng);
    for (std::size_t t = 0; t < 5; ++t) raw(t, index_of(Lab::sfl_lambda)) = raw(t, index_of(Lab::sfl_kappa));
    const Matrix f = derive_raw_features(raw);
    for (std::size_t t = 0; t < 5; ++t) CHECK(f(t, 3) == 1.0);
  }
  SUBCASE("a constant kappa has zero deltas and the first delta is zero") {
    Matrix raw = RawLabs(6, rng);
    for (std::size_t t = 0; t < 6; ++t) raw(t, index_of(Lab::sfl_kappa)) = 2.5;
    const Matrix f = derive_raw_features(raw);
    REQUIRE(f.rows() == 6);
    REQUIRE(f.cols() == kAnnotationFeatures);
    for (std::size_t t = 0; t < 6; ++t) CHECK(f(t, 4) == 0.0);
    CHECK(f(0, 5) == 0.0);
    for (std::size_t t = 1; t < 6; ++t) {
      CHECK(f(t, 5) == raw(t, index_of(Lab::sfl_lambda)) - raw(t - 1, index_of(Lab::sfl_lambda)));
    }
  }
  SUBCASE("columns are mpr, kappa, lambda and the floored ratio") {
    Matrix raw = RawLabs(3, rng);
    raw(1, index_of(Lab::sfl_lambda)) = 0.0;
    const Matrix f = derive_raw_features(raw);
    for (std::size_t t = 0; t < 3; ++t) {
      CHECK(f(t, 0) == raw(t, index_of(Lab::mpr)));
      CHECK(f(t, 1) == raw(t, index_of(Lab::sfl_kappa)));
      CHECK(f(t, 2) == raw(t, index_of(Lab::sfl_lambda)));
    }
    CHECK(f(1, 3) == raw(1, index_of(Lab::sfl_kappa)) / kRatioFloor);
  }
  SUBCASE("involved-minus-uninvolved mode") {
    const Matrix raw = RawLabs(4, rng);
    const Matrix f = derive_raw_features(raw, SflDifference::involved_minus_uninvolved);
    for (std::size_t t = 0; t < 4; ++t) {
      const double d = raw(t, index_of(Lab::sfl_kappa)) - raw(t, index_of(Lab::sfl_lambda));
      CHECK(f(t, 4) == d);
      CHECK(f(t, 5) == std::abs(d));
    }
  }
  SUBCASE("labs outside the six inputs never matter") {
    Matrix raw = RawLabs(4, rng);
    const Matrix before = derive_raw_features(raw);
    for (Lab lab : {Lab::hb, Lab::ca, Lab::cr, Lab::ldh, Lab::alb, Lab::b2m, Lab::wbc}) {
      for (std::size_t t = 0; t < 4; ++t) raw(t, index_of(lab)) += 17.0;
    }
    CHECK(derive_raw_features(raw) == before);
  }
}

TEST_CASE("upsampling balances the classes") {
  std::vector<int> labels(100, 0);
  for (int i = 0; i < 7; ++i) labels[i * 13] = 1;
  const auto idx = upsample_balance(labels, 5);
  CHECK(idx.size() == 186);
  std::size_t pos = 0;
  for (auto i : idx) pos += labels[i];
  CHECK(pos == 93);
  for (std::size_t i = 0; i < 100; ++i) CHECK(idx[i] == i);
  CHECK(upsample_balance(labels, 5) == idx);
  CHECK(upsample_balance(labels, 6) != idx);

  const std::vector<int> balanced = {0, 1, 1, 0};
  CHECK(upsample_balance(balanced, 1).size() == 4);
  CHECK_THROWS_AS(upsample_balance(std::vector<int>{0, 0}, 1), DataError);
}

TEST_CASE("annotate") {
  Rng rng(2);
  const Matrix features = testing::random_matrix(9, kAnnotationFeatures, rng);
  SUBCASE("zero parameters give exactly one half") {
    for (double p : annotate(AnnotatorParams::zeros(), features)) CHECK(p == 0.5);
  }
  SUBCASE("probabilities are causal in the sequence") {
    const AnnotatorParams params = RandomParams(3);
    const auto full = annotate(params, features);
    REQUIRE(full.size() == 9);
    for (double p : full) {
      CHECK(p > 0.0);
      CHECK(p < 1.0);
    }
    for (std::size_t t = 0; t < 9; ++t) {
      Matrix edited = features;
      for (std::size_t k = t + 1; k < 9; ++k) {
        for (std::size_t f = 0; f < kAnnotationFeatures; ++f) edited(k, f) += 3.0;
      }
      const auto again = annotate(params, edited);
      for (std::size_t k = 0; k <= t; ++k) CHECK(again[k] == full[k]);
    }
  }
}

TEST_CASE("annotator gradient passes finite differences on every parameter") {
  Rng rng(4);
  std::vector<AnnotatedSeries> data;
  for (int p = 0; p < 3; ++p) {
    AnnotatedSeries a;
    a.features = testing::random_matrix(5 + p, kAnnotationFeatures, rng);
    for (std::size_t t = 0; t < a.features.rows(); ++t) a.labels.push_back(uniform01(rng) < 0.4);
    data.push_back(a);
  }
  const std::vector<std::pair<std::size_t, std::size_t>> instances = {
      {0, 0}, {0, 4}, {1, 2}, {1, 5}, {2, 1}, {2, 6}, {2, 6}};
  AnnotatorParams params = RandomParams(5);
  AnnotatorParams grads = AnnotatorParams::zeros();
  annotator_loss_and_gradient(params, data, instances, grads);
  auto loss = [&] {
    AnnotatorParams scratch = AnnotatorParams::zeros();
    return annotator_loss_and_gradient(params, data, instances, scratch);
  };
  const auto report = nn::grad_check(params.tensors(), std::as_const(grads).tensors(), loss);
  CHECK(report.checked == 530);
  CHECK(report.max_relative_error < 1e-4);

  // The loss is the mean binary cross-entropy of the indexed visits.
  double expect = 0.0;
  for (const auto& [p, t] : instances) {
    const double q = annotate(params, data[p].features)[t];
    expect -= data[p].labels[t] ? std::log(q) : std::log(1.0 - q);
  }
  CHECK(loss() == doctest::Approx(expect / instances.size()).epsilon(1e-12));
}

TEST_CASE("threshold calibration") {
  SUBCASE("separated scores give F = 1 at the lowest positive score") {
    const std::vector<double> s = {0.1, 0.2, 0.3, 0.6, 0.7, 0.9};
    const std::vector<int> y = {0, 0, 0, 1, 1, 1};
    const ThresholdCalibration c = calibrate_threshold(s, y, 5.0);
    CHECK(c.achieved_fbeta == 1.0);
    CHECK(c.threshold == 0.6);
  }
  SUBCASE("a very large beta picks the highest threshold with full recall") {
    Rng rng(6);
    for (int trial = 0; trial < 30; ++trial) {
      std::vector<double> s;
      std::vector<int> y;
      for (int i = 0; i < 25; ++i) {
        s.push_back(uniform01(rng));
        y.push_back(uniform01(rng) < 0.3);
      }
      y[0] = 1;
      y[1] = 0;
      double lowest_positive = 1.0;
      for (std::size_t i = 0; i < s.size(); ++i) {
        if (y[i]) lowest_positive = std::min(lowest_positive, s[i]);
      }
      CHECK(calibrate_threshold(s, y, 1e4).threshold == lowest_positive);
    }
  }
  SUBCASE("threshold lies in the unit interval and achieves the curve maximum") {
    Rng rng(7);
    std::vector<double> s;
    std::vector<int> y;
    for (int i = 0; i < 200; ++i) {
      y.push_back(uniform01(rng) < 0.1);
      s.push_back(std::clamp(0.3 * y.back() + 0.5 * uniform01(rng), 0.0, 1.0));
    }
    const ThresholdCalibration c = calibrate_threshold(s, y, 5.0);
    CHECK(c.threshold >= 0.0);
    CHECK(c.threshold <= 1.0);
    double best = 0.0;
    for (const auto& pt : c.curve) best = std::max(best, pt.fbeta);
    CHECK(c.achieved_fbeta == best);
    const auto dir = testing::scratch_dir("calibration");
    save_calibration(dir / "c.csv", c);
    const ThresholdCalibration back = load_calibration(dir / "c.csv");
    CHECK(back.threshold == c.threshold);
    CHECK(back.beta == c.beta);
    CHECK(back.achieved_fbeta == c.achieved_fbeta);
  }
  CHECK_THROWS_AS(calibrate_threshold(std::vector<double>{0.1}, std::vector<int>{1}, 5.0), DataError);
}

TEST_CASE("annotation CSV") {
  PatientRecord rec;
  rec.patient_id = "P1";
  rec.visits.resize(2);
  rec.visits[1].visit_index = 1;
  std::ostringstream out;
  write_annotation_csv(out, rec, std::vector<double>{0.2, 0.5}, 0.33, true);
  std::istringstream in(out.str());
  std::string header, row0, row1;
  std::getline(in, header);
  std::getline(in, row0);
  std::getline(in, row1);
  CHECK(header == "patient_id,visit_index,pd_probability,pd_flag");
  CHECK(row0.substr(row0.rfind(',')) == ",0");
  CHECK(row1.substr(row1.rfind(',')) == ",1");
}

TEST_CASE("training is deterministic in its seed") {
  Rng rng(8);
  std::vector<AnnotatedSeries> data;
  for (int p = 0; p < 6; ++p) {
    AnnotatedSeries a;
    a.features = testing::random_matrix(6, kAnnotationFeatures, rng);
    for (std::size_t t = 0; t < 6; ++t) a.labels.push_back((t + p) % 4 == 0);
    data.push_back(a);
  }
  AnnotatorTrainConfig config;
  config.epochs = 3;
  config.batch_size = 8;
  config.seed = 11;
  const auto dir = testing::scratch_dir("annotator_determinism");
  save_annotator(dir / "a", train_annotator(data, config));
  save_annotator(dir / "b", train_annotator(data, config));
  CHECK(testing::read_file(dir / "a.bin") == testing::read_file(dir / "b.bin"));
  const AnnotatorParams loaded = load_annotator(dir / "a");
  CHECK(loaded.head.weight == train_annotator(data, config).head.weight);
}

TEST_CASE("rule labels are learnable and shuffled labels are not") {
  AnnotatorTrainConfig config;
  config.seed = 3;
  const Split rule = RuleLabelledSplit(false);
  const double learned = HeldOutAuroc(train_annotator(rule.train, config), rule.validation);
  MESSAGE("held-out AUROC on rule labels: " << learned);
  CHECK(learned >= 0.95);

  const Split shuffled = RuleLabelledSplit(true);
  const double control = HeldOutAuroc(train_annotator(shuffled.train, config), shuffled.validation);
  MESSAGE("held-out AUROC with shuffled labels: " << control);
  CHECK(control >= 0.45);
  CHECK(control <= 0.55);
}
