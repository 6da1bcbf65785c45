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

// Progression-event classifier: six disease-activity features per visit, an
// LSTM(6 -> 8) over all visits up to the current one and a dense softmax
// head over {no progression, progression}.

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mmtraj/cohort.hpp"
#include "mmtraj/matrix.hpp"
#include "mmtraj/metrics.hpp"
#include "mmtraj/nn.hpp"
#include "mmtraj/preprocess.hpp"

namespace mmtraj {

inline constexpr std::size_t kAnnotationFeatures = 6;
inline constexpr double kRatioFloor = 1e-6;

// How the two "SFL difference" columns are formed.
enum class SflDifference {
  temporal,                   // kappa(t) - kappa(t-1), lambda(t) - lambda(t-1); 0 at t = 0
  involved_minus_uninvolved,  // kappa - lambda and |kappa - lambda| at each visit
};

std::array<std::string_view, kAnnotationFeatures> annotation_feature_names(SflDifference mode);

// Raw (untransformed) features, visits x 6, from imputed raw labs
// (visits x 10): mpr, kappa, lambda, kappa / max(lambda, 1e-6) and the two
// difference columns.
Matrix derive_raw_features(const Matrix& raw_labs, SflDifference mode = SflDifference::temporal);
Matrix derive_raw_features(const PatientRecord& imputed,
                           SflDifference mode = SflDifference::temporal);

// Raw features followed by the fitted per-column transform.
Matrix derive_features(const Matrix& raw_labs, const TransformParams& transform,
                       SflDifference mode = SflDifference::temporal);

struct AnnotatorParams {
  static constexpr std::size_t kParameterCount = 530;
  static constexpr std::size_t kHiddenSize = 8;

  nn::LstmParams lstm;
  nn::DenseParams head;  // hidden -> 2 logits

  static AnnotatorParams zeros();
  static AnnotatorParams initialized(std::uint64_t seed);

  std::size_t parameter_count() const { return lstm.parameter_count() + head.parameter_count(); }
  void check_parameter_count() const;

  // Groups: lstm, dense.
  std::vector<nn::TensorRef> tensors();
  std::vector<nn::ConstTensorRef> tensors() const;
};

void save_annotator(const std::filesystem::path& stem, const AnnotatorParams& params);
AnnotatorParams load_annotator(const std::filesystem::path& stem);

// Indices into `labels`: every instance once, plus minority-class instances
// drawn with replacement until both classes have equal counts. Throws
// DataError when a class is absent.
std::vector<std::size_t> upsample_balance(std::span<const int> labels, std::uint64_t seed);

struct AnnotatorTrainConfig {
  int epochs = 200;
  std::size_t batch_size = 128;
  double learning_rate = 1e-4;
  std::map<std::string, double> weight_decay = {{"lstm", 1.0}, {"dense", 1.0}};
  std::uint64_t seed = 0;
};

// One labelled sequence per patient; every visit t is a training instance
// whose input is visits 0..t.
struct AnnotatedSeries {
  Matrix features;  // visits x 6, transformed
  std::vector<int> labels;
};

struct AnnotatorEpochLog {
  int epoch = 0;
  double mean_loss = 0.0;
};

// Balanced afresh each epoch. Throws NumericalError on a non-finite loss.
AnnotatorParams train_annotator(const std::vector<AnnotatedSeries>& data,
                                const AnnotatorTrainConfig& config,
                                const std::function<void(const AnnotatorEpochLog&)>& on_epoch = {});

// Progression probability at every visit, each from the prefix ending there.
std::vector<double> annotate(const AnnotatorParams& params, const Matrix& features);

// Mean batch loss and its gradient, the same computation the trainer uses;
// instances are (series, visit) pairs, repeats allowed.
double annotator_loss_and_gradient(const AnnotatorParams& params,
                                   const std::vector<AnnotatedSeries>& data,
                                   std::span<const std::pair<std::size_t, std::size_t>> instances,
                                   AnnotatorParams& grads);

struct ThresholdCalibration {
  double beta = 5.0;
  double threshold = 0.5;
  double achieved_fbeta = 0.0;
  std::vector<CurvePoint> curve;
};

// Maximizes F-beta over the distinct scores; the lowest maximizing threshold
// wins. Throws DataError unless both classes are present.
ThresholdCalibration calibrate_threshold(std::span<const double> scores,
                                         std::span<const int> labels, double beta = 5.0);

// Summary CSV `beta,threshold,fbeta`; the curve is not part of it.
void save_calibration(const std::filesystem::path& path, const ThresholdCalibration& calibration);
ThresholdCalibration load_calibration(const std::filesystem::path& path);
// CSV `threshold,precision,recall,false_positive_rate,fbeta`.
void save_curve(const std::filesystem::path& path, const std::vector<CurvePoint>& curve);

// CSV `patient_id,visit_index,pd_probability,pd_flag`.
void write_annotation_csv(std::ostream& out, const PatientRecord& record,
                          std::span<const double> probabilities, double threshold, bool header);

}  // namespace mmtraj
