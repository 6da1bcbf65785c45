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

#include "mmtraj/annotator.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <ostream>
#include <stdexcept>

#include "csv.hpp"
#include "mmtraj/errors.hpp"

namespace mmtraj {

std::array<std::string_view, kAnnotationFeatures> annotation_feature_names(SflDifference mode) {
  if (mode == SflDifference::temporal) {
    return {"mpr", "sfl_kappa", "sfl_lambda", "sfl_ratio", "delta_kappa", "delta_lambda"};
  }
  return {"mpr", "sfl_kappa", "sfl_lambda", "sfl_ratio", "kappa_minus_lambda", "abs_difference"};
}

Matrix derive_raw_features(const Matrix& raw_labs, SflDifference mode) {
  if (raw_labs.cols() != kNumLabs) throw DataError("annotation features need 10 lab columns");
  const std::size_t mpr = index_of(Lab::mpr);
  const std::size_t kappa = index_of(Lab::sfl_kappa);
  const std::size_t lambda = index_of(Lab::sfl_lambda);
  Matrix out(raw_labs.rows(), kAnnotationFeatures);
  for (std::size_t t = 0; t < raw_labs.rows(); ++t) {
    const double k = raw_labs(t, kappa);
    const double l = raw_labs(t, lambda);
    out(t, 0) = raw_labs(t, mpr);
    out(t, 1) = k;
    out(t, 2) = l;
    out(t, 3) = k / std::max(l, kRatioFloor);
    if (mode == SflDifference::temporal) {
      out(t, 4) = t == 0 ? 0.0 : k - raw_labs(t - 1, kappa);
      out(t, 5) = t == 0 ? 0.0 : l - raw_labs(t - 1, lambda);
    } else {
      out(t, 4) = k - l;
      out(t, 5) = std::abs(k - l);
    }
  }
  return out;
}

Matrix derive_raw_features(const PatientRecord& imputed, SflDifference mode) {
  return derive_raw_features(imputed.lab_matrix(), mode);
}

Matrix derive_features(const Matrix& raw_labs, const TransformParams& transform,
                       SflDifference mode) {
  if (transform.size() != kAnnotationFeatures) {
    throw DataError("annotation transform must have 6 features");
  }
  return transform.apply(derive_raw_features(raw_labs, mode));
}

AnnotatorParams AnnotatorParams::zeros() {
  AnnotatorParams p{nn::LstmParams::zeros(kAnnotationFeatures, kHiddenSize),
                    nn::DenseParams::zeros(kHiddenSize, 2)};
  p.check_parameter_count();
  return p;
}

AnnotatorParams AnnotatorParams::initialized(std::uint64_t seed) {
  AnnotatorParams p = zeros();
  Rng rng = make_rng(seed, "annotator.init");
  const double bound = 1.0 / std::sqrt(static_cast<double>(kHiddenSize));
  std::vector<nn::TensorRef> all = p.tensors();
  nn::init_uniform(all, bound, rng);  // LSTM and head fan-in are both 8
  return p;
}

void AnnotatorParams::check_parameter_count() const {
  if (parameter_count() != kParameterCount) {
    throw std::logic_error("annotator has " + std::to_string(parameter_count()) +
                           " parameters, expected " + std::to_string(kParameterCount));
  }
}

std::vector<nn::TensorRef> AnnotatorParams::tensors() {
  std::vector<nn::TensorRef> out;
  lstm.append_tensors("lstm", out);
  head.append_tensors("dense", out);
  return out;
}

std::vector<nn::ConstTensorRef> AnnotatorParams::tensors() const {
  std::vector<nn::ConstTensorRef> out;
  lstm.append_tensors("lstm", out);
  head.append_tensors("dense", out);
  return out;
}

void save_annotator(const std::filesystem::path& stem, const AnnotatorParams& params) {
  params.check_parameter_count();
  nn::save_checkpoint(stem, params.tensors());
}

AnnotatorParams load_annotator(const std::filesystem::path& stem) {
  AnnotatorParams params = AnnotatorParams::zeros();
  nn::load_checkpoint(stem, params.tensors());
  return params;
}

std::vector<std::size_t> upsample_balance(std::span<const int> labels, std::uint64_t seed) {
  std::vector<std::size_t> positives, negatives;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    (labels[i] != 0 ? positives : negatives).push_back(i);
  }
  if (positives.empty() || negatives.empty()) {
    throw DataError("upsampling needs both classes present");
  }
  std::vector<std::size_t> out(labels.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = i;
  const auto& minority = positives.size() < negatives.size() ? positives : negatives;
  const std::size_t deficit =
      std::max(positives.size(), negatives.size()) - std::min(positives.size(), negatives.size());
  Rng rng = make_rng(seed, "annotator.upsample");
  for (std::size_t i = 0; i < deficit; ++i) {
    out.push_back(minority[uniform_index(rng, minority.size())]);
  }
  return out;
}

double annotator_loss_and_gradient(const AnnotatorParams& params,
                                   const std::vector<AnnotatedSeries>& data,
                                   std::span<const std::pair<std::size_t, std::size_t>> instances,
                                   AnnotatorParams& grads) {
  if (instances.empty()) throw std::invalid_argument("annotator loss over an empty batch");
  std::vector<std::pair<std::size_t, std::size_t>> sorted(instances.begin(), instances.end());
  std::sort(sorted.begin(), sorted.end());
  const double scale = 1.0 / static_cast<double>(sorted.size());
  const std::size_t h = params.lstm.hidden_size;
  nn::LstmTape tape;
  double loss = 0.0;
  std::vector<double> logits(2);
  std::vector<double> d_logits(2);
  for (std::size_t b = 0; b < sorted.size();) {
    const std::size_t series = sorted[b].first;
    std::size_t e = b;
    while (e < sorted.size() && sorted[e].first == series) ++e;
    const AnnotatedSeries& s = data.at(series);
    const std::size_t steps = sorted[e - 1].second + 1;
    nn::LstmRunner runner(params.lstm, tape);
    for (std::size_t t = 0; t < steps; ++t) runner.step(s.features.row(t));
    Matrix d_hidden(steps, h);
    for (std::size_t i = b; i < e; ++i) {
      const std::size_t t = sorted[i].second;
      const auto hidden = tape.hidden(t);
      params.head.forward(hidden, logits);
      const double p = nn::softmax(logits)[1];
      const double y = s.labels.at(t) != 0 ? 1.0 : 0.0;
      const double pc = std::clamp(p, nn::kProbabilityClamp, 1.0 - nn::kProbabilityClamp);
      loss -= y * std::log(pc) + (1.0 - y) * std::log(1.0 - pc);
      // d(BCE)/d(logit_1) = p - y for a two-way softmax; zero where clamped.
      const double g = (pc == p) ? scale * (p - y) : 0.0;
      d_logits[0] = -g;
      d_logits[1] = g;
      params.head.backward(hidden, d_logits, grads.head, d_hidden.row(t));
    }
    nn::lstm_backward(params.lstm, tape, d_hidden, grads.lstm);
    b = e;
  }
  return loss * scale;
}

AnnotatorParams train_annotator(const std::vector<AnnotatedSeries>& data,
                                const AnnotatorTrainConfig& config,
                                const std::function<void(const AnnotatorEpochLog&)>& on_epoch) {
  if (config.epochs < 0 || config.batch_size == 0 || !(config.learning_rate > 0.0)) {
    throw std::invalid_argument(
        "annotator training needs epochs >= 0, batch_size >= 1, learning_rate > 0");
  }
  std::vector<std::pair<std::size_t, std::size_t>> instances;
  std::vector<int> labels;
  for (std::size_t p = 0; p < data.size(); ++p) {
    if (data[p].features.cols() != kAnnotationFeatures ||
        data[p].labels.size() != data[p].features.rows()) {
      throw DataError("annotator series " + std::to_string(p) + " has inconsistent shape");
    }
    for (std::size_t t = 0; t < data[p].labels.size(); ++t) {
      instances.emplace_back(p, t);
      labels.push_back(data[p].labels[t]);
    }
  }
  AnnotatorParams params = AnnotatorParams::initialized(config.seed);
  AnnotatorParams grads = AnnotatorParams::zeros();
  const auto param_refs = params.tensors();
  const auto grad_mut = grads.tensors();
  const auto grad_refs = nn::as_const(grad_mut);
  nn::AdamW optimizer({config.learning_rate, 0.9, 0.999, 1e-8, config.weight_decay});
  std::vector<std::pair<std::size_t, std::size_t>> batch;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    auto order = upsample_balance(labels, derive_seed(config.seed, "annotator.epoch",
                                                      {std::uint64_t(epoch)}));
    Rng rng = make_rng(config.seed, "annotator.shuffle", {std::uint64_t(epoch)});
    shuffle(std::span<std::size_t>(order), rng);
    double epoch_loss = 0.0;
    std::size_t batch_index = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size, ++batch_index) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      batch.clear();
      for (std::size_t i = start; i < end; ++i) batch.push_back(instances[order[i]]);
      for (const auto& ref : grad_mut) std::fill(ref.data.begin(), ref.data.end(), 0.0);
      const double loss = annotator_loss_and_gradient(params, data, batch, grads);
      if (!std::isfinite(loss)) {
        throw NumericalError("annotator training: non-finite loss at epoch " +
                             std::to_string(epoch) + ", batch " + std::to_string(batch_index));
      }
      epoch_loss += loss;
      optimizer.step(param_refs, grad_refs);
    }
    if (on_epoch) on_epoch({epoch, epoch_loss / static_cast<double>(batch_index)});
  }
  return params;
}

std::vector<double> annotate(const AnnotatorParams& params, const Matrix& features) {
  if (features.rows() == 0) throw std::invalid_argument("annotate needs a non-empty sequence");
  nn::LstmTape tape;
  nn::LstmRunner runner(params.lstm, tape);
  std::vector<double> out;
  out.reserve(features.rows());
  std::vector<double> logits(2);
  for (std::size_t t = 0; t < features.rows(); ++t) {
    params.head.forward(runner.step(features.row(t)), logits);
    out.push_back(nn::softmax(logits)[1]);
  }
  return out;
}

ThresholdCalibration calibrate_threshold(std::span<const double> scores,
                                         std::span<const int> labels, double beta) {
  const bool has_pos = std::any_of(labels.begin(), labels.end(), [](int y) { return y != 0; });
  const bool has_neg = std::any_of(labels.begin(), labels.end(), [](int y) { return y == 0; });
  if (!has_pos || !has_neg) throw DataError("threshold calibration needs both classes");
  ThresholdCalibration cal;
  cal.beta = beta;
  cal.curve = threshold_curve(scores, labels, beta);
  cal.achieved_fbeta = -1.0;
  for (const auto& pt : cal.curve) {
    if (pt.fbeta > cal.achieved_fbeta) {
      cal.achieved_fbeta = pt.fbeta;
      cal.threshold = pt.threshold;
    }
  }
  return cal;
}

void save_calibration(const std::filesystem::path& path, const ThresholdCalibration& calibration) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << "beta,threshold,fbeta\n"
      << csv::format_double(calibration.beta) << ',' << csv::format_double(calibration.threshold)
      << ',' << csv::format_double(calibration.achieved_fbeta) << '\n';
}

ThresholdCalibration load_calibration(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::string header, line;
  std::getline(in, header);
  std::getline(in, line);
  const auto cells = csv::split(line);
  if (csv::trim(header) != "beta,threshold,fbeta" || cells.size() != 3) {
    throw DataError(path.string() + ": malformed calibration file");
  }
  ThresholdCalibration cal;
  const auto beta = csv::parse_double(cells[0]);
  const auto threshold = csv::parse_double(cells[1]);
  const auto fb = csv::parse_double(cells[2]);
  if (!beta || !threshold || !fb) throw DataError(path.string() + ": malformed calibration row");
  cal.beta = *beta;
  cal.threshold = *threshold;
  cal.achieved_fbeta = *fb;
  return cal;
}

void save_curve(const std::filesystem::path& path, const std::vector<CurvePoint>& curve) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << "threshold,precision,recall,false_positive_rate,fbeta\n";
  for (const auto& pt : curve) {
    out << csv::format_double(pt.threshold) << ',' << csv::format_double(pt.precision) << ','
        << csv::format_double(pt.recall) << ',' << csv::format_double(pt.false_positive_rate)
        << ',' << csv::format_double(pt.fbeta) << '\n';
  }
}

void write_annotation_csv(std::ostream& out, const PatientRecord& record,
                          std::span<const double> probabilities, double threshold, bool header) {
  if (probabilities.size() != record.visits.size()) {
    throw std::invalid_argument("one probability per visit expected");
  }
  if (header) out << "patient_id,visit_index,pd_probability,pd_flag\n";
  for (std::size_t t = 0; t < probabilities.size(); ++t) {
    out << record.patient_id << ',' << record.visits[t].visit_index << ','
        << csv::format_double(probabilities[t]) << ',' << (probabilities[t] >= threshold ? 1 : 0)
        << '\n';
  }
}

}  // namespace mmtraj
