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

// LSTM encoder + conditional RBM head for next-visit forecasting. Training
// uses contrastive divergence on every (history, next visit) pair of the
// transformed training series; multi-step trajectories are produced by
// feeding each sampled visit back into the encoder.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "mmtraj/crbm.hpp"
#include "mmtraj/matrix.hpp"
#include "mmtraj/nn.hpp"
#include "mmtraj/preprocess.hpp"

namespace mmtraj {

struct ForecasterParams {
  static constexpr std::size_t kParameterCount = 11572;

  nn::LstmParams lstm;
  ConditioningNets nets;

  static ForecasterParams zeros();
  // Uniform(+-1/sqrt(fan)) initialization: LSTM uses the hidden size, dense
  // heads their input size.
  static ForecasterParams initialized(std::uint64_t seed);

  std::size_t parameter_count() const { return lstm.parameter_count() + nets.parameter_count(); }
  // Throws std::logic_error unless the count is kParameterCount.
  void check_parameter_count() const;

  // Groups in order: lstm, bias_net, precision_net, weights_net.
  std::vector<nn::TensorRef> tensors();
  std::vector<nn::ConstTensorRef> tensors() const;
};

void save_forecaster(const std::filesystem::path& stem, const ForecasterParams& params);
ForecasterParams load_forecaster(const std::filesystem::path& stem);

struct ForecasterTrainConfig {
  int epochs = 100;
  std::size_t batch_size = 32;
  double learning_rate = 1e-4;
  std::map<std::string, double> weight_decay = {
      {"lstm", 0.1}, {"precision_net", 0.1}, {"bias_net", 0.1}, {"weights_net", 0.2}};
  int cd_k = 1;
  std::uint64_t seed = 0;
};

// History = visits [0, target), prediction target = visit `target`.
struct TrainingPair {
  std::size_t patient = 0;
  std::size_t target = 0;
  friend bool operator==(const TrainingPair&, const TrainingPair&) = default;
};

// One pair per patient per target in [1, T-1].
std::vector<TrainingPair> make_training_pairs(const std::vector<Matrix>& series);

struct EpochLog {
  int epoch = 0;
  double mean_loss = 0.0;
};

// Series are transformed per-patient matrices (visits x 10). Throws
// NumericalError naming epoch and batch on a non-finite loss.
ForecasterParams train_forecaster(const std::vector<Matrix>& series,
                                  const ForecasterTrainConfig& config,
                                  const std::function<void(const EpochLog&)>& on_epoch = {});

// Model sample for pair i of a batch, drawn from the pair's conditional.
using NegativeSampler = std::function<std::vector<double>(
    std::size_t i, std::span<const double> v_data, const CrbmCond& cond)>;

// Mean over (patient, target) pairs of F(v_data) - F(v_model) with v_model
// held constant, the contrastive loss the trainer descends; its gradient is
// added to `grads`. The batch must be sorted.
double forecaster_contrastive_loss(const ForecasterParams& params,
                                   const std::vector<Matrix>& series,
                                   std::span<const std::pair<std::size_t, std::size_t>> batch,
                                   const NegativeSampler& negative, ForecasterParams& grads);

// Same, continuing from given parameters.
void train_forecaster(ForecasterParams& params, const std::vector<Matrix>& series,
                      const ForecasterTrainConfig& config,
                      const std::function<void(const EpochLog&)>& on_epoch = {});

struct ForecastDistribution {
  std::size_t horizon = 0;
  std::size_t n_samples = 0;
  std::size_t features = 0;
  std::vector<double> samples;  // n_samples x horizon x features
  Matrix mean;                  // horizon x features
  Matrix lo95;                  // 2.5th percentile
  Matrix hi95;                  // 97.5th percentile

  double sample(std::size_t s, std::size_t step, std::size_t f) const {
    return samples[(s * horizon + step) * features + f];
  }
  // Sampled trajectory s as a horizon x features matrix.
  Matrix trajectory(std::size_t s) const;
};

// Percentile by linear interpolation between order statistics, q in [0, 1].
double percentile(std::vector<double> values, double q);

// Fills mean / lo95 / hi95 from samples.
void summarize(ForecastDistribution& dist);

// Encoder state after consuming every row of `history` from zero.
nn::LstmState encode(const ForecasterParams& params, const Matrix& history);

// Trajectories starting from an encoder state; `last_observation` is used
// only when the chain init asks for it. Chain c draws from its own stream
// derived from (config.seed, c).
ForecastDistribution forecast_from_state(const ForecasterParams& params,
                                         const nn::LstmState& state,
                                         std::span<const double> last_observation,
                                         std::size_t horizon, const GibbsChainConfig& config);

ForecastDistribution forecast_trajectory(const ForecasterParams& params, const Matrix& history,
                                         std::size_t horizon, const GibbsChainConfig& config);

inline ForecastDistribution forecast_next(const ForecasterParams& params, const Matrix& history,
                                          const GibbsChainConfig& config) {
  return forecast_trajectory(params, history, 1, config);
}

// CSV `patient_id,step,feature,mean,lo95,hi95`; with a transform, the raw
// columns `mean_raw,lo95_raw,hi95_raw` are appended (mean inverted directly,
// percentiles are equivariant under the monotone inverse).
void write_forecast_csv(std::ostream& out, const std::string& patient_id,
                        const ForecastDistribution& dist, const TransformParams* transform,
                        bool header);

}  // namespace mmtraj
