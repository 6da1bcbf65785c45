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

#include "mmtraj/forecaster.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <stdexcept>

#include "csv.hpp"
#include "mmtraj/errors.hpp"

namespace mmtraj {

ForecasterParams ForecasterParams::zeros() {
  ForecasterParams p{nn::LstmParams::zeros(kVisibleUnits, kContextSize), ConditioningNets::zeros()};
  p.check_parameter_count();
  return p;
}

ForecasterParams ForecasterParams::initialized(std::uint64_t seed) {
  ForecasterParams p = zeros();
  Rng rng = make_rng(seed, "forecaster.init");
  std::vector<nn::TensorRef> lstm;
  p.lstm.append_tensors("lstm", lstm);
  nn::init_uniform(lstm, 1.0 / std::sqrt(static_cast<double>(kContextSize)), rng);
  std::vector<nn::TensorRef> heads;
  p.nets.append_tensors(heads);
  nn::init_uniform(heads, 1.0 / std::sqrt(static_cast<double>(kContextSize)), rng);
  return p;
}

void ForecasterParams::check_parameter_count() const {
  if (parameter_count() != kParameterCount) {
    throw std::logic_error("forecaster has " + std::to_string(parameter_count()) +
                           " parameters, expected " + std::to_string(kParameterCount));
  }
}

std::vector<nn::TensorRef> ForecasterParams::tensors() {
  std::vector<nn::TensorRef> out;
  lstm.append_tensors("lstm", out);
  nets.append_tensors(out);
  return out;
}

std::vector<nn::ConstTensorRef> ForecasterParams::tensors() const {
  std::vector<nn::ConstTensorRef> out;
  lstm.append_tensors("lstm", out);
  nets.append_tensors(out);
  return out;
}

void save_forecaster(const std::filesystem::path& stem, const ForecasterParams& params) {
  params.check_parameter_count();
  nn::save_checkpoint(stem, params.tensors());
}

ForecasterParams load_forecaster(const std::filesystem::path& stem) {
  ForecasterParams params = ForecasterParams::zeros();
  nn::load_checkpoint(stem, params.tensors());
  return params;
}

std::vector<TrainingPair> make_training_pairs(const std::vector<Matrix>& series) {
  std::vector<TrainingPair> pairs;
  for (std::size_t p = 0; p < series.size(); ++p) {
    for (std::size_t t = 1; t < series[p].rows(); ++t) pairs.push_back({p, t});
  }
  return pairs;
}

ForecasterParams train_forecaster(const std::vector<Matrix>& series,
                                  const ForecasterTrainConfig& config,
                                  const std::function<void(const EpochLog&)>& on_epoch) {
  ForecasterParams params = ForecasterParams::initialized(config.seed);
  train_forecaster(params, series, config, on_epoch);
  return params;
}

namespace {

void CheckTrainConfig(const ForecasterTrainConfig& config) {
  if (config.epochs < 0 || config.batch_size == 0 || !(config.learning_rate > 0.0) ||
      config.cd_k < 1) {
    throw std::invalid_argument(
        "forecaster training needs epochs >= 0, batch_size >= 1, learning_rate > 0, cd_k >= 1");
  }
}

}  // namespace

// Pairs of one batch that share a patient are served by one forward pass over
// the longest prefix they need; since the encoder is causal, injecting each
// pair's gradient at its own step gives exactly the per-pair gradients.
double forecaster_contrastive_loss(const ForecasterParams& params,
                                   const std::vector<Matrix>& series,
                                   std::span<const std::pair<std::size_t, std::size_t>> batch,
                                   const NegativeSampler& negative, ForecasterParams& grads) {
  if (batch.empty()) return 0.0;
  if (!std::is_sorted(batch.begin(), batch.end())) {
    throw std::invalid_argument("forecaster_contrastive_loss: batch must be sorted");
  }
  const double scale = 1.0 / static_cast<double>(batch.size());
  nn::LstmTape tape;
  double loss = 0.0;
  for (std::size_t b = 0; b < batch.size();) {
    const std::size_t patient = batch[b].first;
    std::size_t e = b;
    while (e < batch.size() && batch[e].first == patient) ++e;
    const Matrix& s = series[patient];
    const std::size_t steps = batch[e - 1].second;  // largest target of this patient
    nn::LstmRunner runner(params.lstm, tape);
    for (std::size_t t = 0; t < steps; ++t) runner.step(s.row(t));
    Matrix d_hidden(steps, kContextSize);
    for (std::size_t i = b; i < e; ++i) {
      const std::size_t target = batch[i].second;
      const auto context = tape.hidden(target - 1);
      const CrbmCond cond = condition(params.nets, context);
      const auto v_data = s.row(target);
      const std::vector<double> v_model = negative(i, v_data, cond);
      loss += free_energy(v_data, cond) - free_energy(v_model, cond);
      CondGradients d = CondGradients::zeros(cond.visible_size(), cond.hidden_size());
      accumulate_free_energy_gradient(v_data, cond, scale, d);
      accumulate_free_energy_gradient(v_model, cond, -scale, d);
      backward_conditioning(params.nets, context, d, grads.nets, d_hidden.row(target - 1));
    }
    nn::lstm_backward(params.lstm, tape, d_hidden, grads.lstm);
    b = e;
  }
  return loss * scale;
}

void train_forecaster(ForecasterParams& params, const std::vector<Matrix>& series,
                      const ForecasterTrainConfig& config,
                      const std::function<void(const EpochLog&)>& on_epoch) {
  CheckTrainConfig(config);
  params.check_parameter_count();
  for (const auto& s : series) {
    if (s.rows() > 0 && s.cols() != kVisibleUnits) {
      throw DataError("forecaster training series must have 10 columns");
    }
  }
  auto pairs = make_training_pairs(series);
  if (pairs.empty()) throw DataError("forecaster training set has no (history, target) pairs");

  nn::AdamW optimizer({config.learning_rate, 0.9, 0.999, 1e-8, config.weight_decay});
  const auto param_refs = params.tensors();
  ForecasterParams grads = ForecasterParams::zeros();
  const auto grad_mut = grads.tensors();
  const auto grad_refs = nn::as_const(grad_mut);
  std::vector<std::pair<std::size_t, std::size_t>> batch;  // (patient, target)

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    Rng shuffle_rng = make_rng(config.seed, "forecaster.shuffle", {std::uint64_t(epoch)});
    shuffle(std::span<TrainingPair>(pairs), shuffle_rng);
    double epoch_loss = 0.0;
    std::size_t batch_index = 0;
    for (std::size_t start = 0; start < pairs.size(); start += config.batch_size, ++batch_index) {
      const std::size_t end = std::min(pairs.size(), start + config.batch_size);
      batch.clear();
      for (std::size_t i = start; i < end; ++i) batch.emplace_back(pairs[i].patient, pairs[i].target);
      std::sort(batch.begin(), batch.end());
      for (const auto& ref : grad_mut) std::fill(ref.data.begin(), ref.data.end(), 0.0);
      const NegativeSampler cd = [&](std::size_t i, std::span<const double> v_data,
                                     const CrbmCond& cond) {
        Rng rng = make_rng(config.seed, "forecaster.cd",
                           {std::uint64_t(epoch), std::uint64_t(batch[i].first),
                            std::uint64_t(batch[i].second)});
        return gibbs_sample(v_data, cond, config.cd_k, rng);
      };
      const double batch_loss = forecaster_contrastive_loss(params, series, batch, cd, grads);
      if (!std::isfinite(batch_loss)) {
        throw NumericalError("forecaster training: non-finite loss at epoch " +
                             std::to_string(epoch) + ", batch " + std::to_string(batch_index));
      }
      epoch_loss += batch_loss;
      optimizer.step(param_refs, grad_refs);
    }
    if (on_epoch) {
      on_epoch({epoch, epoch_loss / static_cast<double>(batch_index)});
    }
  }
}

Matrix ForecastDistribution::trajectory(std::size_t s) const {
  Matrix out(horizon, features);
  std::copy_n(samples.begin() + static_cast<std::ptrdiff_t>(s * horizon * features),
              horizon * features, out.data());
  return out;
}

double percentile(std::vector<double> values, double q) {
  if (values.empty()) throw std::invalid_argument("percentile of an empty set");
  if (!(q >= 0.0 && q <= 1.0)) throw std::invalid_argument("percentile rank outside [0, 1]");
  std::sort(values.begin(), values.end());
  const double pos = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return values[lo] + frac * (values[hi] - values[lo]);
}

void summarize(ForecastDistribution& dist) {
  dist.mean = Matrix(dist.horizon, dist.features);
  dist.lo95 = Matrix(dist.horizon, dist.features);
  dist.hi95 = Matrix(dist.horizon, dist.features);
  std::vector<double> column(dist.n_samples);
  for (std::size_t step = 0; step < dist.horizon; ++step) {
    for (std::size_t f = 0; f < dist.features; ++f) {
      double sum = 0.0;
      for (std::size_t s = 0; s < dist.n_samples; ++s) {
        column[s] = dist.sample(s, step, f);
        sum += column[s];
      }
      dist.mean(step, f) = sum / static_cast<double>(dist.n_samples);
      dist.lo95(step, f) = percentile(column, 0.025);
      dist.hi95(step, f) = percentile(column, 0.975);
    }
  }
}

nn::LstmState encode(const ForecasterParams& params, const Matrix& history) {
  if (history.rows() == 0) throw std::invalid_argument("forecast needs a non-empty history");
  nn::LstmState state = nn::LstmState::zeros(params.lstm.hidden_size);
  for (std::size_t t = 0; t < history.rows(); ++t) {
    state = nn::lstm_step(params.lstm, state, history.row(t));
  }
  return state;
}

// Each chain keeps its own encoder state; stepping it with the chain's own
// samples is the same computation as re-encoding the extended history.
ForecastDistribution forecast_from_state(const ForecasterParams& params,
                                         const nn::LstmState& state,
                                         std::span<const double> last_observation,
                                         std::size_t horizon, const GibbsChainConfig& config) {
  validate(config);
  if (horizon < 1) throw std::invalid_argument("forecast horizon must be >= 1");
  const std::size_t nv = params.nets.visible_size();
  if (config.init == ChainInit::last_observation && last_observation.size() != nv) {
    throw std::invalid_argument("chain init from the last observation needs that observation");
  }
  ForecastDistribution dist;
  dist.horizon = horizon;
  dist.n_samples = config.n_samples;
  dist.features = nv;
  dist.samples.resize(config.n_samples * horizon * nv);

  const CrbmCond first = condition(params.nets, state.hidden);
  std::vector<double> v(nv);
  for (std::size_t c = 0; c < config.n_samples; ++c) {
    Rng rng = make_rng(config.seed, "forecast.chain", {std::uint64_t(c)});
    nn::LstmState chain_state = state;
    std::span<const double> previous = last_observation;
    for (std::size_t step = 0; step < horizon; ++step) {
      const CrbmCond cond = step == 0 ? first : condition(params.nets, chain_state.hidden);
      if (config.init == ChainInit::last_observation) {
        std::copy(previous.begin(), previous.end(), v.begin());
      } else {
        std::copy(cond.bias.begin(), cond.bias.end(), v.begin());
      }
      GibbsSampler sampler(cond);
      sampler.run(v, config.steps, rng);
      double* out = dist.samples.data() + (c * horizon + step) * nv;
      std::copy(v.begin(), v.end(), out);
      previous = std::span<const double>(out, nv);
      if (step + 1 < horizon) chain_state = nn::lstm_step(params.lstm, chain_state, v);
    }
  }
  summarize(dist);
  return dist;
}

ForecastDistribution forecast_trajectory(const ForecasterParams& params, const Matrix& history,
                                         std::size_t horizon, const GibbsChainConfig& config) {
  const nn::LstmState state = encode(params, history);
  return forecast_from_state(params, state, history.row(history.rows() - 1), horizon, config);
}

void write_forecast_csv(std::ostream& out, const std::string& patient_id,
                        const ForecastDistribution& dist, const TransformParams* transform,
                        bool header) {
  if (header) {
    out << "patient_id,step,feature,mean,lo95,hi95";
    if (transform) out << ",mean_raw,lo95_raw,hi95_raw";
    out << '\n';
  }
  for (std::size_t step = 0; step < dist.horizon; ++step) {
    for (std::size_t f = 0; f < dist.features; ++f) {
      out << patient_id << ',' << step + 1 << ','
          << (f < kNumLabs ? std::string(kLabNames[f]) : std::to_string(f)) << ','
          << csv::format_double(dist.mean(step, f)) << ','
          << csv::format_double(dist.lo95(step, f)) << ','
          << csv::format_double(dist.hi95(step, f));
      if (transform) {
        const auto& ft = transform->features.at(f);
        out << ',' << csv::format_double(ft.invert(dist.mean(step, f))) << ','
            << csv::format_double(ft.invert(dist.lo95(step, f))) << ','
            << csv::format_double(ft.invert(dist.hi95(step, f)));
      }
      out << '\n';
    }
  }
}

}  // namespace mmtraj
