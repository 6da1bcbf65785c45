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

// Minimal network kernel: dense layers, LSTM cells with full backpropagation
// through time, softmax / binary cross-entropy, AdamW with per-group decay,
// flat checkpoints and a central-difference gradient checker.
//
// All arithmetic is double precision.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "mmtraj/matrix.hpp"
#include "mmtraj/rng.hpp"

namespace mmtraj::nn {

template <class T>
struct BasicTensorRef {
  std::string group;
  std::string name;
  std::vector<std::size_t> shape;
  std::span<T> data;
};
using TensorRef = BasicTensorRef<double>;
using ConstTensorRef = BasicTensorRef<const double>;

std::vector<ConstTensorRef> as_const(const std::vector<TensorRef>& refs);
std::size_t total_size(const std::vector<ConstTensorRef>& refs);

inline double sigmoid(double x) {
  if (x >= 0.0) {
    const double e = std::exp(-x);
    return 1.0 / (1.0 + e);
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

inline double softplus(double x) {
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

struct DenseParams {
  Matrix weight;  // out x in
  std::vector<double> bias;

  static DenseParams zeros(std::size_t in, std::size_t out);

  std::size_t in() const { return weight.cols(); }
  std::size_t out() const { return weight.rows(); }
  std::size_t parameter_count() const { return weight.size() + bias.size(); }

  // y = W x + b
  void forward(std::span<const double> x, std::span<double> y) const;
  // grad.weight += dy x^T, grad.bias += dy, dx += W^T dy (skipped if empty).
  void backward(std::span<const double> x, std::span<const double> dy, DenseParams& grad,
                std::span<double> dx) const;

  void append_tensors(const std::string& group, std::vector<TensorRef>& out);
  void append_tensors(const std::string& group, std::vector<ConstTensorRef>& out) const;
};

// Gate layout along the 4h axis is (input, forget, cell candidate, output).
// Two bias vectors, one per input side.
struct LstmParams {
  std::size_t input_size = 0;
  std::size_t hidden_size = 0;
  Matrix w_ih;  // 4h x in
  Matrix w_hh;  // 4h x h
  std::vector<double> b_ih;
  std::vector<double> b_hh;

  static LstmParams zeros(std::size_t input_size, std::size_t hidden_size);
  static constexpr std::size_t count_for(std::size_t in, std::size_t h) {
    return 4 * h * in + 4 * h * h + 8 * h;
  }
  std::size_t parameter_count() const { return count_for(input_size, hidden_size); }

  void append_tensors(const std::string& group, std::vector<TensorRef>& out);
  void append_tensors(const std::string& group, std::vector<ConstTensorRef>& out) const;
};

struct LstmState {
  std::vector<double> hidden;
  std::vector<double> cell;

  static LstmState zeros(std::size_t hidden_size) {
    return {std::vector<double>(hidden_size, 0.0), std::vector<double>(hidden_size, 0.0)};
  }
  friend bool operator==(const LstmState&, const LstmState&) = default;
};

// One recurrence step. Throws std::invalid_argument on dimension mismatch.
LstmState lstm_step(const LstmParams& params, const LstmState& state, std::span<const double> x);

// Activations of a forward pass, kept for the backward pass.
class LstmTape {
 public:
  bool empty() const { return steps_ == 0; }
  std::size_t steps() const { return steps_; }
  std::span<const double> hidden(std::size_t t) const;  // state after step t
  std::span<const double> cell(std::size_t t) const;

 private:
  friend class LstmRunner;
  friend void lstm_backward(const LstmParams&, const LstmTape&, const Matrix&, LstmParams&,
                            Matrix*);
  std::size_t steps_ = 0;
  std::size_t input_size_ = 0;
  std::size_t hidden_size_ = 0;
  std::vector<double> inputs_;  // T x in
  std::vector<double> h_;       // (T + 1) x h, row 0 is the initial state
  std::vector<double> c_;       // (T + 1) x h
  std::vector<double> gates_;   // T x 4h, post-activation
  std::vector<double> tanh_c_;  // T x h
};

// Incremental forward pass that records into a tape.
class LstmRunner {
 public:
  LstmRunner(const LstmParams& params, LstmTape& tape);
  // Starts from `initial` instead of zeros. Must be called before step().
  void reset(const LstmState& initial);
  std::span<const double> step(std::span<const double> x);

 private:
  const LstmParams& params_;
  LstmTape& tape_;
};

// Runs the sequence from the zero state and returns the state after every
// step. Throws std::invalid_argument on an empty sequence.
std::vector<LstmState> lstm_forward(const LstmParams& params, const Matrix& inputs);
// Same, recording activations; returns nothing but fills the tape.
void lstm_forward(const LstmParams& params, const Matrix& inputs, LstmTape& tape);

// Full BPTT. d_hidden holds dL/dh_t for every step (T x h). Parameter
// gradients are accumulated into `grads`; d_inputs (T x in) is written when
// non-null. Throws std::logic_error if the tape is empty.
void lstm_backward(const LstmParams& params, const LstmTape& tape, const Matrix& d_hidden,
                   LstmParams& grads, Matrix* d_inputs = nullptr);

std::vector<double> softmax(std::span<const double> logits);

inline constexpr double kProbabilityClamp = 1e-12;
// Mean binary cross-entropy of probabilities against {0,1} labels, with
// probabilities clamped to [1e-12, 1 - 1e-12].
double bce_loss(std::span<const double> probabilities, std::span<const double> labels);

struct AdamWConfig {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::map<std::string, double> weight_decay;  // by parameter group
};

struct AdamWState {
  std::vector<std::vector<double>> first_moment;
  std::vector<std::vector<double>> second_moment;
};

// One AdamW step at 1-based `step`. The decay p -= lr * wd * p is applied
// before and independently of the adaptive gradient step. Throws
// std::invalid_argument for a group without a configured decay.
void adamw_update(const std::vector<TensorRef>& params, const std::vector<ConstTensorRef>& grads,
                  AdamWState& state, std::int64_t step, const AdamWConfig& config);

class AdamW {
 public:
  explicit AdamW(AdamWConfig config) : config_(std::move(config)) {}
  void step(const std::vector<TensorRef>& params, const std::vector<ConstTensorRef>& grads) {
    adamw_update(params, grads, state_, ++step_, config_);
  }
  std::int64_t steps_taken() const { return step_; }
  const AdamWConfig& config() const { return config_; }

 private:
  AdamWConfig config_;
  AdamWState state_;
  std::int64_t step_ = 0;
};

// U(-bound, bound) for every value of the tensors.
void init_uniform(const std::vector<TensorRef>& tensors, double bound, Rng& rng);

// Checkpoint = <stem>.bin (little-endian float64 values, tensors back to
// back) + <stem>.manifest.csv with rows `group,name,shape,offset`.
void save_checkpoint(const std::filesystem::path& stem, const std::vector<ConstTensorRef>& tensors);
// Loads into tensors whose group/name/shape must match the manifest exactly.
void load_checkpoint(const std::filesystem::path& stem, const std::vector<TensorRef>& tensors);

struct GradCheckReport {
  double max_relative_error = 0.0;
  std::string worst_tensor;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t checked = 0;
  bool passed(double tolerance) const { return max_relative_error < tolerance; }
};

inline constexpr double kGradCheckStep = 1e-5;
// Relative errors use max(|analytic|, |numeric|, floor) as denominator so
// that vanishing gradients are compared on an absolute scale.
inline constexpr double kGradCheckFloor = 1e-6;

// Central differences of `loss` over every value of `params`, compared with
// `analytic` (same layout).
GradCheckReport grad_check(const std::vector<TensorRef>& params,
                           const std::vector<ConstTensorRef>& analytic,
                           const std::function<double()>& loss, double step = kGradCheckStep,
                           double floor = kGradCheckFloor);

}  // namespace mmtraj::nn
