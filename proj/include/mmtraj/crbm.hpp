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

// Conditional Gaussian-Bernoulli RBM. A context vector is mapped by three
// affine heads to the visible bias b, the visible precisions lambda and the
// visible-hidden couplings W of
//
//   E(v, h | c) = 1/2 sum_i lambda_i (v_i - b_i)^2 - v^T W h,
//
// with the hidden bias fixed at zero. Hidden units are binary.

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "mmtraj/matrix.hpp"
#include "mmtraj/nn.hpp"
#include "mmtraj/rng.hpp"

namespace mmtraj {

inline constexpr std::size_t kVisibleUnits = 10;
inline constexpr std::size_t kHiddenUnits = 16;
inline constexpr std::size_t kContextSize = 32;
inline constexpr double kPrecisionFloor = 1e-4;

struct ConditioningNets {
  nn::DenseParams bias_net;       // context -> visible
  nn::DenseParams precision_net;  // context -> visible (pre-softplus)
  nn::DenseParams weights_net;    // context -> visible * hidden, row-major W

  static ConditioningNets zeros(std::size_t context = kContextSize,
                                std::size_t visible = kVisibleUnits,
                                std::size_t hidden = kHiddenUnits);
  std::size_t context_size() const { return bias_net.in(); }
  std::size_t visible_size() const { return bias_net.out(); }
  std::size_t hidden_size() const { return weights_net.out() / bias_net.out(); }
  std::size_t parameter_count() const {
    return bias_net.parameter_count() + precision_net.parameter_count() +
           weights_net.parameter_count();
  }

  // Groups `bias_net`, `precision_net`, `weights_net`.
  void append_tensors(std::vector<nn::TensorRef>& out);
  void append_tensors(std::vector<nn::ConstTensorRef>& out) const;
};

struct CrbmCond {
  std::vector<double> bias;           // b
  std::vector<double> precision;      // lambda = softplus(precision_pre) + floor
  std::vector<double> precision_pre;  // head output before softplus
  Matrix weights;                     // visible x hidden

  std::size_t visible_size() const { return bias.size(); }
  std::size_t hidden_size() const { return weights.cols(); }

  // Builds a conditional from explicit parameters; lambda must exceed the
  // floor. The pre-activation is recovered by inverting the softplus.
  static CrbmCond from_parts(std::vector<double> bias, std::vector<double> precision,
                             Matrix weights);
};

CrbmCond condition(const ConditioningNets& nets, std::span<const double> context);

// p(h_j = 1 | v) = sigmoid((v^T W)_j).
std::vector<double> hidden_given_visible(std::span<const double> v, const CrbmCond& cond);

struct VisibleDraw {
  std::vector<double> mean;    // b + (W h) / lambda
  std::vector<double> sample;  // ~ N(mean, diag(1 / lambda))
};
VisibleDraw visible_given_hidden(std::span<const double> h, const CrbmCond& cond, Rng& rng);

// F(v) = 1/2 sum lambda_i (v_i - b_i)^2 - sum_j softplus((v^T W)_j).
double free_energy(std::span<const double> v, const CrbmCond& cond);

// Gradients with respect to the conditioning outputs.
struct CondGradients {
  std::vector<double> bias;
  std::vector<double> precision_pre;
  Matrix weights;

  static CondGradients zeros(std::size_t visible, std::size_t hidden);
};

// grads += scale * dF(v)/d(b, precision_pre, W).
void accumulate_free_energy_gradient(std::span<const double> v, const CrbmCond& cond,
                                     double scale, CondGradients& grads);

enum class ChainInit {
  conditional_mean,  // v0 = b(c)
  last_observation,  // v0 = last observed visit
};

struct GibbsChainConfig {
  int steps = 32;
  std::size_t n_samples = 1000;
  std::uint64_t seed = 0;
  ChainInit init = ChainInit::conditional_mean;
};

// Throws std::invalid_argument unless steps >= 1 and n_samples >= 1.
void validate(const GibbsChainConfig& config);

// Reusable buffers for the sampling loop.
class GibbsSampler {
 public:
  explicit GibbsSampler(const CrbmCond& cond);
  // Runs `steps` alternations h ~ p(h|v), v ~ p(v|h) in place on v.
  void run(std::span<double> v, int steps, Rng& rng);

 private:
  const CrbmCond& cond_;
  std::vector<double> pre_;
  std::vector<double> h_;
  std::vector<double> noise_sd_;
  std::normal_distribution<double> normal_;
};

std::vector<double> gibbs_sample(std::span<const double> v0, const CrbmCond& cond, int steps,
                                 Rng& rng);

struct CdResult {
  double loss = 0.0;  // F(v_data) - F(v_model)
  std::vector<double> v_model;
  CondGradients grads;  // of the loss, v_model held constant
};

// CD-k: the model sample is a k-step chain started at the data.
CdResult cd_step(std::span<const double> v_data, const CrbmCond& cond, int k, Rng& rng);

// Backpropagates gradients on the conditioning outputs through the heads:
// parameter gradients are accumulated into `grads`, d_context is added to.
void backward_conditioning(const ConditioningNets& nets, std::span<const double> context,
                           const CondGradients& d_out,
                           ConditioningNets& grads, std::span<double> d_context);

}  // namespace mmtraj
