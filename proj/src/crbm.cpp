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

#include "mmtraj/crbm.hpp"

#include <cmath>
#include <stdexcept>

#include "mmtraj/simd/kernels.hpp"

namespace mmtraj {

ConditioningNets ConditioningNets::zeros(std::size_t context, std::size_t visible,
                                         std::size_t hidden) {
  return {nn::DenseParams::zeros(context, visible), nn::DenseParams::zeros(context, visible),
          nn::DenseParams::zeros(context, visible * hidden)};
}

void ConditioningNets::append_tensors(std::vector<nn::TensorRef>& out) {
  bias_net.append_tensors("bias_net", out);
  precision_net.append_tensors("precision_net", out);
  weights_net.append_tensors("weights_net", out);
}

void ConditioningNets::append_tensors(std::vector<nn::ConstTensorRef>& out) const {
  bias_net.append_tensors("bias_net", out);
  precision_net.append_tensors("precision_net", out);
  weights_net.append_tensors("weights_net", out);
}

namespace {

double InverseSoftplus(double y) {
  return y > 30.0 ? y + std::log1p(-std::exp(-y)) : std::log(std::expm1(y));
}

}  // namespace

CrbmCond CrbmCond::from_parts(std::vector<double> bias, std::vector<double> precision,
                              Matrix weights) {
  if (precision.size() != bias.size() || weights.rows() != bias.size()) {
    throw std::invalid_argument("CrbmCond: inconsistent sizes");
  }
  CrbmCond cond;
  cond.precision_pre.reserve(precision.size());
  for (double l : precision) {
    if (!(l > kPrecisionFloor)) {
      throw std::invalid_argument("CrbmCond: precision must exceed the floor");
    }
    cond.precision_pre.push_back(InverseSoftplus(l - kPrecisionFloor));
  }
  cond.bias = std::move(bias);
  cond.precision = std::move(precision);
  cond.weights = std::move(weights);
  return cond;
}

CrbmCond condition(const ConditioningNets& nets, std::span<const double> context) {
  const std::size_t nv = nets.visible_size();
  const std::size_t nh = nets.hidden_size();
  CrbmCond cond;
  cond.bias.resize(nv);
  cond.precision_pre.resize(nv);
  cond.precision.resize(nv);
  cond.weights = Matrix(nv, nh);
  nets.bias_net.forward(context, cond.bias);
  nets.precision_net.forward(context, cond.precision_pre);
  nets.weights_net.forward(context, cond.weights.values());
  for (std::size_t i = 0; i < nv; ++i) {
    cond.precision[i] = nn::softplus(cond.precision_pre[i]) + kPrecisionFloor;
  }
  return cond;
}

std::vector<double> hidden_given_visible(std::span<const double> v, const CrbmCond& cond) {
  const std::size_t nh = cond.hidden_size();
  std::vector<double> p(nh, 0.0);
  simd::kernels().gemv_t(cond.weights.data(), cond.visible_size(), nh, v.data(), p.data());
  for (double& x : p) x = nn::sigmoid(x);
  return p;
}

VisibleDraw visible_given_hidden(std::span<const double> h, const CrbmCond& cond, Rng& rng) {
  const std::size_t nv = cond.visible_size();
  VisibleDraw draw;
  draw.mean.assign(nv, 0.0);
  simd::kernels().gemv(cond.weights.data(), nv, cond.hidden_size(), h.data(), draw.mean.data());
  std::normal_distribution<double> normal;
  draw.sample.resize(nv);
  for (std::size_t i = 0; i < nv; ++i) {
    draw.mean[i] = cond.bias[i] + draw.mean[i] / cond.precision[i];
    draw.sample[i] = draw.mean[i] + normal(rng) / std::sqrt(cond.precision[i]);
  }
  return draw;
}

double free_energy(std::span<const double> v, const CrbmCond& cond) {
  const std::size_t nv = cond.visible_size();
  const std::size_t nh = cond.hidden_size();
  double quadratic = 0.0;
  for (std::size_t i = 0; i < nv; ++i) {
    const double d = v[i] - cond.bias[i];
    quadratic += cond.precision[i] * d * d;
  }
  std::vector<double> pre(nh, 0.0);
  simd::kernels().gemv_t(cond.weights.data(), nv, nh, v.data(), pre.data());
  double hidden_term = 0.0;
  for (double x : pre) hidden_term += nn::softplus(x);
  return 0.5 * quadratic - hidden_term;
}

CondGradients CondGradients::zeros(std::size_t visible, std::size_t hidden) {
  return {std::vector<double>(visible, 0.0), std::vector<double>(visible, 0.0),
          Matrix(visible, hidden)};
}

void accumulate_free_energy_gradient(std::span<const double> v, const CrbmCond& cond,
                                     double scale, CondGradients& grads) {
  const std::size_t nv = cond.visible_size();
  for (std::size_t i = 0; i < nv; ++i) {
    const double d = v[i] - cond.bias[i];
    grads.bias[i] -= scale * cond.precision[i] * d;
    grads.precision_pre[i] += scale * 0.5 * d * d * nn::sigmoid(cond.precision_pre[i]);
  }
  const auto p = hidden_given_visible(v, cond);
  simd::kernels().ger(-scale, v.data(), nv, p.data(), p.size(), grads.weights.data());
}

void validate(const GibbsChainConfig& config) {
  if (config.steps < 1) throw std::invalid_argument("Gibbs chain needs at least one step");
  if (config.n_samples < 1) throw std::invalid_argument("Gibbs chain needs at least one sample");
}

GibbsSampler::GibbsSampler(const CrbmCond& cond)
    : cond_(cond), pre_(cond.hidden_size()), h_(cond.hidden_size()),
      noise_sd_(cond.visible_size()) {
  for (std::size_t i = 0; i < noise_sd_.size(); ++i) {
    noise_sd_[i] = 1.0 / std::sqrt(cond.precision[i]);
  }
}

void GibbsSampler::run(std::span<double> v, int steps, Rng& rng) {
  const std::size_t nv = cond_.visible_size();
  const std::size_t nh = cond_.hidden_size();
  const auto& k = simd::kernels();
  for (int s = 0; s < steps; ++s) {
    std::fill(pre_.begin(), pre_.end(), 0.0);
    k.gemv_t(cond_.weights.data(), nv, nh, v.data(), pre_.data());
    for (std::size_t j = 0; j < nh; ++j) {
      h_[j] = uniform01(rng) < nn::sigmoid(pre_[j]) ? 1.0 : 0.0;
    }
    std::fill(v.begin(), v.end(), 0.0);
    k.gemv(cond_.weights.data(), nv, nh, h_.data(), v.data());
    for (std::size_t i = 0; i < nv; ++i) {
      v[i] = cond_.bias[i] + v[i] / cond_.precision[i] + noise_sd_[i] * normal_(rng);
    }
  }
}

std::vector<double> gibbs_sample(std::span<const double> v0, const CrbmCond& cond, int steps,
                                 Rng& rng) {
  if (steps < 1) throw std::invalid_argument("Gibbs chain needs at least one step");
  if (v0.size() != cond.visible_size()) {
    throw std::invalid_argument("gibbs_sample: initial state has wrong size");
  }
  std::vector<double> v(v0.begin(), v0.end());
  GibbsSampler sampler(cond);
  sampler.run(v, steps, rng);
  return v;
}

CdResult cd_step(std::span<const double> v_data, const CrbmCond& cond, int k, Rng& rng) {
  CdResult result;
  result.v_model = gibbs_sample(v_data, cond, k, rng);
  result.loss = free_energy(v_data, cond) - free_energy(result.v_model, cond);
  result.grads = CondGradients::zeros(cond.visible_size(), cond.hidden_size());
  accumulate_free_energy_gradient(v_data, cond, 1.0, result.grads);
  accumulate_free_energy_gradient(result.v_model, cond, -1.0, result.grads);
  return result;
}

void backward_conditioning(const ConditioningNets& nets, std::span<const double> context,
                           const CondGradients& d_out,
                           ConditioningNets& grads, std::span<double> d_context) {
  nets.bias_net.backward(context, d_out.bias, grads.bias_net, d_context);
  nets.precision_net.backward(context, d_out.precision_pre, grads.precision_net, d_context);
  nets.weights_net.backward(context, d_out.weights.values(), grads.weights_net, d_context);
}

}  // namespace mmtraj
