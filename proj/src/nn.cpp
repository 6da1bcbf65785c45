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

#include "mmtraj/nn.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "csv.hpp"
#include "mmtraj/errors.hpp"
#include "mmtraj/simd/kernels.hpp"

namespace mmtraj::nn {

std::vector<ConstTensorRef> as_const(const std::vector<TensorRef>& refs) {
  std::vector<ConstTensorRef> out;
  out.reserve(refs.size());
  for (const auto& r : refs) out.push_back({r.group, r.name, r.shape, r.data});
  return out;
}

std::size_t total_size(const std::vector<ConstTensorRef>& refs) {
  std::size_t n = 0;
  for (const auto& r : refs) n += r.data.size();
  return n;
}

DenseParams DenseParams::zeros(std::size_t in, std::size_t out) {
  return {Matrix(out, in), std::vector<double>(out, 0.0)};
}

void DenseParams::forward(std::span<const double> x, std::span<double> y) const {
  if (x.size() != in() || y.size() != out()) {
    throw std::invalid_argument("dense forward: dimension mismatch");
  }
  std::copy(bias.begin(), bias.end(), y.begin());
  simd::kernels().gemv(weight.data(), out(), in(), x.data(), y.data());
}

void DenseParams::backward(std::span<const double> x, std::span<const double> dy,
                           DenseParams& grad, std::span<double> dx) const {
  const auto& k = simd::kernels();
  k.ger(1.0, dy.data(), out(), x.data(), in(), grad.weight.data());
  k.axpy(1.0, dy.data(), grad.bias.data(), out());
  if (!dx.empty()) {
    k.gemv_t(weight.data(), out(), in(), dy.data(), dx.data());
  }
}

void DenseParams::append_tensors(const std::string& group, std::vector<TensorRef>& out) {
  out.push_back({group, "weight", {weight.rows(), weight.cols()}, weight.values()});
  out.push_back({group, "bias", {bias.size()}, bias});
}

void DenseParams::append_tensors(const std::string& group,
                                 std::vector<ConstTensorRef>& out) const {
  out.push_back({group, "weight", {weight.rows(), weight.cols()}, weight.values()});
  out.push_back({group, "bias", {bias.size()}, bias});
}

LstmParams LstmParams::zeros(std::size_t input_size, std::size_t hidden_size) {
  LstmParams p;
  p.input_size = input_size;
  p.hidden_size = hidden_size;
  p.w_ih = Matrix(4 * hidden_size, input_size);
  p.w_hh = Matrix(4 * hidden_size, hidden_size);
  p.b_ih.assign(4 * hidden_size, 0.0);
  p.b_hh.assign(4 * hidden_size, 0.0);
  return p;
}

void LstmParams::append_tensors(const std::string& group, std::vector<TensorRef>& out) {
  out.push_back({group, "w_ih", {w_ih.rows(), w_ih.cols()}, w_ih.values()});
  out.push_back({group, "w_hh", {w_hh.rows(), w_hh.cols()}, w_hh.values()});
  out.push_back({group, "b_ih", {b_ih.size()}, b_ih});
  out.push_back({group, "b_hh", {b_hh.size()}, b_hh});
}

void LstmParams::append_tensors(const std::string& group,
                                std::vector<ConstTensorRef>& out) const {
  out.push_back({group, "w_ih", {w_ih.rows(), w_ih.cols()}, w_ih.values()});
  out.push_back({group, "w_hh", {w_hh.rows(), w_hh.cols()}, w_hh.values()});
  out.push_back({group, "b_ih", {b_ih.size()}, b_ih});
  out.push_back({group, "b_hh", {b_hh.size()}, b_hh});
}

namespace {

// gates: 4h scratch, receives post-activation (i, f, g, o).
void StepCore(const LstmParams& p, const double* x, const double* h_prev, const double* c_prev,
              double* gates, double* c_out, double* tanh_c, double* h_out) {
  const std::size_t h = p.hidden_size;
  const auto& k = simd::kernels();
  for (std::size_t r = 0; r < 4 * h; ++r) gates[r] = p.b_ih[r] + p.b_hh[r];
  k.gemv(p.w_ih.data(), 4 * h, p.input_size, x, gates);
  k.gemv(p.w_hh.data(), 4 * h, h, h_prev, gates);
  for (std::size_t j = 0; j < h; ++j) {
    const double i = sigmoid(gates[j]);
    const double f = sigmoid(gates[h + j]);
    const double g = std::tanh(gates[2 * h + j]);
    const double o = sigmoid(gates[3 * h + j]);
    gates[j] = i;
    gates[h + j] = f;
    gates[2 * h + j] = g;
    gates[3 * h + j] = o;
    c_out[j] = f * c_prev[j] + i * g;
    tanh_c[j] = std::tanh(c_out[j]);
    h_out[j] = o * tanh_c[j];
  }
}

void CheckShapes(const LstmParams& p) {
  const std::size_t h = p.hidden_size;
  if (p.w_ih.rows() != 4 * h || p.w_ih.cols() != p.input_size || p.w_hh.rows() != 4 * h ||
      p.w_hh.cols() != h || p.b_ih.size() != 4 * h || p.b_hh.size() != 4 * h) {
    throw std::invalid_argument("LSTM parameters have inconsistent shapes");
  }
}

}  // namespace

LstmState lstm_step(const LstmParams& params, const LstmState& state, std::span<const double> x) {
  CheckShapes(params);
  const std::size_t h = params.hidden_size;
  if (x.size() != params.input_size || state.hidden.size() != h || state.cell.size() != h) {
    throw std::invalid_argument("lstm_step: dimension mismatch (input " +
                                std::to_string(x.size()) + ", expected " +
                                std::to_string(params.input_size) + ")");
  }
  std::vector<double> gates(4 * h);
  std::vector<double> tanh_c(h);
  LstmState next = LstmState::zeros(h);
  StepCore(params, x.data(), state.hidden.data(), state.cell.data(), gates.data(),
           next.cell.data(), tanh_c.data(), next.hidden.data());
  return next;
}

std::span<const double> LstmTape::hidden(std::size_t t) const {
  return {h_.data() + (t + 1) * hidden_size_, hidden_size_};
}

std::span<const double> LstmTape::cell(std::size_t t) const {
  return {c_.data() + (t + 1) * hidden_size_, hidden_size_};
}

LstmRunner::LstmRunner(const LstmParams& params, LstmTape& tape) : params_(params), tape_(tape) {
  CheckShapes(params);
  reset(LstmState::zeros(params.hidden_size));
}

void LstmRunner::reset(const LstmState& initial) {
  const std::size_t h = params_.hidden_size;
  if (initial.hidden.size() != h || initial.cell.size() != h) {
    throw std::invalid_argument("LstmRunner::reset: state size mismatch");
  }
  tape_.steps_ = 0;
  tape_.input_size_ = params_.input_size;
  tape_.hidden_size_ = h;
  tape_.inputs_.clear();
  tape_.gates_.clear();
  tape_.tanh_c_.clear();
  tape_.h_.assign(initial.hidden.begin(), initial.hidden.end());
  tape_.c_.assign(initial.cell.begin(), initial.cell.end());
}

std::span<const double> LstmRunner::step(std::span<const double> x) {
  const std::size_t h = params_.hidden_size;
  const std::size_t in = params_.input_size;
  if (x.size() != in) {
    throw std::invalid_argument("LSTM step: input has " + std::to_string(x.size()) +
                                " values, expected " + std::to_string(in));
  }
  const std::size_t t = tape_.steps_;
  tape_.inputs_.insert(tape_.inputs_.end(), x.begin(), x.end());
  tape_.gates_.resize((t + 1) * 4 * h);
  tape_.tanh_c_.resize((t + 1) * h);
  tape_.h_.resize((t + 2) * h);
  tape_.c_.resize((t + 2) * h);
  StepCore(params_, tape_.inputs_.data() + t * in, tape_.h_.data() + t * h,
           tape_.c_.data() + t * h, tape_.gates_.data() + t * 4 * h, tape_.c_.data() + (t + 1) * h,
           tape_.tanh_c_.data() + t * h, tape_.h_.data() + (t + 1) * h);
  tape_.steps_ = t + 1;
  return tape_.hidden(t);
}

void lstm_forward(const LstmParams& params, const Matrix& inputs, LstmTape& tape) {
  if (inputs.rows() == 0) {
    throw std::invalid_argument("lstm_forward: empty input sequence");
  }
  LstmRunner runner(params, tape);
  for (std::size_t t = 0; t < inputs.rows(); ++t) runner.step(inputs.row(t));
}

std::vector<LstmState> lstm_forward(const LstmParams& params, const Matrix& inputs) {
  LstmTape tape;
  lstm_forward(params, inputs, tape);
  std::vector<LstmState> states;
  states.reserve(tape.steps());
  for (std::size_t t = 0; t < tape.steps(); ++t) {
    const auto h = tape.hidden(t);
    const auto c = tape.cell(t);
    states.push_back({{h.begin(), h.end()}, {c.begin(), c.end()}});
  }
  return states;
}

void lstm_backward(const LstmParams& params, const LstmTape& tape, const Matrix& d_hidden,
                   LstmParams& grads, Matrix* d_inputs) {
  if (tape.empty()) {
    throw std::logic_error("lstm_backward: no forward pass cached on the tape");
  }
  const std::size_t h = params.hidden_size;
  const std::size_t in = params.input_size;
  const std::size_t steps = tape.steps();
  if (tape.hidden_size_ != h || tape.input_size_ != in) {
    throw std::invalid_argument("lstm_backward: tape recorded with different dimensions");
  }
  if (d_hidden.rows() != steps || d_hidden.cols() != h) {
    throw std::invalid_argument("lstm_backward: d_hidden must be steps x hidden");
  }
  if (d_inputs != nullptr) *d_inputs = Matrix(steps, in);
  const auto& k = simd::kernels();
  std::vector<double> dh(h);
  std::vector<double> dh_next(h, 0.0);
  std::vector<double> dc_next(h, 0.0);
  std::vector<double> dgates(4 * h);
  for (std::size_t tt = steps; tt-- > 0;) {
    const double* gates = tape.gates_.data() + tt * 4 * h;
    const double* tanh_c = tape.tanh_c_.data() + tt * h;
    const double* c_prev = tape.c_.data() + tt * h;
    const double* h_prev = tape.h_.data() + tt * h;
    const double* x = tape.inputs_.data() + tt * in;
    for (std::size_t j = 0; j < h; ++j) {
      dh[j] = d_hidden(tt, j) + dh_next[j];
      const double i = gates[j];
      const double f = gates[h + j];
      const double g = gates[2 * h + j];
      const double o = gates[3 * h + j];
      const double d_o = dh[j] * tanh_c[j];
      const double dc = dc_next[j] + dh[j] * o * (1.0 - tanh_c[j] * tanh_c[j]);
      dgates[j] = dc * g * i * (1.0 - i);
      dgates[h + j] = dc * c_prev[j] * f * (1.0 - f);
      dgates[2 * h + j] = dc * i * (1.0 - g * g);
      dgates[3 * h + j] = d_o * o * (1.0 - o);
      dc_next[j] = dc * f;
    }
    k.ger(1.0, dgates.data(), 4 * h, x, in, grads.w_ih.data());
    k.ger(1.0, dgates.data(), 4 * h, h_prev, h, grads.w_hh.data());
    k.axpy(1.0, dgates.data(), grads.b_ih.data(), 4 * h);
    k.axpy(1.0, dgates.data(), grads.b_hh.data(), 4 * h);
    std::fill(dh_next.begin(), dh_next.end(), 0.0);
    k.gemv_t(params.w_hh.data(), 4 * h, h, dgates.data(), dh_next.data());
    if (d_inputs != nullptr) {
      k.gemv_t(params.w_ih.data(), 4 * h, in, dgates.data(), d_inputs->row(tt).data());
    }
  }
}

std::vector<double> softmax(std::span<const double> logits) {
  std::vector<double> out(logits.begin(), logits.end());
  if (out.empty()) return out;
  const double max = *std::max_element(out.begin(), out.end());
  double sum = 0.0;
  for (double& v : out) {
    v = std::exp(v - max);
    sum += v;
  }
  for (double& v : out) v /= sum;
  return out;
}

double bce_loss(std::span<const double> probabilities, std::span<const double> labels) {
  if (probabilities.size() != labels.size() || probabilities.empty()) {
    throw std::invalid_argument("bce_loss: size mismatch or empty input");
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < probabilities.size(); ++i) {
    const double p = std::clamp(probabilities[i], kProbabilityClamp, 1.0 - kProbabilityClamp);
    sum += labels[i] * std::log(p) + (1.0 - labels[i]) * std::log(1.0 - p);
  }
  return -sum / static_cast<double>(probabilities.size());
}

void adamw_update(const std::vector<TensorRef>& params, const std::vector<ConstTensorRef>& grads,
                  AdamWState& state, std::int64_t step, const AdamWConfig& config) {
  if (params.size() != grads.size()) {
    throw std::invalid_argument("adamw_update: parameter/gradient tensor count mismatch");
  }
  if (step < 1) throw std::invalid_argument("adamw_update: step must be >= 1");
  if (!(config.learning_rate > 0.0)) {
    throw std::invalid_argument("adamw_update: learning rate must be positive");
  }
  if (state.first_moment.empty()) {
    for (const auto& p : params) {
      state.first_moment.emplace_back(p.data.size(), 0.0);
      state.second_moment.emplace_back(p.data.size(), 0.0);
    }
  }
  if (state.first_moment.size() != params.size()) {
    throw std::invalid_argument("adamw_update: optimizer state does not match parameters");
  }
  const auto t = static_cast<double>(step);
  simd::AdamWStep s{config.learning_rate,
                    config.beta1,
                    config.beta2,
                    config.epsilon,
                    0.0,
                    1.0 - std::pow(config.beta1, t),
                    1.0 - std::pow(config.beta2, t)};
  const auto& k = simd::kernels();
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto decay = config.weight_decay.find(params[i].group);
    if (decay == config.weight_decay.end()) {
      throw std::invalid_argument("adamw_update: no weight decay configured for group '" +
                                  params[i].group + "'");
    }
    if (params[i].data.size() != grads[i].data.size() ||
        state.first_moment[i].size() != params[i].data.size()) {
      throw std::invalid_argument("adamw_update: shape mismatch in " + params[i].group + "." +
                                  params[i].name);
    }
    s.weight_decay = decay->second;
    k.adamw(params[i].data.data(), grads[i].data.data(), state.first_moment[i].data(),
            state.second_moment[i].data(), params[i].data.size(), s);
  }
}

void init_uniform(const std::vector<TensorRef>& tensors, double bound, Rng& rng) {
  for (const auto& t : tensors) {
    for (double& v : t.data) v = bound * (2.0 * uniform01(rng) - 1.0);
  }
}

namespace {

std::string ShapeString(const std::vector<std::size_t>& shape) {
  std::string s;
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += 'x';
    s += std::to_string(shape[i]);
  }
  return s;
}

std::filesystem::path WithSuffix(const std::filesystem::path& stem, const char* suffix) {
  return std::filesystem::path(stem.string() + suffix);
}

}  // namespace

void save_checkpoint(const std::filesystem::path& stem, const std::vector<ConstTensorRef>& tensors) {
  static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes little endian");
  std::ofstream manifest(WithSuffix(stem, ".manifest.csv"));
  std::ofstream bin(WithSuffix(stem, ".bin"), std::ios::binary);
  if (!manifest || !bin) throw DataError("cannot write checkpoint " + stem.string());
  manifest << "group,name,shape,offset\n";
  std::size_t offset = 0;
  for (const auto& t : tensors) {
    manifest << t.group << ',' << t.name << ',' << ShapeString(t.shape) << ',' << offset << '\n';
    bin.write(reinterpret_cast<const char*>(t.data.data()),
              static_cast<std::streamsize>(t.data.size() * sizeof(double)));
    offset += t.data.size();
  }
  if (!bin || !manifest) throw DataError("failed writing checkpoint " + stem.string());
}

void load_checkpoint(const std::filesystem::path& stem, const std::vector<TensorRef>& tensors) {
  std::ifstream manifest(WithSuffix(stem, ".manifest.csv"));
  std::ifstream bin(WithSuffix(stem, ".bin"), std::ios::binary);
  if (!manifest || !bin) throw DataError("cannot open checkpoint " + stem.string());
  std::string line;
  std::getline(manifest, line);
  if (csv::trim(line) != "group,name,shape,offset") {
    throw DataError(stem.string() + ": bad manifest header");
  }
  std::size_t expected_offset = 0;
  for (const auto& t : tensors) {
    if (!std::getline(manifest, line)) {
      throw DataError(stem.string() + ": manifest ends before " + t.group + "." + t.name);
    }
    const auto cells = csv::split(line);
    const auto offset = cells.size() == 4 ? csv::parse_int<std::size_t>(cells[3]) : std::nullopt;
    if (!offset || cells[0] != t.group || cells[1] != t.name || cells[2] != ShapeString(t.shape) ||
        *offset != expected_offset) {
      throw DataError(stem.string() + ": manifest row '" + line + "' does not match " + t.group +
                      "." + t.name + " (" + ShapeString(t.shape) + ")");
    }
    bin.read(reinterpret_cast<char*>(t.data.data()),
             static_cast<std::streamsize>(t.data.size() * sizeof(double)));
    if (!bin) throw DataError(stem.string() + ": binary file truncated");
    expected_offset += t.data.size();
  }
  while (std::getline(manifest, line)) {
    if (!csv::trim(line).empty()) throw DataError(stem.string() + ": extra manifest rows");
  }
  if (bin.peek() != std::char_traits<char>::eof()) {
    throw DataError(stem.string() + ": binary file longer than manifest");
  }
}

GradCheckReport grad_check(const std::vector<TensorRef>& params,
                           const std::vector<ConstTensorRef>& analytic,
                           const std::function<double()>& loss, double step, double floor) {
  if (params.size() != analytic.size()) {
    throw std::invalid_argument("grad_check: parameter/gradient layout mismatch");
  }
  GradCheckReport report;
  for (std::size_t ti = 0; ti < params.size(); ++ti) {
    auto values = params[ti].data;
    if (values.size() != analytic[ti].data.size()) {
      throw std::invalid_argument("grad_check: size mismatch in " + params[ti].name);
    }
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      values[i] = saved + step;
      const double up = loss();
      values[i] = saved - step;
      const double down = loss();
      values[i] = saved;
      const double numeric = (up - down) / (2.0 * step);
      const double a = analytic[ti].data[i];
      const double denom = std::max({std::abs(a), std::abs(numeric), floor});
      const double rel = std::abs(a - numeric) / denom;
      ++report.checked;
      if (rel > report.max_relative_error || !std::isfinite(rel)) {
        report.max_relative_error = std::isfinite(rel) ? rel : std::numeric_limits<double>::infinity();
        report.worst_tensor = params[ti].group + "." + params[ti].name;
        report.worst_index = i;
        report.worst_analytic = a;
        report.worst_numeric = numeric;
      }
    }
  }
  return report;
}

}  // namespace mmtraj::nn
