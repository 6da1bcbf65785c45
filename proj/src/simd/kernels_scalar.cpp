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

#include <cmath>

#include "mmtraj/simd/kernels.hpp"

namespace mmtraj::simd::scalar {
namespace {

double Dot(const double* a, const double* b, std::size_t n) {
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sum += a[i] * b[i];
  }
  return sum;
}

void Axpy(double alpha, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    y[i] += alpha * x[i];
  }
}

void Gemv(const double* a, std::size_t rows, std::size_t cols, const double* x, double* y) {
  for (std::size_t r = 0; r < rows; ++r) {
    y[r] += Dot(a + r * cols, x, cols);
  }
}

void GemvT(const double* a, std::size_t rows, std::size_t cols, const double* x, double* y) {
  for (std::size_t r = 0; r < rows; ++r) {
    Axpy(x[r], a + r * cols, y, cols);
  }
}

void Ger(double alpha, const double* x, std::size_t rows, const double* y, std::size_t cols,
         double* a) {
  for (std::size_t r = 0; r < rows; ++r) {
    Axpy(alpha * x[r], y, a + r * cols, cols);
  }
}

void AdamW(double* p, const double* g, double* m, double* v, std::size_t n, const AdamWStep& s) {
  const double decay = 1.0 - s.learning_rate * s.weight_decay;
  const double step_size = s.learning_rate / s.bias_correction1;
  const double inv_sqrt_bc2 = 1.0 / std::sqrt(s.bias_correction2);
  for (std::size_t i = 0; i < n; ++i) {
    p[i] *= decay;
    m[i] = s.beta1 * m[i] + (1.0 - s.beta1) * g[i];
    v[i] = s.beta2 * v[i] + (1.0 - s.beta2) * g[i] * g[i];
    const double denom = std::sqrt(v[i]) * inv_sqrt_bc2 + s.epsilon;
    p[i] -= step_size * m[i] / denom;
  }
}

}  // namespace

const KernelTable table{Isa::scalar, Dot, Axpy, Gemv, GemvT, Ger, AdamW};

}  // namespace mmtraj::simd::scalar
