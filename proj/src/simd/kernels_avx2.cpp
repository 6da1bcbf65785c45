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

// Compiled with -mavx2 -mfma. Only reached through the dispatch table after
// a CPUID check, so nothing here may be called directly.

#include <immintrin.h>

#include <cmath>

#include "mmtraj/simd/kernels.hpp"

namespace mmtraj::simd::avx2 {
namespace {

inline double HorizontalSum(__m256d v) {
  const __m128d lo = _mm256_castpd256_pd128(v);
  const __m128d hi = _mm256_extractf128_pd(v, 1);
  const __m128d pair = _mm_add_pd(lo, hi);
  return _mm_cvtsd_f64(_mm_add_sd(pair, _mm_unpackhi_pd(pair, pair)));
}

double Dot(const double* a, const double* b, std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
    acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 4), _mm256_loadu_pd(b + i + 4), acc1);
  }
  for (; i + 4 <= n; i += 4) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
  }
  double sum = HorizontalSum(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) {
    sum += a[i] * b[i];
  }
  return sum;
}

void Axpy(double alpha, const double* x, double* y, std::size_t n) {
  const __m256d va = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  }
  for (; i < n; ++i) {
    y[i] += alpha * x[i];
  }
}

void Gemv(const double* a, std::size_t rows, std::size_t cols, const double* x, double* y) {
  std::size_t r = 0;
  // Four rows at a time share the loads of x.
  for (; r + 4 <= rows; r += 4) {
    const double* a0 = a + r * cols;
    const double* a1 = a0 + cols;
    const double* a2 = a1 + cols;
    const double* a3 = a2 + cols;
    __m256d s0 = _mm256_setzero_pd();
    __m256d s1 = _mm256_setzero_pd();
    __m256d s2 = _mm256_setzero_pd();
    __m256d s3 = _mm256_setzero_pd();
    std::size_t c = 0;
    for (; c + 4 <= cols; c += 4) {
      const __m256d vx = _mm256_loadu_pd(x + c);
      s0 = _mm256_fmadd_pd(_mm256_loadu_pd(a0 + c), vx, s0);
      s1 = _mm256_fmadd_pd(_mm256_loadu_pd(a1 + c), vx, s1);
      s2 = _mm256_fmadd_pd(_mm256_loadu_pd(a2 + c), vx, s2);
      s3 = _mm256_fmadd_pd(_mm256_loadu_pd(a3 + c), vx, s3);
    }
    double t0 = HorizontalSum(s0);
    double t1 = HorizontalSum(s1);
    double t2 = HorizontalSum(s2);
    double t3 = HorizontalSum(s3);
    for (; c < cols; ++c) {
      t0 += a0[c] * x[c];
      t1 += a1[c] * x[c];
      t2 += a2[c] * x[c];
      t3 += a3[c] * x[c];
    }
    y[r] += t0;
    y[r + 1] += t1;
    y[r + 2] += t2;
    y[r + 3] += t3;
  }
  for (; r < rows; ++r) {
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
  const __m256d vdecay = _mm256_set1_pd(decay);
  const __m256d vb1 = _mm256_set1_pd(s.beta1);
  const __m256d vb1c = _mm256_set1_pd(1.0 - s.beta1);
  const __m256d vb2 = _mm256_set1_pd(s.beta2);
  const __m256d vb2c = _mm256_set1_pd(1.0 - s.beta2);
  const __m256d vbc2 = _mm256_set1_pd(inv_sqrt_bc2);
  const __m256d veps = _mm256_set1_pd(s.epsilon);
  const __m256d vstep = _mm256_set1_pd(step_size);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d vg = _mm256_loadu_pd(g + i);
    const __m256d vp = _mm256_mul_pd(_mm256_loadu_pd(p + i), vdecay);
    const __m256d vm =
        _mm256_add_pd(_mm256_mul_pd(vb1, _mm256_loadu_pd(m + i)), _mm256_mul_pd(vb1c, vg));
    const __m256d vv = _mm256_add_pd(_mm256_mul_pd(vb2, _mm256_loadu_pd(v + i)),
                                     _mm256_mul_pd(_mm256_mul_pd(vb2c, vg), vg));
    const __m256d denom = _mm256_add_pd(_mm256_mul_pd(_mm256_sqrt_pd(vv), vbc2), veps);
    const __m256d update = _mm256_div_pd(_mm256_mul_pd(vstep, vm), denom);
    _mm256_storeu_pd(m + i, vm);
    _mm256_storeu_pd(v + i, vv);
    _mm256_storeu_pd(p + i, _mm256_sub_pd(vp, update));
  }
  for (; i < n; ++i) {
    p[i] *= decay;
    m[i] = s.beta1 * m[i] + (1.0 - s.beta1) * g[i];
    v[i] = s.beta2 * v[i] + (1.0 - s.beta2) * g[i] * g[i];
    const double denom = std::sqrt(v[i]) * inv_sqrt_bc2 + s.epsilon;
    p[i] -= step_size * m[i] / denom;
  }
}

}  // namespace

const KernelTable table{Isa::avx2, Dot, Axpy, Gemv, GemvT, Ger, AdamW};

}  // namespace mmtraj::simd::avx2
