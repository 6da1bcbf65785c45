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

// Dense double-precision inner loops used by the LSTM, the conditioning
// networks, the Gibbs sampler and the optimizer.
//
// Every kernel has a portable scalar reference and an AVX2+FMA variant. The
// variant is picked once at startup from CPUID; MMTRAJ_SIMD=scalar in the
// environment forces the reference path. Matrices are row-major.

#include <cstddef>
#include <span>
#include <string_view>

namespace mmtraj::simd {

enum class Isa { scalar, avx2 };

std::string_view isa_name(Isa isa);

struct AdamWStep {
  double learning_rate;
  double beta1;
  double beta2;
  double epsilon;
  double weight_decay;
  double bias_correction1;  // 1 - beta1^t
  double bias_correction2;  // 1 - beta2^t
};

struct KernelTable {
  Isa isa;
  double (*dot)(const double* a, const double* b, std::size_t n);
  // y += alpha * x
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
  // y += A x, A is rows x cols
  void (*gemv)(const double* a, std::size_t rows, std::size_t cols, const double* x, double* y);
  // y += A^T x, A is rows x cols, x has rows entries, y has cols entries
  void (*gemv_t)(const double* a, std::size_t rows, std::size_t cols, const double* x, double* y);
  // A += alpha * x y^T
  void (*ger)(double alpha, const double* x, std::size_t rows, const double* y, std::size_t cols,
              double* a);
  // Decoupled-decay Adam update, in place on p, m, v.
  void (*adamw)(double* p, const double* g, double* m, double* v, std::size_t n,
                const AdamWStep& step);
};

bool isa_supported(Isa isa);
const KernelTable& kernels_for(Isa isa);

// Kernel table selected for this process.
const KernelTable& kernels();
Isa active_isa();
// Overrides the runtime choice; throws std::invalid_argument when the CPU
// lacks the requested instruction set.
void set_active_isa(Isa isa);

namespace scalar {
extern const KernelTable table;
}
#if defined(MMTRAJ_ENABLE_AVX2)
namespace avx2 {
extern const KernelTable table;
}
#endif

// Span conveniences over the active table.
inline double dot(std::span<const double> a, std::span<const double> b) {
  return kernels().dot(a.data(), b.data(), a.size());
}
inline void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  kernels().axpy(alpha, x.data(), y.data(), x.size());
}

}  // namespace mmtraj::simd
