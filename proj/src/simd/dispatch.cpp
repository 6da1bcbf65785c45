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

#include <atomic>
#include <cstdlib>
#include <stdexcept>
#include <string>

#include "mmtraj/simd/kernels.hpp"

namespace mmtraj::simd {
namespace {

bool CpuHasAvx2() {
#if defined(MMTRAJ_ENABLE_AVX2) && (defined(__GNUC__) || defined(__clang__))
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

Isa DetectIsa() {
  if (const char* env = std::getenv("MMTRAJ_SIMD"); env != nullptr && std::string(env) == "scalar") {
    return Isa::scalar;
  }
  return CpuHasAvx2() ? Isa::avx2 : Isa::scalar;
}

std::atomic<const KernelTable*>& ActiveTable() {
  static std::atomic<const KernelTable*> active{&kernels_for(DetectIsa())};
  return active;
}

}  // namespace

std::string_view isa_name(Isa isa) {
  switch (isa) {
    case Isa::scalar:
      return "scalar";
    case Isa::avx2:
      return "avx2";
  }
  return "unknown";
}

bool isa_supported(Isa isa) {
  switch (isa) {
    case Isa::scalar:
      return true;
    case Isa::avx2:
      return CpuHasAvx2();
  }
  return false;
}

const KernelTable& kernels_for(Isa isa) {
#if defined(MMTRAJ_ENABLE_AVX2)
  if (isa == Isa::avx2) {
    return avx2::table;
  }
#endif
  (void)isa;
  return scalar::table;
}

const KernelTable& kernels() { return *ActiveTable().load(std::memory_order_relaxed); }

Isa active_isa() { return kernels().isa; }

void set_active_isa(Isa isa) {
  if (!isa_supported(isa)) {
    throw std::invalid_argument("instruction set not supported on this CPU: " +
                                std::string(isa_name(isa)));
  }
  ActiveTable().store(&kernels_for(isa), std::memory_order_relaxed);
}

}  // namespace mmtraj::simd
