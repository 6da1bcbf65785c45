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

#include <cstdint>
#include <initializer_list>
#include <random>
#include <span>
#include <utility>
#include <string_view>

namespace mmtraj {

using Rng = std::mt19937_64;

// splitmix64 finalizer; used to turn structured keys into independent seeds.
constexpr std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t hash_tag(std::string_view tag) {
  std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
  for (char c : tag) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

// Seed for an independent stream identified by (seed, tag, indices...).
inline std::uint64_t derive_seed(std::uint64_t seed, std::string_view tag,
                                 std::initializer_list<std::uint64_t> indices = {}) {
  std::uint64_t h = mix64(seed ^ mix64(hash_tag(tag)));
  for (std::uint64_t i : indices) {
    h = mix64(h ^ mix64(i + 0x632be59bd9b4e019ULL));
  }
  return h;
}

inline Rng make_rng(std::uint64_t seed, std::string_view tag,
                    std::initializer_list<std::uint64_t> indices = {}) {
  return Rng(derive_seed(seed, tag, indices));
}

// Uniform double in [0, 1) with 53 random bits. Spelled out instead of
// std::uniform_real_distribution so the stream is identical across
// standard libraries.
inline double uniform01(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

// Index in [0, n) from uniform01.
inline std::size_t uniform_index(Rng& rng, std::size_t n) {
  const auto j = static_cast<std::size_t>(uniform01(rng) * static_cast<double>(n));
  return j < n ? j : n - 1;
}

// Fisher-Yates on top of uniform_index, same portability reason.
template <class T>
void shuffle(std::span<T> items, Rng& rng) {
  for (std::size_t i = items.size(); i > 1; --i) {
    std::swap(items[i - 1], items[uniform_index(rng, i)]);
  }
}

}  // namespace mmtraj
