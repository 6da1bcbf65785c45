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

#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "mmtraj/cohort.hpp"
#include "mmtraj/matrix.hpp"

namespace mmtraj {

// Last observation carried forward within the record; leading gaps take the
// earliest measurement. Throws DataError if a lab is never measured.
PatientRecord impute_locf(const PatientRecord& record);
Cohort impute_locf(const Cohort& cohort);

double yeo_johnson(double x, double lambda);
// Inverse of yeo_johnson. Values outside the image of the forward map are
// clamped to its boundary.
double yeo_johnson_inverse(double y, double lambda);
// Profile log-likelihood of lambda under a Gaussian model of the transformed
// column (variance at its maximum-likelihood value).
double yeo_johnson_log_likelihood(std::span<const double> column, double lambda);

struct FeatureTransform {
  std::string name;
  double lambda = 1.0;
  double mean = 0.0;
  double sd = 1.0;

  double apply(double x) const { return (yeo_johnson(x, lambda) - mean) / sd; }
  double invert(double y) const { return yeo_johnson_inverse(y * sd + mean, lambda); }
  friend bool operator==(const FeatureTransform&, const FeatureTransform&) = default;
};

// Per-column Yeo-Johnson power transform followed by standardization.
struct TransformParams {
  std::vector<FeatureTransform> features;

  std::size_t size() const { return features.size(); }

  void apply_in_place(std::span<double> row) const;
  void invert_in_place(std::span<double> row) const;
  Matrix apply(const Matrix& raw) const;
  Matrix invert(const Matrix& transformed) const;

  friend bool operator==(const TransformParams&, const TransformParams&) = default;
};

inline constexpr double kLambdaSearchLow = -5.0;
inline constexpr double kLambdaSearchHigh = 5.0;

// Maximum-likelihood lambda per column (Brent search on [-5, 5]) and the
// mean/sd of the transformed column. Needs >= 10 rows; a constant column is
// a DataError naming the feature.
TransformParams fit_power_transform(const Matrix& train, std::span<const std::string_view> names);
// Ten-lab overload, named after kLabNames.
TransformParams fit_power_transform(const Matrix& train);

// Lab panel overloads.
std::array<double, kNumLabs> apply_transform(const TransformParams& params,
                                             const std::array<double, kNumLabs>& panel);
std::array<double, kNumLabs> invert_transform(const TransformParams& params,
                                              const std::array<double, kNumLabs>& panel);

// Normal QQ pairs (theoretical, sample) at plotting positions (i - 0.5) / n.
std::vector<std::pair<double, double>> qq_points(std::span<const double> column);

// CSV `feature,lambda,mean,sd`, round-trip exact.
void save_transform(const std::filesystem::path& path, const TransformParams& params);
TransformParams load_transform(const std::filesystem::path& path);

// Vertically stacks per-patient matrices.
Matrix stack_rows(const std::vector<Matrix>& blocks);

}  // namespace mmtraj
