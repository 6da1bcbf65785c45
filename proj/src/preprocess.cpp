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

#include "mmtraj/preprocess.hpp"

#include <algorithm>
#include <boost/math/distributions/normal.hpp>
#include <boost/math/tools/minima.hpp>
#include <cmath>
#include <fstream>
#include <limits>

#include "csv.hpp"
#include "mmtraj/errors.hpp"

namespace mmtraj {

PatientRecord impute_locf(const PatientRecord& record) {
  PatientRecord out = record;
  for (std::size_t f = 0; f < kNumLabs; ++f) {
    std::optional<double> carried;
    for (const auto& v : record.visits) {
      if (v.labs.values[f]) {
        carried = v.labs.values[f];
        break;
      }
    }
    if (!carried) {
      throw DataError("patient " + record.patient_id + ": " + std::string(kLabNames[f]) +
                      " never measured, cannot impute");
    }
    for (auto& v : out.visits) {
      if (v.labs.values[f]) {
        carried = v.labs.values[f];
      } else {
        v.labs.values[f] = carried;
      }
    }
  }
  return out;
}

Cohort impute_locf(const Cohort& cohort) {
  Cohort out;
  out.provenance = cohort.provenance;
  out.patients.reserve(cohort.patients.size());
  for (const auto& p : cohort.patients) out.patients.push_back(impute_locf(p));
  return out;
}

namespace {
constexpr double kLambdaZero = 1e-12;
}

double yeo_johnson(double x, double lambda) {
  if (x >= 0.0) {
    if (std::abs(lambda) < kLambdaZero) return std::log1p(x);
    return (std::pow(x + 1.0, lambda) - 1.0) / lambda;
  }
  if (std::abs(lambda - 2.0) < kLambdaZero) return -std::log1p(-x);
  return -(std::pow(1.0 - x, 2.0 - lambda) - 1.0) / (2.0 - lambda);
}

double yeo_johnson_inverse(double y, double lambda) {
  constexpr double kMax = std::numeric_limits<double>::max();
  if (y >= 0.0) {
    if (std::abs(lambda) < kLambdaZero) return std::min(std::expm1(y), kMax);
    const double base = y * lambda + 1.0;
    if (base <= 0.0) return kMax;  // beyond the supremum of the image
    return std::min(std::pow(base, 1.0 / lambda) - 1.0, kMax);
  }
  if (std::abs(lambda - 2.0) < kLambdaZero) return std::max(-std::expm1(-y), -kMax);
  const double base = 1.0 - (2.0 - lambda) * y;
  if (base <= 0.0) return -kMax;
  return std::max(1.0 - std::pow(base, 1.0 / (2.0 - lambda)), -kMax);
}

double yeo_johnson_log_likelihood(std::span<const double> column, double lambda) {
  const auto n = static_cast<double>(column.size());
  double mean = 0.0;
  double jacobian = 0.0;
  for (double x : column) {
    mean += yeo_johnson(x, lambda);
    jacobian += std::copysign(std::log1p(std::abs(x)), x);
  }
  mean /= n;
  double var = 0.0;
  for (double x : column) {
    const double d = yeo_johnson(x, lambda) - mean;
    var += d * d;
  }
  var /= n;
  return -0.5 * n * std::log(var) + (lambda - 1.0) * jacobian;
}

void TransformParams::apply_in_place(std::span<double> row) const {
  for (std::size_t f = 0; f < features.size(); ++f) row[f] = features[f].apply(row[f]);
}

void TransformParams::invert_in_place(std::span<double> row) const {
  for (std::size_t f = 0; f < features.size(); ++f) row[f] = features[f].invert(row[f]);
}

Matrix TransformParams::apply(const Matrix& raw) const {
  if (raw.cols() != features.size()) {
    throw DataError("transform expects " + std::to_string(features.size()) + " columns, got " +
                    std::to_string(raw.cols()));
  }
  Matrix out = raw;
  for (std::size_t r = 0; r < out.rows(); ++r) apply_in_place(out.row(r));
  return out;
}

Matrix TransformParams::invert(const Matrix& transformed) const {
  if (transformed.cols() != features.size()) {
    throw DataError("transform expects " + std::to_string(features.size()) + " columns, got " +
                    std::to_string(transformed.cols()));
  }
  Matrix out = transformed;
  for (std::size_t r = 0; r < out.rows(); ++r) invert_in_place(out.row(r));
  return out;
}

TransformParams fit_power_transform(const Matrix& train, std::span<const std::string_view> names) {
  if (names.size() != train.cols()) {
    throw DataError("fit_power_transform: " + std::to_string(names.size()) + " names for " +
                    std::to_string(train.cols()) + " columns");
  }
  if (train.rows() < 10) {
    throw DataError("fit_power_transform needs at least 10 rows, got " +
                    std::to_string(train.rows()));
  }
  TransformParams params;
  std::vector<double> column(train.rows());
  for (std::size_t f = 0; f < train.cols(); ++f) {
    for (std::size_t r = 0; r < train.rows(); ++r) column[r] = train(r, f);
    const auto [lo, hi] = std::minmax_element(column.begin(), column.end());
    if (!(*hi > *lo)) {
      throw DataError("feature " + std::string(names[f]) + " has zero variance");
    }
    const auto neg_llf = [&](double lambda) { return -yeo_johnson_log_likelihood(column, lambda); };
    // ~1.5e-8 relative accuracy on lambda.
    const auto [lambda, value] = boost::math::tools::brent_find_minima(
        neg_llf, kLambdaSearchLow, kLambdaSearchHigh, std::numeric_limits<double>::digits / 2);
    (void)value;
    double mean = 0.0;
    for (double x : column) mean += yeo_johnson(x, lambda);
    mean /= static_cast<double>(column.size());
    double var = 0.0;
    for (double x : column) {
      const double d = yeo_johnson(x, lambda) - mean;
      var += d * d;
    }
    const double sd = std::sqrt(var / static_cast<double>(column.size()));
    if (!(sd > 0.0) || !std::isfinite(sd)) {
      throw DataError("feature " + std::string(names[f]) + " has zero variance after transform");
    }
    params.features.push_back({std::string(names[f]), lambda, mean, sd});
  }
  return params;
}

TransformParams fit_power_transform(const Matrix& train) {
  if (train.cols() != kNumLabs) {
    throw DataError("lab transform expects 10 columns, got " + std::to_string(train.cols()));
  }
  return fit_power_transform(train, kLabNames);
}

std::array<double, kNumLabs> apply_transform(const TransformParams& params,
                                             const std::array<double, kNumLabs>& panel) {
  auto out = panel;
  params.apply_in_place(out);
  return out;
}

std::array<double, kNumLabs> invert_transform(const TransformParams& params,
                                              const std::array<double, kNumLabs>& panel) {
  auto out = panel;
  params.invert_in_place(out);
  return out;
}

std::vector<std::pair<double, double>> qq_points(std::span<const double> column) {
  if (column.size() < 2) throw DataError("qq_points needs at least 2 values");
  std::vector<double> sorted(column.begin(), column.end());
  std::sort(sorted.begin(), sorted.end());
  const boost::math::normal_distribution<double> normal;
  const auto n = static_cast<double>(sorted.size());
  std::vector<std::pair<double, double>> out;
  out.reserve(sorted.size());
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    const double p = (static_cast<double>(i) + 0.5) / n;
    out.emplace_back(boost::math::quantile(normal, p), sorted[i]);
  }
  return out;
}

void save_transform(const std::filesystem::path& path, const TransformParams& params) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << "feature,lambda,mean,sd\n";
  for (const auto& f : params.features) {
    out << f.name << ',' << csv::format_double(f.lambda) << ',' << csv::format_double(f.mean)
        << ',' << csv::format_double(f.sd) << '\n';
  }
}

TransformParams load_transform(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open transform file " + path.string());
  std::string line;
  if (!std::getline(in, line) || csv::trim(line) != "feature,lambda,mean,sd") {
    throw DataError(path.string() + ": expected header 'feature,lambda,mean,sd'");
  }
  TransformParams params;
  while (std::getline(in, line)) {
    if (csv::trim(line).empty()) continue;
    const auto cells = csv::split(line);
    if (cells.size() != 4) throw DataError(path.string() + ": malformed row '" + line + "'");
    const auto lambda = csv::parse_double(cells[1]);
    const auto mean = csv::parse_double(cells[2]);
    const auto sd = csv::parse_double(cells[3]);
    if (!lambda || !mean || !sd || !(*sd > 0.0)) {
      throw DataError(path.string() + ": malformed row '" + line + "'");
    }
    params.features.push_back({std::string(csv::trim(cells[0])), *lambda, *mean, *sd});
  }
  return params;
}

Matrix stack_rows(const std::vector<Matrix>& blocks) {
  Matrix out;
  for (const auto& b : blocks) {
    for (std::size_t r = 0; r < b.rows(); ++r) out.append_row(b.row(r));
  }
  return out;
}

}  // namespace mmtraj
