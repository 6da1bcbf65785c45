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

#include "mmtraj/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <random>
#include <sstream>

#include "csv.hpp"
#include "mmtraj/errors.hpp"
#include "mmtraj/rng.hpp"

namespace mmtraj {
namespace {

// Typical magnitude and log-scale spread per lab, in kLabNames order.
constexpr std::array<double, kNumLabs> kLabBase = {12.0, 9.5, 1.0, 200.0, 3.8,
                                                   3.0,  2.0, 20.0, 15.0, 6.0};
constexpr std::array<double, kNumLabs> kLabLogScale = {0.15, 0.08, 0.3, 0.3, 0.1,
                                                       0.5,  1.0,  0.8, 0.8, 0.3};

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double Pearson(const std::vector<double>& x, const std::vector<double>& y) {
  const std::size_t n = x.size();
  if (n < 3) return kNaN;
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxx = 0.0, syy = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = x[i] - mx;
    const double dy = y[i] - my;
    sxx += dx * dx;
    syy += dy * dy;
    sxy += dx * dy;
  }
  if (sxx <= 0.0 || syy <= 0.0) return kNaN;
  return sxy / std::sqrt(sxx * syy);
}

double Prevalence(const std::vector<double>& sorted_rises, double threshold) {
  const auto first = std::lower_bound(sorted_rises.begin(), sorted_rises.end(), threshold);
  return static_cast<double>(sorted_rises.end() - first) /
         static_cast<double>(sorted_rises.size());
}

}  // namespace

Matrix default_cross_correlation() {
  // Loadings: anaemia/inflammation, tumour burden, renal.
  constexpr double kLoadings[kNumLabs][3] = {
      {-0.6, -0.3, -0.2},  // hb
      {0.1, 0.3, 0.4},     // ca
      {0.2, 0.2, 0.7},     // cr
      {0.4, 0.3, 0.1},     // ldh
      {-0.6, -0.2, -0.1},  // alb
      {0.3, 0.4, 0.6},     // b2m
      {0.1, 0.8, 0.1},     // mpr
      {0.2, 0.7, -0.2},    // sfl_kappa
      {0.2, 0.6, 0.3},     // sfl_lambda
      {0.5, -0.3, 0.0},    // wbc
  };
  Matrix c(kNumLabs, kNumLabs);
  for (std::size_t i = 0; i < kNumLabs; ++i) {
    for (std::size_t j = 0; j < kNumLabs; ++j) {
      if (i == j) {
        c(i, j) = 1.0;
        continue;
      }
      double s = 0.0;
      for (std::size_t k = 0; k < 3; ++k) s += kLoadings[i][k] * kLoadings[j][k];
      c(i, j) = s;
    }
  }
  return c;
}

Matrix psd_cholesky(const Matrix& m) {
  const std::size_t n = m.rows();
  Matrix l(n, n);
  const double scale = std::max(1.0, std::abs(m(0, 0)));
  for (std::size_t j = 0; j < n; ++j) {
    double d = m(j, j);
    for (std::size_t k = 0; k < j; ++k) d -= l(j, k) * l(j, k);
    if (d < -1e-10 * scale) {
      throw DataError("cross-correlation matrix is not positive semi-definite");
    }
    if (d <= 1e-12 * scale) {
      continue;  // null direction: column stays zero
    }
    const double root = std::sqrt(d);
    l(j, j) = root;
    for (std::size_t i = j + 1; i < n; ++i) {
      double s = m(i, j);
      for (std::size_t k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
      l(i, j) = s / root;
    }
  }
  // A semi-definite matrix must be reproduced by its factor.
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j <= i; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < n; ++k) s += l(i, k) * l(j, k);
      if (std::abs(s - m(i, j)) > 1e-8 * scale) {
        throw DataError("cross-correlation matrix is not positive semi-definite");
      }
    }
  }
  return l;
}

void validate(const SynthConfig& config) {
  if (config.n_patients == 0) throw DataError("synth: n_patients must be positive");
  if (!(config.visit_count_mean >= 2.0) || !(config.visit_count_sd >= 0.0)) {
    throw DataError("synth: visit count mean must be >= 2 and sd >= 0");
  }
  if (!(config.ar_coefficient > 0.0 && config.ar_coefficient < 1.0)) {
    throw DataError("synth: ar_coefficient must lie in (0, 1)");
  }
  if (!(config.noise_scale > 0.0)) throw DataError("synth: noise_scale must be positive");
  if (!(config.patient_offset_sd >= 0.0)) throw DataError("synth: patient_offset_sd must be >= 0");
  if (!(config.missing_fraction >= 0.0 && config.missing_fraction < 1.0)) {
    throw DataError("synth: missing_fraction must lie in [0, 1)");
  }
  if (config.tune_threshold &&
      !(config.target_prevalence > 0.0 && config.target_prevalence < 1.0)) {
    throw DataError("synth: target_prevalence must lie in (0, 1)");
  }
  const Matrix& c = config.cross_corr_target;
  if (c.empty()) return;
  if (c.rows() != kNumLabs || c.cols() != kNumLabs) {
    throw DataError("synth: cross_corr_target must be 10 x 10");
  }
  for (std::size_t i = 0; i < kNumLabs; ++i) {
    if (std::abs(c(i, i) - 1.0) > 1e-9) {
      throw DataError("synth: cross_corr_target must have a unit diagonal");
    }
    for (std::size_t j = 0; j < i; ++j) {
      if (std::abs(c(i, j) - c(j, i)) > 1e-9) {
        throw DataError("synth: cross_corr_target must be symmetric");
      }
    }
  }
  psd_cholesky(c);
}

double latent_coordinate(Lab lab, double raw_value) {
  const auto f = index_of(lab);
  return std::log(raw_value / kLabBase[f]) / kLabLogScale[f];
}

double raw_from_latent(Lab lab, double latent) {
  const auto f = index_of(lab);
  return kLabBase[f] * std::exp(kLabLogScale[f] * latent);
}

std::vector<bool> progression_flags(std::span<const double> mpr_latent, double threshold) {
  std::vector<bool> flags(mpr_latent.size(), false);
  double running_min = std::numeric_limits<double>::infinity();
  for (std::size_t t = 0; t < mpr_latent.size(); ++t) {
    running_min = std::min(running_min, mpr_latent[t]);
    flags[t] = mpr_latent[t] - running_min >= threshold;
  }
  return flags;
}

namespace {

std::vector<double> MprLatent(const PatientRecord& record) {
  std::vector<double> out;
  out.reserve(record.visits.size());
  for (const auto& v : record.visits) {
    const auto& value = v.labs[Lab::mpr];
    if (!value) {
      throw DataError("patient " + record.patient_id + ": missing M-protein, cannot label");
    }
    out.push_back(latent_coordinate(Lab::mpr, *value));
  }
  return out;
}

}  // namespace

Cohort relabel(const Cohort& cohort, double threshold) {
  Cohort out = cohort;
  for (auto& patient : out.patients) {
    const auto flags = progression_flags(MprLatent(patient), threshold);
    for (std::size_t t = 0; t < flags.size(); ++t) patient.visits[t].pd_label = flags[t];
  }
  return out;
}

SynthResult synthesize(const SynthConfig& config) {
  validate(config);
  const Matrix corr =
      config.cross_corr_target.empty() ? default_cross_correlation() : config.cross_corr_target;
  const Matrix chol = psd_cholesky(corr);
  const double a = config.ar_coefficient;
  const double stationary = 1.0 / std::sqrt(1.0 - a * a);

  SynthResult result;
  result.cohort.provenance = Provenance::synthetic;
  std::vector<std::vector<double>> latent_mpr(config.n_patients);
  std::vector<std::vector<std::array<bool, kNumLabs>>> masks(config.n_patients);

  for (std::size_t p = 0; p < config.n_patients; ++p) {
    Rng rng = make_rng(config.seed, "synth.patient", {p});
    std::normal_distribution<double> normal(0.0, 1.0);
    const auto correlated = [&](double scale) {
      std::array<double, kNumLabs> e{};
      for (auto& x : e) x = normal(rng);
      std::array<double, kNumLabs> out{};
      for (std::size_t i = 0; i < kNumLabs; ++i) {
        double s = 0.0;
        for (std::size_t k = 0; k <= i; ++k) s += chol(i, k) * e[k];
        out[i] = scale * s;
      }
      return out;
    };

    const double draw = config.visit_count_mean + config.visit_count_sd * normal(rng);
    const auto visits = static_cast<std::size_t>(std::max(2.0, std::round(draw)));
    const auto mu = correlated(config.patient_offset_sd);
    auto z = correlated(stationary);
    for (std::size_t i = 0; i < kNumLabs; ++i) z[i] += mu[i];

    PatientRecord record;
    {
      std::ostringstream id;
      id << "SYN" << std::setfill('0') << std::setw(5) << p;
      record.patient_id = id.str();
    }
    for (std::size_t t = 0; t < visits; ++t) {
      if (t > 0) {
        const auto innovation = correlated(1.0);
        for (std::size_t i = 0; i < kNumLabs; ++i) {
          z[i] = mu[i] + a * (z[i] - mu[i]) + innovation[i];
        }
      }
      Visit visit;
      visit.visit_index = static_cast<int>(t);
      std::array<bool, kNumLabs> mask{};
      for (std::size_t i = 0; i < kNumLabs; ++i) {
        const double x = z[i] + config.noise_scale * normal(rng);
        const double raw = raw_from_latent(static_cast<Lab>(i), x);
        visit.labs.values[i] = raw;
        mask[i] = config.missing_fraction > 0.0 && uniform01(rng) < config.missing_fraction;
      }
      // The rule reads the value back from the raw lab, like relabel() does.
      latent_mpr[p].push_back(latent_coordinate(Lab::mpr, *visit.labs[Lab::mpr]));
      masks[p].push_back(mask);
      record.visits.push_back(std::move(visit));
    }
    result.cohort.patients.push_back(std::move(record));
  }

  double threshold = config.pd_rule_threshold;
  if (config.tune_threshold) {
    std::vector<double> rises;
    for (const auto& series : latent_mpr) {
      double running_min = std::numeric_limits<double>::infinity();
      for (double x : series) {
        running_min = std::min(running_min, x);
        rises.push_back(x - running_min);
      }
    }
    std::sort(rises.begin(), rises.end());
    double lo = 0.0;
    double hi = rises.back() + 1.0;
    for (int iter = 0; iter < 200 && hi - lo > 1e-13; ++iter) {
      const double mid = 0.5 * (lo + hi);
      if (Prevalence(rises, mid) > config.target_prevalence) {
        lo = mid;
      } else {
        hi = mid;
      }
    }
    const double p_lo = Prevalence(rises, lo);
    const double p_hi = Prevalence(rises, hi);
    threshold = std::abs(p_lo - config.target_prevalence) <= std::abs(p_hi - config.target_prevalence)
                    ? lo
                    : hi;
    const double achieved = Prevalence(rises, threshold);
    if (std::abs(achieved - config.target_prevalence) > 0.01) {
      std::ostringstream msg;
      msg << "synth: target prevalence " << config.target_prevalence
          << " is unattainable; nearest reachable prevalences are " << p_hi << " and " << p_lo
          << " (reachable range [0, " << Prevalence(rises, std::nextafter(0.0, 1.0)) << "] plus 1)";
      throw DataError(msg.str());
    }
  }

  std::size_t positives = 0;
  std::size_t total = 0;
  for (std::size_t p = 0; p < config.n_patients; ++p) {
    const auto flags = progression_flags(latent_mpr[p], threshold);
    auto& record = result.cohort.patients[p];
    for (std::size_t t = 0; t < flags.size(); ++t) {
      record.visits[t].pd_label = flags[t];
      positives += flags[t] ? 1 : 0;
      ++total;
      for (std::size_t i = 0; i < kNumLabs; ++i) {
        if (masks[p][t][i]) record.visits[t].labs.values[i].reset();
      }
    }
  }
  if (config.missing_fraction > 0.0) {
    // Masking can leave a lab never measured; such patients are excluded
    // exactly as on ingestion.
    apply_exclusions(result.cohort);
  }
  result.pd_threshold = threshold;
  result.prevalence = static_cast<double>(positives) / static_cast<double>(total);
  return result;
}

std::vector<Matrix> latent_series(const Cohort& cohort) {
  std::vector<Matrix> out;
  out.reserve(cohort.patients.size());
  for (const auto& patient : cohort.patients) {
    Matrix m = patient.lab_matrix();
    for (std::size_t t = 0; t < m.rows(); ++t) {
      for (std::size_t f = 0; f < kNumLabs; ++f) {
        m(t, f) = latent_coordinate(static_cast<Lab>(f), m(t, f));
      }
    }
    out.push_back(std::move(m));
  }
  return out;
}

Moments empirical_moments(const std::vector<Matrix>& series, int max_lag) {
  if (max_lag < 0) throw DataError("max_lag must be non-negative");
  const std::size_t nf = series.empty() ? kNumLabs : series.front().cols();
  Moments out;
  out.lag_corr.reserve(static_cast<std::size_t>(max_lag) + 1);
  std::vector<double> xs;
  std::vector<double> ys;
  for (int lag = 0; lag <= max_lag; ++lag) {
    const auto l = static_cast<std::size_t>(lag);
    Matrix m(nf, nf, kNaN);
    for (std::size_t i = 0; i < nf; ++i) {
      for (std::size_t j = 0; j < nf; ++j) {
        xs.clear();
        ys.clear();
        for (const auto& s : series) {
          for (std::size_t t = 0; t + l < s.rows(); ++t) {
            xs.push_back(s(t, i));
            ys.push_back(s(t + l, j));
          }
        }
        m(i, j) = Pearson(xs, ys);
      }
    }
    out.lag_corr.push_back(std::move(m));
  }
  out.cross_corr = out.lag_corr.front();
  return out;
}

Moments empirical_moments(const Cohort& cohort, int max_lag) {
  std::vector<Matrix> series;
  series.reserve(cohort.patients.size());
  for (const auto& p : cohort.patients) series.push_back(p.lab_matrix());
  return empirical_moments(series, max_lag);
}

Moments analytic_moments(const SynthConfig& config, int max_lag) {
  validate(config);
  const Matrix corr =
      config.cross_corr_target.empty() ? default_cross_correlation() : config.cross_corr_target;
  const double a = config.ar_coefficient;
  const double s2 = config.patient_offset_sd * config.patient_offset_sd;
  const double ar_var = 1.0 / (1.0 - a * a);
  const double total = s2 + ar_var + config.noise_scale * config.noise_scale;
  Moments out;
  for (int lag = 0; lag <= max_lag; ++lag) {
    Matrix m(kNumLabs, kNumLabs);
    const double shared = s2 + std::pow(a, lag) * ar_var;
    for (std::size_t i = 0; i < kNumLabs; ++i) {
      for (std::size_t j = 0; j < kNumLabs; ++j) {
        m(i, j) = corr(i, j) * shared / total;
      }
      if (lag == 0) m(i, i) = 1.0;
    }
    out.lag_corr.push_back(std::move(m));
  }
  out.cross_corr = out.lag_corr.front();
  return out;
}

SynthConfig synth_config_from(KeyValues& kv, const std::string& prefix) {
  SynthConfig c;
  c.n_patients = static_cast<std::size_t>(kv.get_u64(prefix + "n_patients", c.n_patients));
  c.visit_count_mean = kv.get_double(prefix + "visit_count_mean", c.visit_count_mean);
  c.visit_count_sd = kv.get_double(prefix + "visit_count_sd", c.visit_count_sd);
  c.ar_coefficient = kv.get_double(prefix + "ar_coefficient", c.ar_coefficient);
  c.noise_scale = kv.get_double(prefix + "noise_scale", c.noise_scale);
  c.patient_offset_sd = kv.get_double(prefix + "patient_offset_sd", c.patient_offset_sd);
  c.pd_rule_threshold = kv.get_double(prefix + "pd_rule_threshold", c.pd_rule_threshold);
  c.tune_threshold = kv.get_bool(prefix + "tune_threshold", c.tune_threshold);
  c.target_prevalence = kv.get_double(prefix + "target_prevalence", c.target_prevalence);
  c.missing_fraction = kv.get_double(prefix + "missing_fraction", c.missing_fraction);
  c.seed = kv.get_u64(prefix + "seed", c.seed);
  const auto values = kv.get_doubles(prefix + "cross_corr");
  if (!values.empty()) {
    if (values.size() != kNumLabs * kNumLabs) {
      throw DataError(prefix + "cross_corr needs 100 values, got " + std::to_string(values.size()));
    }
    c.cross_corr_target = Matrix(kNumLabs, kNumLabs);
    std::copy(values.begin(), values.end(), c.cross_corr_target.values().begin());
  }
  validate(c);
  return c;
}

}  // namespace mmtraj
