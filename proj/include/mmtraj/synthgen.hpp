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

// Synthetic cohorts with known second-order structure.
//
// Every patient follows a latent stationary VAR(1) process
//
//   z_0 = mu + L e_0 / sqrt(1 - a^2)
//   z_t = mu + a (z_{t-1} - mu) + L e_t
//   x_t = z_t + noise_scale * n_t
//
// with L the Cholesky factor of the target cross-correlation, mu = s L e'
// a per-patient offset and e, e', n i.i.d. standard normal. Labs are
// base * exp(scale * x). A visit is a progression event when the M-protein
// coordinate x has risen at least `pd_rule_threshold` above its running
// minimum; the threshold is bisected to hit the requested prevalence.

#include <cstdint>
#include <string>
#include <vector>

#include "mmtraj/cohort.hpp"
#include "mmtraj/kvconfig.hpp"
#include "mmtraj/matrix.hpp"

namespace mmtraj {

struct SynthConfig {
  std::size_t n_patients = 875;
  double visit_count_mean = 19.0;
  double visit_count_sd = 9.0;
  double ar_coefficient = 0.3;
  Matrix cross_corr_target;  // empty selects default_cross_correlation()
  double noise_scale = 0.05;
  double patient_offset_sd = 1.0;
  double pd_rule_threshold = 1.0;
  bool tune_threshold = true;
  double target_prevalence = 0.07;
  double missing_fraction = 0.0;
  std::uint64_t seed = 1;
};

// Ten-lab correlation built from a three-factor loading matrix (anaemia and
// inflammation, tumour burden, renal function). Symmetric PSD, unit diagonal.
Matrix default_cross_correlation();

// Throws DataError when the configuration is invalid (matrix not symmetric,
// not PSD, no unit diagonal; coefficients out of range).
void validate(const SynthConfig& config);

// Lower-triangular factor of a PSD matrix; zero columns for null directions.
Matrix psd_cholesky(const Matrix& m);

struct SynthResult {
  Cohort cohort;
  double pd_threshold = 0.0;
  double prevalence = 0.0;
};

SynthResult synthesize(const SynthConfig& config);
inline Cohort synthesize_cohort(const SynthConfig& config) { return synthesize(config).cohort; }

// Latent coordinate of a raw lab value, log(raw / base) / scale.
double latent_coordinate(Lab lab, double raw_value);
double raw_from_latent(Lab lab, double latent);

// Progression flags from a latent M-protein series (running-minimum rule).
std::vector<bool> progression_flags(std::span<const double> mpr_latent, double threshold);

// Recomputes every label of a complete cohort from its M-protein values.
Cohort relabel(const Cohort& cohort, double threshold);

// Per-patient latent-space series (visits x 10) of a complete cohort.
std::vector<Matrix> latent_series(const Cohort& cohort);

struct Moments {
  Matrix cross_corr;           // 10 x 10, NaN marks an entry with < 3 pairs
  std::vector<Matrix> lag_corr;  // lag_corr[L](i, j) = r(x_i(t), x_j(t + L))
};

// Pearson correlations pooled over visits; lag pairs never cross patients.
Moments empirical_moments(const std::vector<Matrix>& series, int max_lag);
// Same on the raw lab values of a complete cohort.
Moments empirical_moments(const Cohort& cohort, int max_lag);

// Stationary moments of the observed latent process x for a configuration.
Moments analytic_moments(const SynthConfig& config, int max_lag);

// Reads `synth.*` keys (prefix included) on top of the defaults. The matrix
// is given as synth.cross_corr = 100 comma separated values, row-major.
SynthConfig synth_config_from(KeyValues& kv, const std::string& prefix = "synth.");

}  // namespace mmtraj
