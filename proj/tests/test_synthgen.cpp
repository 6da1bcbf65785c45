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
#include <sstream>

#include <boost/math/distributions/students_t.hpp>

#include "doctest.h"
#include "mmtraj/errors.hpp"
#include "mmtraj/synthgen.hpp"
#include "support.hpp"

using namespace mmtraj;

namespace {

Matrix Identity() {
  Matrix m(kNumLabs, kNumLabs);
  for (std::size_t i = 0; i < kNumLabs; ++i) m(i, i) = 1.0;
  return m;
}

std::string CohortText(const Cohort& c) {
  std::ostringstream out;
  write_cohort(out, c);
  return out.str();
}

double Prevalence(const Cohort& c) {
  std::size_t pos = 0;
  std::size_t all = 0;
  for (const auto& p : c.patients) {
    for (const auto& v : p.visits) {
      pos += v.pd_label.value_or(false) ? 1 : 0;
      ++all;
    }
  }
  return static_cast<double>(pos) / static_cast<double>(all);
}

}  // namespace

TEST_CASE("default cross-correlation is a valid correlation matrix") {
  const Matrix c = default_cross_correlation();
  REQUIRE(c.rows() == kNumLabs);
  for (std::size_t i = 0; i < kNumLabs; ++i) {
    CHECK(c(i, i) == doctest::Approx(1.0).epsilon(1e-15));
    for (std::size_t j = 0; j < kNumLabs; ++j) CHECK(c(i, j) == c(j, i));
  }
  const Matrix l = psd_cholesky(c);
  for (std::size_t i = 0; i < kNumLabs; ++i) {
    for (std::size_t j = 0; j < kNumLabs; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < kNumLabs; ++k) s += l(i, k) * l(j, k);
      CHECK(s == doctest::Approx(c(i, j)).epsilon(1e-12));
    }
  }
}

TEST_CASE("invalid generator settings are rejected") {
  SynthConfig c;
  c.ar_coefficient = 1.0;
  CHECK_THROWS_AS(validate(c), DataError);
  c = SynthConfig{};
  c.ar_coefficient = 0.0;
  CHECK_THROWS_AS(validate(c), DataError);
  c = SynthConfig{};
  c.cross_corr_target = Identity();
  c.cross_corr_target(0, 1) = 0.5;
  CHECK_THROWS_AS(validate(c), DataError);
  c = SynthConfig{};
  c.cross_corr_target = Identity();
  c.cross_corr_target(0, 1) = c.cross_corr_target(1, 0) = 1.5;  // not PSD
  CHECK_THROWS_AS(validate(c), DataError);
}

TEST_CASE("tuned prevalence lands at 7 percent within one point") {
  const SynthResult r = synthesize(SynthConfig{});
  CHECK(r.cohort.patients.size() == 875);
  CHECK(Prevalence(r.cohort) >= 0.06);
  CHECK(Prevalence(r.cohort) <= 0.08);
  CHECK(r.prevalence == doctest::Approx(Prevalence(r.cohort)));
  const double mean_visits =
      static_cast<double>(r.cohort.visit_count()) / static_cast<double>(r.cohort.patients.size());
  CHECK(mean_visits > 17.0);
  CHECK(mean_visits < 21.0);
}

TEST_CASE("same seed gives byte-identical cohorts, a new seed does not") {
  SynthConfig c;
  c.n_patients = 40;
  const std::string a = CohortText(synthesize_cohort(c));
  CHECK(a == CohortText(synthesize_cohort(c)));
  c.seed = 2;
  CHECK(a != CohortText(synthesize_cohort(c)));
}

TEST_CASE("relabeling reproduces the generated labels") {
  SynthConfig c;
  c.n_patients = 200;
  const SynthResult r = synthesize(c);
  CHECK(relabel(r.cohort, r.pd_threshold) == r.cohort);
}

TEST_CASE("progression flags follow the rise above the running minimum") {
  const std::vector<double> x = {0.0, -1.0, -0.5, 0.1, 0.2, -2.0, -0.9};
  const auto flags = progression_flags(x, 1.0);
  const std::vector<bool> expect = {false, false, false, true, true, false, true};
  CHECK(flags == expect);
}

TEST_CASE("latent coordinates invert the lab mapping") {
  for (std::size_t i = 0; i < kNumLabs; ++i) {
    for (double z : {-3.0, -0.5, 0.0, 1.7}) {
      const Lab lab = static_cast<Lab>(i);
      CHECK(latent_coordinate(lab, raw_from_latent(lab, z)) == doctest::Approx(z).epsilon(1e-12));
    }
  }
}

TEST_CASE("near-zero autoregression with identity coupling gives white noise") {
  SynthConfig c;
  c.n_patients = 600;
  c.ar_coefficient = 1e-9;
  c.patient_offset_sd = 0.0;
  c.cross_corr_target = Identity();
  c.tune_threshold = false;
  const auto series = latent_series(synthesize_cohort(c));
  const Moments m = empirical_moments(series, 1);
  std::size_t pairs = 0;
  for (const auto& s : series) pairs += s.rows() - 1;
  const double bound = 3.0 / std::sqrt(static_cast<double>(pairs));
  for (std::size_t i = 0; i < kNumLabs; ++i) {
    CAPTURE(i);
    CHECK(std::abs(m.lag_corr[1](i, i)) < bound);
  }
}

TEST_CASE("identity coupling leaves off-diagonal correlations near zero") {
  SynthConfig c;
  c.n_patients = 600;
  c.cross_corr_target = Identity();
  c.tune_threshold = false;
  // The bound presumes roughly independent visits, so no shared offsets.
  c.ar_coefficient = 0.1;
  c.patient_offset_sd = 0.0;
  const Cohort cohort = synthesize_cohort(c);
  REQUIRE(cohort.visit_count() >= 10000);
  const Moments m = empirical_moments(latent_series(cohort), 0);
  for (std::size_t i = 0; i < kNumLabs; ++i) {
    for (std::size_t j = 0; j < kNumLabs; ++j) {
      if (i != j) CHECK(std::abs(m.cross_corr(i, j)) < 0.05);
    }
  }
}

TEST_CASE("empirical moment identities") {
  Rng rng(5);
  std::vector<Matrix> series;
  for (int p = 0; p < 30; ++p) {
    Matrix s = testing::random_matrix(8, kNumLabs, rng);
    for (std::size_t t = 0; t < s.rows(); ++t) s(t, 3) = s(t, 1);
    series.push_back(s);
  }
  const Moments m = empirical_moments(series, 3);
  CHECK(m.cross_corr(1, 3) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(m.lag_corr.size() == 4);
  CHECK(m.lag_corr[0] == m.cross_corr);
  // Lags longer than every series leave the entry missing.
  const Moments short_lag = empirical_moments({testing::random_matrix(3, kNumLabs, rng)}, 3);
  CHECK(std::isnan(short_lag.lag_corr[3](0, 0)));
}

TEST_CASE("large cohorts converge to the analytic VAR(1) moments") {
  SynthConfig c;
  c.n_patients = 3000;
  c.tune_threshold = false;
  constexpr int kMaxLag = 3;
  const auto series = latent_series(synthesize_cohort(c));
  const Moments pooled = empirical_moments(series, kMaxLag);
  const Moments analytic = analytic_moments(c, kMaxLag);

  // Batch-means standard error over disjoint patient groups.
  constexpr std::size_t kBatches = 20;
  std::vector<Moments> batches;
  for (std::size_t b = 0; b < kBatches; ++b) {
    std::vector<Matrix> part;
    for (std::size_t p = b; p < series.size(); p += kBatches) part.push_back(series[p]);
    batches.push_back(empirical_moments(part, kMaxLag));
  }
  // Family-wise 1% over every compared entry (Bonferroni), Student t on the
  // batch count; beyond that, exceedances of 3 SE must stay near their
  // expected count (about 3 of 390).
  constexpr std::size_t kCompared = 4 * 100 - 10;
  const double critical = boost::math::quantile(
      boost::math::complement(boost::math::students_t(kBatches - 1), 0.01 / (2.0 * kCompared)));
  std::size_t checked = 0;
  std::size_t beyond_three = 0;
  for (int lag = 0; lag <= kMaxLag; ++lag) {
    for (std::size_t i = 0; i < kNumLabs; ++i) {
      for (std::size_t j = 0; j < kNumLabs; ++j) {
        if (lag == 0 && i == j) continue;
        double mean = 0.0;
        for (const auto& b : batches) mean += b.lag_corr[lag](i, j);
        mean /= kBatches;
        double var = 0.0;
        for (const auto& b : batches) var += std::pow(b.lag_corr[lag](i, j) - mean, 2);
        const double se = std::sqrt(var / (kBatches - 1) / kBatches);
        CAPTURE(lag);
        CAPTURE(i);
        CAPTURE(j);
        const double gap = std::abs(pooled.lag_corr[lag](i, j) - analytic.lag_corr[lag](i, j));
        CHECK(gap < critical * se);
        beyond_three += gap >= 3.0 * se;
        ++checked;
      }
    }
  }
  CHECK(checked == kCompared);
  CHECK(beyond_three <= 10);
}

TEST_CASE("configuration keys map onto the generator") {
  KeyValues kv(std::map<std::string, std::string>{
      {"synth.n_patients", "12"}, {"synth.ar_coefficient", "0.5"}, {"synth.seed", "9"}});
  const SynthConfig c = synth_config_from(kv);
  CHECK(c.n_patients == 12);
  CHECK(c.ar_coefficient == 0.5);
  CHECK(c.seed == 9);
  CHECK(kv.unused().empty());
}
