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

// Cross-validated experiment driver. Every stage reads and writes files in a
// per-fold directory so that the CLI can run stages one at a time and
// `run_cv` can run them all.
//
// Output layout under the run directory:
//   cohort.csv, exclusions.csv, folds.csv, manifest.json, status.csv
//   metrics.csv             all folds, `metric,fold,horizon,n_prior,value`
//   summary.csv             mean and sd across folds
//   fold_<k>/               transforms, checkpoints, calibration, curves
//   figures/                SVG renderings of the CSVs

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "mmtraj/annotator.hpp"
#include "mmtraj/cohort.hpp"
#include "mmtraj/crbm.hpp"
#include "mmtraj/evaluation.hpp"
#include "mmtraj/forecaster.hpp"
#include "mmtraj/kvconfig.hpp"
#include "mmtraj/synthgen.hpp"

namespace mmtraj {

struct RunConfig {
  std::optional<std::filesystem::path> cohort_path;  // empty: synthesize
  SynthConfig synth;
  int k = 5;
  std::uint64_t seed = 1;
  std::vector<int> folds;  // empty: all
  ForecasterTrainConfig forecaster;
  AnnotatorTrainConfig annotator;
  GibbsChainConfig chains;
  CombinedEvalConfig eval;
  double beta = 5.0;
  SflDifference feature_mode = SflDifference::temporal;
  bool shuffled_label_control = false;
  std::size_t sleeve_patients = 3;
  std::size_t moment_max_lag = 5;

  // Stage seeds: hash of the global seed, the stage name and the fold.
  std::uint64_t stage_seed(const std::string& stage, int fold) const;
  // Copies the derived seeds into the stage configurations for a fold.
  RunConfig for_fold(int fold) const;
};

// Reads keys on top of the defaults and rejects unknown keys. Recognized:
//   cohort.path, synth.*, cv.k, cv.folds, seed,
//   forecaster.{epochs,batch_size,learning_rate,cd_k}, forecaster.wd.<group>,
//   annotator.{epochs,batch_size,learning_rate,features}, annotator.wd.<group>,
//   gibbs.{steps,n_samples,init}, eval.{max_horizon,min_history,beta},
//   control.shuffled_labels, report.sleeve_patients
RunConfig run_config_from(KeyValues& kv);

// Loads (or synthesizes) and imputes the cohort; exclusions are returned.
LoadResult prepare_cohort(const RunConfig& config);

struct FoldSplit {
  Cohort train;
  Cohort validation;
};
FoldSplit split_for_fold(const Cohort& cohort, const FoldAssignment& folds, int fold);

std::filesystem::path fold_directory(const std::filesystem::path& out, int fold);

// Individual stages. Each reads what earlier stages wrote into `dir`.
void stage_train_forecaster(const FoldSplit& split, const RunConfig& config,
                            const std::filesystem::path& dir);
void stage_train_annotator(const FoldSplit& split, const RunConfig& config,
                           const std::filesystem::path& dir);
void stage_calibrate(const FoldSplit& split, const RunConfig& config,
                     const std::filesystem::path& dir);
FoldModels load_fold_models(const RunConfig& config, const std::filesystem::path& dir);

struct MetricRow {
  std::string metric;
  int fold = 0;
  std::optional<std::size_t> horizon;
  std::optional<std::size_t> n_prior;
  double value = 0.0;
};

// Validation-side evaluation; writes the fold's CSVs and returns its rows.
std::vector<MetricRow> stage_evaluate(const FoldSplit& split, const RunConfig& config, int fold,
                                      const std::filesystem::path& dir);

// All stages of one fold.
std::vector<MetricRow> run_fold(const FoldSplit& split, const RunConfig& config, int fold,
                                const std::filesystem::path& dir);

struct FoldStatus {
  int fold = 0;
  std::string status;  // ok | failed | missing
  std::string message;
  bool numerical = false;  // failure was a NumericalError
};

struct RunResult {
  std::vector<FoldStatus> folds;
  std::vector<MetricRow> metrics;
  bool all_ok() const;  // no fold failed; unrequested folds do not count
};

// Runs the selected folds, writing every artifact and the report. A failing
// fold is recorded and the others still run.
RunResult run_cv(const RunConfig& config, const std::filesystem::path& out);

void write_metrics_csv(const std::filesystem::path& path, const std::vector<MetricRow>& rows);
std::vector<MetricRow> read_metrics_csv(const std::filesystem::path& path);

// Mean and sd over folds per (metric, horizon, n_prior), CSV
// `metric,horizon,n_prior,mean,sd,folds`.
void write_summary_csv(const std::filesystem::path& path, const std::vector<MetricRow>& rows);

// Renders figures from the CSVs in `out` into out/figures and writes
// out/report.md listing fold status (folds absent from status.csv are
// reported missing). Idempotent.
void emit_report(const std::filesystem::path& out);

}  // namespace mmtraj
