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

// mmtraj command line: synthesize or ingest a cohort, split folds, train and
// evaluate per fold, or run the whole cross-validation.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "mmtraj/errors.hpp"
#include "mmtraj/pipeline.hpp"

namespace fs = std::filesystem;
using namespace mmtraj;

namespace {

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out = "mmtraj_out";
  std::optional<int> fold;
  std::vector<std::string> overrides;
  std::string input;
};

KeyValues LoadKeyValues(const Options& o) {
  KeyValues kv = o.config.empty() ? KeyValues() : KeyValues::load(o.config);
  for (const auto& item : o.overrides) {
    const auto eq = item.find('=');
    if (eq == std::string::npos) throw DataError("--set expects key=value, got '" + item + "'");
    kv.set(item.substr(0, eq), item.substr(eq + 1));
  }
  if (o.seed) kv.set("seed", std::to_string(*o.seed));
  return kv;
}

RunConfig LoadConfig(const Options& o) {
  KeyValues kv = LoadKeyValues(o);
  return run_config_from(kv);
}

int RequireFold(const Options& o, const RunConfig& config) {
  if (!o.fold) throw std::invalid_argument("--fold is required for this subcommand");
  if (*o.fold < 0 || *o.fold >= config.k) {
    throw std::invalid_argument("--fold must be in [0, " + std::to_string(config.k) + ")");
  }
  return *o.fold;
}

// Cohort and folds written by `split` (or `run-cv`) in the output directory.
FoldSplit FoldFromRunDirectory(const Options& o, const RunConfig& config, int fold) {
  const fs::path out(o.out);
  if (!fs::exists(out / "cohort.csv") || !fs::exists(out / "folds.csv")) {
    throw DataError(out.string() + " has no cohort.csv / folds.csv; run `split` first");
  }
  const Cohort cohort = impute_locf(load_cohort(out / "cohort.csv").cohort);
  const FoldAssignment folds = load_folds(out / "folds.csv");
  if (folds.k != config.k) throw DataError("folds.csv was written for a different cv.k");
  return split_for_fold(cohort, folds, fold);
}

int CmdSynth(const Options& o) {
  KeyValues kv = LoadKeyValues(o);
  const bool explicit_seed = kv.contains("synth.seed");
  SynthConfig sc = synth_config_from(kv);
  if (!explicit_seed && o.seed) sc.seed = *o.seed;
  kv.reject_unused();
  const SynthResult r = synthesize(sc);
  fs::create_directories(o.out);
  save_cohort(fs::path(o.out) / "cohort.csv", r.cohort);
  std::printf("patients %zu visits %zu prevalence %.4f threshold %.6g\n", r.cohort.patients.size(),
              r.cohort.visit_count(), r.prevalence, r.pd_threshold);
  return 0;
}

int CmdIngest(const Options& o) {
  if (o.input.empty()) throw std::invalid_argument("ingest needs --input <csv>");
  std::ifstream in(o.input);
  if (!in) throw DataError("cannot open " + o.input);
  std::string header;
  std::getline(in, header);
  in.seekg(0);
  const LoadResult r =
      header.rfind("patient_id,day_offset", 0) == 0 ? ingest_raw(in) : load_cohort(o.input);
  fs::create_directories(o.out);
  save_cohort(fs::path(o.out) / "cohort.csv", r.cohort);
  save_exclusions(fs::path(o.out) / "exclusions.csv", r.excluded);
  std::printf("patients %zu excluded %zu\n", r.cohort.patients.size(), r.excluded.size());
  return 0;
}

int CmdSplit(const Options& o) {
  const RunConfig config = LoadConfig(o);
  const LoadResult r = prepare_cohort(config);
  const FoldAssignment folds = split_folds(r.cohort, config.k, config.stage_seed("split", 0));
  fs::create_directories(o.out);
  save_cohort(fs::path(o.out) / "cohort.csv", r.cohort);
  save_exclusions(fs::path(o.out) / "exclusions.csv", r.excluded);
  save_folds(fs::path(o.out) / "folds.csv", folds);
  for (const auto size : folds.fold_sizes()) std::printf("%zu ", size);
  std::printf("\n");
  return 0;
}

template <class Stage>
int CmdStage(const Options& o, Stage stage) {
  const RunConfig base = LoadConfig(o);
  const int fold = RequireFold(o, base);
  const RunConfig config = base.for_fold(fold);
  const FoldSplit split = FoldFromRunDirectory(o, config, fold);
  const fs::path dir = fold_directory(o.out, fold);
  fs::create_directories(dir);
  stage(split, config, fold, dir);
  return 0;
}

int CmdForecast(const Options& o) {
  return CmdStage(o, [](const FoldSplit& split, const RunConfig& config, int, const fs::path& dir) {
    const FoldModels models = load_fold_models(config, dir);
    std::ofstream out(dir / "forecasts.csv", std::ios::trunc);
    bool header = true;
    for (std::size_t p = 0; p < split.validation.patients.size(); ++p) {
      const auto& rec = split.validation.patients[p];
      GibbsChainConfig chains = config.chains;
      chains.seed = derive_seed(config.chains.seed, "cli.forecast", {p});
      const auto dist = forecast_trajectory(models.forecaster,
                                            models.lab_transform.apply(rec.lab_matrix()),
                                            config.eval.max_horizon, chains);
      write_forecast_csv(out, rec.patient_id, dist, &models.lab_transform, header);
      header = false;
    }
  });
}

int CmdAnnotate(const Options& o) {
  return CmdStage(o, [](const FoldSplit& split, const RunConfig& config, int, const fs::path& dir) {
    const FoldModels models = load_fold_models(config, dir);
    std::ofstream out(dir / "annotations.csv", std::ios::trunc);
    bool header = true;
    for (const auto& rec : split.validation.patients) {
      const auto probs = annotate(
          models.annotator, derive_features(rec.lab_matrix(), models.feature_transform, models.mode));
      write_annotation_csv(out, rec, probs, models.threshold, header);
      header = false;
    }
  });
}

int CmdRunCv(const Options& o) {
  RunConfig config = LoadConfig(o);
  if (o.fold) config.folds = {RequireFold(o, config)};
  const RunResult r = run_cv(config, o.out);
  int code = 0;
  for (const auto& s : r.folds) {
    std::printf("fold %d %s %s\n", s.fold, s.status.c_str(), s.message.c_str());
    if (s.status == "failed") code = std::max(code, s.numerical ? 3 : 2);
  }
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Probabilistic lab-trajectory forecasting and progression annotation"};
  app.require_subcommand(1);
  Options o;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config, "key=value configuration file");
    sub->add_option("--seed", o.seed, "global seed");
    sub->add_option("--out", o.out, "output directory");
    sub->add_option("--fold", o.fold, "fold index");
    sub->add_option("--set", o.overrides, "configuration override key=value (repeatable)");
    return sub;
  };
  auto* synth = add_common(app.add_subcommand("synth", "write a synthetic cohort"));
  auto* ingest = add_common(app.add_subcommand("ingest", "ingest a cohort CSV"));
  ingest->add_option("--input", o.input, "wide cohort CSV or per-draw CSV with day offsets")
      ->required();
  auto* split = add_common(app.add_subcommand("split", "prepare the cohort and assign folds"));
  auto* train_f = add_common(app.add_subcommand("train-forecaster", "train the forecaster of a fold"));
  auto* train_a = add_common(app.add_subcommand("train-annotator", "train the annotator of a fold"));
  auto* calibrate = add_common(app.add_subcommand("calibrate", "calibrate the decision threshold"));
  auto* forecast = add_common(app.add_subcommand("forecast", "forecast validation patients"));
  auto* annotate_cmd = add_common(app.add_subcommand("annotate", "annotate validation patients"));
  auto* evaluate = add_common(app.add_subcommand("evaluate", "evaluate a trained fold"));
  auto* run = add_common(app.add_subcommand("run-cv", "run the full cross-validation"));
  auto* report = add_common(app.add_subcommand("report", "render figures and report.md"));

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (synth->parsed()) return CmdSynth(o);
    if (ingest->parsed()) return CmdIngest(o);
    if (split->parsed()) return CmdSplit(o);
    if (train_f->parsed()) {
      return CmdStage(o, [](const FoldSplit& s, const RunConfig& c, int, const fs::path& d) {
        stage_train_forecaster(s, c, d);
      });
    }
    if (train_a->parsed()) {
      return CmdStage(o, [](const FoldSplit& s, const RunConfig& c, int, const fs::path& d) {
        stage_train_annotator(s, c, d);
      });
    }
    if (calibrate->parsed()) {
      return CmdStage(o, [](const FoldSplit& s, const RunConfig& c, int, const fs::path& d) {
        stage_calibrate(s, c, d);
      });
    }
    if (forecast->parsed()) return CmdForecast(o);
    if (annotate_cmd->parsed()) return CmdAnnotate(o);
    if (evaluate->parsed()) {
      return CmdStage(o, [](const FoldSplit& s, const RunConfig& c, int fold, const fs::path& d) {
        stage_evaluate(s, c, fold, d);
      });
    }
    if (run->parsed()) return CmdRunCv(o);
    if (report->parsed()) {
      emit_report(o.out);
      return 0;
    }
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return 3;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 1;
}
