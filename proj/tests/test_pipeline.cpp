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
#include <cstdlib>
#include <fstream>
#include <map>
#include <set>

#include <nlohmann/json.hpp>

#include "doctest.h"
#include "mmtraj/errors.hpp"
#include "mmtraj/metrics.hpp"
#include "mmtraj/pipeline.hpp"
#include "support.hpp"

using namespace mmtraj;
namespace fs = std::filesystem;

namespace {

KeyValues SmallRun() {
  return KeyValues({{"synth.n_patients", "60"},
                    {"synth.visit_count_mean", "8"},
                    {"synth.visit_count_sd", "3"},
                    {"forecaster.epochs", "2"},
                    {"annotator.epochs", "3"},
                    {"gibbs.n_samples", "8"},
                    {"gibbs.steps", "4"},
                    {"seed", "11"}});
}

RunConfig SmallConfig() {
  KeyValues kv = SmallRun();
  return run_config_from(kv);
}

std::map<std::string, std::string> FilesUnder(const fs::path& root) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) files[fs::relative(e.path(), root).string()] = testing::read_file(e.path());
  }
  return files;
}

// Wall time is the only field allowed to differ between identical runs.
std::string StableManifest(const std::string& text) {
  auto j = nlohmann::json::parse(text);
  j.erase("wall_time_seconds");
  return j.dump();
}

int RunCli(const std::string& args) {
  const std::string cmd = std::string(MMTRAJ_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_CASE("configuration keys are read and unknown keys rejected") {
  KeyValues kv({{"cv.k", "4"}, {"cv.folds", "1,3"}, {"forecaster.wd.weights_net", "0.5"},
                {"gibbs.n_samples", "17"}, {"annotator.features", "involved_minus_uninvolved"},
                {"seed", "9"}});
  const RunConfig c = run_config_from(kv);
  CHECK(c.k == 4);
  CHECK(c.folds == std::vector<int>{1, 3});
  CHECK(c.forecaster.weight_decay.at("weights_net") == 0.5);
  CHECK(c.forecaster.weight_decay.at("lstm") == 0.1);
  CHECK(c.chains.n_samples == 17);
  CHECK(c.feature_mode == SflDifference::involved_minus_uninvolved);
  CHECK(c.synth.seed == 9);

  KeyValues typo(std::map<std::string, std::string>{{"forecaster.epoch", "3"}});
  CHECK_THROWS_AS(run_config_from(typo), DataError);
  KeyValues bad_fold(std::map<std::string, std::string>{{"cv.folds", "5"}});
  CHECK_THROWS_AS(run_config_from(bad_fold), DataError);
  KeyValues bad_init(std::map<std::string, std::string>{{"gibbs.init", "random"}});
  CHECK_THROWS_AS(run_config_from(bad_init), DataError);
}

TEST_CASE("stage seeds differ across stages and folds and follow the global seed") {
  RunConfig c;
  std::set<std::uint64_t> seen;
  for (const char* stage : {"forecaster", "annotator", "chains", "control"}) {
    for (int f = 0; f < 5; ++f) seen.insert(c.stage_seed(stage, f));
  }
  CHECK(seen.size() == 20);
  RunConfig d = c;
  d.seed = c.seed + 1;
  CHECK(d.stage_seed("forecaster", 0) != c.stage_seed("forecaster", 0));
  CHECK(c.for_fold(2).forecaster.seed == c.stage_seed("forecaster", 2));
}

TEST_CASE("a cross-validated run writes every artifact and is reproducible") {
  const RunConfig config = SmallConfig();
  const fs::path a = testing::scratch_dir("pipeline_a");
  const fs::path b = testing::scratch_dir("pipeline_b");
  const RunResult ra = run_cv(config, a);
  REQUIRE(ra.all_ok());
  CHECK(ra.folds.size() == 5);

  for (int f = 0; f < 5; ++f) {
    const fs::path dir = fold_directory(a, f);
    for (const char* name : {"forecaster.bin", "annotator.bin", "lab_transform.csv",
                             "feature_transform.csv", "calibration.csv", "metrics.csv",
                             "combined_instances.csv"}) {
      CHECK_MESSAGE(fs::exists(dir / name), (dir / name).string());
    }
  }
  for (const char* name : {"cohort.csv", "folds.csv", "manifest.json", "status.csv", "metrics.csv",
                           "summary.csv", "report.md"}) {
    CHECK_MESSAGE(fs::exists(a / name), name);
  }

  // Folds partition the cohort.
  std::ifstream in(a / "manifest.json");
  const auto manifest = nlohmann::json::parse(in);
  std::set<std::string> all;
  std::size_t total = 0;
  for (const auto& fold : manifest.at("fold_patients")) {
    for (const auto& id : fold) all.insert(id.get<std::string>());
    total += fold.size();
  }
  CHECK(total == all.size());
  CHECK(all.size() == manifest.at("cohort").at("patients").get<std::size_t>());

  // Summary rows are the mean and sd of the per-fold rows.
  const auto rows = read_metrics_csv(a / "metrics.csv");
  std::map<std::string, std::vector<double>> thresholds;
  for (const auto& r : rows) {
    if (r.metric == "threshold") thresholds["t"].push_back(r.value);
  }
  REQUIRE(thresholds["t"].size() == 5);
  const MeanSd ms = mean_sd(thresholds["t"]);
  std::ifstream summary(a / "summary.csv");
  std::string line;
  bool found = false;
  while (std::getline(summary, line)) {
    if (line.rfind("threshold,", 0) == 0) {
      double mean = 0, sd = 0;
      int folds = 0;
      REQUIRE(std::sscanf(line.c_str(), "threshold,,,%lf,%lf,%d", &mean, &sd, &folds) == 3);
      CHECK(mean == doctest::Approx(ms.mean).epsilon(1e-9));
      CHECK(sd == doctest::Approx(ms.sd).epsilon(1e-9));
      CHECK(folds == 5);
      found = true;
    }
  }
  CHECK(found);

  // Same seed, same bytes.
  REQUIRE(run_cv(config, b).all_ok());
  const auto fa = FilesUnder(a);
  const auto fb = FilesUnder(b);
  REQUIRE(fa.size() == fb.size());
  for (const auto& [name, bytes] : fa) {
    REQUIRE(fb.count(name));
    if (name == "manifest.json") {
      CHECK(StableManifest(fb.at(name)) == StableManifest(bytes));
    } else {
      CHECK_MESSAGE(fb.at(name) == bytes, name);
    }
  }

  // Report regeneration is idempotent.
  emit_report(a);
  const auto again = FilesUnder(a);
  for (const auto& [name, bytes] : fa) CHECK_MESSAGE(again.at(name) == bytes, name);
}

TEST_CASE("validation data cannot influence fitted artifacts") {
  RunConfig config = SmallConfig();
  const LoadResult loaded = prepare_cohort(config);
  const FoldAssignment folds = split_folds(loaded.cohort, config.k, config.stage_seed("split", 0));
  const int fold = 1;
  const RunConfig fc = config.for_fold(fold);

  Cohort perturbed = loaded.cohort;
  std::size_t touched = 0;
  for (auto& p : perturbed.patients) {
    if (folds.assignment.at(p.patient_id) != fold) continue;
    for (auto& v : p.visits) {
      for (auto& lab : v.labs.values) *lab *= 3.7;
      v.pd_label = !v.pd_label.value_or(false);
    }
    ++touched;
  }
  REQUIRE(touched > 0);

  const fs::path a = testing::scratch_dir("leak_a");
  const fs::path b = testing::scratch_dir("leak_b");
  for (const auto& [cohort, dir] : std::vector<std::pair<const Cohort*, fs::path>>{{&loaded.cohort, a}, {&perturbed, b}}) {
    const FoldSplit split = split_for_fold(*cohort, folds, fold);
    stage_train_forecaster(split, fc, dir);
    stage_train_annotator(split, fc, dir);
    stage_calibrate(split, fc, dir);
  }
  for (const char* name : {"lab_transform.csv", "feature_transform.csv", "forecaster.bin",
                           "annotator.bin", "calibration.csv"}) {
    CHECK_MESSAGE(testing::read_file(a / name) == testing::read_file(b / name), name);
  }
}

TEST_CASE("report marks folds that never ran") {
  RunConfig config = SmallConfig();
  config.folds = {2};
  const fs::path out = testing::scratch_dir("partial");
  REQUIRE(run_cv(config, out).all_ok());
  const std::string report = testing::read_file(out / "report.md");
  CHECK(report.find("missing") != std::string::npos);
  const std::string status = testing::read_file(out / "status.csv");
  CHECK(status.find("2,ok") != std::string::npos);
  CHECK(status.find("0,missing") != std::string::npos);
}

TEST_CASE("command line exit codes") {
  const fs::path out = testing::scratch_dir("cli");
  const std::string o = "--out " + out.string();
  CHECK(RunCli("") == 1);
  CHECK(RunCli("no-such-command") == 1);
  CHECK(RunCli("synth " + o + " --set synth.n_patients=30") == 0);
  CHECK(fs::exists(out / "cohort.csv"));
  CHECK(RunCli("synth " + o + " --set synth.bogus=1") == 2);
  CHECK(RunCli("train-forecaster " + o) == 1);  // --fold required
  CHECK(RunCli("train-forecaster " + o + " --fold 0") == 2);  // no folds.csv yet
  {
    std::ofstream bad(out / "bad.csv");
    bad << "patient_id,visit_index\nx,notanumber\n";
  }
  CHECK(RunCli("ingest " + o + " --input " + (out / "bad.csv").string()) == 2);
}
