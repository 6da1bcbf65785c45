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

#include "mmtraj/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>
#include <tuple>

#include "json.hpp"

#include "csv.hpp"
#include "mmtraj/errors.hpp"
#include "mmtraj/metrics.hpp"
#include "mmtraj/preprocess.hpp"

namespace mmtraj {

namespace fs = std::filesystem;

std::uint64_t RunConfig::stage_seed(const std::string& stage, int fold) const {
  return derive_seed(seed, "stage." + stage, {static_cast<std::uint64_t>(fold)});
}

RunConfig RunConfig::for_fold(int fold) const {
  RunConfig c = *this;
  c.forecaster.seed = stage_seed("forecaster", fold);
  c.annotator.seed = stage_seed("annotator", fold);
  c.chains.seed = stage_seed("chains", fold);
  return c;
}

namespace {

std::map<std::string, double> ReadDecays(KeyValues& kv, const std::string& prefix,
                                         std::map<std::string, double> decays) {
  for (auto& [group, value] : decays) value = kv.get_double(prefix + group, value);
  return decays;
}

std::vector<int> ParseFoldList(const std::string& text) {
  std::vector<int> out;
  for (auto cell : csv::split(text)) {
    const auto v = csv::parse_int<int>(cell);
    if (!v) throw DataError("cv.folds: bad fold index '" + std::string(cell) + "'");
    out.push_back(*v);
  }
  return out;
}

}  // namespace

RunConfig run_config_from(KeyValues& kv) {
  RunConfig c;
  c.seed = kv.get_u64("seed", c.seed);
  const std::string path = kv.get_string("cohort.path", "");
  if (!path.empty()) c.cohort_path = path;
  const bool explicit_synth_seed = kv.contains("synth.seed");
  c.synth = synth_config_from(kv);
  if (!explicit_synth_seed) c.synth.seed = c.seed;
  c.k = static_cast<int>(kv.get_int("cv.k", c.k));
  const std::string folds = kv.get_string("cv.folds", "");
  if (!folds.empty()) c.folds = ParseFoldList(folds);

  c.forecaster.epochs = static_cast<int>(kv.get_int("forecaster.epochs", c.forecaster.epochs));
  c.forecaster.batch_size =
      static_cast<std::size_t>(kv.get_u64("forecaster.batch_size", c.forecaster.batch_size));
  c.forecaster.learning_rate = kv.get_double("forecaster.learning_rate", c.forecaster.learning_rate);
  c.forecaster.cd_k = static_cast<int>(kv.get_int("forecaster.cd_k", c.forecaster.cd_k));
  c.forecaster.weight_decay = ReadDecays(kv, "forecaster.wd.", c.forecaster.weight_decay);

  c.annotator.epochs = static_cast<int>(kv.get_int("annotator.epochs", c.annotator.epochs));
  c.annotator.batch_size =
      static_cast<std::size_t>(kv.get_u64("annotator.batch_size", c.annotator.batch_size));
  c.annotator.learning_rate = kv.get_double("annotator.learning_rate", c.annotator.learning_rate);
  c.annotator.weight_decay = ReadDecays(kv, "annotator.wd.", c.annotator.weight_decay);
  const std::string features = kv.get_string("annotator.features", "temporal");
  if (features == "temporal") {
    c.feature_mode = SflDifference::temporal;
  } else if (features == "involved_minus_uninvolved") {
    c.feature_mode = SflDifference::involved_minus_uninvolved;
  } else {
    throw DataError("annotator.features must be temporal or involved_minus_uninvolved");
  }

  c.chains.steps = static_cast<int>(kv.get_int("gibbs.steps", c.chains.steps));
  c.chains.n_samples = static_cast<std::size_t>(kv.get_u64("gibbs.n_samples", c.chains.n_samples));
  const std::string init = kv.get_string("gibbs.init", "conditional_mean");
  if (init == "conditional_mean") {
    c.chains.init = ChainInit::conditional_mean;
  } else if (init == "last_observation") {
    c.chains.init = ChainInit::last_observation;
  } else {
    throw DataError("gibbs.init must be conditional_mean or last_observation");
  }
  validate(c.chains);

  c.eval.max_horizon = static_cast<std::size_t>(kv.get_u64("eval.max_horizon", c.eval.max_horizon));
  c.eval.min_history = static_cast<std::size_t>(kv.get_u64("eval.min_history", c.eval.min_history));
  c.beta = kv.get_double("eval.beta", c.beta);
  c.shuffled_label_control = kv.get_bool("control.shuffled_labels", c.shuffled_label_control);
  c.sleeve_patients =
      static_cast<std::size_t>(kv.get_u64("report.sleeve_patients", c.sleeve_patients));
  kv.reject_unused();
  if (c.k < 2) throw DataError("cv.k must be at least 2");
  for (int f : c.folds) {
    if (f < 0 || f >= c.k) throw DataError("cv.folds entry " + std::to_string(f) + " out of range");
  }
  return c;
}

LoadResult prepare_cohort(const RunConfig& config) {
  LoadResult result;
  if (config.cohort_path) {
    result = load_cohort(*config.cohort_path);
  } else {
    result.cohort = synthesize(config.synth).cohort;
  }
  result.cohort = impute_locf(result.cohort);
  return result;
}

FoldSplit split_for_fold(const Cohort& cohort, const FoldAssignment& folds, int fold) {
  if (fold < 0 || fold >= folds.k) {
    throw DataError("fold " + std::to_string(fold) + " outside [0, " + std::to_string(folds.k) + ")");
  }
  return {select_fold(cohort, folds, fold, false), select_fold(cohort, folds, fold, true)};
}

fs::path fold_directory(const fs::path& out, int fold) {
  return out / ("fold_" + std::to_string(fold));
}

namespace {

std::vector<Matrix> LabMatrices(const Cohort& cohort) {
  std::vector<Matrix> out;
  out.reserve(cohort.patients.size());
  for (const auto& p : cohort.patients) out.push_back(p.lab_matrix());
  return out;
}

std::vector<int> IntLabels(const PatientRecord& p) {
  std::vector<int> out;
  for (bool b : p.labels()) out.push_back(b ? 1 : 0);
  return out;
}

std::vector<std::string_view> FeatureNames(SflDifference mode) {
  const auto names = annotation_feature_names(mode);
  return {names.begin(), names.end()};
}

std::vector<AnnotatedSeries> AnnotationData(const Cohort& cohort, const TransformParams& ft,
                                            SflDifference mode) {
  std::vector<AnnotatedSeries> out;
  for (const auto& p : cohort.patients) {
    out.push_back({derive_features(p.lab_matrix(), ft, mode), IntLabels(p)});
  }
  return out;
}

void RequireNonEmpty(const Cohort& c, const char* what) {
  if (c.patients.empty()) throw DataError(std::string(what) + " split is empty");
}

std::ofstream OpenOut(const fs::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  return out;
}

std::string Opt(const std::optional<std::size_t>& v) {
  return v ? std::to_string(*v) : std::string();
}

void WriteQq(const fs::path& path, const Matrix& transformed, const TransformParams& tf) {
  auto out = OpenOut(path);
  out << "feature,theoretical,sample\n";
  for (std::size_t f = 0; f < transformed.cols(); ++f) {
    std::vector<double> column(transformed.rows());
    for (std::size_t r = 0; r < transformed.rows(); ++r) column[r] = transformed(r, f);
    const auto points = qq_points(column);
    const std::size_t stride = std::max<std::size_t>(1, points.size() / 200);
    for (std::size_t i = 0; i < points.size(); i += stride) {
      out << tf.features[f].name << ',' << csv::format_double(points[i].first) << ','
          << csv::format_double(points[i].second) << '\n';
    }
  }
}

}  // namespace

void stage_train_forecaster(const FoldSplit& split, const RunConfig& config, const fs::path& dir) {
  RequireNonEmpty(split.train, "training");
  fs::create_directories(dir);
  const auto raw = LabMatrices(split.train);
  const Matrix stacked = stack_rows(raw);
  const TransformParams tf = fit_power_transform(stacked);
  save_transform(dir / "lab_transform.csv", tf);
  WriteQq(dir / "qq.csv", tf.apply(stacked), tf);
  std::vector<Matrix> series;
  for (const auto& m : raw) series.push_back(tf.apply(m));
  auto log = OpenOut(dir / "forecaster_loss.csv");
  log << "epoch,loss\n";
  const ForecasterParams params = train_forecaster(series, config.forecaster, [&](const EpochLog& e) {
    log << e.epoch << ',' << csv::format_double(e.mean_loss) << '\n';
  });
  save_forecaster(dir / "forecaster", params);
}

void stage_train_annotator(const FoldSplit& split, const RunConfig& config, const fs::path& dir) {
  RequireNonEmpty(split.train, "training");
  fs::create_directories(dir);
  std::vector<Matrix> raw_features;
  for (const auto& p : split.train.patients) {
    raw_features.push_back(derive_raw_features(p.lab_matrix(), config.feature_mode));
  }
  const auto names = FeatureNames(config.feature_mode);
  const TransformParams ft = fit_power_transform(stack_rows(raw_features), names);
  save_transform(dir / "feature_transform.csv", ft);
  const auto data = AnnotationData(split.train, ft, config.feature_mode);
  auto log = OpenOut(dir / "annotator_loss.csv");
  log << "epoch,loss\n";
  const AnnotatorParams params =
      train_annotator(data, config.annotator, [&](const AnnotatorEpochLog& e) {
        log << e.epoch << ',' << csv::format_double(e.mean_loss) << '\n';
      });
  save_annotator(dir / "annotator", params);
}

void stage_calibrate(const FoldSplit& split, const RunConfig& config, const fs::path& dir) {
  const TransformParams ft = load_transform(dir / "feature_transform.csv");
  const AnnotatorParams params = load_annotator(dir / "annotator");
  std::vector<double> scores;
  std::vector<int> labels;
  for (const auto& s : AnnotationData(split.train, ft, config.feature_mode)) {
    const auto p = annotate(params, s.features);
    scores.insert(scores.end(), p.begin(), p.end());
    labels.insert(labels.end(), s.labels.begin(), s.labels.end());
  }
  const ThresholdCalibration cal = calibrate_threshold(scores, labels, config.beta);
  save_calibration(dir / "calibration.csv", cal);
  save_curve(dir / "fbeta_curve_train.csv", cal.curve);
}

FoldModels load_fold_models(const RunConfig& config, const fs::path& dir) {
  FoldModels m;
  m.forecaster = load_forecaster(dir / "forecaster");
  m.lab_transform = load_transform(dir / "lab_transform.csv");
  m.annotator = load_annotator(dir / "annotator");
  m.feature_transform = load_transform(dir / "feature_transform.csv");
  m.mode = config.feature_mode;
  m.threshold = load_calibration(dir / "calibration.csv").threshold;
  return m;
}

namespace {

void AddSummary(std::vector<MetricRow>& rows, const std::string& prefix, int fold,
                std::optional<std::size_t> horizon, std::optional<std::size_t> n_prior,
                const std::optional<RocSummary>& s) {
  if (!s) return;
  rows.push_back({prefix + "_auroc", fold, horizon, n_prior, s->auroc});
  rows.push_back({prefix + "_auprc", fold, horizon, n_prior, s->auprc});
  rows.push_back({prefix + "_sensitivity", fold, horizon, n_prior, s->sensitivity});
  rows.push_back({prefix + "_specificity", fold, horizon, n_prior, s->specificity});
  rows.push_back({prefix + "_instances", fold, horizon, n_prior, static_cast<double>(s->instances)});
}

double ShuffledLabelAuroc(const FoldSplit& split, const RunConfig& config, int fold,
                          const TransformParams& ft,
                          const std::vector<AnnotatedSeries>& validation) {
  auto data = AnnotationData(split.train, ft, config.feature_mode);
  std::vector<int> all;
  for (const auto& s : data) all.insert(all.end(), s.labels.begin(), s.labels.end());
  Rng rng = make_rng(config.stage_seed("control", fold), "control.shuffle");
  shuffle(std::span<int>(all), rng);
  std::size_t pos = 0;
  for (auto& s : data) {
    for (int& y : s.labels) y = all[pos++];
  }
  AnnotatorTrainConfig tc = config.annotator;
  tc.seed = config.stage_seed("control", fold);
  const AnnotatorParams params = train_annotator(data, tc);
  // Held-out labels are permuted too, from their own stream, so neither side
  // carries label signal.
  std::vector<double> scores;
  std::vector<int> labels;
  for (const auto& s : validation) {
    const auto p = annotate(params, s.features);
    scores.insert(scores.end(), p.begin(), p.end());
    labels.insert(labels.end(), s.labels.begin(), s.labels.end());
  }
  Rng held_out = make_rng(config.stage_seed("control", fold), "control.shuffle.validation");
  shuffle(std::span<int>(labels), held_out);
  return auroc(scores, labels);
}

void WriteCurve(const fs::path& path, std::span<const double> scores, std::span<const int> labels,
                double beta) {
  save_curve(path, threshold_curve(scores, labels, beta));
}

void WriteSleeves(const fs::path& path, const FoldSplit& split, const FoldModels& models,
                  const RunConfig& config) {
  auto out = OpenOut(path);
  out << "patient_id,visit,feature,actual,mean,lo95,hi95\n";
  std::size_t written = 0;
  for (std::size_t p = 0; p < split.validation.patients.size(); ++p) {
    if (written >= config.sleeve_patients) break;
    const auto& rec = split.validation.patients[p];
    const Matrix transformed = models.lab_transform.apply(rec.lab_matrix());
    const std::size_t visits = transformed.rows();
    if (visits < 3) continue;
    const std::size_t n = visits / 2;
    const std::size_t horizon = std::min(config.eval.max_horizon, visits - n);
    GibbsChainConfig chains = config.chains;
    chains.seed = derive_seed(config.chains.seed, "sleeves", {p});
    const auto dist = forecast_trajectory(models.forecaster, transformed.head(n), horizon, chains);
    for (std::size_t t = 0; t < n + horizon; ++t) {
      for (std::size_t f = 0; f < kNumLabs; ++f) {
        out << rec.patient_id << ',' << t << ',' << kLabNames[f] << ','
            << csv::format_double(transformed(t, f));
        if (t >= n) {
          const std::size_t s = t - n;
          out << ',' << csv::format_double(dist.mean(s, f)) << ','
              << csv::format_double(dist.lo95(s, f)) << ',' << csv::format_double(dist.hi95(s, f));
        } else {
          out << ",,,";
        }
        out << '\n';
      }
    }
    ++written;
  }
}

void WriteMoments(const fs::path& path, const CombinedEvaluation& eval, std::size_t max_lag) {
  const Moments obs = empirical_moments(eval.observed_next, static_cast<int>(max_lag));
  const Moments fc = empirical_moments(eval.forecast_next, static_cast<int>(max_lag));
  auto out = OpenOut(path);
  out << "lag,feature_a,feature_b,observed,forecast\n";
  for (std::size_t lag = 0; lag <= max_lag; ++lag) {
    for (std::size_t i = 0; i < kNumLabs; ++i) {
      for (std::size_t j = 0; j < kNumLabs; ++j) {
        const double a = obs.lag_corr[lag](i, j);
        const double b = fc.lag_corr[lag](i, j);
        out << lag << ',' << kLabNames[i] << ',' << kLabNames[j] << ','
            << (std::isnan(a) ? "" : csv::format_double(a)) << ','
            << (std::isnan(b) ? "" : csv::format_double(b)) << '\n';
      }
    }
  }
}

}  // namespace

std::vector<MetricRow> stage_evaluate(const FoldSplit& split, const RunConfig& config, int fold,
                                      const fs::path& dir) {
  RequireNonEmpty(split.validation, "validation");
  const FoldModels models = load_fold_models(config, dir);
  const ThresholdCalibration cal = load_calibration(dir / "calibration.csv");
  std::vector<MetricRow> rows;
  rows.push_back({"threshold", fold, {}, {}, cal.threshold});
  rows.push_back({"train_fbeta", fold, {}, {}, cal.achieved_fbeta});

  // Annotator on observed validation data.
  const auto validation =
      AnnotationData(split.validation, models.feature_transform, config.feature_mode);
  std::vector<double> scores;
  std::vector<int> labels;
  for (const auto& s : validation) {
    const auto p = annotate(models.annotator, s.features);
    scores.insert(scores.end(), p.begin(), p.end());
    labels.insert(labels.end(), s.labels.begin(), s.labels.end());
  }
  AddSummary(rows, "annotator", fold, {}, {}, summarize_scores(scores, labels, cal.threshold));
  WriteCurve(dir / "annotator_curve_validation.csv", scores, labels, config.beta);
  if (config.shuffled_label_control) {
    rows.push_back({"shuffled_label_auroc", fold, {}, {},
                    ShuffledLabelAuroc(split, config, fold, models.feature_transform, validation)});
  }

  // Forecaster followed by annotator.
  std::vector<Matrix> raw = LabMatrices(split.validation);
  std::vector<std::vector<int>> truth;
  for (const auto& p : split.validation.patients) truth.push_back(IntLabels(p));
  const CombinedEvaluation eval =
      combined_pipeline_eval(raw, truth, models.lab_transform,
                             model_predictor(models, config.chains), config.eval, cal.threshold);
  {
    auto out = OpenOut(dir / "combined_instances.csv");
    out << "patient_id,n_prior,horizon,score,label\n";
    for (const auto& inst : eval.instances) {
      out << split.validation.patients[inst.patient].patient_id << ',' << inst.n_prior << ','
          << inst.horizon << ',' << csv::format_double(inst.score) << ',' << inst.label << '\n';
    }
  }
  for (std::size_t m = 1; m <= eval.max_horizon; ++m) {
    AddSummary(rows, "combined", fold, m, {}, eval.per_horizon[m - 1]);
  }
  for (std::size_t r = 0; r < eval.n_values.size(); ++r) {
    for (std::size_t m = 1; m <= eval.max_horizon; ++m) {
      AddSummary(rows, "combined", fold, m, eval.n_values[r], eval.grid[r][m - 1]);
    }
  }

  // Moments of one-step forecasts against the observed visits; the horizon
  // column carries the lag.
  const auto fits = moment_comparison(eval.observed_next, eval.forecast_next,
                                      static_cast<int>(config.moment_max_lag));
  for (std::size_t lag = 0; lag < fits.size(); ++lag) {
    rows.push_back({"moment_r2", fold, lag, {}, fits[lag].r_squared});
    rows.push_back({"moment_slope", fold, lag, {}, fits[lag].slope});
    rows.push_back({"moment_intercept", fold, lag, {}, fits[lag].intercept});
  }
  WriteMoments(dir / "moments.csv", eval, config.moment_max_lag);

  const FeatureCorrelations fc = feature_correlations(eval);
  std::size_t beats = 0;
  for (std::size_t f = 0; f < fc.forecast_r.size(); ++f) {
    const std::string name(kLabNames[f]);
    rows.push_back({"forecast_r." + name, fold, 1, {}, fc.forecast_r[f]});
    rows.push_back({"locf_r." + name, fold, 1, {}, fc.baseline_r[f]});
    rows.push_back({"forecast_delta_r." + name, fold, 1, {}, fc.forecast_delta_r[f]});
    if (fc.forecast_r[f] > fc.baseline_r[f]) ++beats;
  }
  rows.push_back({"features_beating_locf", fold, 1, {}, static_cast<double>(beats)});

  WriteSleeves(dir / "sleeves.csv", split, models, config);
  write_metrics_csv(dir / "metrics.csv", rows);
  return rows;
}

std::vector<MetricRow> run_fold(const FoldSplit& split, const RunConfig& config, int fold,
                                const fs::path& dir) {
  const RunConfig c = config.for_fold(fold);
  stage_train_forecaster(split, c, dir);
  stage_train_annotator(split, c, dir);
  stage_calibrate(split, c, dir);
  return stage_evaluate(split, c, fold, dir);
}

bool RunResult::all_ok() const {
  return std::all_of(folds.begin(), folds.end(),
                     [](const FoldStatus& s) { return s.status != "failed"; });
}

void write_metrics_csv(const fs::path& path, const std::vector<MetricRow>& rows) {
  auto out = OpenOut(path);
  out << "metric,fold,horizon,n_prior,value\n";
  for (const auto& r : rows) {
    out << r.metric << ',' << r.fold << ',' << Opt(r.horizon) << ',' << Opt(r.n_prior) << ','
        << (std::isnan(r.value) ? std::string() : csv::format_double(r.value)) << '\n';
  }
}

std::vector<MetricRow> read_metrics_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::string line;
  std::getline(in, line);
  if (csv::trim(line) != "metric,fold,horizon,n_prior,value") {
    throw DataError(path.string() + ": unexpected metrics header");
  }
  std::vector<MetricRow> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (csv::trim(line).empty()) continue;
    const auto cells = csv::split(line);
    const auto fold = cells.size() == 5 ? csv::parse_int<int>(cells[1]) : std::nullopt;
    if (!fold) throw DataError(path.string() + ": malformed line " + std::to_string(line_no));
    MetricRow r;
    r.metric = std::string(cells[0]);
    r.fold = *fold;
    if (!cells[2].empty()) r.horizon = csv::parse_int<std::size_t>(cells[2]);
    if (!cells[3].empty()) r.n_prior = csv::parse_int<std::size_t>(cells[3]);
    const auto v = cells[4].empty() ? std::optional<double>(std::nan("")) : csv::parse_double(cells[4]);
    if (!v) throw DataError(path.string() + ": bad value on line " + std::to_string(line_no));
    r.value = *v;
    rows.push_back(r);
  }
  return rows;
}

void write_summary_csv(const fs::path& path, const std::vector<MetricRow>& rows) {
  using Key = std::tuple<std::string, std::optional<std::size_t>, std::optional<std::size_t>>;
  std::map<Key, std::vector<double>> groups;
  for (const auto& r : rows) groups[{r.metric, r.horizon, r.n_prior}].push_back(r.value);
  auto out = OpenOut(path);
  out << "metric,horizon,n_prior,mean,sd,folds\n";
  for (const auto& [key, values] : groups) {
    const MeanSd ms = mean_sd(values);
    out << std::get<0>(key) << ',' << Opt(std::get<1>(key)) << ',' << Opt(std::get<2>(key)) << ','
        << (ms.count ? csv::format_double(ms.mean) : "") << ','
        << (ms.count ? csv::format_double(ms.sd) : "") << ',' << ms.count << '\n';
  }
}

namespace {

nlohmann::json ConfigJson(const RunConfig& c) {
  nlohmann::json j;
  j["cohort_path"] = c.cohort_path ? c.cohort_path->string() : "";
  j["synth"] = {{"n_patients", c.synth.n_patients},
                {"visit_count_mean", c.synth.visit_count_mean},
                {"visit_count_sd", c.synth.visit_count_sd},
                {"ar_coefficient", c.synth.ar_coefficient},
                {"noise_scale", c.synth.noise_scale},
                {"patient_offset_sd", c.synth.patient_offset_sd},
                {"pd_rule_threshold", c.synth.pd_rule_threshold},
                {"tune_threshold", c.synth.tune_threshold},
                {"target_prevalence", c.synth.target_prevalence},
                {"missing_fraction", c.synth.missing_fraction},
                {"seed", c.synth.seed},
                {"cross_corr", c.synth.cross_corr_target.values()}};
  j["k"] = c.k;
  j["folds"] = c.folds;
  j["forecaster"] = {{"epochs", c.forecaster.epochs},
                     {"batch_size", c.forecaster.batch_size},
                     {"learning_rate", c.forecaster.learning_rate},
                     {"cd_k", c.forecaster.cd_k},
                     {"weight_decay", c.forecaster.weight_decay}};
  j["annotator"] = {{"epochs", c.annotator.epochs},
                    {"batch_size", c.annotator.batch_size},
                    {"learning_rate", c.annotator.learning_rate},
                    {"weight_decay", c.annotator.weight_decay},
                    {"features", c.feature_mode == SflDifference::temporal
                                     ? "temporal"
                                     : "involved_minus_uninvolved"}};
  j["gibbs"] = {{"steps", c.chains.steps},
                {"n_samples", c.chains.n_samples},
                {"init", c.chains.init == ChainInit::conditional_mean ? "conditional_mean"
                                                                      : "last_observation"}};
  j["eval"] = {{"max_horizon", c.eval.max_horizon},
               {"min_history", c.eval.min_history},
               {"beta", c.beta},
               {"shuffled_label_control", c.shuffled_label_control}};
  return j;
}

}  // namespace

RunResult run_cv(const RunConfig& config, const fs::path& out) {
  const auto started = std::chrono::steady_clock::now();
  fs::create_directories(out);
  LoadResult loaded = prepare_cohort(config);
  const Cohort& cohort = loaded.cohort;
  save_cohort(out / "cohort.csv", cohort);
  save_exclusions(out / "exclusions.csv", loaded.excluded);
  const std::uint64_t split_seed = config.stage_seed("split", 0);
  const FoldAssignment folds = split_folds(cohort, config.k, split_seed);
  save_folds(out / "folds.csv", folds);

  std::vector<int> selected = config.folds;
  if (selected.empty()) {
    selected.resize(static_cast<std::size_t>(config.k));
    std::iota(selected.begin(), selected.end(), 0);
  }
  RunResult result;
  for (int fold = 0; fold < config.k; ++fold) {
    if (std::find(selected.begin(), selected.end(), fold) == selected.end()) {
      result.folds.push_back({fold, "missing", "not run"});
      continue;
    }
    try {
      const FoldSplit split = split_for_fold(cohort, folds, fold);
      auto rows = run_fold(split, config, fold, fold_directory(out, fold));
      result.metrics.insert(result.metrics.end(), rows.begin(), rows.end());
      result.folds.push_back({fold, "ok", ""});
    } catch (const NumericalError& e) {
      result.folds.push_back({fold, "failed", e.what(), true});
    } catch (const std::exception& e) {
      result.folds.push_back({fold, "failed", e.what(), false});
    }
  }
  {
    auto status = OpenOut(out / "status.csv");
    status << "fold,status,message\n";
    for (const auto& s : result.folds) {
      std::string msg = s.message;
      std::replace(msg.begin(), msg.end(), ',', ';');
      std::replace(msg.begin(), msg.end(), '\n', ' ');
      status << s.fold << ',' << s.status << ',' << msg << '\n';
    }
  }
  write_metrics_csv(out / "metrics.csv", result.metrics);
  write_summary_csv(out / "summary.csv", result.metrics);

  nlohmann::json manifest;
  manifest["tool"] = "mmtraj";
  manifest["version"] = "1.0.0";
  manifest["config"] = ConfigJson(config);
  nlohmann::json seeds;
  seeds["global"] = config.seed;
  seeds["synth"] = config.synth.seed;
  seeds["split"] = split_seed;
  for (int fold = 0; fold < config.k; ++fold) {
    seeds["folds"].push_back({{"fold", fold},
                              {"forecaster", config.stage_seed("forecaster", fold)},
                              {"annotator", config.stage_seed("annotator", fold)},
                              {"chains", config.stage_seed("chains", fold)},
                              {"control", config.stage_seed("control", fold)}});
  }
  manifest["seeds"] = seeds;
  std::size_t positives = 0;
  for (const auto& p : cohort.patients) {
    for (bool b : p.labels()) positives += b ? 1 : 0;
  }
  manifest["cohort"] = {{"source", config.cohort_path ? "ingested" : "synthetic"},
                        {"patients", cohort.patients.size()},
                        {"visits", cohort.visit_count()},
                        {"excluded", loaded.excluded.size()},
                        {"prevalence", cohort.visit_count() ? static_cast<double>(positives) /
                                                                  static_cast<double>(cohort.visit_count())
                                                            : 0.0}};
  for (int fold = 0; fold < config.k; ++fold) {
    manifest["fold_patients"].push_back(folds.members(fold));
  }
  for (const auto& s : result.folds) {
    manifest["status"].push_back({{"fold", s.fold}, {"status", s.status}, {"message", s.message}});
  }
  manifest["wall_time_seconds"] =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  OpenOut(out / "manifest.json") << manifest.dump(2) << '\n';

  emit_report(out);
  return result;
}

}  // namespace mmtraj
