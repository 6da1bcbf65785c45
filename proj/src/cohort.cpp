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

#include "mmtraj/cohort.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <unordered_map>
#include <unordered_set>

#include "csv.hpp"
#include "mmtraj/errors.hpp"
#include "mmtraj/rng.hpp"

namespace mmtraj {

bool LabPanel::complete() const {
  return std::all_of(values.begin(), values.end(),
                     [](const auto& v) { return v.has_value() && std::isfinite(*v); });
}

Matrix PatientRecord::lab_matrix() const {
  Matrix out(visits.size(), kNumLabs);
  for (std::size_t t = 0; t < visits.size(); ++t) {
    for (std::size_t f = 0; f < kNumLabs; ++f) {
      const auto& v = visits[t].labs.values[f];
      if (!v) {
        throw DataError("patient " + patient_id + ": missing " + std::string(kLabNames[f]) +
                        " at visit " + std::to_string(visits[t].visit_index) +
                        " (record not imputed)");
      }
      out(t, f) = *v;
    }
  }
  return out;
}

std::vector<bool> PatientRecord::labels() const {
  std::vector<bool> out;
  out.reserve(visits.size());
  for (const auto& v : visits) {
    out.push_back(v.pd_label.value_or(false));
  }
  return out;
}

std::size_t Cohort::visit_count() const {
  std::size_t n = 0;
  for (const auto& p : patients) n += p.visits.size();
  return n;
}

const PatientRecord* Cohort::find(std::string_view patient_id) const {
  for (const auto& p : patients) {
    if (p.patient_id == patient_id) return &p;
  }
  return nullptr;
}

namespace {

std::string LineError(std::size_t line, const std::string& what) {
  return "line " + std::to_string(line) + ": " + what;
}

struct ParsedRow {
  std::string patient_id;
  std::string_view position;  // visit_index or day_offset cell
  LabPanel labs;
  std::optional<bool> pd_label;
};

ParsedRow ParseRow(std::string_view text, std::size_t line) {
  const auto cells = csv::split(text);
  if (cells.size() != kNumLabs + 3) {
    throw DataError(LineError(line, "expected " + std::to_string(kNumLabs + 3) + " columns, got " +
                                        std::to_string(cells.size())));
  }
  ParsedRow row;
  row.patient_id = std::string(csv::trim(cells[0]));
  if (row.patient_id.empty()) {
    throw DataError(LineError(line, "empty patient_id"));
  }
  row.position = cells[1];
  for (std::size_t f = 0; f < kNumLabs; ++f) {
    const auto cell = csv::trim(cells[f + 2]);
    if (cell.empty()) continue;
    const auto value = csv::parse_double(cell);
    if (!value || !std::isfinite(*value)) {
      throw DataError(LineError(line, "cannot parse " + std::string(kLabNames[f]) + " value '" +
                                          std::string(cell) + "'"));
    }
    if (*value < 0.0) {
      throw DataError(LineError(line, "negative " + std::string(kLabNames[f]) + " value " +
                                          std::string(cell)));
    }
    row.labs.values[f] = *value;
  }
  const auto label = csv::trim(cells[kNumLabs + 2]);
  if (label == "1") {
    row.pd_label = true;
  } else if (label == "0") {
    row.pd_label = false;
  } else if (!label.empty()) {
    throw DataError(LineError(line, "pd_label must be 0, 1 or empty, got '" + std::string(label) +
                                        "'"));
  }
  return row;
}

// Reads header + rows; calls `on_row` for every non-blank data line.
template <class OnRow>
void ReadRows(std::istream& in, std::string_view expected_header, OnRow&& on_row) {
  std::string line;
  if (!std::getline(in, line)) {
    throw DataError("empty cohort file");
  }
  if (csv::trim(line) != expected_header) {
    throw DataError("line 1: unexpected header '" + std::string(csv::trim(line)) +
                    "', expected '" + std::string(expected_header) + "'");
  }
  std::size_t line_no = 1;
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (csv::trim(line).empty()) continue;
    on_row(ParseRow(line, line_no), line_no);
    ++rows;
  }
  if (rows == 0) {
    throw DataError("cohort file has a header but no rows");
  }
}

void WriteLabCells(std::ostream& out, const LabPanel& labs) {
  for (const auto& v : labs.values) {
    out << ',';
    if (v) out << csv::format_double(*v);
  }
}

void WriteLabel(std::ostream& out, const std::optional<bool>& label) {
  out << ',';
  if (label) out << (*label ? '1' : '0');
}

}  // namespace

std::vector<Exclusion> apply_exclusions(Cohort& cohort) {
  std::vector<Exclusion> excluded;
  std::vector<PatientRecord> kept;
  kept.reserve(cohort.patients.size());
  for (auto& patient : cohort.patients) {
    std::string reason;
    for (std::size_t f = 0; f < kNumLabs && reason.empty(); ++f) {
      const bool measured = std::any_of(patient.visits.begin(), patient.visits.end(),
                                        [f](const Visit& v) { return v.labs.values[f].has_value(); });
      if (!measured) {
        reason = "never measured: " + std::string(kLabNames[f]);
      }
    }
    if (reason.empty() && patient.visits.size() < 2) {
      reason = "fewer than 2 visits";
    }
    if (reason.empty()) {
      kept.push_back(std::move(patient));
    } else {
      excluded.push_back({patient.patient_id, reason});
    }
  }
  cohort.patients = std::move(kept);
  return excluded;
}

LoadResult read_cohort(std::istream& in, Provenance provenance) {
  std::vector<std::string> order;
  std::unordered_map<std::string, std::map<int, Visit>> by_patient;
  ReadRows(in, kCohortHeader, [&](ParsedRow row, std::size_t line) {
    const auto index = csv::parse_int<int>(row.position);
    if (!index || *index < 0) {
      throw DataError(LineError(line, "visit_index must be a non-negative integer, got '" +
                                          std::string(csv::trim(row.position)) + "'"));
    }
    auto [it, inserted] = by_patient.try_emplace(row.patient_id);
    if (inserted) order.push_back(row.patient_id);
    it->second[*index] = Visit{*index, row.labs, row.pd_label};  // last row wins
  });

  LoadResult result;
  result.cohort.provenance = provenance;
  for (const auto& id : order) {
    PatientRecord record{id, {}};
    for (auto& [index, visit] : by_patient[id]) {
      record.visits.push_back(std::move(visit));
    }
    result.cohort.patients.push_back(std::move(record));
  }
  result.excluded = apply_exclusions(result.cohort);
  return result;
}

LoadResult load_cohort(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw DataError("cannot open cohort file " + path.string());
  }
  return read_cohort(in);
}

void write_cohort(std::ostream& out, const Cohort& cohort) {
  out << kCohortHeader << '\n';
  for (const auto& patient : cohort.patients) {
    for (const auto& visit : patient.visits) {
      out << patient.patient_id << ',' << visit.visit_index;
      WriteLabCells(out, visit.labs);
      WriteLabel(out, visit.pd_label);
      out << '\n';
    }
  }
}

void save_cohort(const std::filesystem::path& path, const Cohort& cohort) {
  std::ofstream out(path);
  if (!out) {
    throw DataError("cannot write " + path.string());
  }
  write_cohort(out, cohort);
}

void save_exclusions(const std::filesystem::path& path, const std::vector<Exclusion>& excluded) {
  std::ofstream out(path);
  if (!out) {
    throw DataError("cannot write " + path.string());
  }
  out << "patient_id,reason\n";
  for (const auto& e : excluded) {
    out << e.patient_id << ',' << e.reason << '\n';
  }
}

std::vector<Visit> align_visits(std::vector<RawVisit> raw_visits) {
  std::stable_sort(raw_visits.begin(), raw_visits.end(),
                   [](const RawVisit& a, const RawVisit& b) { return a.day_offset < b.day_offset; });
  std::map<int, Visit> grid;
  for (auto& raw : raw_visits) {
    if (!(raw.day_offset >= 0.0) || !std::isfinite(raw.day_offset)) {
      throw DataError("day offsets must be finite and non-negative");
    }
    const int index = static_cast<int>(std::lround(raw.day_offset / kVisitPitchDays));
    grid[index] = Visit{index, std::move(raw.labs), raw.pd_label};
  }
  std::vector<Visit> visits;
  visits.reserve(grid.size());
  for (auto& [index, visit] : grid) {
    visits.push_back(std::move(visit));
  }
  return visits;
}

LoadResult ingest_raw(std::istream& in) {
  std::vector<std::string> order;
  std::unordered_map<std::string, std::vector<RawVisit>> by_patient;
  ReadRows(in, kRawHeader, [&](ParsedRow row, std::size_t line) {
    const auto day = csv::parse_double(row.position);
    if (!day || !std::isfinite(*day) || *day < 0.0) {
      throw DataError(LineError(line, "day_offset must be a non-negative number, got '" +
                                          std::string(csv::trim(row.position)) + "'"));
    }
    auto [it, inserted] = by_patient.try_emplace(row.patient_id);
    if (inserted) order.push_back(row.patient_id);
    it->second.push_back(RawVisit{*day, row.labs, row.pd_label});
  });
  LoadResult result;
  for (const auto& id : order) {
    result.cohort.patients.push_back({id, align_visits(std::move(by_patient[id]))});
  }
  result.excluded = apply_exclusions(result.cohort);
  return result;
}

std::vector<std::string> FoldAssignment::members(int fold) const {
  std::vector<std::string> out;
  for (const auto& [id, f] : assignment) {
    if (f == fold) out.push_back(id);
  }
  return out;
}

std::vector<std::size_t> FoldAssignment::fold_sizes() const {
  std::vector<std::size_t> sizes(static_cast<std::size_t>(std::max(k, 0)), 0);
  for (const auto& [id, f] : assignment) {
    ++sizes.at(static_cast<std::size_t>(f));
  }
  return sizes;
}

FoldAssignment split_folds(const Cohort& cohort, int k, std::uint64_t seed) {
  if (k < 2) {
    throw DataError("fold count must be at least 2, got " + std::to_string(k));
  }
  const std::size_t n = cohort.patients.size();
  if (n == 0) {
    throw DataError("cannot split an empty cohort");
  }
  if (static_cast<std::size_t>(k) > n) {
    throw DataError("fold count " + std::to_string(k) + " exceeds patient count " +
                    std::to_string(n));
  }
  std::unordered_set<std::string> seen;
  for (const auto& p : cohort.patients) {
    if (!seen.insert(p.patient_id).second) {
      throw DataError("duplicate patient_id " + p.patient_id);
    }
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng = make_rng(seed, "split_folds");
  shuffle(std::span<std::size_t>(order), rng);
  FoldAssignment folds{k, {}};
  for (std::size_t pos = 0; pos < n; ++pos) {
    folds.assignment[cohort.patients[order[pos]].patient_id] = static_cast<int>(pos % k);
  }
  return folds;
}

void save_folds(const std::filesystem::path& path, const FoldAssignment& folds) {
  std::ofstream out(path);
  if (!out) {
    throw DataError("cannot write " + path.string());
  }
  out << "patient_id,fold\n";
  for (const auto& [id, f] : folds.assignment) {
    out << id << ',' << f << '\n';
  }
}

FoldAssignment load_folds(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw DataError("cannot open fold file " + path.string());
  }
  std::string line;
  if (!std::getline(in, line) || csv::trim(line) != "patient_id,fold") {
    throw DataError(path.string() + ": expected header 'patient_id,fold'");
  }
  FoldAssignment folds;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (csv::trim(line).empty()) continue;
    const auto cells = csv::split(line);
    const auto fold = cells.size() == 2 ? csv::parse_int<int>(cells[1]) : std::nullopt;
    if (!fold || *fold < 0) {
      throw DataError(path.string() + ": " + LineError(line_no, "malformed fold row"));
    }
    folds.assignment[std::string(csv::trim(cells[0]))] = *fold;
    folds.k = std::max(folds.k, *fold + 1);
  }
  return folds;
}

Cohort select_fold(const Cohort& cohort, const FoldAssignment& folds, int fold, bool in_fold) {
  Cohort out;
  out.provenance = cohort.provenance;
  for (const auto& p : cohort.patients) {
    const auto it = folds.assignment.find(p.patient_id);
    if (it == folds.assignment.end()) {
      throw DataError("patient " + p.patient_id + " has no fold assignment");
    }
    if ((it->second == fold) == in_fold) {
      out.patients.push_back(p);
    }
  }
  return out;
}

}  // namespace mmtraj
