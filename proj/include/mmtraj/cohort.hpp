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

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "mmtraj/matrix.hpp"

namespace mmtraj {

inline constexpr std::size_t kNumLabs = 10;

// Column order of every lab matrix in the library.
enum class Lab : std::size_t { hb, ca, cr, ldh, alb, b2m, mpr, sfl_kappa, sfl_lambda, wbc };

inline constexpr std::array<std::string_view, kNumLabs> kLabNames = {
    "hb", "ca", "cr", "ldh", "alb", "b2m", "mpr", "sfl_kappa", "sfl_lambda", "wbc"};

// Units are carried as metadata only.
inline constexpr std::array<std::string_view, kNumLabs> kLabUnits = {
    "g/dL", "mg/dL", "mg/dL", "U/L", "g/dL", "mg/L", "g/dL", "mg/L", "mg/L", "10^9/L"};

constexpr std::size_t index_of(Lab lab) { return static_cast<std::size_t>(lab); }

// Grid pitch of the follow-up schedule in days (365.25 / 4).
inline constexpr double kVisitPitchDays = 91.3;

struct LabPanel {
  std::array<std::optional<double>, kNumLabs> values{};

  std::optional<double>& operator[](Lab lab) { return values[index_of(lab)]; }
  const std::optional<double>& operator[](Lab lab) const { return values[index_of(lab)]; }

  bool complete() const;
  friend bool operator==(const LabPanel&, const LabPanel&) = default;
};

struct Visit {
  int visit_index = 0;
  LabPanel labs;
  std::optional<bool> pd_label;
  friend bool operator==(const Visit&, const Visit&) = default;
};

struct PatientRecord {
  std::string patient_id;
  std::vector<Visit> visits;

  // Labs as a visits x 10 matrix. Requires a complete (imputed) record.
  Matrix lab_matrix() const;
  // pd labels, missing ones read as false.
  std::vector<bool> labels() const;
  friend bool operator==(const PatientRecord&, const PatientRecord&) = default;
};

enum class Provenance { ingested, synthetic };

struct Cohort {
  std::vector<PatientRecord> patients;
  Provenance provenance = Provenance::ingested;

  std::size_t visit_count() const;
  const PatientRecord* find(std::string_view patient_id) const;
  friend bool operator==(const Cohort&, const Cohort&) = default;
};

struct Exclusion {
  std::string patient_id;
  std::string reason;
};

struct LoadResult {
  Cohort cohort;
  std::vector<Exclusion> excluded;
};

// Wide visit-level CSV:
//   patient_id,visit_index,hb,ca,cr,ldh,alb,b2m,mpr,sfl_kappa,sfl_lambda,wbc,pd_label
// Empty cells are missing values.
inline constexpr std::string_view kCohortHeader =
    "patient_id,visit_index,hb,ca,cr,ldh,alb,b2m,mpr,sfl_kappa,sfl_lambda,wbc,pd_label";

// Parses the wide CSV, sorts visits, keeps the last row of duplicated
// (patient, visit_index) pairs and drops patients that can never be imputed
// (a lab with no measurement at any visit) or have fewer than two visits.
// Throws DataError on malformed input.
LoadResult read_cohort(std::istream& in, Provenance provenance = Provenance::ingested);
LoadResult load_cohort(const std::filesystem::path& path);

void write_cohort(std::ostream& out, const Cohort& cohort);
void save_cohort(const std::filesystem::path& path, const Cohort& cohort);
void save_exclusions(const std::filesystem::path& path, const std::vector<Exclusion>& excluded);

// Applies the exclusion rules to an in-memory cohort.
std::vector<Exclusion> apply_exclusions(Cohort& cohort);

struct RawVisit {
  double day_offset = 0.0;
  LabPanel labs;
  std::optional<bool> pd_label;
};

// Snaps day offsets to the 3-month grid, round(day / 91.3). When two raw
// visits land on the same grid point the later one wins. Gaps stay gaps.
std::vector<Visit> align_visits(std::vector<RawVisit> raw_visits);

// Long per-draw CSV with day offsets instead of grid indices:
//   patient_id,day_offset,hb,...,wbc,pd_label
inline constexpr std::string_view kRawHeader =
    "patient_id,day_offset,hb,ca,cr,ldh,alb,b2m,mpr,sfl_kappa,sfl_lambda,wbc,pd_label";

// Reads the long format, aligns every patient and applies the exclusions.
LoadResult ingest_raw(std::istream& in);

struct FoldAssignment {
  int k = 0;
  std::map<std::string, int> assignment;

  std::vector<std::string> members(int fold) const;
  std::vector<std::size_t> fold_sizes() const;
};

// Seeded shuffle, then round-robin: fold sizes differ by at most one.
FoldAssignment split_folds(const Cohort& cohort, int k, std::uint64_t seed);

void save_folds(const std::filesystem::path& path, const FoldAssignment& folds);
FoldAssignment load_folds(const std::filesystem::path& path);

// Patients of `cohort` in (not in) the fold, in cohort order.
Cohort select_fold(const Cohort& cohort, const FoldAssignment& folds, int fold, bool in_fold);

}  // namespace mmtraj
