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

// Small deterministic SVG writer for report figures.

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "mmtraj/matrix.hpp"

namespace mmtraj::svg {

struct Series {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
  bool markers = false;  // scatter instead of a polyline
};

struct Axes {
  std::string title;
  std::string x_label;
  std::string y_label;
  std::optional<std::pair<double, double>> x_range;
  std::optional<std::pair<double, double>> y_range;
  bool diagonal = false;  // dashed y = x reference
};

std::string line_plot(const Axes& axes, const std::vector<Series>& series);

// Filled band lo..hi with a centre line, plus optional reference points.
std::string band_plot(const Axes& axes, const std::vector<double>& x, const std::vector<double>& lo,
                      const std::vector<double>& hi, const std::vector<double>& centre,
                      const Series& reference);

// Cells coloured on [lo, hi]; NaN cells are drawn hatched grey ("missing").
std::string heatmap(const Axes& axes, const std::vector<std::string>& row_labels,
                    const std::vector<std::string>& col_labels, const Matrix& values, double lo,
                    double hi);

// Placeholder page for a figure whose data is absent.
std::string message(const std::string& title, const std::string& text);

void write_file(const std::filesystem::path& path, const std::string& content);

}  // namespace mmtraj::svg
