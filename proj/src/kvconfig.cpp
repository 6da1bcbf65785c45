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

#include "mmtraj/kvconfig.hpp"

#include <fstream>
#include <sstream>

#include "csv.hpp"
#include "mmtraj/errors.hpp"

namespace mmtraj {

KeyValues KeyValues::parse(const std::string& text) {
  std::map<std::string, std::string> values;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto trimmed = csv::trim(line);
    if (trimmed.empty() || trimmed.front() == '#') continue;
    const auto eq = trimmed.find('=');
    if (eq == std::string_view::npos) {
      throw DataError("config line " + std::to_string(line_no) + ": expected key = value");
    }
    const auto key = csv::trim(trimmed.substr(0, eq));
    if (key.empty()) {
      throw DataError("config line " + std::to_string(line_no) + ": empty key");
    }
    values[std::string(key)] = std::string(csv::trim(trimmed.substr(eq + 1)));
  }
  return KeyValues(std::move(values));
}

KeyValues KeyValues::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw DataError("cannot open config file " + path.string());
  }
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse(buffer.str());
}

const std::string* KeyValues::find(const std::string& key) {
  const auto it = values_.find(key);
  if (it == values_.end()) return nullptr;
  used_.insert(key);
  return &it->second;
}

std::string KeyValues::get_string(const std::string& key, const std::string& fallback) {
  const auto* v = find(key);
  return v ? *v : fallback;
}

double KeyValues::get_double(const std::string& key, double fallback) {
  const auto* v = find(key);
  if (!v) return fallback;
  const auto parsed = csv::parse_double(*v);
  if (!parsed) throw DataError("config key " + key + ": not a number: '" + *v + "'");
  return *parsed;
}

std::int64_t KeyValues::get_int(const std::string& key, std::int64_t fallback) {
  const auto* v = find(key);
  if (!v) return fallback;
  const auto parsed = csv::parse_int<std::int64_t>(*v);
  if (!parsed) throw DataError("config key " + key + ": not an integer: '" + *v + "'");
  return *parsed;
}

std::uint64_t KeyValues::get_u64(const std::string& key, std::uint64_t fallback) {
  const auto* v = find(key);
  if (!v) return fallback;
  const auto parsed = csv::parse_int<std::uint64_t>(*v);
  if (!parsed) throw DataError("config key " + key + ": not an unsigned integer: '" + *v + "'");
  return *parsed;
}

bool KeyValues::get_bool(const std::string& key, bool fallback) {
  const auto* v = find(key);
  if (!v) return fallback;
  if (*v == "1" || *v == "true" || *v == "yes") return true;
  if (*v == "0" || *v == "false" || *v == "no") return false;
  throw DataError("config key " + key + ": not a boolean: '" + *v + "'");
}

std::vector<double> KeyValues::get_doubles(const std::string& key) {
  std::vector<double> out;
  const auto* v = find(key);
  if (!v) return out;
  for (const auto cell : csv::split(*v)) {
    const auto parsed = csv::parse_double(cell);
    if (!parsed) throw DataError("config key " + key + ": bad list entry '" + std::string(cell) + "'");
    out.push_back(*parsed);
  }
  return out;
}

std::vector<std::string> KeyValues::unused() const {
  std::vector<std::string> out;
  for (const auto& [key, value] : values_) {
    if (!used_.count(key)) out.push_back(key);
  }
  return out;
}

void KeyValues::reject_unused() const {
  const auto keys = unused();
  if (keys.empty()) return;
  std::string msg = "unknown config keys:";
  for (const auto& k : keys) msg += " " + k;
  throw DataError(msg);
}

}  // namespace mmtraj
