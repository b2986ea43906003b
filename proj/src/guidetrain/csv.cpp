// Copyright 2026 The guidetrain Authors
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

#include "guidetrain/csv.hpp"

#include <charconv>
#include <cstdlib>
#include <filesystem>
#include <sstream>

#include "guidetrain/checkpoint.hpp"
#include "guidetrain/common.hpp"

namespace guidetrain {

namespace {

std::vector<std::string> SplitLine(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

}  // namespace

CsvTable CsvTable::Parse(const std::string& text, const std::string& name) {
  CsvTable t;
  t.name_ = name;
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) Fail(ErrorCode::kIo, name + ": empty file");
  t.header_ = SplitLine(line);
  size_t number = 1;
  while (std::getline(in, line)) {
    ++number;
    if (line.empty()) continue;
    std::vector<std::string> fields = SplitLine(line);
    if (fields.size() != t.header_.size()) {
      Fail(ErrorCode::kIo, name + ":" + std::to_string(number) + ": expected " +
                               std::to_string(t.header_.size()) + " fields");
    }
    t.rows_.push_back(std::move(fields));
  }
  return t;
}

CsvTable CsvTable::Load(const std::string& path) {
  if (!std::filesystem::exists(path)) {
    Fail(ErrorCode::kMissingArtifact, "missing artifact: " + path);
  }
  return Parse(ReadFile(path), path);
}

size_t CsvTable::Column(const std::string& name) const {
  for (size_t i = 0; i < header_.size(); ++i) {
    if (header_[i] == name) return i;
  }
  Fail(ErrorCode::kIo, name_ + ": missing column '" + name + "'");
}

const std::string& CsvTable::Text(size_t row, size_t column) const {
  Require(row < rows_.size() && column < header_.size(), name_ + ": cell out of range");
  return rows_[row][column];
}

double CsvTable::Number(size_t row, size_t column) const {
  const std::string& s = Text(row, column);
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (s.empty() || end != s.c_str() + s.size()) {
    Fail(ErrorCode::kIo, name_ + ": '" + s + "' is not a number");
  }
  return v;
}

int CsvTable::Integer(size_t row, size_t column) const {
  const std::string& s = Text(row, column);
  int v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    Fail(ErrorCode::kIo, name_ + ": '" + s + "' is not an integer");
  }
  return v;
}

}  // namespace guidetrain
