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

// Minimal reader for the comma-separated artifacts this project writes:
// one header line, no quoting, no embedded commas.

#ifndef GUIDETRAIN_CSV_HPP_
#define GUIDETRAIN_CSV_HPP_

#include <string>
#include <vector>

namespace guidetrain {

class CsvTable {
 public:
  static CsvTable Parse(const std::string& text, const std::string& name);
  // Fails with kMissingArtifact when the file does not exist.
  static CsvTable Load(const std::string& path);

  const std::vector<std::string>& header() const { return header_; }
  size_t rows() const { return rows_.size(); }
  // Index of a named column; kIo when absent.
  size_t Column(const std::string& name) const;
  const std::string& Text(size_t row, size_t column) const;
  double Number(size_t row, size_t column) const;
  int Integer(size_t row, size_t column) const;

 private:
  std::string name_;
  std::vector<std::string> header_;
  std::vector<std::vector<std::string>> rows_;
};

}  // namespace guidetrain

#endif  // GUIDETRAIN_CSV_HPP_
