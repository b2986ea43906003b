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

// Binary model container. Layout:
//   8 bytes   magic "GTCKPT\0\1"
//   8 bytes   header length N, little-endian uint64
//   N bytes   JSON header {"format_version", "kind", "meta", "tensors": [
//             {"name", "rows", "cols", "offset"}]}; offset counts doubles
//   rest      row-major little-endian float64 tensor data
// Tensors keep insertion order, so a save is a pure function of content.

#ifndef GUIDETRAIN_CHECKPOINT_HPP_
#define GUIDETRAIN_CHECKPOINT_HPP_

#include <string>
#include <utility>
#include <vector>

#include "guidetrain/nn.hpp"
#include "json.hpp"

namespace guidetrain {

using Json = nlohmann::json;

inline constexpr int kCheckpointFormatVersion = 1;

class Checkpoint {
 public:
  Checkpoint() = default;
  explicit Checkpoint(std::string kind) : kind_(std::move(kind)) {}

  const std::string& kind() const { return kind_; }
  Json& meta() { return meta_; }
  const Json& meta() const { return meta_; }

  // Replaces a tensor of the same name.
  void Put(const std::string& name, const nn::Matrix& value);
  bool Has(const std::string& name) const;
  const nn::Matrix& Get(const std::string& name) const;
  std::vector<std::string> Names() const;

  void PutParameters(const nn::ParameterList& params);
  // Copies stored values into params; shapes must match exactly.
  void LoadParameters(const nn::ParameterList& params) const;

  void PutNormalizer(const std::string& prefix, const nn::Normalizer& n);
  nn::Normalizer GetNormalizer(const std::string& prefix) const;

  std::string Serialize() const;
  static Checkpoint Deserialize(const std::string& bytes);

  void Save(const std::string& path) const;
  // Fails with kMissingArtifact when the file does not exist.
  static Checkpoint Load(const std::string& path);
  // Load and verify kind.
  static Checkpoint Load(const std::string& path, const std::string& kind);

 private:
  std::string kind_;
  Json meta_ = Json::object();
  std::vector<std::pair<std::string, nn::Matrix>> tensors_;
};

// Whole-file helpers shared by the artifact writers.
std::string ReadFile(const std::string& path);
void WriteFile(const std::string& path, const std::string& bytes);

}  // namespace guidetrain

#endif  // GUIDETRAIN_CHECKPOINT_HPP_
