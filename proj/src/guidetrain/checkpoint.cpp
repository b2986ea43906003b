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

#include "guidetrain/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace guidetrain {

static_assert(std::endian::native == std::endian::little,
              "checkpoint IO assumes a little-endian host");

namespace {

constexpr char kMagic[8] = {'G', 'T', 'C', 'K', 'P', 'T', '\0', '\1'};

}  // namespace

void Checkpoint::Put(const std::string& name, const nn::Matrix& value) {
  for (auto& [n, v] : tensors_) {
    if (n == name) {
      v = value;
      return;
    }
  }
  tensors_.emplace_back(name, value);
}

bool Checkpoint::Has(const std::string& name) const {
  for (const auto& t : tensors_) {
    if (t.first == name) return true;
  }
  return false;
}

const nn::Matrix& Checkpoint::Get(const std::string& name) const {
  for (const auto& t : tensors_) {
    if (t.first == name) return t.second;
  }
  Fail(ErrorCode::kIo, "checkpoint '" + kind_ + "': missing tensor " + name);
}

std::vector<std::string> Checkpoint::Names() const {
  std::vector<std::string> names;
  for (const auto& t : tensors_) names.push_back(t.first);
  return names;
}

void Checkpoint::PutParameters(const nn::ParameterList& params) {
  for (const nn::Parameter* p : params) Put(p->name, p->value);
}

void Checkpoint::LoadParameters(const nn::ParameterList& params) const {
  for (nn::Parameter* p : params) {
    const nn::Matrix& v = Get(p->name);
    if (v.rows() != p->value.rows() || v.cols() != p->value.cols()) {
      Fail(ErrorCode::kIo, "checkpoint: shape mismatch for " + p->name);
    }
    p->value = v;
    p->ZeroGrad();
  }
}

void Checkpoint::PutNormalizer(const std::string& prefix,
                               const nn::Normalizer& n) {
  Put(prefix + ".mean", n.mean);
  Put(prefix + ".stddev", n.stddev);
}

nn::Normalizer Checkpoint::GetNormalizer(const std::string& prefix) const {
  nn::Normalizer n;
  n.mean = Get(prefix + ".mean").col(0);
  n.stddev = Get(prefix + ".stddev").col(0);
  return n;
}

std::string Checkpoint::Serialize() const {
  Json header;
  header["format_version"] = kCheckpointFormatVersion;
  header["kind"] = kind_;
  header["meta"] = meta_;
  Json table = Json::array();
  size_t offset = 0;
  for (const auto& [name, value] : tensors_) {
    table.push_back({{"name", name},
                     {"rows", value.rows()},
                     {"cols", value.cols()},
                     {"offset", offset}});
    offset += static_cast<size_t>(value.size());
  }
  header["tensors"] = table;
  const std::string text = header.dump();

  std::string out(kMagic, sizeof(kMagic));
  const uint64_t len = text.size();
  out.append(reinterpret_cast<const char*>(&len), sizeof(len));
  out += text;
  out.reserve(out.size() + offset * sizeof(double));
  for (const auto& t : tensors_) {
    const nn::Matrix& m = t.second;
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      for (Eigen::Index j = 0; j < m.cols(); ++j) {
        const double v = m(i, j);
        out.append(reinterpret_cast<const char*>(&v), sizeof(v));
      }
    }
  }
  return out;
}

Checkpoint Checkpoint::Deserialize(const std::string& bytes) {
  if (bytes.size() < 16 || std::memcmp(bytes.data(), kMagic, 8) != 0) {
    Fail(ErrorCode::kIo, "checkpoint: bad magic");
  }
  uint64_t len = 0;
  std::memcpy(&len, bytes.data() + 8, sizeof(len));
  if (len > bytes.size() - 16) Fail(ErrorCode::kIo, "checkpoint: truncated header");
  Json header;
  try {
    header = Json::parse(bytes.substr(16, len));
  } catch (const Json::exception& e) {
    Fail(ErrorCode::kIo, std::string("checkpoint: bad header: ") + e.what());
  }
  if (header.value("format_version", 0) != kCheckpointFormatVersion) {
    Fail(ErrorCode::kIo, "checkpoint: unsupported format version");
  }
  Checkpoint ckpt(header.at("kind").get<std::string>());
  ckpt.meta_ = header.at("meta");
  const size_t data_start = 16 + len;
  const size_t available = (bytes.size() - data_start) / sizeof(double);
  for (const Json& t : header.at("tensors")) {
    const auto rows = t.at("rows").get<Eigen::Index>();
    const auto cols = t.at("cols").get<Eigen::Index>();
    const auto offset = t.at("offset").get<size_t>();
    if (rows < 0 || cols < 0 ||
        offset + static_cast<size_t>(rows * cols) > available) {
      Fail(ErrorCode::kIo, "checkpoint: tensor out of range");
    }
    nn::Matrix m(rows, cols);
    const char* p = bytes.data() + data_start + offset * sizeof(double);
    for (Eigen::Index i = 0; i < rows; ++i) {
      for (Eigen::Index j = 0; j < cols; ++j) {
        std::memcpy(&m(i, j), p, sizeof(double));
        p += sizeof(double);
      }
    }
    ckpt.tensors_.emplace_back(t.at("name").get<std::string>(), std::move(m));
  }
  return ckpt;
}

void Checkpoint::Save(const std::string& path) const { WriteFile(path, Serialize()); }

Checkpoint Checkpoint::Load(const std::string& path) {
  if (!std::filesystem::exists(path)) {
    Fail(ErrorCode::kMissingArtifact, "missing artifact: " + path);
  }
  return Deserialize(ReadFile(path));
}

Checkpoint Checkpoint::Load(const std::string& path, const std::string& kind) {
  Checkpoint ckpt = Load(path);
  if (ckpt.kind() != kind) {
    Fail(ErrorCode::kIo, path + ": expected checkpoint kind '" + kind +
                             "', found '" + ckpt.kind() + "'");
  }
  return ckpt;
}

std::string ReadFile(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    if (!std::filesystem::exists(path)) {
      Fail(ErrorCode::kMissingArtifact, "missing artifact: " + path);
    }
    Fail(ErrorCode::kIo, "cannot open " + path);
  }
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void WriteFile(const std::string& path, const std::string& bytes) {
  const std::filesystem::path p(path);
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) Fail(ErrorCode::kIo, "cannot write " + path);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) Fail(ErrorCode::kIo, "write failed for " + path);
}

}  // namespace guidetrain
