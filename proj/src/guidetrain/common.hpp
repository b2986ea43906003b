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

#ifndef GUIDETRAIN_COMMON_HPP_
#define GUIDETRAIN_COMMON_HPP_

#include <cstdint>
#include <functional>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>

namespace guidetrain {

// Error categories surfaced through the C API as status codes.
enum class ErrorCode {
  kInvalidArgument = 1,
  kIo = 2,
  kNumeric = 3,
  kMissingArtifact = 4,
  kConfig = 5,
  kInternal = 6,
};

const char* ErrorCodeName(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] void Fail(ErrorCode code, const std::string& message);

inline void Require(bool condition, const std::string& message) {
  if (!condition) Fail(ErrorCode::kInvalidArgument, message);
}

using Rng = std::mt19937_64;

// Derives an independent stream seed from a root seed, a stream name and an
// index (splitmix64 over an FNV-1a hash of the name).
uint64_t DeriveSeed(uint64_t root, std::string_view stream, uint64_t index = 0);

inline Rng MakeRng(uint64_t root, std::string_view stream, uint64_t index = 0) {
  return Rng(DeriveSeed(root, stream, index));
}

// Runs fn(i) for i in [0, n) on up to `jobs` threads. Results must be written
// to per-index slots so output order never depends on scheduling. The first
// exception (lowest index) is rethrown after all workers finish.
void ParallelFor(size_t n, int jobs, const std::function<void(size_t)>& fn);

// printf("%.9g") formatting used by every CSV writer.
std::string FormatG9(double value);
// Round-trip exact formatting (%.17g).
std::string FormatG17(double value);

}  // namespace guidetrain

#endif  // GUIDETRAIN_COMMON_HPP_
