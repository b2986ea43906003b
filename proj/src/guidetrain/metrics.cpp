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

#include "guidetrain/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <complex>

#include <unsupported/Eigen/FFT>

#include "guidetrain/common.hpp"

namespace guidetrain::metrics {

double DiscreteFrechet(std::span<const Point2> p, std::span<const Point2> q) {
  Require(!p.empty() && !q.empty(), "DiscreteFrechet: empty path");
  const size_t n = p.size();
  const size_t m = q.size();
  std::vector<double> prev(m), cur(m);
  for (size_t i = 0; i < n; ++i) {
    for (size_t j = 0; j < m; ++j) {
      const double d = (p[i] - q[j]).norm();
      double reach;
      if (i == 0 && j == 0) {
        reach = d;
      } else if (i == 0) {
        reach = std::max(cur[j - 1], d);
      } else if (j == 0) {
        reach = std::max(prev[0], d);
      } else {
        reach = std::max(std::min({prev[j], prev[j - 1], cur[j - 1]}), d);
      }
      cur[j] = reach;
    }
    std::swap(prev, cur);
  }
  return prev[m - 1];
}

std::vector<double> SpeedProfile(std::span<const Point2> positions, double dt) {
  Require(positions.size() >= 2, "SpeedProfile: need at least 2 samples");
  Require(dt > 0.0, "SpeedProfile: dt must be positive");
  std::vector<double> v(positions.size() - 1);
  for (size_t t = 0; t + 1 < positions.size(); ++t) {
    v[t] = (positions[t + 1] - positions[t]).norm() / dt;
  }
  return v;
}

void SalConfig::Validate() const {
  Require(sample_rate > 0.0, "SalConfig: sample_rate must be positive");
  Require(cutoff_freq > 0.0 && cutoff_freq <= sample_rate / 2.0,
          "SalConfig: cutoff must be in (0, sample_rate/2]");
  Require(pad_factor >= 1 && (pad_factor & (pad_factor - 1)) == 0,
          "SalConfig: pad_factor must be a power of two");
}

double SpectralArcLength(std::span<const double> speed, const SalConfig& cfg) {
  cfg.Validate();
  Require(speed.size() >= 4, "SpectralArcLength: need at least 4 samples");
  if (std::all_of(speed.begin(), speed.end(),
                  [](double v) { return v == 0.0; })) {
    Fail(ErrorCode::kNumeric, "SpectralArcLength: all-zero speed profile");
  }

  size_t pow2 = 1;
  while (pow2 < speed.size()) pow2 <<= 1;
  const size_t nfft = pow2 * static_cast<size_t>(cfg.pad_factor);

  std::vector<double> padded(nfft, 0.0);
  std::copy(speed.begin(), speed.end(), padded.begin());
  std::vector<std::complex<double>> spectrum;
  Eigen::FFT<double> fft;
  fft.fwd(spectrum, padded);

  std::vector<double> mag(nfft);
  double peak = 0.0;
  for (size_t k = 0; k < nfft; ++k) {
    mag[k] = std::abs(spectrum[k]);
    peak = std::max(peak, mag[k]);
  }

  const double df = cfg.sample_rate / static_cast<double>(nfft) / cfg.cutoff_freq;
  const auto last = static_cast<size_t>(
      std::floor(cfg.cutoff_freq * static_cast<double>(nfft) / cfg.sample_rate +
                 1e-9));
  double arc = 0.0;
  for (size_t k = 1; k <= last; ++k) {
    const double dv = (mag[k] - mag[k - 1]) / peak;
    arc += std::sqrt(df * df + dv * dv);
  }
  return -arc;
}

const char* RewardKindName(RewardKind kind) {
  return kind == RewardKind::kGOnly ? "GOnly" : "GPlusH";
}

RewardKind ParseRewardKind(const std::string& name) {
  if (name == "GOnly" || name == "g-only") return RewardKind::kGOnly;
  if (name == "GPlusH" || name == "g-plus-h") return RewardKind::kGPlusH;
  Fail(ErrorCode::kInvalidArgument, "unknown reward kind '" + name + "'");
}

void RewardConfig::Validate() const {
  Require(w_time >= 0.0 && w_frechet >= 0.0 && w_sal >= 0.0 &&
              timeout_penalty >= 0.0,
          "RewardConfig: weights must be non-negative");
  Require(max_timesteps >= 1, "RewardConfig: max_timesteps must be >= 1");
  Require(dt > 0.0, "RewardConfig: dt must be positive");
  sal.Validate();
}

double RewardFromMetrics(double completion_time, double frechet, double sal,
                         bool timed_out, const RewardConfig& cfg) {
  double total = -cfg.w_time * completion_time - cfg.w_frechet * frechet;
  if (cfg.kind == RewardKind::kGPlusH) total += cfg.w_sal * sal;
  if (timed_out) total -= cfg.timeout_penalty;
  return total;
}

namespace {

std::vector<Point2> ResampledOrRaw(std::span<const Point2> pts, double ds) {
  if (pts.size() >= 2) {
    Path path{{pts.begin(), pts.end()}, 0.0};
    if (path.Length() > 0.0) return geometry::ResamplePath(path, ds).points;
  }
  return {pts.begin(), pts.end()};
}

}  // namespace

double PathError(const Path& goal, std::span<const Point2> measured,
                 double resolution) {
  const auto g = ResampledOrRaw(goal.points, resolution);
  const auto h = ResampledOrRaw(measured, resolution);
  return DiscreteFrechet(g, h);
}

RewardTerms CumulativeReward(const EpisodeOutcome& episode, const Path& goal,
                             const RewardConfig& cfg) {
  RewardTerms terms;
  terms.completion_time =
      cfg.time_in_seconds ? episode.steps * cfg.dt : episode.steps;
  terms.frechet = PathError(goal, episode.human_path, cfg.frechet_resolution);
  terms.timed_out = episode.timed_out;
  terms.sal = cfg.undefined_sal;
  if (episode.human_path.size() >= 5) {
    const auto v = SpeedProfile(episode.human_path, cfg.dt);
    if (std::any_of(v.begin(), v.end(), [](double s) { return s != 0.0; })) {
      terms.sal = SpectralArcLength(v, cfg.sal);
    }
  }
  terms.total = RewardFromMetrics(terms.completion_time, terms.frechet,
                                  terms.sal, terms.timed_out, cfg);
  return terms;
}

}  // namespace guidetrain::metrics
