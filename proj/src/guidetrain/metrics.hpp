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

#ifndef GUIDETRAIN_METRICS_HPP_
#define GUIDETRAIN_METRICS_HPP_

#include <span>
#include <string>
#include <vector>

#include "guidetrain/geometry.hpp"

namespace guidetrain::metrics {

using geometry::Path;
using geometry::Point2;

// Discrete Frechet distance by dynamic programming over the coupling lattice.
double DiscreteFrechet(std::span<const Point2> p, std::span<const Point2> q);
inline double DiscreteFrechet(const Path& p, const Path& q) {
  return DiscreteFrechet(p.points, q.points);
}

// v[t] = |position[t+1] - position[t]| / dt.
std::vector<double> SpeedProfile(std::span<const Point2> positions, double dt);

struct SalConfig {
  double sample_rate = 4.0;  // Hz
  double cutoff_freq = 2.0;  // Hz
  int pad_factor = 16;

  void Validate() const;
};

// Spectral arc length of a speed profile. The profile is zero padded to
// pad_factor times the next power of two, its magnitude spectrum normalized
// by the peak, and the arc length of that curve up to the cutoff (frequency
// axis scaled by the cutoff) returned negated. Closer to zero is smoother.
double SpectralArcLength(std::span<const double> speed, const SalConfig& cfg);

enum class RewardKind { kGOnly, kGPlusH };

const char* RewardKindName(RewardKind kind);  // "GOnly" / "GPlusH"
RewardKind ParseRewardKind(const std::string& name);

struct RewardConfig {
  double w_time = 1.0;
  double w_frechet = 100.0;
  double w_sal = 30.0;
  double timeout_penalty = 500.0;
  int max_timesteps = 100;
  RewardKind kind = RewardKind::kGOnly;
  double dt = 0.25;
  // Completion time enters in seconds (steps * dt) when true, else in steps.
  bool time_in_seconds = true;
  // Smoothness assigned when the human speed profile is too short or flat
  // for the spectral arc length to be defined.
  double undefined_sal = -10.0;
  // Resampling applied to goal and human paths before the Frechet distance.
  double frechet_resolution = geometry::kDefaultPathResolution;
  SalConfig sal;

  void Validate() const;
};

struct RewardTerms {
  double completion_time = 0.0;
  double frechet = 0.0;
  double sal = 0.0;
  bool timed_out = false;
  double total = 0.0;
};

// The reward formula applied to already computed metrics.
double RewardFromMetrics(double completion_time, double frechet, double sal,
                         bool timed_out, const RewardConfig& cfg);

struct EpisodeOutcome {
  std::vector<Point2> human_path;
  int steps = 0;
  bool timed_out = false;
};

// Path error between a goal and a measured path, both resampled at the given
// resolution (raw points are used when a path is degenerate).
double PathError(const Path& goal, std::span<const Point2> measured,
                 double resolution);

RewardTerms CumulativeReward(const EpisodeOutcome& episode, const Path& goal,
                             const RewardConfig& cfg);

}  // namespace guidetrain::metrics

#endif  // GUIDETRAIN_METRICS_HPP_
