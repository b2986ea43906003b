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
#include <limits>
#include <numbers>

#include <gtest/gtest.h>

#include "test_util.hpp"

namespace guidetrain::metrics {
namespace {

using guidetrain::testing::RandomPoints;
using guidetrain::testing::Uniform;
using guidetrain::testing::UniformInt;

constexpr double kPi = std::numbers::pi;

// Minimum over every monotone coupling, enumerated explicitly.
double BruteForceFrechet(const std::vector<Point2>& p, const std::vector<Point2>& q,
                         size_t i, size_t j, double leash) {
  leash = std::max(leash, (p[i] - q[j]).norm());
  if (i + 1 == p.size() && j + 1 == q.size()) return leash;
  double best = std::numeric_limits<double>::infinity();
  if (i + 1 < p.size()) best = std::min(best, BruteForceFrechet(p, q, i + 1, j, leash));
  if (j + 1 < q.size()) best = std::min(best, BruteForceFrechet(p, q, i, j + 1, leash));
  if (i + 1 < p.size() && j + 1 < q.size()) {
    best = std::min(best, BruteForceFrechet(p, q, i + 1, j + 1, leash));
  }
  return best;
}

// Direct O(N^2) DFT evaluation of the spectral arc length formula.
double ReferenceSal(const std::vector<double>& v, double fs, double fc, int pad) {
  size_t pow2 = 1;
  while (pow2 < v.size()) pow2 *= 2;
  const size_t n = pow2 * static_cast<size_t>(pad);
  std::vector<double> mag(n);
  for (size_t k = 0; k < n; ++k) {
    std::complex<double> acc = 0.0;
    for (size_t t = 0; t < v.size(); ++t) {
      acc += v[t] * std::polar(1.0, -2.0 * kPi * static_cast<double>(k * t % n) /
                                        static_cast<double>(n));
    }
    mag[k] = std::abs(acc);
  }
  const double peak = *std::max_element(mag.begin(), mag.end());
  double arc = 0.0;
  for (size_t k = 1; static_cast<double>(k) * fs / static_cast<double>(n) <= fc + 1e-12; ++k) {
    const double df = fs / static_cast<double>(n) / fc;
    const double dv = (mag[k] - mag[k - 1]) / peak;
    arc += std::sqrt(df * df + dv * dv);
  }
  return -arc;
}

TEST(DiscreteFrechetTest, IdenticalPathsAreZero) {
  Rng rng(1);
  const auto p = RandomPoints(rng, 9);
  EXPECT_EQ(DiscreteFrechet(p, p), 0.0);
}

TEST(DiscreteFrechetTest, ParallelOffset) {
  const std::vector<Point2> p = {{0, 0}, {1, 0}};
  const std::vector<Point2> q = {{0, 1}, {1, 1}};
  EXPECT_DOUBLE_EQ(DiscreteFrechet(p, q), 1.0);
}

TEST(DiscreteFrechetTest, MatchesBruteForceCouplings) {
  Rng rng(2);
  for (int trial = 0; trial < 200; ++trial) {
    const auto p = RandomPoints(rng, UniformInt(rng, 1, 7));
    const auto q = RandomPoints(rng, UniformInt(rng, 1, 7));
    EXPECT_NEAR(DiscreteFrechet(p, q), BruteForceFrechet(p, q, 0, 0, 0.0), 1e-12);
  }
}

TEST(DiscreteFrechetTest, MetricProperties) {
  Rng rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    const auto p = RandomPoints(rng, UniformInt(rng, 1, 12));
    const auto q = RandomPoints(rng, UniformInt(rng, 1, 12));
    const double d = DiscreteFrechet(p, q);
    EXPECT_EQ(d, DiscreteFrechet(q, p));
    EXPECT_GE(d, 0.0);
    EXPECT_GE(d, (p.front() - q.front()).norm());
    EXPECT_GE(d, (p.back() - q.back()).norm());
    if (p.size() != q.size() || p != q) {
      EXPECT_GT(d, 0.0);
    }
  }
}

TEST(DiscreteFrechetTest, GrowsWithParallelSeparation) {
  std::vector<Point2> p, q;
  for (int i = 0; i <= 10; ++i) p.emplace_back(0.1 * i, 0.0);
  double prev = 0.0;
  for (double off = 0.0; off <= 2.0; off += 0.1) {
    q.clear();
    for (int i = 0; i <= 13; ++i) q.emplace_back(0.08 * i, off);
    const double d = DiscreteFrechet(p, q);
    EXPECT_GE(d, prev);
    prev = d;
  }
}

TEST(DiscreteFrechetTest, RejectsEmpty) {
  const std::vector<Point2> p = {{0, 0}};
  EXPECT_THROW(DiscreteFrechet(p, std::vector<Point2>{}), Error);
}

TEST(SpeedProfileTest, ConstantSpacing) {
  std::vector<Point2> pts;
  for (int i = 0; i < 10; ++i) pts.emplace_back(0.09 * i, 0.0);
  for (double v : SpeedProfile(pts, 0.25)) EXPECT_NEAR(v, 0.36, 1e-12);
}

TEST(SpeedProfileTest, StationaryIsZero) {
  const std::vector<Point2> pts(6, Point2(1.0, 2.0));
  for (double v : SpeedProfile(pts, 0.25)) EXPECT_EQ(v, 0.0);
}

TEST(SpeedProfileTest, MatchesFiniteDifferenceOracle) {
  Rng rng(4);
  std::vector<Point2> pts{{0.0, 0.0}};
  for (int i = 0; i < 50; ++i) {
    pts.push_back(pts.back() + Point2(Uniform(rng, -0.1, 0.1), Uniform(rng, -0.1, 0.1)));
  }
  const auto v = SpeedProfile(pts, 0.25);
  ASSERT_EQ(v.size(), 50u);
  for (size_t t = 0; t < v.size(); ++t) {
    const double dx = pts[t + 1].x() - pts[t].x();
    const double dy = pts[t + 1].y() - pts[t].y();
    EXPECT_NEAR(v[t], std::hypot(dx, dy) * 4.0, 1e-12);
  }
  EXPECT_THROW(SpeedProfile(std::vector<Point2>{{0, 0}}, 0.25), Error);
}

std::vector<double> GaussianBump(int n) {
  std::vector<double> v(n);
  for (int i = 0; i < n; ++i) {
    const double t = (i - (n - 1) / 2.0) / (n / 6.0);
    v[i] = 0.4 * std::exp(-0.5 * t * t);
  }
  return v;
}

TEST(SpectralArcLengthTest, MatchesReferenceImplementation) {
  const auto v = GaussianBump(40);
  const SalConfig cfg;
  EXPECT_NEAR(SpectralArcLength(v, cfg), ReferenceSal(v, 4.0, 2.0, 16), 1e-9);
  Rng rng(5);
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<double> w(UniformInt(rng, 4, 70));
    for (double& x : w) x = Uniform(rng, 0.0, 0.5);
    EXPECT_NEAR(SpectralArcLength(w, cfg), ReferenceSal(w, 4.0, 2.0, 16), 1e-9);
  }
}

TEST(SpectralArcLengthTest, ScaleInvariant) {
  Rng rng(6);
  std::vector<double> v(33);
  for (double& x : v) x = Uniform(rng, 0.1, 0.5);
  std::vector<double> scaled = v;
  for (double& x : scaled) x *= 7.5;
  EXPECT_NEAR(SpectralArcLength(v, {}), SpectralArcLength(scaled, {}), 1e-12);
}

TEST(SpectralArcLengthTest, OscillationIsLessSmooth) {
  // A constant profile is a rectangular pulse whose leakage lobes depend on
  // its length; 40 samples matches the reference-profile length.
  std::vector<double> flat(40, 0.3), wobbly(40);
  for (int i = 0; i < 40; ++i) wobbly[i] = 0.3 + 0.05 * std::sin(2.0 * kPi * 1.5 * i * 0.25);
  EXPECT_LT(SpectralArcLength(wobbly, {}), SpectralArcLength(flat, {}));
  EXPECT_LE(SpectralArcLength(flat, {}), 0.0);
}

TEST(SpectralArcLengthTest, OscillationOnBellProfileIsLessSmoothAtAnyLength) {
  for (int n = 16; n <= 120; ++n) {
    auto bump = GaussianBump(n);
    auto wobbly = bump;
    for (int i = 0; i < n; ++i) wobbly[i] += 0.05 * std::sin(2.0 * kPi * 1.5 * i * 0.25);
    EXPECT_LT(SpectralArcLength(wobbly, {}), SpectralArcLength(bump, {})) << n;
  }
}

TEST(SpectralArcLengthTest, TrailingZerosWithinPaddedLength) {
  const auto v = GaussianBump(40);
  std::vector<double> padded = v;
  padded.resize(64, 0.0);
  EXPECT_NEAR(SpectralArcLength(v, {}), SpectralArcLength(padded, {}), 1e-6);
}

TEST(SpectralArcLengthTest, TrailingZerosAcrossPaddedLengthStayClose) {
  // A longer power-of-two bucket samples the same spectrum more finely.
  const auto v = GaussianBump(40);
  for (size_t len : {65u, 129u, 300u}) {
    std::vector<double> padded = v;
    padded.resize(len, 0.0);
    EXPECT_NEAR(SpectralArcLength(v, {}), SpectralArcLength(padded, {}), 1e-4) << len;
  }
}

TEST(SpectralArcLengthTest, RejectsInvalidInput) {
  EXPECT_THROW(SpectralArcLength(std::vector<double>(10, 0.0), {}), Error);
  EXPECT_THROW(SpectralArcLength(std::vector<double>{1.0, 2.0, 3.0}, {}), Error);
  SalConfig bad;
  bad.cutoff_freq = 3.0;
  EXPECT_THROW(SpectralArcLength(GaussianBump(10), bad), Error);
  bad = SalConfig();
  bad.pad_factor = 3;
  EXPECT_THROW(bad.Validate(), Error);
}

TEST(RewardTest, HandCases) {
  RewardConfig g_only;
  EXPECT_EQ(RewardFromMetrics(20.0, 0.3, -3.0, false, g_only), -50.0);
  RewardConfig g_plus_h;
  g_plus_h.kind = RewardKind::kGPlusH;
  EXPECT_EQ(RewardFromMetrics(20.0, 0.3, -3.0, false, g_plus_h), -140.0);
  EXPECT_EQ(RewardFromMetrics(100 * 0.25, 0.5, -3.0, true, g_only), -575.0);
}

TEST(RewardTest, TimeoutIsWorseThanAnyCompletion) {
  const RewardConfig cfg;
  Rng rng(7);
  for (int i = 0; i < 100; ++i) {
    const double f = Uniform(rng, 0.0, 3.0);
    const double t_done = Uniform(rng, 0.25, cfg.max_timesteps * cfg.dt);
    EXPECT_LT(RewardFromMetrics(cfg.max_timesteps * cfg.dt, f, 0.0, true, cfg),
              RewardFromMetrics(t_done, f, 0.0, false, cfg));
  }
}

TEST(RewardTest, CumulativeRewardFromEpisode) {
  Path goal{{{0.0, 0.0}, {4.0, 0.0}}, 0.0};
  EpisodeOutcome ep;
  for (int i = 0; i <= 40; ++i) ep.human_path.emplace_back(0.1 * i, 0.3);
  ep.steps = 40;
  RewardConfig cfg;
  const RewardTerms g = CumulativeReward(ep, goal, cfg);
  EXPECT_NEAR(g.frechet, 0.3, 1e-12);
  EXPECT_EQ(g.completion_time, 10.0);
  EXPECT_NEAR(g.total, -10.0 - 30.0, 1e-9);

  cfg.kind = RewardKind::kGPlusH;
  const RewardTerms h = CumulativeReward(ep, goal, cfg);
  EXPECT_LE(h.sal, 0.0);
  EXPECT_NEAR(h.total, g.total + 30.0 * h.sal, 1e-9);

  cfg.time_in_seconds = false;
  EXPECT_EQ(CumulativeReward(ep, goal, cfg).completion_time, 40.0);
}

TEST(RewardTest, UndefinedSmoothnessUsesConfiguredValue) {
  Path goal{{{0.0, 0.0}, {1.0, 0.0}}, 0.0};
  EpisodeOutcome ep;
  ep.human_path = {{0.0, 0.0}, {0.0, 0.0}};
  ep.steps = 1;
  RewardConfig cfg;
  cfg.kind = RewardKind::kGPlusH;
  EXPECT_EQ(CumulativeReward(ep, goal, cfg).sal, cfg.undefined_sal);
}

TEST(RewardTest, ParseKind) {
  EXPECT_EQ(ParseRewardKind("g-only"), RewardKind::kGOnly);
  EXPECT_EQ(ParseRewardKind("GPlusH"), RewardKind::kGPlusH);
  EXPECT_STREQ(RewardKindName(RewardKind::kGPlusH), "GPlusH");
  EXPECT_THROW(ParseRewardKind("both"), Error);
}

}  // namespace
}  // namespace guidetrain::metrics
