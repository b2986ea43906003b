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


#include "guidetrain/env.hpp"

#include <cmath>
#include <complex>
#include <numbers>
#include <sstream>

#include <gtest/gtest.h>
#include <unsupported/Eigen/FFT>

#include "guidetrain/nn.hpp"
#include "test_util.hpp"

namespace guidetrain::env {
namespace {

using guidetrain::testing::Uniform;

constexpr double kPi = std::numbers::pi;

UserProfile QuietProfile() {
  UserProfile p;
  p.lateral_offset = 0.2;
  p.gait_amplitude = 0.0;
  p.noise_sigma = 0.0;
  return p;
}

TEST(RobotParamsTest, RadiusMatchesSpeedMapping) {
  const RobotParams params;
  EXPECT_NEAR(params.wheel_radius * 5.0, 0.38, 1e-3);
  EXPECT_EQ(params.dt, 0.25);
}

TEST(DriveStepTest, FullSpeedStraight) {
  const Pose2 p = DriveStep(Pose2(), {5.0, 5.0, 0.0}, RobotParams());
  EXPECT_NEAR(p.x, 0.095, 1e-12);
  EXPECT_EQ(p.y, 0.0);
  EXPECT_EQ(p.theta, 0.0);
}

TEST(DriveStepTest, OpposedWheelsRotateInPlace) {
  const Pose2 start(1.0, -2.0, 0.4);
  const Pose2 p = DriveStep(start, {-3.0, 3.0, 0.0}, RobotParams());
  EXPECT_NEAR(p.x, 1.0, 1e-12);
  EXPECT_NEAR(p.y, -2.0, 1e-12);
  EXPECT_NEAR(p.theta, 0.4 + 0.076 * 6.0 / 0.40 * 0.25, 1e-12);
}

TEST(DriveStepTest, MatchesFineEulerIntegration) {
  const RobotParams params;
  Rng rng(1);
  for (int trial = 0; trial < 100; ++trial) {
    const Pose2 start = guidetrain::testing::RandomPose(rng);
    const RobotAction a{Uniform(rng, 2.5, 5.0), Uniform(rng, 2.5, 5.0), 0.0};
    const double v = params.wheel_radius * (a.omega_left + a.omega_right) / 2.0;
    const double w = params.wheel_radius * (a.omega_right - a.omega_left) / params.track_width;
    double x = start.x, y = start.y, th = start.theta;
    const int n = 1000;
    const double h = params.dt / n;
    // Heading sampled at each substep midpoint: plain forward Euler carries
    // an O(h) error of up to ~6e-6 m here.
    for (int i = 0; i < n; ++i) {
      x += v * std::cos(th + 0.5 * w * h) * h;
      y += v * std::sin(th + 0.5 * w * h) * h;
      th += w * h;
    }
    const Pose2 p = DriveStep(start, a, params);
    EXPECT_NEAR(p.x, x, 1e-6);
    EXPECT_NEAR(p.y, y, 1e-6);
    EXPECT_NEAR(geometry::WrapAngle(p.theta - th), 0.0, 1e-9);
    EXPECT_LE(std::hypot(p.x - start.x, p.y - start.y), params.MaxSpeed() * params.dt + 1e-12);
  }
}

TEST(HumanStepTest, FixedPointAtTarget) {
  const UserProfile profile = QuietProfile();
  const Pose2 robot(1.0, 2.0, 0.7);
  const Pose2 human = geometry::Compose(robot, profile.PreferredRelative());
  Rng rng(2);
  const Pose2 next = HumanStep(human, robot, profile, 0.0, 0.25, rng);
  EXPECT_NEAR(next.x, human.x, 1e-12);
  EXPECT_NEAR(next.y, human.y, 1e-12);
  EXPECT_NEAR(next.theta, human.theta, 1e-12);
}

// Lateral offset of the human from the robot's track when driving along +x.
std::vector<double> StraightDriveLateral(const UserProfile& profile, int steps) {
  const RobotParams params;
  Pose2 robot;
  Pose2 human(-0.6, -0.25, 0.0);
  Rng rng(profile.seed);
  std::vector<double> lateral;
  for (int t = 0; t < steps; ++t) {
    robot = DriveStep(robot, {4.0, 4.0, 0.0}, params);
    human = HumanStep(human, robot, profile, t * params.dt, params.dt, rng);
    lateral.push_back(human.y);
  }
  return lateral;
}

TEST(HumanStepTest, ConvergesToLateralOffset) {
  UserProfile profile;
  profile.noise_sigma = 0.0;
  for (double offset : {-0.3, -0.1, 0.15, 0.3}) {
    profile.lateral_offset = offset;
    const auto lateral = StraightDriveLateral(profile, 40);
    EXPECT_NEAR(lateral.back(), offset, 0.02) << offset;
  }
}

TEST(HumanStepTest, GaitShowsUpInLateralSpectrum) {
  UserProfile profile;
  profile.noise_sigma = 0.0;
  profile.gait_amplitude = 0.02;
  for (double freq : {0.8, 0.9, 1.0}) {
    profile.gait_freq = freq;
    auto lateral = StraightDriveLateral(profile, 296);
    lateral.erase(lateral.begin(), lateral.begin() + 40);
    double mean = 0.0;
    for (double v : lateral) mean += v;
    mean /= static_cast<double>(lateral.size());
    for (double& v : lateral) v -= mean;
    std::vector<std::complex<double>> spec;
    Eigen::FFT<double> fft;
    fft.fwd(spec, lateral);
    size_t peak = 1;
    for (size_t k = 1; k <= lateral.size() / 2; ++k) {
      if (std::abs(spec[k]) > std::abs(spec[peak])) peak = k;
    }
    const double f = static_cast<double>(peak) * 4.0 / static_cast<double>(lateral.size());
    EXPECT_NEAR(f, freq, 0.15);
  }
}

TEST(HumanStepTest, DisplacementAndSpeedBounds) {
  const RobotParams params;
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const UserProfile profile = SampleProfile(ProfileRanges(), trial, 100 + trial);
    Pose2 robot = guidetrain::testing::RandomPose(rng, 1.0);
    Pose2 human = guidetrain::testing::RandomPose(rng, 3.0);
    for (int t = 0; t < 50; ++t) {
      robot = DriveStep(robot, {Uniform(rng, 2.5, 5.0), Uniform(rng, 2.5, 5.0), 0.0}, params);
      const Pose2 next = HumanStep(human, robot, profile, t * params.dt, params.dt, rng);
      const double step = std::hypot(next.x - human.x, next.y - human.y);
      EXPECT_LE(step, profile.max_speed * params.dt + profile.gait_amplitude +
                          3.0 * profile.noise_sigma + 1e-12);
      EXPECT_LE(std::abs(geometry::WrapAngle(next.theta - human.theta)),
                kHumanTurnRate * params.dt + 1e-12);
      human = next;
    }
  }
}

TEST(ForceTest, SpringArithmetic) {
  const ForceParams params;
  EXPECT_EQ(ForceFromDisplacement({0.0, 0.0}, params), Eigen::Vector2d(0.0, 0.0));
  const Eigen::Vector2d f = ForceFromDisplacement({0.02, 0.0}, params);
  EXPECT_DOUBLE_EQ(f.x(), 10.0);
  EXPECT_EQ(f.y(), 0.0);
  EXPECT_EQ(ForceFromDisplacement({0.2, 0.0}, params).norm(), 37.5);
  EXPECT_EQ(ForceFromDisplacement({0.0, -0.3}, params).norm(), 37.5);
  Rng rng(4);
  for (int i = 0; i < 200; ++i) {
    const Eigen::Vector2d d(Uniform(rng, -0.2, 0.2), Uniform(rng, -0.2, 0.2));
    const Eigen::Vector2d force = ForceFromDisplacement(d, params);
    EXPECT_LE(force.norm(), 37.5 + 1e-12);
    if (d.norm() <= params.workspace_radius) {
      EXPECT_EQ(force, 500.0 * d);
    }
  }
}

TEST(ForceTest, ZeroAtPreferredPoseAndRobotFrame) {
  const ForceParams params;
  Rng rng(5);
  for (int i = 0; i < 50; ++i) {
    const UserProfile profile = SampleProfile(ProfileRanges(), i, i);
    const Pose2 robot = guidetrain::testing::RandomPose(rng);
    const Pose2 human = geometry::Compose(robot, profile.PreferredRelative());
    EXPECT_LT(SenseForce(robot, human, profile, params).norm(), 1e-9);
    // Moving the human 2 cm backward in the robot frame pulls the handle back.
    const Pose2 behind = geometry::Compose(robot, Pose2(-profile.follow_distance - 0.02,
                                                        profile.lateral_offset, 0.0));
    const Eigen::Vector2d f = SenseForce(robot, behind, profile, params);
    EXPECT_NEAR(f.x(), -10.0, 1e-9);
    EXPECT_NEAR(f.y(), 0.0, 1e-9);
  }
}

struct Silhouette {
  double area = 0.0;
  double cu = 0.0;
  double cv = 0.0;
};

Silhouette Measure(const Eigen::VectorXd& image, const DepthConfig& cfg) {
  Silhouette s;
  double mass = 0.0;
  for (int v = 0; v < cfg.height; ++v) {
    for (int u = 0; u < cfg.width; ++u) {
      const double x = image(v * cfg.width + u);
      if (x > 0.05) s.area += 1.0;
      mass += x;
      s.cu += x * u;
      s.cv += x * v;
    }
  }
  if (mass > 0.0) {
    s.cu /= mass;
    s.cv /= mass;
  }
  return s;
}

TEST(DepthTest, CenteredAtNominalDistance) {
  DepthConfig cfg;
  Rng rng(6);
  const Pose2 robot(2.0, 1.0, 0.3);
  const Pose2 human = geometry::Compose(robot, Pose2(-0.6, 0.0, 0.0));
  const auto image = RenderDepth(robot, human, cfg, rng);
  ASSERT_EQ(image.size(), 768);
  const Silhouette s = Measure(image, cfg);
  EXPECT_NEAR(s.cu, 15.5, 1.0);
  EXPECT_NEAR(s.cv, 11.5, 1.0);
  EXPECT_GE(image.minCoeff(), 0.0);
  EXPECT_LE(image.maxCoeff(), 1.0);
}

TEST(DepthTest, CloserIsLargerAndBearingMovesColumn) {
  DepthConfig cfg;
  cfg.noise_sigma = 0.0;
  Rng rng(7);
  const Pose2 robot;
  const auto near = Measure(RenderDepth(robot, Pose2(-0.3, 0.0, 0.0), cfg, rng), cfg);
  const auto nominal = Measure(RenderDepth(robot, Pose2(-0.6, 0.0, 0.0), cfg, rng), cfg);
  EXPECT_GT(near.area, nominal.area);
  const auto left = Measure(RenderDepth(robot, Pose2(-0.6, 0.2, 0.0), cfg, rng), cfg);
  EXPECT_GT(left.cu, nominal.cu + 2.0);
}

TEST(DepthTest, OutsideFieldOfViewIsBlank) {
  DepthConfig cfg;
  cfg.noise_sigma = 0.0;
  Rng rng(8);
  const Pose2 robot;
  EXPECT_EQ(RenderDepth(robot, Pose2(0.6, 0.0, 0.0), cfg, rng).norm(), 0.0);
  EXPECT_EQ(RenderDepth(robot, Pose2(-0.3, 0.5, 0.0), cfg, rng).norm(), 0.0);
  cfg.noise_sigma = 0.02;
  const auto noisy = RenderDepth(robot, Pose2(0.6, 0.0, 0.0), cfg, rng);
  EXPECT_LT(noisy.maxCoeff(), 0.2);
  EXPECT_GE(noisy.minCoeff(), 0.0);
}

TEST(ScriptTest, BoundsOnSpeedsHoldsAndLength) {
  const RobotParams params;
  for (uint64_t seed = 0; seed < 300; ++seed) {
    Rng rng(seed);
    const auto script = RandomActionScript(rng, params);
    ASSERT_GE(script.size(), 60u);
    ASSERT_LE(script.size(), 120u);
    EXPECT_TRUE(script.back().stops());
    size_t i = 0;
    while (i + 1 < script.size()) {
      size_t j = i;
      while (j + 1 < script.size() && script[j].omega_left == script[i].omega_left &&
             script[j].omega_right == script[i].omega_right) {
        ++j;
      }
      const size_t hold = j - i;
      EXPECT_GE(hold, 4u);
      EXPECT_LE(hold, 20u);
      EXPECT_GE(script[i].omega_left, 2.5);
      EXPECT_LE(script[i].omega_left, 5.0);
      EXPECT_GE(script[i].omega_right, 2.5);
      EXPECT_LE(script[i].omega_right, 5.0);
      EXPECT_FALSE(script[i].stops());
      i = j;
    }
  }
}

Episode ScriptedEpisode(int length, const UserProfile& profile, uint64_t seed) {
  std::vector<RobotAction> script(length - 1, {4.0, 3.5, 0.0});
  script.push_back({0.0, 0.0, 1.0});
  ScriptedController controller(script);
  RolloutOptions opts;
  opts.seed = seed;
  opts.human_start = geometry::Compose(opts.robot_start, profile.PreferredRelative());
  return Rollout(controller, profile, WorldConfig(), opts, nullptr);
}

TEST(RolloutTest, ScriptLengthAndStop) {
  const UserProfile profile;
  const Episode ep = ScriptedEpisode(80, profile, 1);
  EXPECT_EQ(ep.steps(), 80);
  EXPECT_EQ(ep.termination, "stop");

  ScriptedController stop_now({{0.0, 0.0, 1.0}});
  const Episode one = Rollout(stop_now, profile, WorldConfig(), RolloutOptions(), nullptr);
  EXPECT_EQ(one.steps(), 1);

  std::vector<RobotAction> long_script(150, {3.0, 3.0, 0.0});
  ScriptedController runner(long_script);
  const Episode capped = Rollout(runner, profile, WorldConfig(), RolloutOptions(), nullptr);
  EXPECT_EQ(capped.steps(), 100);
  EXPECT_TRUE(capped.timed_out());
}

TEST(RolloutTest, DeterministicAndSeedFreeWithoutNoise) {
  UserProfile profile;
  const Episode a = ScriptedEpisode(60, profile, 7);
  const Episode b = ScriptedEpisode(60, profile, 7);
  std::ostringstream sa, sb;
  WriteEpisodeCsv(sa, a);
  WriteEpisodeCsv(sb, b);
  EXPECT_EQ(sa.str(), sb.str());

  profile = QuietProfile();
  const Episode c = ScriptedEpisode(60, profile, 1);
  const Episode d = ScriptedEpisode(60, profile, 2);
  for (int t = 0; t < c.steps(); ++t) {
    EXPECT_EQ(c.rows[t].human.x, d.rows[t].human.x);
    EXPECT_EQ(c.rows[t].human.y, d.rows[t].human.y);
  }
}

TEST(RolloutTest, RobotSpeedBound) {
  const UserProfile profile;
  Rng rng(9);
  const auto script = RandomActionScript(rng, RobotParams());
  ScriptedController controller(script);
  const Episode ep = Rollout(controller, profile, WorldConfig(), RolloutOptions(), nullptr);
  for (int t = 1; t < ep.steps(); ++t) {
    const double d = (ep.rows[t].robot.translation() - ep.rows[t - 1].robot.translation()).norm();
    EXPECT_LE(d / 0.25, 0.38 + 1e-12);
  }
}

class ConstantEncoder : public DepthEncoder {
 public:
  Eigen::VectorXd Encode(const Eigen::VectorXd& image) const override {
    return Eigen::VectorXd::Constant(kLatentDim, image.mean());
  }
};

TEST(RolloutTest, EncoderFillsLatentFromReRenderableFrames) {
  const UserProfile profile;
  ConstantEncoder encoder;
  ScriptedController controller(std::vector<RobotAction>(10, {3.0, 4.0, 0.0}));
  RolloutOptions opts;
  opts.seed = 11;
  opts.human_start = geometry::Compose(opts.robot_start, profile.PreferredRelative());
  const Episode ep = Rollout(controller, profile, WorldConfig(), opts, &encoder);
  EXPECT_TRUE(ep.has_latent);
  for (int t = 0; t < ep.steps(); ++t) {
    const double mean = RenderEpisodeFrame(ep, t, DepthConfig()).mean();
    EXPECT_EQ(ep.rows[t].response(5), mean);
  }
}

TEST(EpisodeCsvTest, RoundTrip) {
  const UserProfile profile;
  Episode ep = ScriptedEpisode(12, profile, 3);
  ep.goal_id = "P2m";
  std::stringstream ss;
  WriteEpisodeCsv(ss, ep);
  const std::string text = ss.str();
  EXPECT_EQ(text.substr(0, text.find('\n')),
            "# seed=3 profile_id=0 steps=12 termination=stop latent=none goal=P2m");
  const Episode back = ReadEpisodeCsv(ss);
  EXPECT_EQ(back.steps(), 12);
  EXPECT_EQ(back.goal_id, "P2m");
  for (int t = 0; t < 12; ++t) {
    EXPECT_NEAR(back.rows[t].human.x, ep.rows[t].human.x, 1e-8);
    EXPECT_NEAR(back.rows[t].response(0), ep.rows[t].response(0), 1e-6);
  }
  std::ostringstream again;
  WriteEpisodeCsv(again, back);
  EXPECT_EQ(again.str(), text);

  std::istringstream bad("# seed=1\nt,rx\n");
  EXPECT_THROW(ReadEpisodeCsv(bad), Error);
}

TEST(DatasetTest, ManifestProfilesAndLoad) {
  guidetrain::testing::ScratchDir dir("dataset");
  std::vector<UserProfile> profiles = {SampleProfile(ProfileRanges(), 0, 1),
                                       SampleProfile(ProfileRanges(), 1, 2)};
  WriteProfiles(dir / "profiles.csv", profiles);
  std::vector<ManifestEntry> entries;
  for (int i = 0; i < 3; ++i) {
    const Episode ep = ScriptedEpisode(20 + i, profiles[i % 2], i);
    const std::string file = "episodes/ep_" + std::to_string(i) + ".csv";
    SaveEpisode(dir / file, ep);
    entries.push_back({file, ep.profile_id, ep.seed, ep.steps()});
  }
  WriteManifest(dir / "manifest.csv", entries);
  const Dataset ds = LoadDataset(dir.str());
  EXPECT_EQ(ds.episodes.size(), 3u);
  EXPECT_EQ(ds.Profile(1).lateral_offset, profiles[1].lateral_offset);
  EXPECT_EQ(ds.episodes[2].steps(), 22);
  EXPECT_THROW(LoadDataset(dir / "nope"), Error);
}

TEST(VaeOnDepthTest, TrainingReducesLoss) {
  DepthConfig cfg;
  Rng rng(12);
  nn::Matrix frames(cfg.pixels(), 200);
  for (int i = 0; i < 200; ++i) {
    const Pose2 human(-Uniform(rng, 0.35, 1.2), Uniform(rng, -0.4, 0.4), 0.0);
    frames.col(i) = RenderDepth(Pose2(), human, cfg, rng);
  }
  nn::Vae vae{nn::VaeConfig{}};
  vae.Initialize(rng);
  nn::AdamConfig adam_cfg;
  nn::Adam adam(vae.Parameters(), adam_cfg);
  const nn::Matrix eval_noise = nn::StandardNormal(16, 200, rng);
  const double initial = vae.Evaluate(frames, eval_noise).total;
  for (int epoch = 0; epoch < 50; ++epoch) {
    for (int b = 0; b < 200; b += 50) {
      nn::ZeroGrads(vae.Parameters());
      vae.ForwardBackward(frames.middleCols(b, 50), nn::StandardNormal(16, 50, rng));
      adam.Step();
    }
  }
  EXPECT_LT(vae.Evaluate(frames, eval_noise).total, initial);
}

}  // namespace
}  // namespace guidetrain::env
