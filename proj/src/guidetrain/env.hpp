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

// Synthetic ground-truth world: a differential-drive robot towing a
// spring-tethered human follower, with force and depth sensing.

#ifndef GUIDETRAIN_ENV_HPP_
#define GUIDETRAIN_ENV_HPP_

#include <array>
#include <cstdint>
#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "guidetrain/common.hpp"
#include "guidetrain/geometry.hpp"

namespace guidetrain::env {

using geometry::Point2;
using geometry::Pose2;

inline constexpr int kLatentDim = 16;
inline constexpr int kResponseDim = 2 + kLatentDim;
inline constexpr double kStopThreshold = 0.5;

struct RobotAction {
  double omega_left = 0.0;   // rad/s
  double omega_right = 0.0;  // rad/s
  double stop_degree = 0.0;  // [0, 1]

  bool stops() const { return stop_degree > kStopThreshold; }
};

struct RobotParams {
  double wheel_radius = 0.076;
  double track_width = 0.40;
  double dt = 0.25;
  double omega_min = 2.5;
  double omega_max = 5.0;

  void Validate() const;
  double MaxSpeed() const { return wheel_radius * omega_max; }
};

// Exact arc integration of the unicycle model over params.dt.
Pose2 DriveStep(const Pose2& pose, const RobotAction& action,
                const RobotParams& params);

// Wheel speeds clamped to [omega_min, omega_max], stop degree to [0, 1].
RobotAction ClampAction(double left, double right, double stop,
                        const RobotParams& params);

struct UserProfile {
  int id = 0;
  double lateral_offset = 0.0;   // m, + is the robot's left
  double follow_distance = 0.6;  // m behind the robot
  double response_lag = 0.6;     // s
  double max_speed = 0.6;        // m/s
  double gait_amplitude = 0.02;  // m per step
  double gait_freq = 0.9;        // Hz
  double noise_sigma = 0.003;    // m per step
  uint64_t seed = 0;

  void Validate() const;
  // Human pose in the robot frame that the user settles into.
  Pose2 PreferredRelative() const { return Pose2(-follow_distance, lateral_offset, 0.0); }
};

struct Range {
  double lo = 0.0;
  double hi = 0.0;
};

struct ProfileRanges {
  Range lateral_offset{-0.3, 0.3};
  Range follow_distance{0.5, 0.7};
  Range response_lag{0.4, 0.8};
  Range max_speed{0.5, 0.7};
  Range gait_amplitude{0.01, 0.03};
  Range gait_freq{0.8, 1.0};
  Range noise_sigma{0.002, 0.005};

  void Validate() const;
};

UserProfile SampleProfile(const ProfileRanges& ranges, int id, uint64_t seed);

// Heading rate limit of the follower.
inline constexpr double kHumanTurnRate = 1.5707963267948966;

// One follower update toward the robot pose `robot` (already advanced this
// step). t is the elapsed time at the start of the step.
Pose2 HumanStep(const Pose2& human, const Pose2& robot,
                const UserProfile& profile, double t, double dt, Rng& rng);

struct ForceParams {
  double stiffness = 500.0;         // N/m
  double workspace_radius = 0.075;  // m
  double handle_distance = 0.35;    // m, handle origin behind the robot
};

Eigen::Vector2d ForceFromDisplacement(const Eigen::Vector2d& displacement,
                                      const ForceParams& params);
// Hand position relative to the nominal handle origin, in the robot frame.
Eigen::Vector2d HandleDisplacement(const Pose2& robot, const Pose2& human,
                                   const UserProfile& profile,
                                   const ForceParams& params);
Eigen::Vector2d SenseForce(const Pose2& robot, const Pose2& human,
                           const UserProfile& profile, const ForceParams& params);

struct DepthConfig {
  int width = 32;
  int height = 24;
  double fov = 1.5707963267948966;  // horizontal, rad
  double nominal_distance = 0.6;    // m
  double semi_axis_x = 3.0;         // px at nominal distance
  double semi_axis_y = 6.0;         // px at nominal distance
  double max_range = 3.0;           // m, intensity reaches 0
  double noise_sigma = 0.02;

  void Validate() const;
  int pixels() const { return width * height; }
};

// Rear-facing camera image, row-major, values in [0, 1].
Eigen::VectorXd RenderDepth(const Pose2& robot, const Pose2& human,
                            const DepthConfig& cfg, Rng& rng);

// Noise stream for the frame at decision t of an episode.
Rng DepthNoiseRng(uint64_t episode_seed, int t);

// Maps a depth image to the 16-d latent. Implementations must be pure.
class DepthEncoder {
 public:
  virtual ~DepthEncoder() = default;
  virtual Eigen::VectorXd Encode(const Eigen::VectorXd& image) const = 0;
};

using Response = Eigen::Matrix<double, kResponseDim, 1>;

struct Observation {
  int t = 0;
  RobotAction previous_action;  // zero at t = 0
  Response response;
};

class Controller {
 public:
  virtual ~Controller() = default;
  virtual void Reset() = 0;
  virtual RobotAction Act(const Observation& obs) = 0;
};

// Replays a fixed action list; emits a stop once the list is exhausted.
class ScriptedController : public Controller {
 public:
  explicit ScriptedController(std::vector<RobotAction> script)
      : script_(std::move(script)) {}
  void Reset() override {}
  RobotAction Act(const Observation& obs) override;

 private:
  std::vector<RobotAction> script_;
};

struct ScriptConfig {
  int min_length = 60;
  int max_length = 120;
  int min_hold = 4;
  int max_hold = 20;

  void Validate() const;
};

// Piecewise-constant wheel speeds; the last entry is a stop.
std::vector<RobotAction> RandomActionScript(Rng& rng, const RobotParams& params,
                                            const ScriptConfig& cfg = {});

struct EpisodeRow {
  Pose2 robot;
  Pose2 human;
  RobotAction action;
  Response response = Response::Zero();
};

struct Episode {
  uint64_t seed = 0;
  int profile_id = 0;
  std::string goal_id;        // empty when no goal
  std::string termination;    // "stop" or "timeout"
  bool has_latent = false;    // false: latent columns are placeholders
  std::vector<EpisodeRow> rows;

  int steps() const { return static_cast<int>(rows.size()); }
  bool timed_out() const { return termination == "timeout"; }
  std::vector<Point2> HumanPath() const;
  std::vector<Point2> RobotPath() const;
};

struct WorldConfig {
  RobotParams robot;
  ForceParams force;
  DepthConfig depth;
};

struct RolloutOptions {
  int max_steps = 100;
  Pose2 robot_start;
  Pose2 human_start;
  uint64_t seed = 0;
  std::string goal_id;
};

// Steps the world at 1/dt Hz: controller acts on the current response; a
// stop is recorded and not driven; otherwise drive, human step, sense.
// The latent is zero when encoder is null.
Episode Rollout(Controller& controller, const UserProfile& profile,
                const WorldConfig& world, const RolloutOptions& options,
                const DepthEncoder* encoder);

// Response (force, latent) for a world state.
Response SenseResponse(const Pose2& robot, const Pose2& human,
                       const UserProfile& profile, const WorldConfig& world,
                       uint64_t episode_seed, int t, const DepthEncoder* encoder);

// Re-renders the depth frame of row t of an episode.
Eigen::VectorXd RenderEpisodeFrame(const Episode& episode, int t,
                                   const DepthConfig& cfg);

void WriteEpisodeCsv(std::ostream& out, const Episode& episode);
Episode ReadEpisodeCsv(std::istream& in);
void SaveEpisode(const std::string& path, const Episode& episode);
Episode LoadEpisode(const std::string& path);

struct ManifestEntry {
  std::string file;
  int profile_id = 0;
  uint64_t seed = 0;
  int steps = 0;
};

void WriteManifest(const std::string& path, const std::vector<ManifestEntry>& entries);
std::vector<ManifestEntry> ReadManifest(const std::string& path);
void WriteProfiles(const std::string& path, const std::vector<UserProfile>& profiles);
std::vector<UserProfile> ReadProfiles(const std::string& path);

struct Dataset {
  std::vector<UserProfile> profiles;
  std::vector<Episode> episodes;

  const UserProfile& Profile(int id) const;
};

// Loads dataset_dir/manifest.csv, profiles.csv and every listed episode.
Dataset LoadDataset(const std::string& dataset_dir);

}  // namespace guidetrain::env

#endif  // GUIDETRAIN_ENV_HPP_
