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

// Guide policies: the linear policy over (HPPN hidden state, goal slice) and
// the supervised recurrent baseline that tracks a fixed-speed target stream.

#ifndef GUIDETRAIN_POLICY_HPP_
#define GUIDETRAIN_POLICY_HPP_

#include <span>
#include <string>
#include <vector>

#include "guidetrain/hppn.hpp"
#include "guidetrain/metrics.hpp"

namespace guidetrain::policy {

using geometry::Path;
using geometry::Point2;
using geometry::Pose2;
using hppn::HppnModel;
using nn::Matrix;
using nn::Vector;
using env::RobotAction;

inline constexpr int kGoalSlicePoints = 16;
inline constexpr int kHiddenFeatures = 144;
inline constexpr int kFeatureDim = kHiddenFeatures + 2 * kGoalSlicePoints;
inline constexpr int kPolicyOutputs = 3;
inline constexpr int kPolicyParamCount = kPolicyOutputs * kFeatureDim + kPolicyOutputs;
static_assert(kFeatureDim == 176 && kPolicyParamCount == 531);

// Flat layout: weight row-major (row = output), then bias.
struct PolicyParams {
  Eigen::Matrix<double, kPolicyOutputs, kFeatureDim> weight =
      Eigen::Matrix<double, kPolicyOutputs, kFeatureDim>::Zero();
  Eigen::Vector3d bias = Eigen::Vector3d::Zero();

  static PolicyParams FromFlat(std::span<const double> flat);
  Vector Flat() const;
};

// W f + b before any clamping. features: kFeatureDim x B.
Matrix RawPolicyOutput(const PolicyParams& params, const Matrix& features);
RobotAction ActionFromRaw(const Eigen::Vector3d& raw, const env::RobotParams& robot);
RobotAction Act(const PolicyParams& params, const Vector& features,
                const env::RobotParams& robot);

// Stacks the hidden state and flattened slice (x0, y0, x1, y1, ...).
Vector BuildFeatures(const Vector& hidden, const Vector& slice);

// Upcoming goal points in the human's local frame. A progress cursor on the
// resampled goal moves to the nearest point within `search_ahead` metres of
// arc length beyond it and never moves backward; the slice is the n points
// after the cursor, padded with the final point.
class GoalSlicer {
 public:
  GoalSlicer() = default;
  explicit GoalSlicer(const Path& goal, double ds = geometry::kDefaultPathResolution,
                      int n = kGoalSlicePoints, double search_ahead = 1.0);

  void Reset() { cursor_ = 0; }
  // Advances the cursor for this human pose; returns 2n values.
  Vector Slice(const Pose2& human);
  int cursor() const { return cursor_; }
  const Path& path() const { return path_; }

 private:
  Path path_;
  int n_ = kGoalSlicePoints;
  int window_ = 10;
  int cursor_ = 0;
};

inline constexpr double kTargetSpeed = 0.36;  // m/s

// Per-step movement (forward, lateral, heading change) of a walker covering
// the goal at constant speed; ceil(length / (speed dt)) steps. The walker's
// heading at each step is the direction of its next chord.
std::vector<Pose2> GoalToTargetMovements(const Path& goal, double speed = kTargetSpeed,
                                         double dt = 0.25);

// --- Linear policy controllers -----------------------------------------------------

// Drives HPPN virtual episodes.
class LinearSimController : public hppn::SimController {
 public:
  LinearSimController(PolicyParams params, const Path& goal, env::RobotParams robot);
  void Reset() override { slicer_.Reset(); }
  RobotAction Act(int t, const Vector& hidden, const Pose2& robot,
                  const Pose2& human) override;

 private:
  PolicyParams params_;
  GoalSlicer slicer_;
  env::RobotParams robot_;
};

// Drives the oracle world. The HPPN is stepped live with the executed action
// and the sensed response; the goal slice uses the HPPN's predicted human
// pose, dead-reckoned from `start`. No world ground truth is read.
class LinearPolicyController : public env::Controller {
 public:
  LinearPolicyController(const HppnModel& model, PolicyParams params, const Path& goal,
                         const hppn::SimStart& start, env::RobotParams robot);
  void Reset() override;
  RobotAction Act(const env::Observation& obs) override;

  // Beliefs used for the most recent action.
  const std::vector<Pose2>& predicted_humans() const { return predicted_humans_; }
  const std::vector<Pose2>& predicted_robots() const { return predicted_robots_; }

 private:
  const HppnModel& model_;
  PolicyParams params_;
  GoalSlicer slicer_;
  hppn::SimStart start_;
  env::RobotParams robot_;
  hppn::HppnState state_;
  RobotAction last_action_;
  env::Response last_response_;
  std::vector<Pose2> predicted_humans_;
  std::vector<Pose2> predicted_robots_;
};

// Batched HPPN rollouts of one policy over several goals, each from the
// model's nominal start at the goal origin heading along +x. Equivalent to
// Simulate with a LinearSimController per goal.
std::vector<hppn::VirtualEpisode> SimulatePolicy(const HppnModel& model,
                                                 const PolicyParams& params,
                                                 const std::vector<Path>& goals,
                                                 const env::RobotParams& robot,
                                                 int max_steps = 100);

// Text format: three header lines (kind, reward, seed) then one value per line.
struct PolicyFile {
  PolicyParams params;
  metrics::RewardKind reward = metrics::RewardKind::kGOnly;
  uint64_t seed = 0;
};
void SavePolicy(const std::string& path, const PolicyFile& file);
PolicyFile LoadPolicy(const std::string& path);

// --- Baseline ----------------------------------------------------------------------

// Input: previous action (3), response (18), target human movement (3).
inline constexpr int kBaselineInDim = 3 + env::kResponseDim + 3;
inline constexpr int kBaselineOutDim = 3;

struct BaselineConfig {
  std::vector<int> hidden = {8, 8, 8, 8};
  int window = 20;
  int stride = 5;
  int epochs = 80;
  int batch = 64;
  double lr = 0.01;
  double clip_norm = 0.0;
  double holdout_fraction = 0.2;
  double target_speed = kTargetSpeed;

  void Validate() const;
};

class BaselineModel {
 public:
  explicit BaselineModel(const BaselineConfig& cfg = {});

  void Initialize(Rng& rng);
  nn::LstmStackState ZeroState() const { return net_.lstm().ZeroState(1); }
  // One recurrent step on a raw input; returns the raw 3-d output.
  Eigen::Vector3d Step(const Vector& input, nn::LstmStackState& state) const;

  const BaselineConfig& config() const { return cfg_; }
  hppn::SequenceRegressor& net() { return net_; }
  const hppn::SequenceRegressor& net() const { return net_; }

  Checkpoint ToCheckpoint() const;
  static BaselineModel FromCheckpoint(const Checkpoint& ckpt);

 private:
  BaselineConfig cfg_;
  hppn::SequenceRegressor net_;
};

Vector BaselineInput(const RobotAction& previous, const env::Response& response,
                     const Pose2& target_movement);
// Per-row inputs and targets of a logged episode; the target channel is the
// human's actual movement to the next row (zero on the last row).
Matrix BaselineInputs(const env::Episode& episode);
Matrix BaselineTargets(const env::Episode& episode);

struct BaselineTrainResult {
  BaselineModel model;
  std::vector<double> loss;
  std::vector<int> holdout;
  double holdout_mse = 0.0;       // raw units, teacher forced
  double mean_predictor_mse = 0.0;
};

BaselineTrainResult TrainBaseline(const std::vector<env::Episode>& episodes,
                                  const BaselineConfig& cfg, uint64_t seed);

// Feeds the target stream for a goal; row k consumes target k. The stop
// output is ignored and the row consuming the last target stops, so the
// episode length is the target count regardless of the human.
class BaselineController : public env::Controller {
 public:
  BaselineController(const BaselineModel& model, const Path& goal, env::RobotParams robot);
  void Reset() override;
  RobotAction Act(const env::Observation& obs) override;
  int planned_steps() const { return static_cast<int>(targets_.size()); }

 private:
  const BaselineModel& model_;
  std::vector<Pose2> targets_;
  env::RobotParams robot_;
  nn::LstmStackState state_;
};

}  // namespace guidetrain::policy

#endif  // GUIDETRAIN_POLICY_HPP_
