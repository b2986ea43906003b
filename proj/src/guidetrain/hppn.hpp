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

// Human path prediction network: two independent recurrent parts sharing the
// action input. The robot part maps wheel speeds to the robot's local pose
// change; the human part maps (action, response) to the next human pose
// relative to the robot and the change of the response.
//
// Alignment for an episode with rows 0..T-1: pair t in [0, T-2] has inputs
// (a_t, r_t) and targets (robot_t^-1 robot_{t+1}, rel_{t+1}, r_{t+1} - r_t).

#ifndef GUIDETRAIN_HPPN_HPP_
#define GUIDETRAIN_HPPN_HPP_

#include <string>
#include <vector>

#include "guidetrain/checkpoint.hpp"
#include "guidetrain/env.hpp"
#include "guidetrain/nn.hpp"

namespace guidetrain::hppn {

using env::Response;
using env::RobotAction;
using geometry::Pose2;
using nn::Matrix;
using nn::Vector;

inline constexpr int kActionDim = 2;
inline constexpr int kRobotOutDim = 3;
inline constexpr int kHumanInDim = kActionDim + env::kResponseDim;
inline constexpr int kHumanOutDim = 3 + env::kResponseDim;

struct HppnConfig {
  std::vector<int> robot_hidden = {8, 8};
  std::vector<int> human_hidden = {64, 64};
  int window = 20;
  int stride = 5;
  int robot_epochs = 500;
  int human_epochs = 80;
  double lr = 0.01;
  int robot_batch = 256;
  int human_batch = 64;
  double holdout_fraction = 0.2;
  // Global gradient-norm clip; 0 disables.
  double clip_norm = 0.0;
  // Refuse to produce a model that does not beat the persistence predictor.
  bool require_beat_persistence = true;

  void Validate() const;
  int HiddenSize() const;
};

// One recurrent regressor working in z-scored units.
class SequenceRegressor {
 public:
  SequenceRegressor() = default;
  SequenceRegressor(const std::string& name, int in, std::vector<int> hidden, int out);

  void Initialize(Rng& rng);

  // xs, ys are normalized, time-major with `steps` timesteps.
  double Loss(const Matrix& xs, const Matrix& ys, int steps);
  // Zeroes then fills the parameter gradients.
  double LossAndGradient(const Matrix& xs, const Matrix& ys, int steps);

  nn::ParameterList Parameters();
  nn::LstmStack& lstm() { return lstm_; }
  const nn::LstmStack& lstm() const { return lstm_; }
  const nn::Dense& head() const { return head_; }

  nn::Normalizer in_norm;
  nn::Normalizer out_norm;

 private:
  nn::LstmStack lstm_;
  nn::Dense head_;
};

struct SequenceTrainConfig {
  int window = 20;
  int stride = 5;
  int epochs = 1;
  int batch = 64;
  double lr = 0.01;
  double clip_norm = 0.0;  // 0 disables
};

// Fits the regressor's normalizers on raw per-episode matrices (channels x
// steps), then trains with Adam on shuffled windows. Episodes shorter than
// the window are skipped. Returns the mean normalized loss of every epoch.
std::vector<double> FitSequenceRegressor(SequenceRegressor& part,
                                         const std::vector<Matrix>& raw_inputs,
                                         const std::vector<Matrix>& raw_targets,
                                         const SequenceTrainConfig& cfg, Rng& rng);

// Per-episode closed-loop state. Columns are independent episodes.
struct HppnState {
  nn::LstmStackState robot;
  nn::LstmStackState human;
  std::vector<Pose2> robot_pose;
  std::vector<Pose2> relative;
  Matrix response;  // kResponseDim x B, current response fed at the next step
  Matrix hidden;    // HiddenSize() x B, h-vectors after the last step

  int batch() const { return static_cast<int>(robot_pose.size()); }
};

struct SimStart {
  Pose2 robot;
  Pose2 relative;
  Response response = Response::Zero();
};

class HppnModel {
 public:
  explicit HppnModel(const HppnConfig& cfg = {});

  void Initialize(Rng& rng);

  HppnState InitialState(const std::vector<SimStart>& starts) const;
  HppnState InitialState(const SimStart& start) const;

  // Advances every column by one step with actions (kActionDim x B) and the
  // state's current responses. The new response is the old plus the residual.
  void Step(HppnState& state, const Matrix& actions) const;

  struct Prediction {
    Pose2 robot_delta;
    Pose2 robot_pose;
    Pose2 relative;
    Pose2 human;
    Response response;
    Vector hidden;
  };
  // Single-episode step.
  Prediction PredictStep(HppnState& state, const RobotAction& action) const;

  static Pose2 HumanPose(const HppnState& state, int column);

  int HiddenSize() const { return cfg_.HiddenSize(); }
  const HppnConfig& config() const { return cfg_; }
  SequenceRegressor& robot_part() { return robot_; }
  SequenceRegressor& human_part() { return human_; }
  const SequenceRegressor& robot_part() const { return robot_; }
  const SequenceRegressor& human_part() const { return human_; }

  // Typical episode start (relative pose and response) estimated from the
  // training data; used when the true start response is unknown.
  void SetNominalStart(const Pose2& relative, const Response& response);
  // Start with the human at `human` and the robot placed by the nominal
  // relative pose.
  SimStart NominalStart(const Pose2& human) const;

  Checkpoint ToCheckpoint() const;
  static HppnModel FromCheckpoint(const Checkpoint& ckpt);

 private:
  HppnConfig cfg_;
  Pose2 nominal_relative_{-0.6, 0.0, 0.0};
  Response nominal_response_ = Response::Zero();
  SequenceRegressor robot_;
  SequenceRegressor human_;
};

// Raw per-episode arrays used for training and evaluation.
struct EpisodeArrays {
  Matrix actions;         // kActionDim x T
  Matrix responses;       // kResponseDim x T
  std::vector<Pose2> robot;
  std::vector<Pose2> human;
  std::vector<Pose2> relative;

  int rows() const { return static_cast<int>(robot.size()); }
  int pairs() const { return rows() - 1; }
};

EpisodeArrays ToArrays(const env::Episode& episode);

// Training inputs/targets of both parts for pairs [begin, begin + len).
Matrix RobotInputs(const EpisodeArrays& ep, int begin, int len);
Matrix RobotTargets(const EpisodeArrays& ep, int begin, int len);
Matrix HumanInputs(const EpisodeArrays& ep, int begin, int len);
Matrix HumanTargets(const EpisodeArrays& ep, int begin, int len);

Vector PoseVector(const Pose2& p);

// Episode indices held out from training: a seeded permutation's tail.
std::vector<int> HoldoutIndices(int episodes, double fraction, uint64_t seed);

struct HorizonError {
  int horizon = 0;
  int count = 0;
  double human_mean = 0.0;    // m, human position
  double human_median = 0.0;  // m
  double robot_mean = 0.0;    // m, robot position
  double relative_mean = 0.0; // m, relative position
};

struct HeldOutReport {
  int episodes = 0;
  int pairs = 0;
  // Relative pose (x, y, theta) in raw units.
  double relative_mse = 0.0;
  double relative_mse_persistence = 0.0;
  // Response in z-scored units.
  double response_mse = 0.0;
  double response_mse_persistence = 0.0;
  // Robot local delta in raw units; persistence predicts no motion.
  double robot_mse = 0.0;
  double robot_mse_persistence = 0.0;
  // Closed-loop human position error after 20 steps from episode start.
  double endpoint20_median = 0.0;
  std::vector<HorizonError> from_start;
  std::vector<HorizonError> from_any;

  bool BeatsPersistence() const;
};

inline constexpr int kReportHorizons[] = {1, 5, 10, 20};

// Teacher-forced one-step and closed-loop multi-step errors.
HeldOutReport EvaluateHeldOut(const HppnModel& model,
                              const std::vector<EpisodeArrays>& episodes);

void WriteHeldOutReport(const std::string& dir, const HeldOutReport& report);

struct TrainingLog {
  std::vector<double> robot_loss;  // mean normalized loss per epoch
  std::vector<double> human_loss;
};

struct TrainResult {
  HppnModel model;
  TrainingLog log;
  std::vector<int> holdout;
  HeldOutReport report;
};

// Trains both parts on windows of the non-held-out episodes. Episodes must
// already carry latents.
TrainResult TrainHppn(const std::vector<env::Episode>& episodes,
                      const HppnConfig& cfg, uint64_t seed);

// Closed-loop rollout entirely inside the model.
class SimController {
 public:
  virtual ~SimController() = default;
  virtual void Reset() {}
  // hidden: state after the previous step (zero at t = 0).
  virtual RobotAction Act(int t, const Vector& hidden, const Pose2& robot,
                          const Pose2& human) = 0;
};

struct VirtualEpisode {
  std::vector<Pose2> robot;
  std::vector<Pose2> human;
  std::vector<RobotAction> actions;
  bool timed_out = false;
  bool failed = false;

  int steps() const { return static_cast<int>(actions.size()); }
  std::vector<geometry::Point2> HumanPath() const;
};

// Row t holds the poses before action t; a stop row is recorded, not stepped.
VirtualEpisode Simulate(const HppnModel& model, SimController& controller,
                        const SimStart& start, int max_steps = 100);

}  // namespace guidetrain::hppn

#endif  // GUIDETRAIN_HPPN_HPP_
