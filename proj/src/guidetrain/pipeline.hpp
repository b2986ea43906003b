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

// Training and evaluation stages. Every stage reads its inputs from the run
// directory, writes its outputs there and is a pure function of those inputs,
// the configuration and the root seed.
//
// Run directory layout:
//   dataset/          manifest.csv, profiles.csv, episodes/*.csv
//   vae/              vae.ckpt, loss.csv, report.csv
//   hppn/             hppn.ckpt, loss.csv, holdout.csv, heldout_report.csv,
//                     horizon_errors.csv
//   baseline/         baseline.ckpt, loss.csv, report.csv
//   policy_g_only/    policy.txt, history.csv, selection.csv, checkpoint.txt
//   policy_g_plus_h/  same as policy_g_only
//   evaluation/       profiles.csv, goals/*.csv, episodes.csv, summary.csv,
//                     deceleration.csv, deceleration_onset.csv, trajectories.csv
//   report/           *.svg, index.csv

#ifndef GUIDETRAIN_PIPELINE_HPP_
#define GUIDETRAIN_PIPELINE_HPP_

#include <functional>
#include <string>
#include <vector>

#include "guidetrain/cmaes.hpp"
#include "guidetrain/policy.hpp"

namespace guidetrain::pipeline {

inline constexpr int kConfigSchemaVersion = 1;

struct DatasetConfig {
  int episodes = 1500;
  int train_users = 11;
  int max_steps = 100;
  env::ScriptConfig script;
  env::ProfileRanges profiles;
};

struct VaeTrainConfig {
  int epochs = 200;
  double lr = 1e-3;
  int batch = 128;
  // Every frame_stride-th frame of every episode is used.
  int frame_stride = 10;
  int hidden = 128;
  double kl_weight = 1e-3;
};

struct PolicyTrainConfig {
  cmaes::CmaesConfig cmaes;
  int max_generations = 200;
  int plateau_window = 0;
  double plateau_tolerance = 1e-9;
  int episodes_per_candidate = 16;
  cmaes::GoalSampling goals;
  // Best-so-far parameters are written every this many generations; 0 disables.
  int checkpoint_every = 10;
  // Final pick between the best-ever candidate and the final mean on a fixed
  // set of validation goals; 0 keeps the best-ever candidate.
  int validation_goals = 64;
  // Initial CMA-ES mean of both wheel biases, rad/s; every other parameter starts at 0.
  double initial_wheel_bias = 0.0;
};

struct EvaluationMatrixConfig {
  int users = 4;
  // Evaluation user ids start here; must not overlap training ids.
  int first_user_id = 1000;
  int trials = 3;
  double path_length = 4.0;
  int max_steps = 100;
};

struct PipelineConfig {
  int schema_version = kConfigSchemaVersion;
  uint64_t seed = 1;
  int jobs = 1;
  env::WorldConfig world;
  DatasetConfig dataset;
  VaeTrainConfig vae;
  hppn::HppnConfig hppn;
  policy::BaselineConfig baseline;
  PolicyTrainConfig policy;
  // Shared reward settings; the kind is chosen per policy run.
  metrics::RewardConfig reward;
  EvaluationMatrixConfig evaluation;

  void Validate() const;
};

// Unknown keys and type mismatches are kConfig errors naming the key path.
PipelineConfig ParseConfig(const Json& json);
Json ConfigToJson(const PipelineConfig& config);
PipelineConfig LoadConfig(const std::string& path);

using LogFn = std::function<void(const std::string&)>;

struct RunContext {
  PipelineConfig config;
  std::string out;  // run directory
  LogFn log;        // may be empty

  std::string Path(const std::string& relative) const;
  void Log(const std::string& message) const;
};

// --- Stages ----------------------------------------------------------------------------

void RunDatagen(const RunContext& ctx);
void RunTrainVae(const RunContext& ctx);
void RunTrainHppn(const RunContext& ctx);
void RunTrainBaseline(const RunContext& ctx);
void RunTrainPolicy(const RunContext& ctx, metrics::RewardKind kind);
void RunEvaluate(const RunContext& ctx);
void RunReport(const RunContext& ctx);
void RunAll(const RunContext& ctx);

std::string PolicyDirName(metrics::RewardKind kind);  // "policy_g_only" / "policy_g_plus_h"

// --- Pieces shared with tests ------------------------------------------------------------

// Depth encoder backed by the VAE's posterior mean.
class VaeEncoder : public env::DepthEncoder {
 public:
  explicit VaeEncoder(nn::Vae vae) : vae_(std::move(vae)) {}
  Eigen::VectorXd Encode(const Eigen::VectorXd& image) const override;
  const nn::Vae& vae() const { return vae_; }

 private:
  nn::Vae vae_;
};

Checkpoint VaeToCheckpoint(nn::Vae& vae);
nn::Vae VaeFromCheckpoint(const Checkpoint& ckpt);

// Re-renders every frame and fills in the latent part of every response.
void AttachLatents(std::vector<env::Episode>& episodes, const VaeEncoder& encoder,
                   const env::DepthConfig& depth, int jobs);

// Evaluation and training user profiles.
env::UserProfile TrainingUser(const PipelineConfig& config, int id);
env::UserProfile EvaluationUser(const PipelineConfig& config, int index);

struct EpisodeMetrics {
  int steps = 0;
  double completion_time = 0.0;  // s
  double frechet = 0.0;          // m
  double sal = 0.0;
  bool timed_out = false;
};

EpisodeMetrics MeasureEpisode(const env::Episode& episode, const geometry::Path& goal,
                              const metrics::RewardConfig& reward);

inline constexpr int kDecelerationWindow = 20;
inline constexpr double kDecelerationSlack = 0.002;  // m/s
inline constexpr double kDecelerationMinDrop = 0.02;  // m/s

// Final-window speeds of an episode (|p[t+1] - p[t]| / dt), oldest first.
// Shorter episodes yield fewer values.
std::vector<double> FinalSpeeds(const std::vector<geometry::Point2>& positions, double dt,
                                int window = kDecelerationWindow);

// Index into a final-window speed profile where sustained deceleration
// begins. Take the earliest k from which the profile never rises by more than
// kDecelerationSlack, then skip its leading plateau: the onset is the last
// sample within the slack of profile[k]. -1 when the drop from the onset to
// the end is below kDecelerationMinDrop.
int DecelerationOnset(const std::vector<double>& profile);

}  // namespace guidetrain::pipeline

#endif  // GUIDETRAIN_PIPELINE_HPP_
