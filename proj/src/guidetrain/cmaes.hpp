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

// CMA-ES (maximization) with the standard default strategy parameters, and
// the virtual-episode objective that scores linear policies on the HPPN.

#ifndef GUIDETRAIN_CMAES_HPP_
#define GUIDETRAIN_CMAES_HPP_

#include <functional>
#include <string>
#include <vector>

#include "guidetrain/metrics.hpp"
#include "guidetrain/policy.hpp"

namespace guidetrain::cmaes {

using nn::Matrix;
using nn::Vector;

struct CmaesConfig {
  int lambda = 32;
  double sigma0 = 0.3;
  // Eigenvalues are floored at max / condition_cap.
  double condition_cap = 1e14;

  void Validate() const;
};

class Cmaes {
 public:
  Cmaes(const Vector& x0, const CmaesConfig& cfg);

  // lambda samples from N(mean, sigma^2 C).
  std::vector<Vector> Ask(Rng& rng);
  // Higher fitness is better. Only fitness ranks are used (stable order).
  void Tell(const std::vector<Vector>& candidates, const std::vector<double>& fitness);

  int dimension() const { return static_cast<int>(mean_.size()); }
  int lambda() const { return cfg_.lambda; }
  int mu() const { return mu_; }
  int generation() const { return generation_; }
  double sigma() const { return sigma_; }
  double mueff() const { return mueff_; }
  const Vector& mean() const { return mean_; }
  const Vector& weights() const { return weights_; }
  const Matrix& covariance() const { return c_; }
  const Vector& path_sigma() const { return ps_; }
  const Vector& path_c() const { return pc_; }
  const Vector& eigenvalues() const { return eigenvalues_; }
  int condition_repairs() const { return condition_repairs_; }
  int eigen_updates() const { return eigen_updates_; }

 private:
  void UpdateEigen();

  CmaesConfig cfg_;
  int n_ = 0;
  int mu_ = 0;
  Vector weights_;
  double mueff_ = 0.0, cc_ = 0.0, cs_ = 0.0, c1_ = 0.0, cmu_ = 0.0, damps_ = 0.0,
         chin_ = 0.0;
  Vector mean_;
  double sigma_ = 0.0;
  Matrix c_;
  Vector ps_, pc_;
  Matrix b_;             // eigenvectors of C
  Vector d_;             // sqrt of eigenvalues
  Vector eigenvalues_;
  int generation_ = 0;
  int eigen_generation_ = -1;
  int condition_repairs_ = 0;
  int eigen_updates_ = 0;
};

struct GenerationRecord {
  int generation = 0;    // 1-based
  double best = 0.0;     // best so far
  double mean = 0.0;     // this generation
  double worst = 0.0;    // this generation
  double sigma = 0.0;    // after the update
};

struct OptimizeConfig {
  int max_generations = 200;
  // Stop when best-so-far improved by no more than plateau_tolerance over
  // the last plateau_window generations; 0 disables.
  int plateau_window = 0;
  double plateau_tolerance = 1e-9;
};

struct OptimizeResult {
  Vector best;
  double best_fitness = 0.0;
  int best_generation = 0;
  Vector final_mean;
  std::vector<GenerationRecord> history;
  int condition_repairs = 0;
};

// Scores a whole generation; generation is 1-based.
using BatchObjective =
    std::function<std::vector<double>(const std::vector<Vector>& candidates, int generation)>;
// Called after every generation with the running result.
using GenerationCallback = std::function<void(const OptimizeResult&)>;

OptimizeResult Optimize(const BatchObjective& objective, const Vector& x0,
                        const CmaesConfig& cfg, const OptimizeConfig& opt, uint64_t seed,
                        const GenerationCallback& on_generation = {});

void WriteHistoryCsv(const std::string& path, const std::vector<GenerationRecord>& history);

// --- Virtual-episode objective ---------------------------------------------------------

struct GoalSampling {
  double length = 4.0;
  double curvature_min = 0.3;
  double curvature_max = 0.9;
};

struct EvaluationConfig {
  int episodes_per_candidate = 16;
  int max_steps = 100;
  GoalSampling goals;
  metrics::RewardConfig reward;
  env::RobotParams robot;

  void Validate() const;
};

// Random goals stratified over curvature-change counts 0..3, randomly
// mirrored, all starting at the origin heading +x.
std::vector<geometry::Path> SampleGoals(const GoalSampling& sampling, int count, Rng& rng);

// Score of an episode the simulator could not finish.
double FailureScore(const geometry::Path& goal, const metrics::RewardConfig& reward);

struct CandidateScore {
  double mean = 0.0;
  std::vector<metrics::RewardTerms> episodes;
  int failures = 0;
};

// Rolls the candidate out on every goal in the HPPN and scores the episodes.
CandidateScore ScoreCandidate(const Vector& params, const hppn::HppnModel& model,
                              const std::vector<geometry::Path>& goals,
                              const EvaluationConfig& cfg);
// Mean reward over freshly sampled goals.
double EvaluateCandidate(const Vector& params, const hppn::HppnModel& model,
                         const EvaluationConfig& cfg, Rng& rng);

}  // namespace guidetrain::cmaes

#endif  // GUIDETRAIN_CMAES_HPP_
