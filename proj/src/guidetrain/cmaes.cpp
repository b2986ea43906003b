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

#include "guidetrain/cmaes.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include <Eigen/Eigenvalues>

namespace guidetrain::cmaes {

void CmaesConfig::Validate() const {
  Require(lambda >= 4, "CmaesConfig: lambda must be >= 4");
  Require(sigma0 > 0.0, "CmaesConfig: sigma0 must be > 0");
  Require(condition_cap > 1.0, "CmaesConfig: condition_cap must be > 1");
}

Cmaes::Cmaes(const Vector& x0, const CmaesConfig& cfg) : cfg_(cfg) {
  cfg_.Validate();
  Require(x0.size() >= 1 && x0.allFinite(), "Cmaes: x0 must be a finite non-empty vector");
  n_ = static_cast<int>(x0.size());
  const double n = n_;
  mu_ = cfg_.lambda / 2;
  weights_.resize(mu_);
  for (int i = 0; i < mu_; ++i) weights_(i) = std::log(mu_ + 0.5) - std::log(i + 1.0);
  weights_ /= weights_.sum();
  mueff_ = 1.0 / weights_.squaredNorm();

  cc_ = (4.0 + mueff_ / n) / (n + 4.0 + 2.0 * mueff_ / n);
  cs_ = (mueff_ + 2.0) / (n + mueff_ + 5.0);
  c1_ = 2.0 / ((n + 1.3) * (n + 1.3) + mueff_);
  cmu_ = std::min(1.0 - c1_,
                  2.0 * (mueff_ - 2.0 + 1.0 / mueff_) / ((n + 2.0) * (n + 2.0) + mueff_));
  damps_ = 1.0 + 2.0 * std::max(0.0, std::sqrt((mueff_ - 1.0) / (n + 1.0)) - 1.0) + cs_;
  chin_ = std::sqrt(n) * (1.0 - 1.0 / (4.0 * n) + 1.0 / (21.0 * n * n));

  mean_ = x0;
  sigma_ = cfg_.sigma0;
  c_ = Matrix::Identity(n_, n_);
  ps_ = Vector::Zero(n_);
  pc_ = Vector::Zero(n_);
  b_ = Matrix::Identity(n_, n_);
  d_ = Vector::Ones(n_);
  eigenvalues_ = Vector::Ones(n_);
  eigen_generation_ = 0;
}

void Cmaes::UpdateEigen() {
  // Only the upper triangle is maintained exactly; mirror it.
  c_ = c_.triangularView<Eigen::Upper>();
  c_ += c_.transpose().eval();
  c_.diagonal() /= 2.0;
  Eigen::SelfAdjointEigenSolver<Matrix> solver(c_);
  if (solver.info() != Eigen::Success || !solver.eigenvalues().allFinite()) {
    Fail(ErrorCode::kNumeric, "CMA-ES: covariance eigendecomposition failed");
  }
  Vector ev = solver.eigenvalues();
  const double max_ev = ev.maxCoeff();
  if (!(max_ev > 0.0) || ev.minCoeff() < -1e-8 * max_ev) {
    Fail(ErrorCode::kNumeric, "CMA-ES: covariance is not positive definite");
  }
  const double floor = max_ev / cfg_.condition_cap;
  if (ev.minCoeff() < floor) {
    ev = ev.cwiseMax(floor);
    c_ = solver.eigenvectors() * ev.asDiagonal() * solver.eigenvectors().transpose();
    ++condition_repairs_;
  }
  b_ = solver.eigenvectors();
  eigenvalues_ = ev;
  d_ = ev.cwiseSqrt();
  eigen_generation_ = generation_;
  ++eigen_updates_;
}

std::vector<Vector> Cmaes::Ask(Rng& rng) {
  const double lag = cfg_.lambda / ((c1_ + cmu_) * n_ * 10.0);
  if (generation_ - eigen_generation_ > lag || eigen_updates_ == 0) UpdateEigen();
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<Vector> out;
  out.reserve(cfg_.lambda);
  for (int k = 0; k < cfg_.lambda; ++k) {
    Vector z(n_);
    for (int i = 0; i < n_; ++i) z(i) = normal(rng);
    out.push_back(mean_ + sigma_ * (b_ * d_.cwiseProduct(z)));
  }
  return out;
}

void Cmaes::Tell(const std::vector<Vector>& candidates, const std::vector<double>& fitness) {
  Require(static_cast<int>(candidates.size()) == cfg_.lambda &&
              static_cast<int>(fitness.size()) == cfg_.lambda,
          "Cmaes::Tell: expected lambda candidates and fitnesses");
  for (size_t i = 0; i < fitness.size(); ++i) {
    if (!std::isfinite(fitness[i])) {
      Fail(ErrorCode::kNumeric, "CMA-ES: non-finite fitness for candidate " + std::to_string(i));
    }
    Require(candidates[i].size() == n_, "Cmaes::Tell: candidate dimension mismatch");
  }
  std::vector<int> order(cfg_.lambda);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return fitness[a] > fitness[b]; });

  const Vector old_mean = mean_;
  Matrix y(n_, mu_);
  for (int i = 0; i < mu_; ++i) y.col(i) = (candidates[order[i]] - old_mean) / sigma_;
  const Vector yw = y * weights_;
  mean_ = old_mean + sigma_ * yw;

  // C^(-1/2) yw through the cached eigendecomposition.
  const Vector inv_sqrt_yw = b_ * (b_.transpose() * yw).cwiseQuotient(d_);
  ps_ = (1.0 - cs_) * ps_ + std::sqrt(cs_ * (2.0 - cs_) * mueff_) * inv_sqrt_yw;
  const double ps_norm = ps_.norm();
  const double decay = 1.0 - std::pow(1.0 - cs_, 2.0 * (generation_ + 1));
  const bool hsig = ps_norm / std::sqrt(decay) / chin_ < 1.4 + 2.0 / (n_ + 1.0);
  pc_ = (1.0 - cc_) * pc_ + (hsig ? std::sqrt(cc_ * (2.0 - cc_) * mueff_) : 0.0) * yw;

  const double old_weight = 1.0 - c1_ - cmu_;
  const double hsig_fix = hsig ? 0.0 : c1_ * cc_ * (2.0 - cc_);
  c_ *= old_weight + hsig_fix;
  c_.noalias() += c1_ * pc_ * pc_.transpose();
  c_.noalias() += cmu_ * (y * weights_.asDiagonal() * y.transpose());

  sigma_ *= std::exp((cs_ / damps_) * (ps_norm / chin_ - 1.0));
  if (!std::isfinite(sigma_) || !mean_.allFinite()) {
    Fail(ErrorCode::kNumeric, "CMA-ES: state became non-finite");
  }
  ++generation_;
}

OptimizeResult Optimize(const BatchObjective& objective, const Vector& x0,
                        const CmaesConfig& cfg, const OptimizeConfig& opt, uint64_t seed,
                        const GenerationCallback& on_generation) {
  Require(opt.max_generations >= 1, "Optimize: max_generations must be >= 1");
  Require(opt.plateau_window >= 0, "Optimize: plateau_window must be >= 0");
  Cmaes es(x0, cfg);
  Rng rng = MakeRng(seed, "cmaes_sampling");
  OptimizeResult result;
  result.best = x0;
  result.best_fitness = -std::numeric_limits<double>::infinity();
  for (int g = 1; g <= opt.max_generations; ++g) {
    const std::vector<Vector> candidates = es.Ask(rng);
    const std::vector<double> fitness = objective(candidates, g);
    Require(fitness.size() == candidates.size(), "Optimize: objective returned wrong count");
    es.Tell(candidates, fitness);

    GenerationRecord rec;
    rec.generation = g;
    rec.worst = fitness.front();
    double sum = 0.0;
    for (size_t i = 0; i < fitness.size(); ++i) {
      sum += fitness[i];
      rec.worst = std::min(rec.worst, fitness[i]);
      if (fitness[i] > result.best_fitness) {
        result.best_fitness = fitness[i];
        result.best = candidates[i];
        result.best_generation = g;
      }
    }
    rec.best = result.best_fitness;
    rec.mean = sum / static_cast<double>(fitness.size());
    rec.sigma = es.sigma();
    result.history.push_back(rec);
    result.final_mean = es.mean();
    result.condition_repairs = es.condition_repairs();
    if (on_generation) on_generation(result);

    if (opt.plateau_window > 0 && g > opt.plateau_window) {
      const double then = result.history[g - 1 - opt.plateau_window].best;
      if (rec.best - then <= opt.plateau_tolerance) break;
    }
  }
  return result;
}

void WriteHistoryCsv(const std::string& path, const std::vector<GenerationRecord>& history) {
  std::ostringstream ss;
  ss << "generation,best,mean,worst,sigma\n";
  for (const GenerationRecord& r : history) {
    ss << r.generation << ',' << FormatG9(r.best) << ',' << FormatG9(r.mean) << ','
       << FormatG9(r.worst) << ',' << FormatG9(r.sigma) << '\n';
  }
  WriteFile(path, ss.str());
}

// --- Virtual-episode objective ---------------------------------------------------------

void EvaluationConfig::Validate() const {
  Require(episodes_per_candidate >= 1, "EvaluationConfig: episodes_per_candidate must be >= 1");
  Require(max_steps >= 1, "EvaluationConfig: max_steps must be >= 1");
  Require(goals.length > 0.0, "EvaluationConfig: goal length must be > 0");
  Require(goals.curvature_min > 0.0 && goals.curvature_max >= goals.curvature_min,
          "EvaluationConfig: invalid goal curvature range");
  reward.Validate();
  robot.Validate();
}

std::vector<geometry::Path> SampleGoals(const GoalSampling& sampling, int count, Rng& rng) {
  std::vector<geometry::Path> goals;
  std::uniform_int_distribution<uint64_t> seeds;
  std::bernoulli_distribution mirror(0.5);
  for (int i = 0; i < count; ++i) {
    geometry::GoalPathSpec spec;
    spec.total_length = sampling.length;
    spec.num_curvature_changes = i % 4;
    spec.curvature_min = sampling.curvature_min;
    spec.curvature_max = sampling.curvature_max;
    spec.seed = seeds(rng);
    spec.mirrored = mirror(rng);
    goals.push_back(geometry::GenerateGoalPath(spec));
  }
  return goals;
}

double FailureScore(const geometry::Path& goal, const metrics::RewardConfig& reward) {
  return -(reward.timeout_penalty + reward.w_frechet * goal.Length());
}

CandidateScore ScoreCandidate(const Vector& params, const hppn::HppnModel& model,
                              const std::vector<geometry::Path>& goals,
                              const EvaluationConfig& cfg) {
  Require(!goals.empty(), "ScoreCandidate: no goals");
  const policy::PolicyParams p =
      policy::PolicyParams::FromFlat(std::span(params.data(), params.size()));
  const auto episodes = policy::SimulatePolicy(model, p, goals, cfg.robot, cfg.max_steps);
  CandidateScore score;
  double sum = 0.0;
  for (size_t i = 0; i < goals.size(); ++i) {
    metrics::RewardTerms terms;
    if (episodes[i].failed) {
      terms.total = FailureScore(goals[i], cfg.reward);
      ++score.failures;
    } else {
      metrics::EpisodeOutcome outcome{episodes[i].HumanPath(), episodes[i].steps(),
                                      episodes[i].timed_out};
      terms = metrics::CumulativeReward(outcome, goals[i], cfg.reward);
    }
    sum += terms.total;
    score.episodes.push_back(terms);
  }
  score.mean = sum / static_cast<double>(goals.size());
  return score;
}

double EvaluateCandidate(const Vector& params, const hppn::HppnModel& model,
                         const EvaluationConfig& cfg, Rng& rng) {
  cfg.Validate();
  return ScoreCandidate(params, model,
                        SampleGoals(cfg.goals, cfg.episodes_per_candidate, rng), cfg)
      .mean;
}

}  // namespace guidetrain::cmaes
