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

#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include <Eigen/Eigenvalues>

#include "test_util.hpp"

namespace guidetrain::cmaes {
namespace {

using testing::ScratchDir;
using testing::Uniform;

double Sphere(const Vector& x) { return x.squaredNorm(); }

double Rosenbrock(const Vector& x) {
  double f = 0.0;
  for (Eigen::Index i = 0; i + 1 < x.size(); ++i) {
    const double a = x(i + 1) - x(i) * x(i);
    const double b = 1.0 - x(i);
    f += 100.0 * a * a + b * b;
  }
  return f;
}

// Maximizes -f; returns the best f reached and the generation count.
std::pair<double, int> Minimize(double (*f)(const Vector&), const Vector& x0, double sigma0,
                                int max_gen, double target, uint64_t seed) {
  CmaesConfig cfg;
  cfg.sigma0 = sigma0;
  Cmaes es(x0, cfg);
  Rng rng(seed);
  double best = std::numeric_limits<double>::infinity();
  for (int g = 1; g <= max_gen; ++g) {
    const auto xs = es.Ask(rng);
    std::vector<double> fit;
    for (const Vector& x : xs) {
      const double v = f(x);
      best = std::min(best, v);
      fit.push_back(-v);
    }
    es.Tell(xs, fit);
    if (best < target) return {best, g};
  }
  return {best, max_gen};
}

TEST(CmaesTest, DefaultStrategyParameters) {
  Cmaes es(Vector::Zero(531), CmaesConfig{});
  EXPECT_EQ(es.lambda(), 32);
  EXPECT_EQ(es.mu(), 16);
  EXPECT_NEAR(es.weights().sum(), 1.0, 1e-15);
  for (int i = 1; i < es.mu(); ++i) EXPECT_LT(es.weights()(i), es.weights()(i - 1));
  EXPECT_GT(es.mueff(), 1.0);
  EXPECT_LT(es.mueff(), es.mu());
  EXPECT_EQ(es.sigma(), 0.3);
}

TEST(CmaesTest, AskIsDeterministicAndReturnsLambda) {
  Cmaes a(Vector::Ones(7), CmaesConfig{});
  Cmaes b(Vector::Ones(7), CmaesConfig{});
  Rng ra(3), rb(3);
  const auto xa = a.Ask(ra);
  const auto xb = b.Ask(rb);
  ASSERT_EQ(xa.size(), 32u);
  for (size_t i = 0; i < xa.size(); ++i) EXPECT_EQ(xa[i], xb[i]);
}

TEST(CmaesTest, SampleMeanMatchesStateMean) {
  CmaesConfig cfg;
  cfg.sigma0 = 1.0;
  Vector m(4);
  m << 1.0, -2.0, 0.5, 3.0;
  Cmaes es(m, cfg);
  Rng rng(11);
  Vector sum = Vector::Zero(4);
  int count = 0;
  while (count < 10000) {
    for (const Vector& x : es.Ask(rng)) {
      sum += x;
      ++count;
    }
  }
  EXPECT_LT(((sum / count) - m).cwiseAbs().maxCoeff(), 0.05);
}

TEST(CmaesTest, TellIsInvariantUnderMonotoneTransforms) {
  Rng frng(5);
  Cmaes a(Vector::Constant(6, 0.7), CmaesConfig{});
  Cmaes b(Vector::Constant(6, 0.7), CmaesConfig{});
  Rng ra(9), rb(9);
  for (int g = 0; g < 40; ++g) {
    const auto xa = a.Ask(ra);
    const auto xb = b.Ask(rb);
    std::vector<double> fa, fb;
    for (const Vector& x : xa) {
      const double f = -Sphere(x) + Uniform(frng, -0.01, 0.01);
      fa.push_back(f);
      fb.push_back(3.0 * std::exp(f) + 7.0);
    }
    a.Tell(xa, fa);
    b.Tell(xb, fb);
    ASSERT_EQ(a.mean(), b.mean());
    ASSERT_EQ(a.sigma(), b.sigma());
    ASSERT_EQ(a.covariance(), b.covariance());
    ASSERT_EQ(a.path_sigma(), b.path_sigma());
    ASSERT_EQ(a.path_c(), b.path_c());
  }
}

TEST(CmaesTest, TiedFitnessKeepsCandidateOrder) {
  Cmaes a(Vector::Zero(3), CmaesConfig{});
  Rng rng(1);
  const auto xs = a.Ask(rng);
  const std::vector<double> flat(32, 1.0);
  Vector expected = Vector::Zero(3);
  for (int i = 0; i < a.mu(); ++i) expected += a.weights()(i) * xs[i];
  a.Tell(xs, flat);
  EXPECT_LT((a.mean() - expected).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(CmaesTest, RejectsNanFitnessAndWrongCounts) {
  Cmaes es(Vector::Zero(3), CmaesConfig{});
  Rng rng(1);
  const auto xs = es.Ask(rng);
  std::vector<double> f(32, 0.0);
  f[4] = std::nan("");
  try {
    es.Tell(xs, f);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kNumeric);
  }
  EXPECT_THROW(es.Tell(xs, std::vector<double>(31, 0.0)), Error);
  CmaesConfig bad;
  bad.lambda = 3;
  EXPECT_THROW(Cmaes(Vector::Zero(3), bad), Error);
}

TEST(CmaesTest, SphereMeanShrinksWithinTenGenerations) {
  Cmaes es(Vector::Ones(5), CmaesConfig{});
  Rng rng(2);
  const double start = es.mean().norm();
  for (int g = 0; g < 10; ++g) {
    const auto xs = es.Ask(rng);
    std::vector<double> f;
    for (const Vector& x : xs) f.push_back(-Sphere(x));
    es.Tell(xs, f);
  }
  EXPECT_LT(es.mean().norm(), start);
}

TEST(CmaesTest, CovarianceStaysSymmetricPositiveDefinite) {
  Cmaes es(Vector::Zero(8), CmaesConfig{});
  Rng rng(3), frng(4);
  for (int g = 0; g < 100; ++g) {
    const auto xs = es.Ask(rng);
    std::vector<double> f;
    for (size_t i = 0; i < xs.size(); ++i) f.push_back(Uniform(frng, -1.0, 1.0));
    es.Tell(xs, f);
    const Matrix& c = es.covariance();
    EXPECT_LT((c - c.transpose()).cwiseAbs().maxCoeff(), 1e-10);
    Eigen::SelfAdjointEigenSolver<Matrix> solver(c);
    EXPECT_GT(solver.eigenvalues().minCoeff(), 0.0);
  }
}

TEST(CmaesTest, ConditionCapRepairsIllConditionedCovariance) {
  CmaesConfig cfg;
  cfg.condition_cap = 50.0;
  Cmaes es(Vector::Ones(4), cfg);
  Rng rng(6);
  for (int g = 0; g < 300; ++g) {
    const auto xs = es.Ask(rng);
    std::vector<double> f;
    for (const Vector& x : xs) {
      f.push_back(-(x(0) * x(0) + 1e4 * x(1) * x(1) + 1e6 * x(2) * x(2) + x(3) * x(3)));
    }
    es.Tell(xs, f);
  }
  EXPECT_GT(es.condition_repairs(), 0);
  const Vector& ev = es.eigenvalues();
  EXPECT_LE(ev.maxCoeff() / ev.minCoeff(), 50.0 * (1 + 1e-9));
}

TEST(CmaesConvergenceTest, SphereReachesTolerance) {
  int successes = 0;
  for (uint64_t seed = 0; seed < 5; ++seed) {
    const auto [best, gens] = Minimize(Sphere, Vector::Ones(10), 0.5, 300, 1e-10, seed);
    if (best < 1e-10) ++successes;
  }
  EXPECT_GE(successes, 4);
}

TEST(CmaesConvergenceTest, RosenbrockReachesTolerance) {
  int successes = 0;
  for (uint64_t seed = 0; seed < 5; ++seed) {
    const auto [best, gens] = Minimize(Rosenbrock, Vector::Zero(5), 0.5, 3000, 1e-6, seed);
    if (best < 1e-6) ++successes;
  }
  EXPECT_GE(successes, 4);
}

TEST(OptimizeTest, HistoryIsMonotoneAndRunIsReproducible) {
  const BatchObjective objective = [](const std::vector<Vector>& xs, int) {
    std::vector<double> f;
    for (const Vector& x : xs) f.push_back(-Rosenbrock(x));
    return f;
  };
  OptimizeConfig opt;
  opt.max_generations = 60;
  const OptimizeResult a = Optimize(objective, Vector::Zero(4), CmaesConfig{}, opt, 17);
  const OptimizeResult b = Optimize(objective, Vector::Zero(4), CmaesConfig{}, opt, 17);
  ASSERT_EQ(a.history.size(), 60u);
  for (size_t i = 1; i < a.history.size(); ++i) {
    EXPECT_GE(a.history[i].best, a.history[i - 1].best);
    EXPECT_LE(a.history[i].worst, a.history[i].mean);
    EXPECT_LE(a.history[i].mean, a.history[i].best);
  }
  EXPECT_EQ(a.best, b.best);
  EXPECT_EQ(a.best_fitness, -Rosenbrock(a.best));
  EXPECT_EQ(a.final_mean, b.final_mean);
}

TEST(OptimizeTest, PlateauStopsEarly) {
  const BatchObjective flat = [](const std::vector<Vector>& xs, int) {
    return std::vector<double>(xs.size(), 1.0);
  };
  OptimizeConfig opt;
  opt.max_generations = 100;
  opt.plateau_window = 5;
  int calls = 0;
  const OptimizeResult r = Optimize(flat, Vector::Zero(3), CmaesConfig{}, opt, 1,
                                    [&](const OptimizeResult&) { ++calls; });
  EXPECT_EQ(r.history.size(), 6u);
  EXPECT_EQ(calls, 6);
}

TEST(OptimizeTest, HistoryCsvLayout) {
  ScratchDir dir("cmaes_hist");
  WriteHistoryCsv(dir / "h.csv", {{1, -5.0, -7.5, -9.0, 0.3}, {2, -4.0, -6.0, -8.0, 0.25}});
  EXPECT_EQ(ReadFile(dir / "h.csv"),
            "generation,best,mean,worst,sigma\n1,-5,-7.5,-9,0.3\n2,-4,-6,-8,0.25\n");
}

TEST(EvaluationTest, DefaultsMatchTheTrainingBudget) {
  EvaluationConfig cfg;
  EXPECT_EQ(cfg.episodes_per_candidate, 16);
  EXPECT_EQ(cfg.max_steps, 100);
  EXPECT_EQ(cfg.robot.dt, 0.25);
  EXPECT_EQ(CmaesConfig{}.lambda * cfg.episodes_per_candidate, 512);
}

TEST(EvaluationTest, GoalsAreStratifiedFourMetrePaths) {
  Rng rng(4);
  const auto goals = SampleGoals(GoalSampling{}, 16, rng);
  ASSERT_EQ(goals.size(), 16u);
  for (const auto& g : goals) {
    EXPECT_NEAR(g.Length(), 4.0, 1e-6);
    EXPECT_EQ(g.points.front(), geometry::Point2(0.0, 0.0));
  }
  // The first goal of every stratum of four is straight.
  EXPECT_NEAR(goals[0].points.back().y(), 0.0, 1e-12);
  EXPECT_NEAR(goals[4].points.back().y(), 0.0, 1e-12);
  EXPECT_GT(std::abs(goals[1].points.back().y()), 0.01);
}

TEST(EvaluationTest, MidSpeedStraightPolicyScoresAboveFailure) {
  hppn::HppnModel model;
  Rng init(2);
  model.Initialize(init);
  policy::PolicyParams p;
  p.bias << 3.75, 3.75, 0.0;
  const Vector flat = p.Flat();
  EvaluationConfig cfg;
  std::vector<geometry::Path> goals;
  for (int i = 0; i < 4; ++i) {
    geometry::GoalPathSpec spec;
    goals.push_back(geometry::GenerateGoalPath(spec));
  }
  const CandidateScore s = ScoreCandidate(flat, model, goals, cfg);
  EXPECT_TRUE(std::isfinite(s.mean));
  EXPECT_EQ(s.failures, 0);
  EXPECT_GT(s.mean, FailureScore(goals[0], cfg.reward));

  Rng r1(8), r2(8);
  EXPECT_EQ(EvaluateCandidate(flat, model, cfg, r1), EvaluateCandidate(flat, model, cfg, r2));
}

TEST(EvaluationTest, DivergentSimulationScoresFailure) {
  hppn::HppnModel model;
  Rng init(2);
  model.Initialize(init);
  model.human_part().Parameters().back()->value(0) = std::nan("");
  policy::PolicyParams p;
  p.bias << 3.75, 3.75, 0.0;
  EvaluationConfig cfg;
  const std::vector<geometry::Path> goals = {geometry::GenerateGoalPath({})};
  const CandidateScore s = ScoreCandidate(p.Flat(), model, goals, cfg);
  EXPECT_EQ(s.failures, 1);
  EXPECT_EQ(s.mean, -(500.0 + 100.0 * goals[0].Length()));
}

}  // namespace
}  // namespace guidetrain::cmaes
