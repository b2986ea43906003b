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

#include "guidetrain/hppn.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "test_util.hpp"

namespace guidetrain::hppn {
namespace {

using testing::RandomPose;
using testing::ScratchDir;
using testing::Uniform;

HppnConfig SmallConfig() {
  HppnConfig cfg;
  cfg.robot_hidden = {4, 3};
  cfg.human_hidden = {6, 5};
  cfg.window = 6;
  cfg.stride = 3;
  cfg.robot_epochs = 3;
  cfg.human_epochs = 3;
  cfg.robot_batch = 8;
  cfg.human_batch = 8;
  cfg.holdout_fraction = 0.25;
  cfg.require_beat_persistence = false;
  return cfg;
}

nn::Normalizer RandomNormalizer(int dims, Rng& rng) {
  nn::Normalizer n;
  n.mean.resize(dims);
  n.stddev.resize(dims);
  for (int i = 0; i < dims; ++i) {
    n.mean(i) = Uniform(rng, -1.0, 1.0);
    n.stddev(i) = Uniform(rng, 0.2, 2.0);
  }
  return n;
}

HppnModel RandomModel(const HppnConfig& cfg, uint64_t seed) {
  HppnModel model(cfg);
  Rng rng(seed);
  model.Initialize(rng);
  for (SequenceRegressor* part : {&model.robot_part(), &model.human_part()}) {
    for (nn::Parameter* p : part->Parameters()) {
      for (Eigen::Index i = 0; i < p->value.size(); ++i) {
        p->value(i) += Uniform(rng, -0.3, 0.3);
      }
    }
    part->in_norm = RandomNormalizer(part->in_norm.dims(), rng);
    part->out_norm = RandomNormalizer(part->out_norm.dims(), rng);
  }
  return model;
}

SimStart RandomStart(Rng& rng) {
  SimStart s;
  s.robot = RandomPose(rng, 2.0);
  s.relative = geometry::Pose2(-0.6, Uniform(rng, -0.3, 0.3), Uniform(rng, -0.5, 0.5));
  for (int i = 0; i < env::kResponseDim; ++i) s.response(i) = Uniform(rng, -1.0, 1.0);
  return s;
}

RobotAction RandomAction(Rng& rng) {
  return {Uniform(rng, 2.5, 5.0), Uniform(rng, 2.5, 5.0), 0.0};
}

// Episodes from the oracle world driven by random scripts.
std::vector<env::Episode> OracleEpisodes(int count, uint64_t seed) {
  env::WorldConfig world;
  env::ScriptConfig script_cfg;
  script_cfg.min_length = 30;
  script_cfg.max_length = 40;
  std::vector<env::Episode> out;
  for (int i = 0; i < count; ++i) {
    Rng rng = MakeRng(seed, "episode", static_cast<uint64_t>(i));
    const env::UserProfile profile = env::SampleProfile({}, i % 3, seed);
    env::ScriptedController ctrl(env::RandomActionScript(rng, world.robot, script_cfg));
    env::RolloutOptions opts;
    opts.seed = DeriveSeed(seed, "rollout", static_cast<uint64_t>(i));
    opts.human_start = geometry::Compose(opts.robot_start, profile.PreferredRelative());
    out.push_back(env::Rollout(ctrl, profile, world, opts, nullptr));
  }
  return out;
}

TEST(HppnModelTest, DefaultHiddenSizeIs144) {
  HppnModel model;
  EXPECT_EQ(model.HiddenSize(), 144);
  const HppnState s = model.InitialState(SimStart{});
  EXPECT_EQ(s.hidden.rows(), 144);
  EXPECT_EQ(s.hidden.norm(), 0.0);
}

TEST(HppnModelTest, ZeroWeightsKeepPoseAndResponse) {
  HppnModel model(SmallConfig());
  for (SequenceRegressor* part : {&model.robot_part(), &model.human_part()}) {
    for (nn::Parameter* p : part->Parameters()) p->value.setZero();
  }
  Rng rng(3);
  const SimStart start = RandomStart(rng);
  HppnState state = model.InitialState(start);
  for (int t = 0; t < 5; ++t) {
    const auto pred = model.PredictStep(state, RandomAction(rng));
    EXPECT_NEAR(pred.robot_pose.x, start.robot.x, 1e-15);
    EXPECT_NEAR(pred.robot_pose.y, start.robot.y, 1e-15);
    EXPECT_NEAR(pred.robot_pose.theta, start.robot.theta, 1e-15);
    EXPECT_EQ(pred.response, start.response);
    // Zero head output means the relative pose is the origin.
    EXPECT_EQ(pred.relative.x, 0.0);
    EXPECT_EQ(pred.hidden.norm(), 0.0);
  }
}

// Closed-loop stepping with teacher-forced responses equals the sequence
// forward pass composed by hand from the parts.
TEST(HppnModelTest, StepMatchesHandComposedSequencePass) {
  const HppnConfig cfg = SmallConfig();
  HppnModel model = RandomModel(cfg, 11);
  Rng rng(12);
  const int steps = 7;
  Matrix actions(kActionDim, steps), responses(env::kResponseDim, steps);
  for (int t = 0; t < steps; ++t) {
    const RobotAction a = RandomAction(rng);
    actions.col(t) << a.omega_left, a.omega_right;
    for (int i = 0; i < env::kResponseDim; ++i) responses(i, t) = Uniform(rng, -1, 1);
  }
  SequenceRegressor& robot = model.robot_part();
  SequenceRegressor& human = model.human_part();
  const Matrix robot_out = robot.out_norm.Denormalize(robot.head().Apply(
      robot.lstm().ForwardSequence(robot.in_norm.Normalize(actions), steps)));
  Matrix hin(kHumanInDim, steps);
  hin.topRows(kActionDim) = actions;
  hin.bottomRows(env::kResponseDim) = responses;
  const Matrix human_out = human.out_norm.Denormalize(human.head().Apply(
      human.lstm().ForwardSequence(human.in_norm.Normalize(hin), steps)));

  SimStart start;
  start.robot = geometry::Pose2(0.3, -0.2, 0.4);
  HppnState state = model.InitialState(start);
  geometry::Pose2 pose = start.robot;
  for (int t = 0; t < steps; ++t) {
    state.response.col(0) = responses.col(t);
    model.Step(state, actions.col(t));
    pose = geometry::Compose(
        pose, geometry::Pose2(robot_out(0, t), robot_out(1, t), robot_out(2, t)));
    EXPECT_NEAR(state.robot_pose[0].x, pose.x, 1e-12);
    EXPECT_NEAR(state.robot_pose[0].y, pose.y, 1e-12);
    EXPECT_NEAR(state.robot_pose[0].theta, pose.theta, 1e-12);
    EXPECT_NEAR(state.relative[0].x, human_out(0, t), 1e-12);
    EXPECT_NEAR(state.relative[0].y, human_out(1, t), 1e-12);
    const Vector expected = responses.col(t) + human_out.col(t).tail(env::kResponseDim);
    EXPECT_LT((state.response.col(0) - expected).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(HppnModelTest, BatchedStepMatchesSingleColumns) {
  HppnModel model = RandomModel(SmallConfig(), 21);
  Rng rng(22);
  std::vector<SimStart> starts;
  for (int i = 0; i < 4; ++i) starts.push_back(RandomStart(rng));
  HppnState batch = model.InitialState(starts);
  std::vector<HppnState> singles;
  for (const SimStart& s : starts) singles.push_back(model.InitialState(s));
  for (int t = 0; t < 6; ++t) {
    Matrix a(kActionDim, 4);
    for (int i = 0; i < 4; ++i) {
      const RobotAction ra = RandomAction(rng);
      a.col(i) << ra.omega_left, ra.omega_right;
      model.PredictStep(singles[i], ra);
    }
    model.Step(batch, a);
    for (int i = 0; i < 4; ++i) {
      EXPECT_NEAR(batch.robot_pose[i].x, singles[i].robot_pose[0].x, 1e-12);
      EXPECT_NEAR(batch.relative[i].y, singles[i].relative[0].y, 1e-12);
      EXPECT_LT((batch.hidden.col(i) - singles[i].hidden.col(0)).cwiseAbs().maxCoeff(),
                1e-12);
      EXPECT_LT((batch.response.col(i) - singles[i].response.col(0)).cwiseAbs().maxCoeff(),
                1e-12);
    }
  }
}

TEST(HppnModelTest, HiddenConcatenatesAllLayers) {
  HppnModel model = RandomModel(SmallConfig(), 31);
  HppnState s = model.InitialState(SimStart{});
  Matrix a(kActionDim, 1);
  a << 3.0, 4.0;
  model.Step(s, a);
  Vector expected(model.HiddenSize());
  expected << s.robot.layers[0].h, s.robot.layers[1].h, s.human.layers[0].h,
      s.human.layers[1].h;
  EXPECT_EQ(s.hidden.col(0), expected);
}

TEST(HppnModelTest, BothPartsPassGradientCheck) {
  HppnModel model = RandomModel(SmallConfig(), 41);
  Rng rng(42);
  const int steps = 4, batch = 3;
  for (SequenceRegressor* part : {&model.robot_part(), &model.human_part()}) {
    const int in = part->in_norm.dims();
    const int out = part->out_norm.dims();
    const Matrix xs = nn::StandardNormal(in, steps * batch, rng);
    const Matrix ys = nn::StandardNormal(out, steps * batch, rng);
    const auto report = nn::GradientCheck(
        part->Parameters(), [&] { return part->Loss(xs, ys, steps); },
        [&] { part->LossAndGradient(xs, ys, steps); }, 1e-5, 1e-4, 20, 7);
    EXPECT_TRUE(report.passed) << report.max_rel_error;
  }
}

TEST(HppnModelTest, CheckpointRoundTripIsExact) {
  HppnModel model = RandomModel(SmallConfig(), 51);
  Response r0;
  for (int i = 0; i < env::kResponseDim; ++i) r0(i) = 0.1 * i - 0.4;
  model.SetNominalStart(geometry::Pose2(-0.55, 0.12, 0.03), r0);
  const HppnModel loaded =
      HppnModel::FromCheckpoint(Checkpoint::Deserialize(model.ToCheckpoint().Serialize()));
  EXPECT_EQ(loaded.config().human_hidden, model.config().human_hidden);
  const SimStart ns = loaded.NominalStart(geometry::Pose2(1.0, 2.0, 0.5));
  EXPECT_EQ(ns.response, r0);
  EXPECT_EQ(ns.relative.y, 0.12);
  const geometry::Pose2 human = geometry::Compose(ns.robot, ns.relative);
  EXPECT_NEAR(human.x, 1.0, 1e-12);
  EXPECT_NEAR(human.theta, 0.5, 1e-12);
  Rng rng(52);
  const SimStart start = RandomStart(rng);
  HppnState a = model.InitialState(start);
  HppnState b = loaded.InitialState(start);
  for (int t = 0; t < 5; ++t) {
    const RobotAction act = RandomAction(rng);
    const auto pa = model.PredictStep(a, act);
    const auto pb = loaded.PredictStep(b, act);
    EXPECT_EQ(pa.human.x, pb.human.x);
    EXPECT_EQ(pa.human.theta, pb.human.theta);
    EXPECT_EQ(pa.response, pb.response);
    EXPECT_EQ(pa.hidden, pb.hidden);
  }
}

TEST(HppnModelTest, RejectsForeignCheckpoint) {
  EXPECT_THROW(HppnModel::FromCheckpoint(Checkpoint("vae")), Error);
}

TEST(HppnDataTest, TargetsFollowPairAlignment) {
  const auto episodes = OracleEpisodes(1, 61);
  const EpisodeArrays ep = ToArrays(episodes[0]);
  ASSERT_EQ(ep.rows(), episodes[0].steps());
  const int n = ep.pairs();
  const Matrix rt = RobotTargets(ep, 0, n);
  const Matrix ht = HumanTargets(ep, 0, n);
  const Matrix hi = HumanInputs(ep, 0, n);
  ASSERT_EQ(rt.cols(), n);
  for (int t = 0; t < n; ++t) {
    const geometry::Pose2 next = geometry::Compose(
        ep.robot[t], geometry::Pose2(rt(0, t), rt(1, t), rt(2, t)));
    EXPECT_NEAR(next.x, ep.robot[t + 1].x, 1e-12);
    EXPECT_NEAR(next.y, ep.robot[t + 1].y, 1e-12);
    const geometry::Pose2 human = geometry::Compose(
        ep.robot[t + 1], geometry::Pose2(ht(0, t), ht(1, t), ht(2, t)));
    EXPECT_NEAR(human.x, ep.human[t + 1].x, 1e-12);
    EXPECT_NEAR(human.y, ep.human[t + 1].y, 1e-12);
    EXPECT_LT((hi.col(t).tail(env::kResponseDim) + ht.col(t).tail(env::kResponseDim) -
               ep.responses.col(t + 1))
                  .cwiseAbs()
                  .maxCoeff(),
              1e-12);
    EXPECT_EQ(hi(0, t), episodes[0].rows[t].action.omega_left);
  }
  // Windows are slices of the whole-episode arrays.
  EXPECT_EQ(HumanTargets(ep, 3, 4), ht.middleCols(3, 4));
  EXPECT_EQ(RobotInputs(ep, 2, 5), ep.actions.middleCols(2, 5));
}

TEST(HppnDataTest, HoldoutIsSeededSortedAndSized) {
  for (int n : {1, 5, 10, 37, 300}) {
    const auto a = HoldoutIndices(n, 0.2, 9);
    EXPECT_EQ(a, HoldoutIndices(n, 0.2, 9));
    EXPECT_EQ(static_cast<long>(a.size()), std::lround(0.2 * n));
    EXPECT_TRUE(std::is_sorted(a.begin(), a.end()));
    EXPECT_EQ(std::set<int>(a.begin(), a.end()).size(), a.size());
    for (int i : a) EXPECT_TRUE(i >= 0 && i < n);
  }
  EXPECT_NE(HoldoutIndices(300, 0.2, 9), HoldoutIndices(300, 0.2, 10));
}

class ScriptSim : public SimController {
 public:
  explicit ScriptSim(int stop_at) : stop_at_(stop_at) {}
  void Reset() override { hidden_norms.clear(); }
  RobotAction Act(int t, const Vector& hidden, const geometry::Pose2&,
                  const geometry::Pose2&) override {
    hidden_norms.push_back(hidden.norm());
    return {4.0, 3.5, t == stop_at_ ? 1.0 : 0.0};
  }
  std::vector<double> hidden_norms;

 private:
  int stop_at_;
};

TEST(SimulateTest, StopRowIsRecordedAndNotStepped) {
  const HppnModel model = RandomModel(SmallConfig(), 71);
  ScriptSim ctrl(9);
  Rng rng(72);
  const SimStart start = RandomStart(rng);
  const VirtualEpisode ep = Simulate(model, ctrl, start, 100);
  EXPECT_EQ(ep.steps(), 10);
  EXPECT_FALSE(ep.timed_out);
  EXPECT_FALSE(ep.failed);
  EXPECT_TRUE(ep.actions.back().stops());
  EXPECT_EQ(ep.robot.front().x, start.robot.x);
  EXPECT_EQ(ctrl.hidden_norms.front(), 0.0);
  EXPECT_GT(ctrl.hidden_norms.back(), 0.0);
  const geometry::Pose2 h0 = geometry::Compose(start.robot, start.relative);
  EXPECT_NEAR(ep.human.front().x, h0.x, 1e-15);
}

TEST(SimulateTest, TimeoutAtMaxStepsAndDeterministic) {
  const HppnModel model = RandomModel(SmallConfig(), 81);
  ScriptSim a(-1), b(-1);
  const VirtualEpisode ea = Simulate(model, a, SimStart{}, 100);
  const VirtualEpisode eb = Simulate(model, b, SimStart{}, 100);
  EXPECT_EQ(ea.steps(), 100);
  EXPECT_TRUE(ea.timed_out);
  EXPECT_EQ(ea.HumanPath(), eb.HumanPath());
}

TEST(TrainHppnTest, DeterministicAndLossDecreases) {
  const auto episodes = OracleEpisodes(8, 91);
  HppnConfig cfg = SmallConfig();
  cfg.robot_epochs = 15;
  cfg.human_epochs = 15;
  const TrainResult a = TrainHppn(episodes, cfg, 5);
  const TrainResult b = TrainHppn(episodes, cfg, 5);
  EXPECT_EQ(a.log.human_loss, b.log.human_loss);
  EXPECT_EQ(a.holdout, b.holdout);
  EXPECT_EQ(a.holdout.size(), 2u);
  ASSERT_EQ(a.log.robot_loss.size(), 15u);
  EXPECT_LT(a.log.robot_loss.back(), a.log.robot_loss.front());
  EXPECT_LT(a.log.human_loss.back(), a.log.human_loss.front());
  EXPECT_GT(a.report.pairs, 0);
  EXPECT_EQ(a.report.from_start.size(), std::size(kReportHorizons));
}

// Equal wheel speeds drive straight; a model trained only on such data must
// predict (nearly) no heading change.
TEST(TrainHppnTest, StraightDataGivesNoHeadingChange) {
  env::WorldConfig world;
  std::vector<env::Episode> episodes;
  for (int i = 0; i < 6; ++i) {
    std::vector<RobotAction> script;
    for (int t = 0; t < 30; ++t) {
      const double w = 2.5 + 2.5 * ((t / 5 + i) % 3) / 2.0;
      script.push_back({w, w, 0.0});
    }
    env::ScriptedController ctrl(script);
    env::RolloutOptions opts;
    opts.seed = 100 + i;
    const env::UserProfile profile = env::SampleProfile({}, 0, 1);
    opts.human_start = geometry::Compose(opts.robot_start, profile.PreferredRelative());
    episodes.push_back(env::Rollout(ctrl, profile, world, opts, nullptr));
  }
  HppnConfig cfg = SmallConfig();
  cfg.robot_epochs = 200;
  cfg.human_epochs = 1;
  const TrainResult r = TrainHppn(episodes, cfg, 3);
  HppnState s = r.model.InitialState(SimStart{});
  for (int t = 0; t < 20; ++t) {
    const double w = 2.5 + 0.125 * t;
    const auto p = r.model.PredictStep(s, {w, w, 0.0});
    EXPECT_LT(std::abs(p.robot_delta.theta), 1e-3);
  }
}

TEST(TrainHppnTest, HeldOutReportFilesAreWritten) {
  const auto episodes = OracleEpisodes(4, 95);
  const TrainResult r = TrainHppn(episodes, SmallConfig(), 1);
  ScratchDir dir("hppn_report");
  WriteHeldOutReport(dir.str(), r.report);
  const std::string text = ReadFile(dir / "heldout_report.csv");
  EXPECT_NE(text.find("relative_mse_persistence,"), std::string::npos);
  EXPECT_NE(ReadFile(dir / "horizon_errors.csv").find("episode_start,20,"),
            std::string::npos);
}

TEST(TrainHppnTest, RejectsEpisodesShorterThanWindow) {
  auto episodes = OracleEpisodes(2, 97);
  HppnConfig cfg = SmallConfig();
  cfg.window = 500;
  EXPECT_THROW(TrainHppn(episodes, cfg, 1), Error);
}

}  // namespace
}  // namespace guidetrain::hppn
