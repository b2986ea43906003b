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

#include "guidetrain/policy.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace guidetrain::policy {

namespace {

using geometry::Between;
using geometry::Compose;

// Slice fallback: if no point in the forward window is this close, the
// cursor may jump to the nearest point anywhere ahead.
constexpr double kSliceCaptureRadius = 0.5;

Json IntVector(const std::vector<int>& v) {
  Json a = Json::array();
  for (int x : v) a.push_back(x);
  return a;
}

}  // namespace

// --- Linear policy -----------------------------------------------------------------

PolicyParams PolicyParams::FromFlat(std::span<const double> flat) {
  Require(flat.size() == static_cast<size_t>(kPolicyParamCount),
          "PolicyParams: expected " + std::to_string(kPolicyParamCount) + " values, got " +
              std::to_string(flat.size()));
  PolicyParams p;
  size_t k = 0;
  for (int r = 0; r < kPolicyOutputs; ++r) {
    for (int c = 0; c < kFeatureDim; ++c) p.weight(r, c) = flat[k++];
  }
  for (int r = 0; r < kPolicyOutputs; ++r) p.bias(r) = flat[k++];
  return p;
}

Vector PolicyParams::Flat() const {
  Vector v(kPolicyParamCount);
  Eigen::Index k = 0;
  for (int r = 0; r < kPolicyOutputs; ++r) {
    for (int c = 0; c < kFeatureDim; ++c) v(k++) = weight(r, c);
  }
  for (int r = 0; r < kPolicyOutputs; ++r) v(k++) = bias(r);
  return v;
}

Matrix RawPolicyOutput(const PolicyParams& params, const Matrix& features) {
  Require(features.rows() == kFeatureDim,
          "policy: feature length must be " + std::to_string(kFeatureDim));
  Matrix out = params.weight * features;
  out.colwise() += params.bias;
  return out;
}

RobotAction ActionFromRaw(const Eigen::Vector3d& raw, const env::RobotParams& robot) {
  return env::ClampAction(raw(0), raw(1), raw(2), robot);
}

RobotAction Act(const PolicyParams& params, const Vector& features,
                const env::RobotParams& robot) {
  return ActionFromRaw(RawPolicyOutput(params, features).col(0), robot);
}

Vector BuildFeatures(const Vector& hidden, const Vector& slice) {
  Require(hidden.size() == kHiddenFeatures,
          "policy: hidden state must have " + std::to_string(kHiddenFeatures) + " values");
  Require(slice.size() == 2 * kGoalSlicePoints, "policy: goal slice has the wrong size");
  Vector f(kFeatureDim);
  f << hidden, slice;
  return f;
}

// --- Goal slice --------------------------------------------------------------------

GoalSlicer::GoalSlicer(const Path& goal, double ds, int n, double search_ahead)
    : n_(n) {
  Require(goal.size() >= 1, "GoalSlicer: empty goal");
  Require(ds > 0.0 && n >= 1 && search_ahead > 0.0, "GoalSlicer: invalid parameters");
  path_ = goal.size() >= 2 ? geometry::ResamplePath(goal, ds) : goal;
  window_ = std::max(1, static_cast<int>(std::lround(search_ahead / ds)));
}

Vector GoalSlicer::Slice(const Pose2& human) {
  const Point2 p = human.translation();
  const int last = static_cast<int>(path_.size()) - 1;
  auto nearest = [&](int lo, int hi) {
    int best = lo;
    double best_d = std::numeric_limits<double>::infinity();
    for (int i = lo; i <= hi; ++i) {
      const double d = (path_.points[i] - p).squaredNorm();
      if (d < best_d) {
        best_d = d;
        best = i;
      }
    }
    return std::pair{best, std::sqrt(best_d)};
  };
  auto [idx, dist] = nearest(cursor_, std::min(last, cursor_ + window_));
  if (dist > kSliceCaptureRadius && cursor_ + window_ < last) {
    const auto far = nearest(cursor_, last);
    if (far.second < dist) idx = far.first;
  }
  cursor_ = std::max(cursor_, idx);

  Vector out(2 * n_);
  for (int k = 0; k < n_; ++k) {
    const Point2 local = geometry::ToFrame(path_.points[std::min(last, cursor_ + 1 + k)], human);
    out(2 * k) = local.x();
    out(2 * k + 1) = local.y();
  }
  return out;
}

// --- Target movements --------------------------------------------------------------

std::vector<Pose2> GoalToTargetMovements(const Path& goal, double speed, double dt) {
  Require(goal.size() >= 2, "GoalToTargetMovements: goal needs at least two points");
  Require(speed > 0.0 && dt > 0.0, "GoalToTargetMovements: speed and dt must be > 0");
  std::vector<double> cum(goal.size(), 0.0);
  for (size_t i = 1; i < goal.size(); ++i) {
    cum[i] = cum[i - 1] + (goal.points[i] - goal.points[i - 1]).norm();
  }
  const double length = cum.back();
  Require(length > 0.0, "GoalToTargetMovements: goal length must be > 0");
  const double step = speed * dt;
  // Tolerate arc lengths that are an exact multiple of the step up to rounding.
  const int count = static_cast<int>(std::ceil(length / step - 1e-9));

  auto at = [&](double s) -> Point2 {
    if (s >= length) return goal.points.back();
    const auto it = std::upper_bound(cum.begin(), cum.end(), s);
    const size_t i = static_cast<size_t>(it - cum.begin()) - 1;
    const double seg = cum[i + 1] - cum[i];
    const double u = seg > 0.0 ? (s - cum[i]) / seg : 0.0;
    return goal.points[i] + u * (goal.points[i + 1] - goal.points[i]);
  };
  std::vector<Point2> pts;
  for (int k = 0; k <= count; ++k) pts.push_back(at(std::min(length, k * step)));
  std::vector<double> heading(count);
  for (int k = 0; k < count; ++k) {
    const Point2 d = pts[k + 1] - pts[k];
    heading[k] = std::atan2(d.y(), d.x());
  }
  std::vector<Pose2> moves;
  for (int k = 0; k < count; ++k) {
    const Pose2 from(pts[k].x(), pts[k].y(), heading[k]);
    const double next_heading = k + 1 < count ? heading[k + 1] : heading[k];
    const Pose2 to(pts[k + 1].x(), pts[k + 1].y(), next_heading);
    moves.push_back(Between(from, to));
  }
  return moves;
}

// --- Linear policy controllers -----------------------------------------------------

LinearSimController::LinearSimController(PolicyParams params, const Path& goal,
                                         env::RobotParams robot)
    : params_(std::move(params)), slicer_(goal), robot_(robot) {}

RobotAction LinearSimController::Act(int, const Vector& hidden, const Pose2&,
                                     const Pose2& human) {
  return policy::Act(params_, BuildFeatures(hidden, slicer_.Slice(human)), robot_);
}

LinearPolicyController::LinearPolicyController(const HppnModel& model,
                                               PolicyParams params, const Path& goal,
                                               const hppn::SimStart& start,
                                               env::RobotParams robot)
    : model_(model),
      params_(std::move(params)),
      slicer_(goal),
      start_(start),
      robot_(robot) {
  Require(model.HiddenSize() == kHiddenFeatures,
          "policy: HPPN hidden size must be " + std::to_string(kHiddenFeatures));
  Reset();
}

void LinearPolicyController::Reset() {
  slicer_.Reset();
  state_ = model_.InitialState(start_);
  last_action_ = RobotAction{};
  last_response_.setZero();
  predicted_humans_.clear();
  predicted_robots_.clear();
}

RobotAction LinearPolicyController::Act(const env::Observation& obs) {
  if (obs.t > 0) {
    state_.response.col(0) = last_response_;
    Matrix a(hppn::kActionDim, 1);
    a << last_action_.omega_left, last_action_.omega_right;
    model_.Step(state_, a);
  }
  const Pose2 human = HppnModel::HumanPose(state_, 0);
  predicted_humans_.push_back(human);
  predicted_robots_.push_back(state_.robot_pose[0]);
  const RobotAction action = policy::Act(
      params_, BuildFeatures(state_.hidden.col(0), slicer_.Slice(human)), robot_);
  last_action_ = action;
  last_response_ = obs.response;
  return action;
}

std::vector<hppn::VirtualEpisode> SimulatePolicy(const HppnModel& model,
                                                 const PolicyParams& params,
                                                 const std::vector<Path>& goals,
                                                 const env::RobotParams& robot,
                                                 int max_steps) {
  Require(max_steps >= 1, "SimulatePolicy: max_steps must be >= 1");
  Require(model.HiddenSize() == kHiddenFeatures,
          "policy: HPPN hidden size must be " + std::to_string(kHiddenFeatures));
  const int b = static_cast<int>(goals.size());
  std::vector<hppn::VirtualEpisode> episodes(b);
  if (b == 0) return episodes;
  std::vector<GoalSlicer> slicers;
  std::vector<hppn::SimStart> starts;
  for (const Path& g : goals) {
    slicers.emplace_back(g);
    starts.push_back(model.NominalStart(Pose2()));
  }
  hppn::HppnState state = model.InitialState(starts);
  std::vector<bool> active(b, true);
  int remaining = b;
  Matrix features(kFeatureDim, b);
  Matrix actions = Matrix::Zero(hppn::kActionDim, b);
  for (int t = 0; t < max_steps && remaining > 0; ++t) {
    for (int i = 0; i < b; ++i) {
      if (!active[i]) continue;
      const Pose2 human = HppnModel::HumanPose(state, i);
      features.block(0, i, kHiddenFeatures, 1) = state.hidden.col(i);
      features.block(kHiddenFeatures, i, 2 * kGoalSlicePoints, 1) = slicers[i].Slice(human);
      episodes[i].robot.push_back(state.robot_pose[i]);
      episodes[i].human.push_back(human);
    }
    const Matrix raw = RawPolicyOutput(params, features);
    for (int i = 0; i < b; ++i) {
      if (!active[i]) continue;
      const RobotAction a = ActionFromRaw(raw.col(i), robot);
      episodes[i].actions.push_back(a);
      if (a.stops()) {
        active[i] = false;
        --remaining;
      }
      actions(0, i) = a.omega_left;
      actions(1, i) = a.omega_right;
    }
    if (remaining == 0) break;
    model.Step(state, actions);
    for (int i = 0; i < b; ++i) {
      if (!active[i]) continue;
      const Pose2 human = HppnModel::HumanPose(state, i);
      if (!state.hidden.col(i).allFinite() || !state.response.col(i).allFinite() ||
          !std::isfinite(human.x) || !std::isfinite(human.y)) {
        episodes[i].failed = true;
        active[i] = false;
        --remaining;
      }
    }
  }
  for (int i = 0; i < b; ++i) {
    if (active[i]) episodes[i].timed_out = true;
  }
  return episodes;
}

void SavePolicy(const std::string& path, const PolicyFile& file) {
  std::ostringstream ss;
  ss << "kind=linear_policy\n";
  ss << "reward=" << metrics::RewardKindName(file.reward) << '\n';
  ss << "seed=" << file.seed << '\n';
  const Vector flat = file.params.Flat();
  for (Eigen::Index i = 0; i < flat.size(); ++i) ss << FormatG17(flat(i)) << '\n';
  WriteFile(path, ss.str());
}

PolicyFile LoadPolicy(const std::string& path) {
  std::istringstream in(ReadFile(path));
  std::string line;
  auto header = [&](const std::string& key) {
    if (!std::getline(in, line) || line.rfind(key + "=", 0) != 0) {
      Fail(ErrorCode::kIo, path + ": expected header line '" + key + "='");
    }
    return line.substr(key.size() + 1);
  };
  if (header("kind") != "linear_policy") Fail(ErrorCode::kIo, path + ": not a policy file");
  PolicyFile file;
  try {
    file.reward = metrics::ParseRewardKind(header("reward"));
    file.seed = std::stoull(header("seed"));
  } catch (const std::logic_error&) {
    Fail(ErrorCode::kIo, path + ": bad policy header");
  }
  std::vector<double> values;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      size_t used = 0;
      values.push_back(std::stod(line, &used));
      if (used != line.size()) throw std::invalid_argument(line);
    } catch (const std::logic_error&) {
      Fail(ErrorCode::kIo, path + ": bad policy value '" + line + "'");
    }
  }
  if (values.size() != static_cast<size_t>(kPolicyParamCount)) {
    Fail(ErrorCode::kIo, path + ": expected " + std::to_string(kPolicyParamCount) +
                             " values, found " + std::to_string(values.size()));
  }
  file.params = PolicyParams::FromFlat(values);
  return file;
}

// --- Baseline ----------------------------------------------------------------------

void BaselineConfig::Validate() const {
  Require(!hidden.empty(), "BaselineConfig: needs at least one LSTM layer");
  for (int h : hidden) Require(h > 0, "BaselineConfig: hidden sizes must be positive");
  Require(window >= 1 && stride >= 1 && batch >= 1 && epochs >= 0,
          "BaselineConfig: invalid window/stride/batch/epochs");
  Require(lr > 0.0 && clip_norm >= 0.0, "BaselineConfig: invalid lr or clip_norm");
  Require(holdout_fraction >= 0.0 && holdout_fraction < 1.0,
          "BaselineConfig: holdout_fraction must be in [0, 1)");
  Require(target_speed > 0.0, "BaselineConfig: target_speed must be > 0");
}

BaselineModel::BaselineModel(const BaselineConfig& cfg)
    : cfg_(cfg), net_("baseline", kBaselineInDim, cfg.hidden, kBaselineOutDim) {
  cfg_.Validate();
}

void BaselineModel::Initialize(Rng& rng) { net_.Initialize(rng); }

Eigen::Vector3d BaselineModel::Step(const Vector& input, nn::LstmStackState& state) const {
  Require(input.size() == kBaselineInDim, "baseline: input has the wrong size");
  const Matrix& h = net_.lstm().Step(net_.in_norm.Normalize(input), state);
  return net_.out_norm.Denormalize(net_.head().Apply(h)).col(0);
}

Checkpoint BaselineModel::ToCheckpoint() const {
  Checkpoint c("baseline");
  Json cfg;
  cfg["hidden"] = IntVector(cfg_.hidden);
  cfg["window"] = cfg_.window;
  cfg["stride"] = cfg_.stride;
  cfg["epochs"] = cfg_.epochs;
  cfg["batch"] = cfg_.batch;
  cfg["lr"] = cfg_.lr;
  cfg["clip_norm"] = cfg_.clip_norm;
  cfg["holdout_fraction"] = cfg_.holdout_fraction;
  cfg["target_speed"] = cfg_.target_speed;
  c.meta()["config"] = cfg;
  c.PutParameters(const_cast<hppn::SequenceRegressor&>(net_).Parameters());
  c.PutNormalizer("baseline.in_norm", net_.in_norm);
  c.PutNormalizer("baseline.out_norm", net_.out_norm);
  return c;
}

BaselineModel BaselineModel::FromCheckpoint(const Checkpoint& ckpt) {
  if (ckpt.kind() != "baseline") Fail(ErrorCode::kIo, "checkpoint is not a baseline model");
  const Json& j = ckpt.meta().at("config");
  BaselineConfig cfg;
  cfg.hidden = j.at("hidden").get<std::vector<int>>();
  cfg.window = j.at("window").get<int>();
  cfg.stride = j.at("stride").get<int>();
  cfg.epochs = j.at("epochs").get<int>();
  cfg.batch = j.at("batch").get<int>();
  cfg.lr = j.at("lr").get<double>();
  cfg.clip_norm = j.at("clip_norm").get<double>();
  cfg.holdout_fraction = j.at("holdout_fraction").get<double>();
  cfg.target_speed = j.at("target_speed").get<double>();
  BaselineModel model(cfg);
  ckpt.LoadParameters(model.net_.Parameters());
  model.net_.in_norm = ckpt.GetNormalizer("baseline.in_norm");
  model.net_.out_norm = ckpt.GetNormalizer("baseline.out_norm");
  return model;
}

Vector BaselineInput(const RobotAction& previous, const env::Response& response,
                     const Pose2& target_movement) {
  Vector x(kBaselineInDim);
  x << previous.omega_left, previous.omega_right, previous.stop_degree, response,
      target_movement.x, target_movement.y, target_movement.theta;
  return x;
}

Matrix BaselineInputs(const env::Episode& episode) {
  const int t_count = episode.steps();
  Matrix x(kBaselineInDim, t_count);
  for (int t = 0; t < t_count; ++t) {
    const RobotAction prev = t > 0 ? episode.rows[t - 1].action : RobotAction{};
    const Pose2 move = t + 1 < t_count
                           ? Between(episode.rows[t].human, episode.rows[t + 1].human)
                           : Pose2();
    x.col(t) = BaselineInput(prev, episode.rows[t].response, move);
  }
  return x;
}

Matrix BaselineTargets(const env::Episode& episode) {
  Matrix y(kBaselineOutDim, episode.steps());
  for (int t = 0; t < episode.steps(); ++t) {
    const RobotAction& a = episode.rows[t].action;
    y.col(t) << a.omega_left, a.omega_right, a.stop_degree;
  }
  return y;
}

BaselineTrainResult TrainBaseline(const std::vector<env::Episode>& episodes,
                                  const BaselineConfig& cfg, uint64_t seed) {
  cfg.Validate();
  if (episodes.empty()) Fail(ErrorCode::kInvalidArgument, "baseline training: empty dataset");
  BaselineTrainResult result{BaselineModel(cfg), {}, {}, 0.0, 0.0};
  result.holdout = hppn::HoldoutIndices(static_cast<int>(episodes.size()),
                                        cfg.holdout_fraction,
                                        DeriveSeed(seed, "baseline_holdout"));
  std::vector<bool> held(episodes.size(), false);
  for (int i : result.holdout) held[i] = true;

  std::vector<Matrix> in, out;
  for (size_t i = 0; i < episodes.size(); ++i) {
    if (held[i]) continue;
    in.push_back(BaselineInputs(episodes[i]));
    out.push_back(BaselineTargets(episodes[i]));
  }
  if (in.empty()) Fail(ErrorCode::kInvalidArgument, "baseline training: no training episodes");

  hppn::SequenceRegressor& net = result.model.net();
  Rng init_rng = MakeRng(seed, "baseline_init");
  result.model.Initialize(init_rng);
  hppn::SequenceTrainConfig tc;
  tc.window = cfg.window;
  tc.stride = cfg.stride;
  tc.epochs = cfg.epochs;
  tc.batch = cfg.batch;
  tc.lr = cfg.lr;
  tc.clip_norm = cfg.clip_norm;
  Rng batch_rng = MakeRng(seed, "baseline_batches");
  result.loss = hppn::FitSequenceRegressor(net, in, out, tc, batch_rng);

  double sq = 0.0, sq_mean = 0.0;
  Eigen::Index n = 0;
  for (int i : result.holdout) {
    const Matrix x = BaselineInputs(episodes[i]);
    const Matrix y = BaselineTargets(episodes[i]);
    const auto steps = static_cast<int>(x.cols());
    const Matrix pred = net.out_norm.Denormalize(
        net.head().Apply(net.lstm().ForwardSequence(net.in_norm.Normalize(x), steps)));
    sq += (pred - y).squaredNorm();
    sq_mean += (y.colwise() - net.out_norm.mean).squaredNorm();
    n += y.size();
  }
  if (n > 0) {
    result.holdout_mse = sq / static_cast<double>(n);
    result.mean_predictor_mse = sq_mean / static_cast<double>(n);
  }
  return result;
}

BaselineController::BaselineController(const BaselineModel& model, const Path& goal,
                                       env::RobotParams robot)
    : model_(model),
      targets_(GoalToTargetMovements(goal, model.config().target_speed, robot.dt)),
      robot_(robot) {
  Reset();
}

void BaselineController::Reset() { state_ = model_.ZeroState(); }

RobotAction BaselineController::Act(const env::Observation& obs) {
  const int last = planned_steps() - 1;
  const Pose2& target = targets_[std::min(obs.t, last)];
  const Eigen::Vector3d raw =
      model_.Step(BaselineInput(obs.previous_action, obs.response, target), state_);
  RobotAction a = env::ClampAction(raw(0), raw(1), 0.0, robot_);
  if (obs.t >= last) a.stop_degree = 1.0;
  return a;
}

}  // namespace guidetrain::policy
