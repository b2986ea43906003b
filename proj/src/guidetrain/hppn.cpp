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

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>
#include <sstream>

namespace guidetrain::hppn {

namespace {

using geometry::Between;
using geometry::Compose;
using geometry::WrapAngle;

Json IntVector(const std::vector<int>& v) {
  Json a = Json::array();
  for (int x : v) a.push_back(x);
  return a;
}

double Median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

double Mean(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double PoseSquaredError(const Pose2& a, const Pose2& b) {
  const double dx = a.x - b.x;
  const double dy = a.y - b.y;
  const double dt = WrapAngle(a.theta - b.theta);
  return dx * dx + dy * dy + dt * dt;
}

}  // namespace

void HppnConfig::Validate() const {
  Require(!robot_hidden.empty() && !human_hidden.empty(),
          "HppnConfig: each part needs at least one LSTM layer");
  for (int h : robot_hidden) Require(h > 0, "HppnConfig: hidden sizes must be positive");
  for (int h : human_hidden) Require(h > 0, "HppnConfig: hidden sizes must be positive");
  Require(window >= 1 && stride >= 1, "HppnConfig: window and stride must be >= 1");
  Require(robot_epochs >= 0 && human_epochs >= 0, "HppnConfig: epochs must be >= 0");
  Require(lr > 0.0, "HppnConfig: lr must be positive");
  Require(robot_batch >= 1 && human_batch >= 1, "HppnConfig: batch sizes must be >= 1");
  Require(holdout_fraction >= 0.0 && holdout_fraction < 1.0,
          "HppnConfig: holdout_fraction must be in [0, 1)");
  Require(clip_norm >= 0.0, "HppnConfig: clip_norm must be >= 0");
}

int HppnConfig::HiddenSize() const {
  return std::accumulate(robot_hidden.begin(), robot_hidden.end(), 0) +
         std::accumulate(human_hidden.begin(), human_hidden.end(), 0);
}

// --- SequenceRegressor ------------------------------------------------------

SequenceRegressor::SequenceRegressor(const std::string& name, int in,
                                     std::vector<int> hidden, int out)
    : in_norm(nn::Normalizer::Identity(in)),
      out_norm(nn::Normalizer::Identity(out)),
      lstm_(name + ".lstm", in, hidden),
      head_(name + ".head", hidden.back(), out, nn::Activation::kLinear) {}

void SequenceRegressor::Initialize(Rng& rng) {
  lstm_.Initialize(rng);
  head_.Initialize(rng);
}

double SequenceRegressor::Loss(const Matrix& xs, const Matrix& ys, int steps) {
  return nn::MseLoss(head_.Apply(lstm_.ForwardSequence(xs, steps)), ys, nullptr);
}

double SequenceRegressor::LossAndGradient(const Matrix& xs, const Matrix& ys,
                                          int steps) {
  nn::ZeroGrads(Parameters());
  Matrix grad;
  const double loss =
      nn::MseLoss(head_.Forward(lstm_.ForwardSequence(xs, steps)), ys, &grad);
  lstm_.BackwardSequence(head_.Backward(grad));
  return loss;
}

nn::ParameterList SequenceRegressor::Parameters() {
  nn::ParameterList p = lstm_.Parameters();
  const auto h = head_.Parameters();
  p.insert(p.end(), h.begin(), h.end());
  return p;
}

std::vector<double> FitSequenceRegressor(SequenceRegressor& part,
                                         const std::vector<Matrix>& raw_inputs,
                                         const std::vector<Matrix>& raw_targets,
                                         const SequenceTrainConfig& cfg, Rng& rng) {
  Require(!raw_inputs.empty() && raw_inputs.size() == raw_targets.size(),
          "FitSequenceRegressor: inputs and targets must pair up");
  Require(cfg.window >= 1 && cfg.stride >= 1 && cfg.batch >= 1 && cfg.epochs >= 0,
          "FitSequenceRegressor: invalid training configuration");
  struct Window {
    size_t episode;
    Eigen::Index start;
  };
  std::vector<Window> windows;
  Eigen::Index total = 0;
  for (size_t e = 0; e < raw_inputs.size(); ++e) {
    Require(raw_inputs[e].cols() == raw_targets[e].cols(),
            "FitSequenceRegressor: input/target length mismatch");
    total += raw_inputs[e].cols();
    for (Eigen::Index s = 0; s + cfg.window <= raw_inputs[e].cols(); s += cfg.stride) {
      windows.push_back({e, s});
    }
  }
  if (windows.empty()) {
    Fail(ErrorCode::kInvalidArgument, "training: no episode is longer than the window");
  }

  const Eigen::Index in_dim = raw_inputs.front().rows();
  const Eigen::Index out_dim = raw_targets.front().rows();
  Matrix all_in(in_dim, total), all_out(out_dim, total);
  Eigen::Index col = 0;
  for (size_t e = 0; e < raw_inputs.size(); ++e) {
    all_in.middleCols(col, raw_inputs[e].cols()) = raw_inputs[e];
    all_out.middleCols(col, raw_targets[e].cols()) = raw_targets[e];
    col += raw_inputs[e].cols();
  }
  part.in_norm = nn::Normalizer::Fit(all_in);
  part.out_norm = nn::Normalizer::Fit(all_out);
  std::vector<Matrix> inputs, targets;
  for (size_t e = 0; e < raw_inputs.size(); ++e) {
    inputs.push_back(part.in_norm.Normalize(raw_inputs[e]));
    targets.push_back(part.out_norm.Normalize(raw_targets[e]));
  }

  nn::AdamConfig adam_cfg;
  adam_cfg.lr = cfg.lr;
  nn::Adam adam(part.Parameters(), adam_cfg);
  std::vector<size_t> order(windows.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> curve;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double sum = 0.0;
    for (size_t b0 = 0; b0 < order.size(); b0 += cfg.batch) {
      const auto bsz = static_cast<Eigen::Index>(
          std::min<size_t>(cfg.batch, order.size() - b0));
      Matrix xs(in_dim, cfg.window * bsz);
      Matrix ys(out_dim, cfg.window * bsz);
      for (Eigen::Index b = 0; b < bsz; ++b) {
        const Window& w = windows[order[b0 + b]];
        for (Eigen::Index t = 0; t < cfg.window; ++t) {
          xs.col(t * bsz + b) = inputs[w.episode].col(w.start + t);
          ys.col(t * bsz + b) = targets[w.episode].col(w.start + t);
        }
      }
      const double loss = part.LossAndGradient(xs, ys, cfg.window);
      if (!std::isfinite(loss)) {
        Fail(ErrorCode::kNumeric,
             "training: non-finite loss at epoch " + std::to_string(epoch + 1));
      }
      if (cfg.clip_norm > 0.0) nn::ClipGradNorm(part.Parameters(), cfg.clip_norm);
      adam.Step();
      sum += loss * static_cast<double>(bsz);
    }
    curve.push_back(sum / static_cast<double>(order.size()));
  }
  return curve;
}

// --- HppnModel ---------------------------------------------------------------

HppnModel::HppnModel(const HppnConfig& cfg)
    : cfg_(cfg),
      robot_("hppn.robot", kActionDim, cfg.robot_hidden, kRobotOutDim),
      human_("hppn.human", kHumanInDim, cfg.human_hidden, kHumanOutDim) {
  cfg_.Validate();
}

void HppnModel::Initialize(Rng& rng) {
  robot_.Initialize(rng);
  human_.Initialize(rng);
}

HppnState HppnModel::InitialState(const std::vector<SimStart>& starts) const {
  const int b = static_cast<int>(starts.size());
  HppnState s;
  s.robot = robot_.lstm().ZeroState(b);
  s.human = human_.lstm().ZeroState(b);
  s.response.resize(env::kResponseDim, b);
  for (int i = 0; i < b; ++i) {
    s.robot_pose.push_back(starts[i].robot);
    s.relative.push_back(starts[i].relative);
    s.response.col(i) = starts[i].response;
  }
  s.hidden = Matrix::Zero(HiddenSize(), b);
  return s;
}

HppnState HppnModel::InitialState(const SimStart& start) const {
  return InitialState(std::vector<SimStart>{start});
}

void HppnModel::Step(HppnState& state, const Matrix& actions) const {
  const int b = state.batch();
  Require(b > 0 && state.robot.layers.size() == cfg_.robot_hidden.size(),
          "HPPN: state is not initialized");
  Require(actions.rows() == kActionDim && actions.cols() == b,
          "HPPN: action batch shape mismatch");

  const Matrix& hr = robot_.lstm().Step(robot_.in_norm.Normalize(actions), state.robot);
  const Matrix delta = robot_.out_norm.Denormalize(robot_.head().Apply(hr));

  Matrix xh(kHumanInDim, b);
  xh.topRows(kActionDim) = actions;
  xh.bottomRows(env::kResponseDim) = state.response;
  const Matrix& hh = human_.lstm().Step(human_.in_norm.Normalize(xh), state.human);
  const Matrix out = human_.out_norm.Denormalize(human_.head().Apply(hh));

  for (int i = 0; i < b; ++i) {
    state.robot_pose[i] =
        Compose(state.robot_pose[i], Pose2(delta(0, i), delta(1, i), delta(2, i)));
    state.relative[i] = Pose2(out(0, i), out(1, i), out(2, i));
  }
  state.response += out.bottomRows(env::kResponseDim);

  Eigen::Index row = 0;
  for (const auto* stack : {&state.robot, &state.human}) {
    for (const nn::LstmLayerState& layer : stack->layers) {
      state.hidden.middleRows(row, layer.h.rows()) = layer.h;
      row += layer.h.rows();
    }
  }
}

HppnModel::Prediction HppnModel::PredictStep(HppnState& state,
                                             const RobotAction& action) const {
  Require(state.batch() == 1, "HPPN: PredictStep needs a single-episode state");
  const Pose2 before = state.robot_pose[0];
  Matrix a(kActionDim, 1);
  a << action.omega_left, action.omega_right;
  Step(state, a);
  Prediction p;
  p.robot_pose = state.robot_pose[0];
  p.robot_delta = Between(before, p.robot_pose);
  p.relative = state.relative[0];
  p.human = HumanPose(state, 0);
  p.response = state.response.col(0);
  p.hidden = state.hidden.col(0);
  return p;
}

void HppnModel::SetNominalStart(const Pose2& relative, const Response& response) {
  nominal_relative_ = relative;
  nominal_response_ = response;
}

SimStart HppnModel::NominalStart(const Pose2& human) const {
  return {Compose(human, geometry::Inverse(nominal_relative_)), nominal_relative_,
          nominal_response_};
}

Pose2 HppnModel::HumanPose(const HppnState& state, int column) {
  return Compose(state.robot_pose[column], state.relative[column]);
}

Checkpoint HppnModel::ToCheckpoint() const {
  Checkpoint c("hppn");
  Json cfg;
  cfg["robot_hidden"] = IntVector(cfg_.robot_hidden);
  cfg["human_hidden"] = IntVector(cfg_.human_hidden);
  cfg["window"] = cfg_.window;
  cfg["stride"] = cfg_.stride;
  cfg["robot_epochs"] = cfg_.robot_epochs;
  cfg["human_epochs"] = cfg_.human_epochs;
  cfg["lr"] = cfg_.lr;
  cfg["robot_batch"] = cfg_.robot_batch;
  cfg["human_batch"] = cfg_.human_batch;
  cfg["holdout_fraction"] = cfg_.holdout_fraction;
  cfg["clip_norm"] = cfg_.clip_norm;
  cfg["require_beat_persistence"] = cfg_.require_beat_persistence;
  c.meta()["config"] = cfg;
  c.meta()["hidden_size"] = HiddenSize();
  auto* self = const_cast<HppnModel*>(this);
  c.PutParameters(self->robot_.Parameters());
  c.PutParameters(self->human_.Parameters());
  c.Put("hppn.nominal_relative", PoseVector(nominal_relative_));
  c.Put("hppn.nominal_response", nominal_response_);
  c.PutNormalizer("hppn.robot.in_norm", robot_.in_norm);
  c.PutNormalizer("hppn.robot.out_norm", robot_.out_norm);
  c.PutNormalizer("hppn.human.in_norm", human_.in_norm);
  c.PutNormalizer("hppn.human.out_norm", human_.out_norm);
  return c;
}

HppnModel HppnModel::FromCheckpoint(const Checkpoint& ckpt) {
  if (ckpt.kind() != "hppn") Fail(ErrorCode::kIo, "checkpoint is not an HPPN model");
  const Json& j = ckpt.meta().at("config");
  HppnConfig cfg;
  cfg.robot_hidden = j.at("robot_hidden").get<std::vector<int>>();
  cfg.human_hidden = j.at("human_hidden").get<std::vector<int>>();
  cfg.window = j.at("window").get<int>();
  cfg.stride = j.at("stride").get<int>();
  cfg.robot_epochs = j.at("robot_epochs").get<int>();
  cfg.human_epochs = j.at("human_epochs").get<int>();
  cfg.lr = j.at("lr").get<double>();
  cfg.robot_batch = j.at("robot_batch").get<int>();
  cfg.human_batch = j.at("human_batch").get<int>();
  cfg.holdout_fraction = j.at("holdout_fraction").get<double>();
  cfg.clip_norm = j.at("clip_norm").get<double>();
  cfg.require_beat_persistence = j.at("require_beat_persistence").get<bool>();
  HppnModel model(cfg);
  ckpt.LoadParameters(model.robot_.Parameters());
  ckpt.LoadParameters(model.human_.Parameters());
  const Matrix& rel = ckpt.Get("hppn.nominal_relative");
  const Matrix& resp = ckpt.Get("hppn.nominal_response");
  if (rel.size() != 3 || resp.size() != env::kResponseDim) {
    Fail(ErrorCode::kIo, "checkpoint: bad HPPN nominal start");
  }
  model.nominal_relative_ = Pose2(rel(0), rel(1), rel(2));
  model.nominal_response_ = resp.col(0);
  model.robot_.in_norm = ckpt.GetNormalizer("hppn.robot.in_norm");
  model.robot_.out_norm = ckpt.GetNormalizer("hppn.robot.out_norm");
  model.human_.in_norm = ckpt.GetNormalizer("hppn.human.in_norm");
  model.human_.out_norm = ckpt.GetNormalizer("hppn.human.out_norm");
  return model;
}

// --- Data ----------------------------------------------------------------------

Vector PoseVector(const Pose2& p) { return Eigen::Vector3d(p.x, p.y, p.theta); }

EpisodeArrays ToArrays(const env::Episode& episode) {
  EpisodeArrays a;
  const int t_count = episode.steps();
  a.actions.resize(kActionDim, t_count);
  a.responses.resize(env::kResponseDim, t_count);
  for (int t = 0; t < t_count; ++t) {
    const env::EpisodeRow& r = episode.rows[t];
    a.actions(0, t) = r.action.omega_left;
    a.actions(1, t) = r.action.omega_right;
    a.responses.col(t) = r.response;
    a.robot.push_back(r.robot);
    a.human.push_back(r.human);
    a.relative.push_back(Between(r.robot, r.human));
  }
  return a;
}

Matrix RobotInputs(const EpisodeArrays& ep, int begin, int len) {
  return ep.actions.middleCols(begin, len);
}

Matrix RobotTargets(const EpisodeArrays& ep, int begin, int len) {
  Matrix y(kRobotOutDim, len);
  for (int k = 0; k < len; ++k) {
    y.col(k) = PoseVector(Between(ep.robot[begin + k], ep.robot[begin + k + 1]));
  }
  return y;
}

Matrix HumanInputs(const EpisodeArrays& ep, int begin, int len) {
  Matrix x(kHumanInDim, len);
  x.topRows(kActionDim) = ep.actions.middleCols(begin, len);
  x.bottomRows(env::kResponseDim) = ep.responses.middleCols(begin, len);
  return x;
}

Matrix HumanTargets(const EpisodeArrays& ep, int begin, int len) {
  Matrix y(kHumanOutDim, len);
  for (int k = 0; k < len; ++k) {
    const int t = begin + k;
    y.block(0, k, 3, 1) = PoseVector(ep.relative[t + 1]);
    y.block(3, k, env::kResponseDim, 1) = ep.responses.col(t + 1) - ep.responses.col(t);
  }
  return y;
}

std::vector<int> HoldoutIndices(int episodes, double fraction, uint64_t seed) {
  std::vector<int> order(episodes);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  const int count = static_cast<int>(std::lround(fraction * episodes));
  std::vector<int> holdout(order.end() - count, order.end());
  std::sort(holdout.begin(), holdout.end());
  return holdout;
}

// --- Held-out evaluation ----------------------------------------------------------

bool HeldOutReport::BeatsPersistence() const {
  return pairs > 0 && relative_mse < relative_mse_persistence &&
         response_mse < response_mse_persistence;
}

namespace {

constexpr int kMaxHorizon = 20;
constexpr int kHorizonStartSpacing = 10;

struct HorizonSamples {
  std::vector<double> human, robot, relative;
};

void ClosedLoop(const HppnModel& model, HppnState state, const EpisodeArrays& ep,
                int s, std::vector<HorizonSamples>& out) {
  state.robot_pose[0] = ep.robot[s];
  state.relative[0] = ep.relative[s];
  state.response.col(0) = ep.responses.col(s);
  for (int k = 1; k <= kMaxHorizon; ++k) {
    model.Step(state, ep.actions.col(s + k - 1));
    for (size_t h = 0; h < std::size(kReportHorizons); ++h) {
      if (kReportHorizons[h] != k) continue;
      const Pose2 human = HppnModel::HumanPose(state, 0);
      out[h].human.push_back((human.translation() - ep.human[s + k].translation()).norm());
      out[h].robot.push_back(
          (state.robot_pose[0].translation() - ep.robot[s + k].translation()).norm());
      out[h].relative.push_back(
          (state.relative[0].translation() - ep.relative[s + k].translation()).norm());
    }
  }
}

std::vector<HorizonError> Summarize(const std::vector<HorizonSamples>& samples) {
  std::vector<HorizonError> out;
  for (size_t h = 0; h < samples.size(); ++h) {
    HorizonError e;
    e.horizon = kReportHorizons[h];
    e.count = static_cast<int>(samples[h].human.size());
    e.human_mean = Mean(samples[h].human);
    e.human_median = Median(samples[h].human);
    e.robot_mean = Mean(samples[h].robot);
    e.relative_mean = Mean(samples[h].relative);
    out.push_back(e);
  }
  return out;
}

}  // namespace

HeldOutReport EvaluateHeldOut(const HppnModel& model,
                              const std::vector<EpisodeArrays>& episodes) {
  HeldOutReport report;
  report.episodes = static_cast<int>(episodes.size());
  const Vector resp_scale =
      model.human_part().in_norm.stddev.tail(env::kResponseDim);
  std::vector<HorizonSamples> from_start(std::size(kReportHorizons));
  std::vector<HorizonSamples> from_any(std::size(kReportHorizons));
  double rel = 0.0, rel_p = 0.0, resp = 0.0, resp_p = 0.0, rob = 0.0, rob_p = 0.0;

  for (const EpisodeArrays& ep : episodes) {
    const int pairs = ep.pairs();
    if (pairs <= 0) continue;
    SimStart start{ep.robot[0], ep.relative[0], ep.responses.col(0)};
    HppnState state = model.InitialState(start);
    for (int t = 0; t < pairs; ++t) {
      if (t % kHorizonStartSpacing == 0 && t + kMaxHorizon <= pairs) {
        ClosedLoop(model, state, ep, t, from_any);
        if (t == 0) ClosedLoop(model, state, ep, t, from_start);
      }
      // Teacher-forced step from the true state.
      state.robot_pose[0] = ep.robot[t];
      state.response.col(0) = ep.responses.col(t);
      const Vector r_before = ep.responses.col(t);
      model.Step(state, ep.actions.col(t));

      rel += PoseSquaredError(state.relative[0], ep.relative[t + 1]);
      rel_p += PoseSquaredError(ep.relative[t], ep.relative[t + 1]);
      const Vector r_next = ep.responses.col(t + 1);
      resp += ((state.response.col(0) - r_next).array() / resp_scale.array())
                  .square()
                  .sum();
      resp_p += ((r_before - r_next).array() / resp_scale.array()).square().sum();
      rob += PoseSquaredError(Between(ep.robot[t], state.robot_pose[0]),
                              Between(ep.robot[t], ep.robot[t + 1]));
      rob_p += PoseSquaredError(Pose2(), Between(ep.robot[t], ep.robot[t + 1]));
      ++report.pairs;
    }
  }
  if (report.pairs > 0) {
    const double n = report.pairs;
    report.relative_mse = rel / (3.0 * n);
    report.relative_mse_persistence = rel_p / (3.0 * n);
    report.response_mse = resp / (env::kResponseDim * n);
    report.response_mse_persistence = resp_p / (env::kResponseDim * n);
    report.robot_mse = rob / (3.0 * n);
    report.robot_mse_persistence = rob_p / (3.0 * n);
  }
  report.from_start = Summarize(from_start);
  report.from_any = Summarize(from_any);
  report.endpoint20_median = report.from_start.back().human_median;
  return report;
}

void WriteHeldOutReport(const std::string& dir, const HeldOutReport& r) {
  std::ostringstream ss;
  ss << "metric,value\n";
  ss << "episodes," << r.episodes << '\n';
  ss << "pairs," << r.pairs << '\n';
  auto row = [&](const char* name, double v) { ss << name << ',' << FormatG9(v) << '\n'; };
  row("relative_mse", r.relative_mse);
  row("relative_mse_persistence", r.relative_mse_persistence);
  row("relative_mse_ratio", r.relative_mse_persistence > 0.0
                                ? r.relative_mse / r.relative_mse_persistence
                                : 0.0);
  row("response_mse", r.response_mse);
  row("response_mse_persistence", r.response_mse_persistence);
  row("robot_mse", r.robot_mse);
  row("robot_mse_persistence", r.robot_mse_persistence);
  row("endpoint20_median", r.endpoint20_median);
  ss << "beats_persistence," << (r.BeatsPersistence() ? 1 : 0) << '\n';
  WriteFile((std::filesystem::path(dir) / "heldout_report.csv").string(), ss.str());

  std::ostringstream hs;
  hs << "start,horizon,count,human_mean,human_median,robot_mean,relative_mean\n";
  for (const auto* set : {&r.from_start, &r.from_any}) {
    const char* label = set == &r.from_start ? "episode_start" : "any";
    for (const HorizonError& e : *set) {
      hs << label << ',' << e.horizon << ',' << e.count << ',' << FormatG9(e.human_mean)
         << ',' << FormatG9(e.human_median) << ',' << FormatG9(e.robot_mean) << ','
         << FormatG9(e.relative_mean) << '\n';
    }
  }
  WriteFile((std::filesystem::path(dir) / "horizon_errors.csv").string(), hs.str());
}

// --- Training ------------------------------------------------------------------------

TrainResult TrainHppn(const std::vector<env::Episode>& episodes,
                      const HppnConfig& cfg, uint64_t seed) {
  cfg.Validate();
  if (episodes.empty()) Fail(ErrorCode::kInvalidArgument, "HPPN training: empty dataset");
  std::vector<EpisodeArrays> arrays;
  for (const env::Episode& e : episodes) arrays.push_back(ToArrays(e));

  TrainResult result{HppnModel(cfg), {}, {}, {}};
  result.holdout = HoldoutIndices(static_cast<int>(episodes.size()), cfg.holdout_fraction,
                                  DeriveSeed(seed, "hppn_holdout"));
  std::vector<bool> held(episodes.size(), false);
  for (int i : result.holdout) held[i] = true;

  std::vector<const EpisodeArrays*> train;
  std::vector<EpisodeArrays> test;
  for (size_t i = 0; i < arrays.size(); ++i) {
    if (held[i]) {
      test.push_back(arrays[i]);
    } else {
      train.push_back(&arrays[i]);
    }
  }
  if (train.empty()) Fail(ErrorCode::kInvalidArgument, "HPPN training: no training episodes");

  HppnModel& model = result.model;
  Rng init_rng = MakeRng(seed, "hppn_init");
  model.Initialize(init_rng);

  Eigen::Vector3d rel0 = Eigen::Vector3d::Zero();
  Vector resp0 = Vector::Zero(env::kResponseDim);
  for (const EpisodeArrays* ep : train) {
    rel0 += PoseVector(ep->relative.front());
    resp0 += ep->responses.col(0);
  }
  rel0 /= static_cast<double>(train.size());
  resp0 /= static_cast<double>(train.size());
  model.SetNominalStart(Pose2(rel0(0), rel0(1), rel0(2)), resp0);

  struct PartData {
    SequenceRegressor* part;
    Matrix (*inputs)(const EpisodeArrays&, int, int);
    Matrix (*targets)(const EpisodeArrays&, int, int);
    int epochs, batch;
    const char* stream;
    std::vector<double>* curve;
  };
  const PartData parts[] = {
      {&model.robot_part(), RobotInputs, RobotTargets, cfg.robot_epochs, cfg.robot_batch,
       "hppn_robot_batches", &result.log.robot_loss},
      {&model.human_part(), HumanInputs, HumanTargets, cfg.human_epochs, cfg.human_batch,
       "hppn_human_batches", &result.log.human_loss},
  };
  for (const PartData& pd : parts) {
    std::vector<Matrix> raw_in, raw_out;
    for (const EpisodeArrays* ep : train) {
      raw_in.push_back(pd.inputs(*ep, 0, ep->pairs()));
      raw_out.push_back(pd.targets(*ep, 0, ep->pairs()));
    }
    SequenceTrainConfig tc;
    tc.window = cfg.window;
    tc.stride = cfg.stride;
    tc.epochs = pd.epochs;
    tc.batch = pd.batch;
    tc.lr = cfg.lr;
    tc.clip_norm = cfg.clip_norm;
    Rng batch_rng = MakeRng(seed, pd.stream);
    *pd.curve = FitSequenceRegressor(*pd.part, raw_in, raw_out, tc, batch_rng);
  }

  result.report = EvaluateHeldOut(model, test);
  return result;
}

// --- Simulation ----------------------------------------------------------------------

std::vector<geometry::Point2> VirtualEpisode::HumanPath() const {
  std::vector<geometry::Point2> path;
  path.reserve(human.size());
  for (const Pose2& p : human) path.push_back(p.translation());
  return path;
}

VirtualEpisode Simulate(const HppnModel& model, SimController& controller,
                        const SimStart& start, int max_steps) {
  Require(max_steps >= 1, "Simulate: max_steps must be >= 1");
  VirtualEpisode ep;
  HppnState state = model.InitialState(start);
  Vector hidden = Vector::Zero(model.HiddenSize());
  controller.Reset();
  for (int t = 0; t < max_steps; ++t) {
    const Pose2 robot = state.robot_pose[0];
    const Pose2 human = HppnModel::HumanPose(state, 0);
    const RobotAction action = controller.Act(t, hidden, robot, human);
    ep.robot.push_back(robot);
    ep.human.push_back(human);
    ep.actions.push_back(action);
    if (action.stops()) return ep;
    const auto pred = model.PredictStep(state, action);
    if (!pred.hidden.allFinite() || !pred.response.allFinite() ||
        !std::isfinite(pred.human.x) || !std::isfinite(pred.human.y)) {
      ep.failed = true;
      return ep;
    }
    hidden = pred.hidden;
  }
  ep.timed_out = true;
  return ep;
}

}  // namespace guidetrain::hppn
