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

#include "guidetrain/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

namespace guidetrain::pipeline {

namespace fs = std::filesystem;
using geometry::Path;
using geometry::Point2;
using geometry::Pose2;
using metrics::RewardKind;

namespace {

// Each stage owns its output directory and recreates it from scratch so a
// rerun never leaves stale files behind.
std::string FreshDir(const RunContext& ctx, const std::string& name) {
  const fs::path dir = fs::path(ctx.out) / name;
  std::error_code ec;
  fs::remove_all(dir, ec);
  fs::create_directories(dir, ec);
  if (ec) Fail(ErrorCode::kIo, "cannot create " + dir.string() + ": " + ec.message());
  return dir.string();
}

std::string Artifact(const RunContext& ctx, const std::string& relative) {
  const std::string path = ctx.Path(relative);
  if (!fs::exists(path)) Fail(ErrorCode::kMissingArtifact, "missing artifact: " + path);
  return path;
}

std::string Join(const std::string& dir, const std::string& name) {
  return (fs::path(dir) / name).string();
}

metrics::RewardConfig RewardFor(const PipelineConfig& c, RewardKind kind) {
  metrics::RewardConfig r = c.reward;
  r.kind = kind;
  r.dt = c.world.robot.dt;
  r.max_timesteps = c.evaluation.max_steps;
  return r;
}

VaeEncoder LoadEncoder(const RunContext& ctx) {
  return VaeEncoder(VaeFromCheckpoint(Checkpoint::Load(Artifact(ctx, "vae/vae.ckpt"), "vae")));
}

env::Dataset LoadLatentDataset(const RunContext& ctx) {
  Artifact(ctx, "dataset/manifest.csv");
  const VaeEncoder encoder = LoadEncoder(ctx);
  env::Dataset ds = env::LoadDataset(ctx.Path("dataset"));
  AttachLatents(ds.episodes, encoder, ctx.config.world.depth, ctx.config.jobs);
  return ds;
}

void WriteLossCsv(const std::string& path, const std::string& header,
                  const std::vector<std::vector<double>>& columns) {
  std::ostringstream out;
  out << header << '\n';
  const size_t n = columns.empty() ? 0 : columns.front().size();
  for (size_t i = 0; i < n; ++i) {
    out << i + 1;
    for (const auto& c : columns) out << ',' << FormatG9(c[i]);
    out << '\n';
  }
  WriteFile(path, out.str());
}

double Quantile(std::vector<double> v, double q) {
  if (v.empty()) return std::nan("");
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const size_t lo = static_cast<size_t>(std::floor(pos));
  const size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

// Intensity-weighted centroid (u, v) of the pixels above half the peak.
Eigen::Vector2d SilhouetteCentroid(const Eigen::VectorXd& image, const env::DepthConfig& d) {
  const double peak = image.maxCoeff();
  double w = 0.0, u = 0.0, v = 0.0;
  for (int r = 0; r < d.height; ++r) {
    for (int c = 0; c < d.width; ++c) {
      const double p = image(r * d.width + c);
      if (p <= 0.5 * peak) continue;
      w += p;
      u += p * c;
      v += p * r;
    }
  }
  if (w <= 0.0) return {std::nan(""), std::nan("")};
  return {u / w, v / w};
}

}  // namespace

// --- Context ---------------------------------------------------------------------------

std::string RunContext::Path(const std::string& relative) const {
  return (fs::path(out) / relative).string();
}

void RunContext::Log(const std::string& message) const {
  if (log) log(message);
}

std::string PolicyDirName(RewardKind kind) {
  return kind == RewardKind::kGOnly ? "policy_g_only" : "policy_g_plus_h";
}

env::UserProfile TrainingUser(const PipelineConfig& config, int id) {
  Require(id >= 0 && id < config.dataset.train_users, "TrainingUser: id out of range");
  return env::SampleProfile(config.dataset.profiles, id,
                            DeriveSeed(config.seed, "user", static_cast<uint64_t>(id)));
}

env::UserProfile EvaluationUser(const PipelineConfig& config, int index) {
  Require(index >= 0 && index < config.evaluation.users, "EvaluationUser: index out of range");
  const int id = config.evaluation.first_user_id + index;
  return env::SampleProfile(config.dataset.profiles, id,
                            DeriveSeed(config.seed, "user", static_cast<uint64_t>(id)));
}

// --- VAE plumbing ----------------------------------------------------------------------

Eigen::VectorXd VaeEncoder::Encode(const Eigen::VectorXd& image) const {
  return vae_.EncodeMean(image).col(0);
}

Checkpoint VaeToCheckpoint(nn::Vae& vae) {
  Checkpoint ckpt("vae");
  const nn::VaeConfig& c = vae.config();
  ckpt.meta() = {{"input_dim", c.input_dim},
                 {"hidden", c.hidden},
                 {"latent", c.latent},
                 {"kl_weight", c.kl_weight}};
  ckpt.PutParameters(vae.Parameters());
  return ckpt;
}

nn::Vae VaeFromCheckpoint(const Checkpoint& ckpt) {
  if (ckpt.kind() != "vae") Fail(ErrorCode::kIo, "checkpoint kind is not vae");
  nn::VaeConfig c;
  try {
    c.input_dim = ckpt.meta().at("input_dim").get<int>();
    c.hidden = ckpt.meta().at("hidden").get<int>();
    c.latent = ckpt.meta().at("latent").get<int>();
    c.kl_weight = ckpt.meta().at("kl_weight").get<double>();
  } catch (const Json::exception& e) {
    Fail(ErrorCode::kIo, std::string("vae checkpoint meta: ") + e.what());
  }
  if (c.latent != nn::Vae::kLatentDim) Fail(ErrorCode::kIo, "vae checkpoint: latent must be 16");
  nn::Vae vae(c);
  ckpt.LoadParameters(vae.Parameters());
  return vae;
}

void AttachLatents(std::vector<env::Episode>& episodes, const VaeEncoder& encoder,
                   const env::DepthConfig& depth, int jobs) {
  Require(encoder.vae().config().input_dim == depth.pixels(),
          "AttachLatents: VAE input size does not match the depth camera");
  ParallelFor(episodes.size(), jobs, [&](size_t i) {
    env::Episode& ep = episodes[i];
    for (int t = 0; t < ep.steps(); ++t) {
      ep.rows[t].response.tail<env::kLatentDim>() =
          encoder.Encode(env::RenderEpisodeFrame(ep, t, depth));
    }
    ep.has_latent = true;
  });
}

// --- Episode measurements --------------------------------------------------------------

EpisodeMetrics MeasureEpisode(const env::Episode& episode, const Path& goal,
                              const metrics::RewardConfig& reward) {
  metrics::EpisodeOutcome outcome;
  outcome.human_path = episode.HumanPath();
  outcome.steps = episode.steps();
  outcome.timed_out = episode.timed_out();
  const metrics::RewardTerms terms = metrics::CumulativeReward(outcome, goal, reward);
  EpisodeMetrics m;
  m.steps = episode.steps();
  m.completion_time = episode.steps() * reward.dt;
  m.frechet = terms.frechet;
  m.sal = terms.sal;
  m.timed_out = episode.timed_out();
  return m;
}

std::vector<double> FinalSpeeds(const std::vector<Point2>& positions, double dt, int window) {
  Require(dt > 0.0 && window >= 1, "FinalSpeeds: dt and window must be positive");
  const std::vector<double> v = metrics::SpeedProfile(positions, dt);
  const size_t keep = std::min(v.size(), static_cast<size_t>(window));
  return std::vector<double>(v.end() - static_cast<std::ptrdiff_t>(keep), v.end());
}

int DecelerationOnset(const std::vector<double>& profile) {
  const int n = static_cast<int>(profile.size());
  if (n < 2) return -1;
  // start: earliest k with profile[j] <= profile[i] + slack for all k <= i < j.
  int start = n - 1;
  double later_max = profile[n - 1];
  for (int k = n - 2; k >= 0; --k) {
    if (later_max > profile[k] + kDecelerationSlack) break;
    later_max = std::max(later_max, profile[k]);
    start = k;
  }
  // Skip the plateau: the onset is the last sample within the slack of the
  // start level.
  for (int j = start + 1; j < n; ++j) {
    if (profile[start] - profile[j] > kDecelerationSlack) {
      const int onset = j - 1;
      return profile[onset] - profile[n - 1] >= kDecelerationMinDrop ? onset : -1;
    }
  }
  return -1;
}

// --- Stages ----------------------------------------------------------------------------

void RunDatagen(const RunContext& ctx) {
  const PipelineConfig& c = ctx.config;
  const std::string dir = FreshDir(ctx, "dataset");
  fs::create_directories(fs::path(dir) / "episodes");
  std::vector<env::UserProfile> profiles;
  for (int id = 0; id < c.dataset.train_users; ++id) profiles.push_back(TrainingUser(c, id));
  env::WriteProfiles(Join(dir, "profiles.csv"), profiles);

  const size_t n = static_cast<size_t>(c.dataset.episodes);
  std::vector<env::ManifestEntry> manifest(n);
  ctx.Log("datagen: " + std::to_string(n) + " episodes over " +
          std::to_string(profiles.size()) + " users");
  ParallelFor(n, c.jobs, [&](size_t i) {
    const env::UserProfile& profile = profiles[i % profiles.size()];
    Rng script_rng = MakeRng(c.seed, "datagen_script", i);
    env::ScriptedController controller(
        env::RandomActionScript(script_rng, c.world.robot, c.dataset.script));
    env::RolloutOptions opt;
    opt.max_steps = c.dataset.max_steps;
    opt.robot_start = Pose2();
    opt.human_start = geometry::Compose(opt.robot_start, profile.PreferredRelative());
    opt.seed = DeriveSeed(c.seed, "datagen_episode", i);
    const env::Episode ep = env::Rollout(controller, profile, c.world, opt, nullptr);
    char name[32];
    std::snprintf(name, sizeof(name), "episodes/ep_%05zu.csv", i);
    env::SaveEpisode(Join(dir, name), ep);
    manifest[i] = {name, profile.id, opt.seed, ep.steps()};
  });
  env::WriteManifest(Join(dir, "manifest.csv"), manifest);
}

void RunTrainVae(const RunContext& ctx) {
  const PipelineConfig& c = ctx.config;
  Artifact(ctx, "dataset/manifest.csv");
  const env::Dataset ds = env::LoadDataset(ctx.Path("dataset"));
  const std::string dir = FreshDir(ctx, "vae");
  const env::DepthConfig& depth = c.world.depth;

  std::vector<std::vector<Eigen::VectorXd>> per_episode(ds.episodes.size());
  ParallelFor(ds.episodes.size(), c.jobs, [&](size_t i) {
    const env::Episode& ep = ds.episodes[i];
    for (int t = 0; t < ep.steps(); t += c.vae.frame_stride) {
      per_episode[i].push_back(env::RenderEpisodeFrame(ep, t, depth));
    }
  });
  size_t frames = 0;
  for (const auto& f : per_episode) frames += f.size();
  nn::Matrix images(depth.pixels(), static_cast<Eigen::Index>(frames));
  Eigen::Index col = 0;
  for (const auto& f : per_episode) {
    for (const Eigen::VectorXd& img : f) images.col(col++) = img;
  }
  ctx.Log("train-vae: " + std::to_string(frames) + " frames");

  nn::VaeConfig vc;
  vc.input_dim = depth.pixels();
  vc.hidden = c.vae.hidden;
  vc.latent = nn::Vae::kLatentDim;
  vc.kl_weight = c.vae.kl_weight;
  nn::Vae vae(vc);
  Rng init = MakeRng(c.seed, "vae_init");
  vae.Initialize(init);
  const nn::ParameterList params = vae.Parameters();
  nn::Adam adam(params, {c.vae.lr});
  Rng batches = MakeRng(c.seed, "vae_batches");

  auto full_loss = [&]() {
    Rng noise = MakeRng(c.seed, "vae_eval");
    return vae.EvaluateWithRng(images, noise);
  };
  std::vector<double> total, recon, kl;
  const nn::Vae::Loss initial = full_loss();
  total.push_back(initial.total);
  recon.push_back(initial.reconstruction);
  kl.push_back(initial.kl);

  std::vector<Eigen::Index> order(frames);
  std::iota(order.begin(), order.end(), 0);
  const Eigen::Index batch = c.vae.batch;
  for (int epoch = 0; epoch < c.vae.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), batches);
    for (Eigen::Index b = 0; b < static_cast<Eigen::Index>(frames); b += batch) {
      const Eigen::Index m = std::min<Eigen::Index>(batch, frames - b);
      nn::Matrix x(images.rows(), m);
      for (Eigen::Index j = 0; j < m; ++j) x.col(j) = images.col(order[b + j]);
      nn::ZeroGrads(params);
      const nn::Vae::Loss loss = vae.ForwardBackward(x, nn::StandardNormal(vc.latent, m, batches));
      if (!std::isfinite(loss.total)) Fail(ErrorCode::kNumeric, "train-vae: non-finite loss");
      adam.Step();
    }
    const nn::Vae::Loss l = full_loss();
    total.push_back(l.total);
    recon.push_back(l.reconstruction);
    kl.push_back(l.kl);
    if ((epoch + 1) % 10 == 0 || epoch + 1 == c.vae.epochs) {
      ctx.Log("train-vae: epoch " + std::to_string(epoch + 1) + " loss " + FormatG9(l.total));
    }
  }

  // Epoch 0 is the untrained model.
  {
    std::ostringstream out;
    out << "epoch,total,reconstruction,kl\n";
    for (size_t i = 0; i < total.size(); ++i) {
      out << i << ',' << FormatG9(total[i]) << ',' << FormatG9(recon[i]) << ','
          << FormatG9(kl[i]) << '\n';
    }
    WriteFile(Join(dir, "loss.csv"), out.str());
  }

  // Human straight behind the camera at the nominal distance, noise free.
  env::DepthConfig clean = depth;
  clean.noise_sigma = 0.0;
  Rng unused(0);
  const Eigen::VectorXd centered =
      env::RenderDepth(Pose2(), Pose2(-depth.nominal_distance, 0.0, 0.0), clean, unused);
  const nn::Matrix z = vae.EncodeMean(centered);
  const Eigen::VectorXd reconstruction = vae.Decode(z).col(0);
  const Eigen::Vector2d c_in = SilhouetteCentroid(centered, depth);
  const Eigen::Vector2d c_out = SilhouetteCentroid(reconstruction, depth);
  const double centroid_error = (c_in - c_out).norm();
  {
    std::ostringstream out;
    out << "metric,value\n";
    out << "frames," << frames << '\n';
    out << "initial_loss," << FormatG9(total.front()) << '\n';
    out << "final_loss," << FormatG9(total.back()) << '\n';
    out << "loss_decreased," << (total.back() < total.front() ? 1 : 0) << '\n';
    out << "centroid_input_u," << FormatG9(c_in.x()) << '\n';
    out << "centroid_input_v," << FormatG9(c_in.y()) << '\n';
    out << "centroid_reconstruction_u," << FormatG9(c_out.x()) << '\n';
    out << "centroid_reconstruction_v," << FormatG9(c_out.y()) << '\n';
    out << "centroid_error_px," << FormatG9(centroid_error) << '\n';
    out << "centroid_within_3px," << (centroid_error <= 3.0 ? 1 : 0) << '\n';
    WriteFile(Join(dir, "report.csv"), out.str());
  }
  VaeToCheckpoint(vae).Save(Join(dir, "vae.ckpt"));
}

void RunTrainHppn(const RunContext& ctx) {
  const PipelineConfig& c = ctx.config;
  const env::Dataset ds = LoadLatentDataset(ctx);
  const std::string dir = FreshDir(ctx, "hppn");
  ctx.Log("train-hppn: " + std::to_string(ds.episodes.size()) + " episodes");
  const hppn::TrainResult result = hppn::TrainHppn(ds.episodes, c.hppn, DeriveSeed(c.seed, "hppn"));
  {
    std::ostringstream out;
    out << "part,epoch,loss\n";
    for (size_t i = 0; i < result.log.robot_loss.size(); ++i) {
      out << "robot," << i + 1 << ',' << FormatG9(result.log.robot_loss[i]) << '\n';
    }
    for (size_t i = 0; i < result.log.human_loss.size(); ++i) {
      out << "human," << i + 1 << ',' << FormatG9(result.log.human_loss[i]) << '\n';
    }
    WriteFile(Join(dir, "loss.csv"), out.str());
  }
  {
    std::ostringstream out;
    out << "episode\n";
    for (int i : result.holdout) out << i << '\n';
    WriteFile(Join(dir, "holdout.csv"), out.str());
  }
  hppn::WriteHeldOutReport(dir, result.report);
  const hppn::HeldOutReport& r = result.report;
  ctx.Log("train-hppn: held-out relative MSE " + FormatG9(r.relative_mse) + " vs persistence " +
          FormatG9(r.relative_mse_persistence) + ", 20-step endpoint median " +
          FormatG9(r.endpoint20_median) + " m");
  if (c.hppn.require_beat_persistence && !r.BeatsPersistence()) {
    Fail(ErrorCode::kNumeric,
         "train-hppn: model does not beat the persistence predictor on held-out episodes");
  }
  result.model.ToCheckpoint().Save(Join(dir, "hppn.ckpt"));
}

void RunTrainBaseline(const RunContext& ctx) {
  const PipelineConfig& c = ctx.config;
  const env::Dataset ds = LoadLatentDataset(ctx);
  const std::string dir = FreshDir(ctx, "baseline");
  ctx.Log("train-baseline: " + std::to_string(ds.episodes.size()) + " episodes");
  const policy::BaselineTrainResult result =
      policy::TrainBaseline(ds.episodes, c.baseline, DeriveSeed(c.seed, "baseline"));
  WriteLossCsv(Join(dir, "loss.csv"), "epoch,loss", {result.loss});
  std::ostringstream out;
  out << "metric,value\n";
  out << "episodes," << ds.episodes.size() << '\n';
  out << "holdout_episodes," << result.holdout.size() << '\n';
  out << "holdout_mse," << FormatG9(result.holdout_mse) << '\n';
  out << "mean_predictor_mse," << FormatG9(result.mean_predictor_mse) << '\n';
  out << "beats_mean_predictor," << (result.holdout_mse < result.mean_predictor_mse ? 1 : 0)
      << '\n';
  WriteFile(Join(dir, "report.csv"), out.str());
  result.model.ToCheckpoint().Save(Join(dir, "baseline.ckpt"));
}

void RunTrainPolicy(const RunContext& ctx, RewardKind kind) {
  const PipelineConfig& c = ctx.config;
  const PolicyTrainConfig& pc = c.policy;
  const hppn::HppnModel model =
      hppn::HppnModel::FromCheckpoint(Checkpoint::Load(Artifact(ctx, "hppn/hppn.ckpt"), "hppn"));
  const std::string name = PolicyDirName(kind);
  const std::string dir = FreshDir(ctx, name);

  cmaes::EvaluationConfig ec;
  ec.episodes_per_candidate = pc.episodes_per_candidate;
  ec.max_steps = c.evaluation.max_steps;
  ec.goals = pc.goals;
  ec.reward = RewardFor(c, kind);
  ec.robot = c.world.robot;
  ec.Validate();

  const uint64_t seed = DeriveSeed(c.seed, "policy_" + name);
  const cmaes::BatchObjective objective = [&](const std::vector<nn::Vector>& candidates,
                                              int generation) {
    // Goals are shared by every candidate of a generation.
    Rng goal_rng = MakeRng(seed, "goals", static_cast<uint64_t>(generation));
    const std::vector<Path> goals =
        cmaes::SampleGoals(pc.goals, pc.episodes_per_candidate, goal_rng);
    std::vector<double> fitness(candidates.size());
    ParallelFor(candidates.size(), c.jobs, [&](size_t i) {
      fitness[i] = cmaes::ScoreCandidate(candidates[i], model, goals, ec).mean;
    });
    return fitness;
  };

  cmaes::OptimizeConfig opt;
  opt.max_generations = pc.max_generations;
  opt.plateau_window = pc.plateau_window;
  opt.plateau_tolerance = pc.plateau_tolerance;
  const auto on_generation = [&](const cmaes::OptimizeResult& r) {
    const cmaes::GenerationRecord& g = r.history.back();
    if (g.generation % 10 == 0 || g.generation == 1) {
      ctx.Log(name + ": generation " + std::to_string(g.generation) + " best " +
              FormatG9(g.best) + " mean " + FormatG9(g.mean) + " sigma " + FormatG9(g.sigma));
    }
    if (pc.checkpoint_every > 0 && g.generation % pc.checkpoint_every == 0) {
      policy::PolicyFile f{policy::PolicyParams::FromFlat(std::span(r.best.data(), r.best.size())), kind, seed};
      policy::SavePolicy(Join(dir, "checkpoint.txt"), f);
      cmaes::WriteHistoryCsv(Join(dir, "history.csv"), r.history);
    }
  };
  nn::Vector x0 = nn::Vector::Zero(policy::kPolicyParamCount);
  x0.tail<3>().head<2>().setConstant(pc.initial_wheel_bias);
  const cmaes::OptimizeResult result =
      cmaes::Optimize(objective, x0, pc.cmaes, opt, seed, on_generation);
  cmaes::WriteHistoryCsv(Join(dir, "history.csv"), result.history);

  // Pick between the best-ever sample (scored on one generation's goals) and
  // the final mean on a common validation set.
  nn::Vector chosen = result.best;
  std::ostringstream sel;
  sel << "candidate,generation,validation_mean,failures,selected\n";
  if (pc.validation_goals > 0) {
    Rng vrng = MakeRng(seed, "validation");
    const std::vector<Path> goals = cmaes::SampleGoals(pc.goals, pc.validation_goals, vrng);
    const cmaes::CandidateScore best = cmaes::ScoreCandidate(result.best, model, goals, ec);
    const cmaes::CandidateScore mean = cmaes::ScoreCandidate(result.final_mean, model, goals, ec);
    const bool take_mean = mean.mean > best.mean;
    if (take_mean) chosen = result.final_mean;
    sel << "best_ever," << result.best_generation << ',' << FormatG9(best.mean) << ','
        << best.failures << ',' << (take_mean ? 0 : 1) << '\n';
    sel << "final_mean," << result.history.size() << ',' << FormatG9(mean.mean) << ','
        << mean.failures << ',' << (take_mean ? 1 : 0) << '\n';
  } else {
    sel << "best_ever," << result.best_generation << ",nan,0,1\n";
  }
  WriteFile(Join(dir, "selection.csv"), sel.str());

  const size_t generations = result.history.size();
  std::ostringstream run;
  run << "metric,value\n";
  run << "reward," << metrics::RewardKindName(kind) << '\n';
  run << "generations," << generations << '\n';
  run << "virtual_episodes,"
      << generations * static_cast<size_t>(pc.cmaes.lambda) *
             static_cast<size_t>(pc.episodes_per_candidate)
      << '\n';
  run << "best_fitness," << FormatG9(result.best_fitness) << '\n';
  run << "best_generation," << result.best_generation << '\n';
  run << "condition_repairs," << result.condition_repairs << '\n';
  WriteFile(Join(dir, "run.csv"), run.str());

  policy::SavePolicy(Join(dir, "policy.txt"),
                     policy::PolicyFile{policy::PolicyParams::FromFlat(
                                            std::span(chosen.data(), chosen.size())),
                                        kind, seed});
}

// --- Evaluation ------------------------------------------------------------------------

namespace {

inline constexpr const char* kPolicyNames[] = {"baseline", "GOnly", "GPlusH"};

struct EvalJob {
  int policy = 0;
  int path = 0;
  int user = 0;
  int trial = 0;
};

struct EvalOutcome {
  env::Episode episode;
  EpisodeMetrics metrics;
  bool failed = false;
  std::string error;
};

void WriteSpeedRows(std::ostringstream& out, const char* policy,
                    const std::vector<std::vector<double>>& robot,
                    const std::vector<std::vector<double>>& human,
                    std::vector<double>* robot_mean) {
  // Profiles are right aligned: index kDecelerationWindow - 1 is the last
  // motion before the stop.
  for (int k = 0; k < kDecelerationWindow; ++k) {
    double rs = 0.0, hs = 0.0;
    int n = 0;
    for (size_t e = 0; e < robot.size(); ++e) {
      const int offset = kDecelerationWindow - static_cast<int>(robot[e].size());
      if (k < offset) continue;
      rs += robot[e][k - offset];
      hs += human[e][k - offset];
      ++n;
    }
    const double r = n > 0 ? rs / n : std::nan("");
    const double h = n > 0 ? hs / n : std::nan("");
    robot_mean->push_back(r);
    out << policy << ',' << k - kDecelerationWindow << ',' << FormatG9(r) << ','
        << FormatG9(h) << ',' << n << '\n';
  }
}

}  // namespace

void RunEvaluate(const RunContext& ctx) {
  const PipelineConfig& c = ctx.config;
  const EvaluationMatrixConfig& ev = c.evaluation;
  const VaeEncoder encoder = LoadEncoder(ctx);
  const hppn::HppnModel model =
      hppn::HppnModel::FromCheckpoint(Checkpoint::Load(Artifact(ctx, "hppn/hppn.ckpt"), "hppn"));
  const policy::BaselineModel baseline = policy::BaselineModel::FromCheckpoint(
      Checkpoint::Load(Artifact(ctx, "baseline/baseline.ckpt"), "baseline"));
  const policy::PolicyFile g_only =
      policy::LoadPolicy(Artifact(ctx, PolicyDirName(RewardKind::kGOnly) + "/policy.txt"));
  const policy::PolicyFile g_plus_h =
      policy::LoadPolicy(Artifact(ctx, PolicyDirName(RewardKind::kGPlusH) + "/policy.txt"));
  if (g_only.reward != RewardKind::kGOnly || g_plus_h.reward != RewardKind::kGPlusH) {
    Fail(ErrorCode::kInvalidArgument, "evaluate: policy files are tagged with the wrong reward");
  }

  const std::string dir = FreshDir(ctx, "evaluation");
  fs::create_directories(fs::path(dir) / "goals");
  const std::vector<geometry::NamedPath> family = geometry::EvaluationGoalFamily(ev.path_length);
  for (const geometry::NamedPath& g : family) {
    std::ofstream f(Join(dir, "goals/" + g.id + ".csv"), std::ios::binary);
    geometry::WritePathCsv(f, g.path);
    if (!f) Fail(ErrorCode::kIo, "cannot write goal " + g.id);
  }
  std::vector<env::UserProfile> users;
  for (int u = 0; u < ev.users; ++u) users.push_back(EvaluationUser(c, u));
  env::WriteProfiles(Join(dir, "profiles.csv"), users);

  std::vector<EvalJob> jobs;
  for (int u = 0; u < ev.users; ++u) {
    for (int p = 0; p < static_cast<int>(family.size()); ++p) {
      for (int k = 0; k < 3; ++k) {
        for (int r = 0; r < ev.trials; ++r) jobs.push_back({k, p, u, r});
      }
    }
  }
  ctx.Log("evaluate: " + std::to_string(jobs.size()) + " episodes in the oracle world");

  const metrics::RewardConfig measure = RewardFor(c, RewardKind::kGOnly);
  std::vector<EvalOutcome> outcomes(jobs.size());
  ParallelFor(jobs.size(), c.jobs, [&](size_t i) {
    const EvalJob& job = jobs[i];
    const env::UserProfile& profile = users[job.user];
    const geometry::NamedPath& goal = family[job.path];
    env::RolloutOptions opt;
    opt.max_steps = ev.max_steps;
    opt.human_start = Pose2();
    opt.robot_start = geometry::Compose(opt.human_start, geometry::Inverse(profile.PreferredRelative()));
    opt.seed = DeriveSeed(c.seed, "evaluation_episode", i);
    opt.goal_id = goal.id;
    EvalOutcome& out = outcomes[i];
    try {
      if (job.policy == 0) {
        policy::BaselineController ctl(baseline, goal.path, c.world.robot);
        out.episode = env::Rollout(ctl, profile, c.world, opt, &encoder);
      } else {
        const policy::PolicyFile& pf = job.policy == 1 ? g_only : g_plus_h;
        // The controller only knows the nominal start, not this user's.
        policy::LinearPolicyController ctl(model, pf.params, goal.path,
                                           model.NominalStart(Pose2()), c.world.robot);
        out.episode = env::Rollout(ctl, profile, c.world, opt, &encoder);
      }
      out.metrics = MeasureEpisode(out.episode, goal.path, measure);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kNumeric) throw;
      out.failed = true;
      out.error = e.what();
    }
  });

  std::ostringstream episodes, trajectories, failures;
  episodes << "policy,path,user,trial,seed,steps,completion_time,frechet,sal,timed_out\n";
  trajectories << "policy,path,user,trial,t,rx,ry,rth,hx,hy\n";
  failures << "policy,path,user,trial,seed\n";
  std::vector<std::vector<double>> completion(3), frechet(3), sal(3);
  std::vector<std::vector<std::vector<double>>> robot_speeds(3), human_speeds(3);
  for (size_t i = 0; i < jobs.size(); ++i) {
    const EvalJob& job = jobs[i];
    const EvalOutcome& o = outcomes[i];
    const char* pname = kPolicyNames[job.policy];
    const std::string& path_id = family[job.path].id;
    const int user_id = users[job.user].id;
    const uint64_t seed = DeriveSeed(c.seed, "evaluation_episode", i);
    if (o.failed) {
      failures << pname << ',' << path_id << ',' << user_id << ',' << job.trial << ','
               << seed << '\n';
      ctx.Log("evaluate: episode failed: " + o.error.substr(0, o.error.find('\n')));
      continue;
    }
    const EpisodeMetrics& m = o.metrics;
    episodes << pname << ',' << path_id << ',' << user_id << ',' << job.trial << ',' << seed
             << ',' << m.steps << ',' << FormatG9(m.completion_time) << ','
             << FormatG9(m.frechet) << ',' << FormatG9(m.sal) << ',' << (m.timed_out ? 1 : 0)
             << '\n';
    for (int t = 0; t < o.episode.steps(); ++t) {
      const env::EpisodeRow& row = o.episode.rows[t];
      trajectories << pname << ',' << path_id << ',' << user_id << ',' << job.trial << ','
                   << t << ',' << FormatG9(row.robot.x) << ',' << FormatG9(row.robot.y) << ','
                   << FormatG9(row.robot.theta) << ',' << FormatG9(row.human.x) << ','
                   << FormatG9(row.human.y) << '\n';
    }
    completion[job.policy].push_back(m.completion_time);
    frechet[job.policy].push_back(m.frechet);
    sal[job.policy].push_back(m.sal);
    if (!m.timed_out) {
      robot_speeds[job.policy].push_back(
          FinalSpeeds(o.episode.RobotPath(), c.world.robot.dt, kDecelerationWindow));
      human_speeds[job.policy].push_back(
          FinalSpeeds(o.episode.HumanPath(), c.world.robot.dt, kDecelerationWindow));
    }
  }
  WriteFile(Join(dir, "episodes.csv"), episodes.str());
  WriteFile(Join(dir, "trajectories.csv"), trajectories.str());
  WriteFile(Join(dir, "failures.csv"), failures.str());

  std::ostringstream summary;
  summary << "policy,metric,count,median,mean,q1,q3,min,max\n";
  for (int k = 0; k < 3; ++k) {
    const std::pair<const char*, const std::vector<double>*> metrics_of[] = {
        {"completion_time", &completion[k]}, {"frechet", &frechet[k]}, {"sal", &sal[k]}};
    for (const auto& [metric, values] : metrics_of) {
      const std::vector<double>& v = *values;
      const double mean =
          v.empty() ? std::nan("") : std::accumulate(v.begin(), v.end(), 0.0) / v.size();
      summary << kPolicyNames[k] << ',' << metric << ',' << v.size() << ','
              << FormatG9(Quantile(v, 0.5)) << ',' << FormatG9(mean) << ','
              << FormatG9(Quantile(v, 0.25)) << ',' << FormatG9(Quantile(v, 0.75)) << ','
              << FormatG9(Quantile(v, 0.0)) << ',' << FormatG9(Quantile(v, 1.0)) << '\n';
    }
  }
  WriteFile(Join(dir, "summary.csv"), summary.str());

  std::ostringstream decel, onset;
  decel << "policy,offset,robot_speed,human_speed,episodes\n";
  onset << "policy,robot_onset_index,steps_before_stop,episodes\n";
  for (int k = 0; k < 3; ++k) {
    std::vector<double> robot_mean;
    WriteSpeedRows(decel, kPolicyNames[k], robot_speeds[k], human_speeds[k], &robot_mean);
    std::vector<double> defined;
    for (double v : robot_mean) {
      if (std::isfinite(v)) defined.push_back(v);
    }
    const int idx = DecelerationOnset(defined);
    const int global = idx < 0 ? -1 : idx + kDecelerationWindow - static_cast<int>(defined.size());
    onset << kPolicyNames[k] << ',' << global << ','
          << (global < 0 ? -1 : kDecelerationWindow - global) << ','
          << robot_speeds[k].size() << '\n';
  }
  WriteFile(Join(dir, "deceleration.csv"), decel.str());
  WriteFile(Join(dir, "deceleration_onset.csv"), onset.str());
}

void RunAll(const RunContext& ctx) {
  fs::create_directories(ctx.out);
  WriteFile(ctx.Path("config.json"), ConfigToJson(ctx.config).dump(2) + "\n");
  ctx.Log("run-all: datagen");
  RunDatagen(ctx);
  ctx.Log("run-all: train-vae");
  RunTrainVae(ctx);
  ctx.Log("run-all: train-hppn");
  RunTrainHppn(ctx);
  ctx.Log("run-all: train-baseline");
  RunTrainBaseline(ctx);
  ctx.Log("run-all: train-policy GOnly");
  RunTrainPolicy(ctx, RewardKind::kGOnly);
  ctx.Log("run-all: train-policy GPlusH");
  RunTrainPolicy(ctx, RewardKind::kGPlusH);
  ctx.Log("run-all: evaluate");
  RunEvaluate(ctx);
  ctx.Log("run-all: report");
  RunReport(ctx);
}

}  // namespace guidetrain::pipeline
