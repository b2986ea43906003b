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

#include "guidetrain/env.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <istream>
#include <map>
#include <numbers>
#include <ostream>
#include <sstream>

#include "guidetrain/checkpoint.hpp"

namespace guidetrain::env {

namespace {

std::vector<std::string> SplitCsv(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream ss(line);
  while (std::getline(ss, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double ParseDouble(const std::string& s, const std::string& context) {
  try {
    size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    Fail(ErrorCode::kIo, context + ": bad number '" + s + "'");
  }
}

int64_t ParseInt(const std::string& s, const std::string& context) {
  try {
    size_t used = 0;
    const long long v = std::stoll(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    Fail(ErrorCode::kIo, context + ": bad integer '" + s + "'");
  }
}

uint64_t ParseUint(const std::string& s, const std::string& context) {
  try {
    size_t used = 0;
    const unsigned long long v = std::stoull(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    Fail(ErrorCode::kIo, context + ": bad unsigned integer '" + s + "'");
  }
}

void RequireRange(const Range& r, const char* name) {
  Require(r.lo <= r.hi, std::string("ProfileRanges: empty range for ") + name);
}

double Draw(const Range& r, Rng& rng) {
  if (r.lo == r.hi) return r.lo;
  return std::uniform_real_distribution<double>(r.lo, r.hi)(rng);
}

bool Finite(const Pose2& p) {
  return std::isfinite(p.x) && std::isfinite(p.y) && std::isfinite(p.theta);
}

}  // namespace

void RobotParams::Validate() const {
  Require(wheel_radius > 0.0 && track_width > 0.0 && dt > 0.0,
          "RobotParams: radius, track width and dt must be positive");
  Require(omega_min > 0.0 && omega_max >= omega_min,
          "RobotParams: invalid wheel speed bounds");
}

Pose2 DriveStep(const Pose2& pose, const RobotAction& action,
                const RobotParams& params) {
  const double r = params.wheel_radius;
  const double v = r * (action.omega_left + action.omega_right) / 2.0;
  const double w = r * (action.omega_right - action.omega_left) / params.track_width;
  const double dt = params.dt;
  if (std::abs(w) < 1e-12) {
    return Pose2(pose.x + v * dt * std::cos(pose.theta),
                 pose.y + v * dt * std::sin(pose.theta), pose.theta);
  }
  const double th = pose.theta + w * dt;
  const double rho = v / w;
  return Pose2(pose.x + rho * (std::sin(th) - std::sin(pose.theta)),
               pose.y - rho * (std::cos(th) - std::cos(pose.theta)), th);
}

RobotAction ClampAction(double left, double right, double stop,
                        const RobotParams& params) {
  return {std::clamp(left, params.omega_min, params.omega_max),
          std::clamp(right, params.omega_min, params.omega_max),
          std::clamp(stop, 0.0, 1.0)};
}

void UserProfile::Validate() const {
  Require(max_speed > 0.0, "UserProfile: max_speed must be positive");
  Require(response_lag > 0.0, "UserProfile: response_lag must be positive");
  Require(follow_distance > 0.0, "UserProfile: follow_distance must be positive");
  Require(gait_amplitude >= 0.0 && noise_sigma >= 0.0 && gait_freq >= 0.0,
          "UserProfile: gait and noise parameters must be non-negative");
}

void ProfileRanges::Validate() const {
  RequireRange(lateral_offset, "lateral_offset");
  RequireRange(follow_distance, "follow_distance");
  RequireRange(response_lag, "response_lag");
  RequireRange(max_speed, "max_speed");
  RequireRange(gait_amplitude, "gait_amplitude");
  RequireRange(gait_freq, "gait_freq");
  RequireRange(noise_sigma, "noise_sigma");
  Require(response_lag.lo > 0.0 && max_speed.lo > 0.0 && follow_distance.lo > 0.0,
          "ProfileRanges: lag, speed and follow distance must be positive");
  Require(gait_amplitude.lo >= 0.0 && noise_sigma.lo >= 0.0,
          "ProfileRanges: gait amplitude and noise must be non-negative");
}

UserProfile SampleProfile(const ProfileRanges& ranges, int id, uint64_t seed) {
  ranges.Validate();
  Rng rng(seed);
  UserProfile p;
  p.id = id;
  p.lateral_offset = Draw(ranges.lateral_offset, rng);
  p.follow_distance = Draw(ranges.follow_distance, rng);
  p.response_lag = Draw(ranges.response_lag, rng);
  p.max_speed = Draw(ranges.max_speed, rng);
  p.gait_amplitude = Draw(ranges.gait_amplitude, rng);
  p.gait_freq = Draw(ranges.gait_freq, rng);
  p.noise_sigma = Draw(ranges.noise_sigma, rng);
  p.seed = seed;
  return p;
}

Pose2 HumanStep(const Pose2& human, const Pose2& robot,
                const UserProfile& profile, double t, double dt, Rng& rng) {
  const Point2 pos = human.translation();
  const Point2 target = geometry::Compose(robot, profile.PreferredRelative()).translation();
  Point2 vel = (target - pos) / profile.response_lag;
  const double speed = vel.norm();
  if (speed > profile.max_speed) vel *= profile.max_speed / speed;

  const Point2 normal(-std::sin(human.theta), std::cos(human.theta));
  Point2 next = pos + vel * dt +
                profile.gait_amplitude *
                    std::sin(2.0 * std::numbers::pi * profile.gait_freq * t) * normal;
  if (profile.noise_sigma > 0.0) {
    std::normal_distribution<double> noise(0.0, profile.noise_sigma);
    Point2 n(noise(rng), noise(rng));
    const double limit = 3.0 * profile.noise_sigma;
    if (n.norm() > limit) n *= limit / n.norm();
    next += n;
  }

  double theta = human.theta;
  if (vel.norm() > 1e-9) {
    const double turn = geometry::WrapAngle(std::atan2(vel.y(), vel.x()) - theta);
    const double limit = kHumanTurnRate * dt;
    theta += std::clamp(turn, -limit, limit);
  }
  return Pose2(next.x(), next.y(), theta);
}

Eigen::Vector2d ForceFromDisplacement(const Eigen::Vector2d& displacement,
                                      const ForceParams& params) {
  Eigen::Vector2d d = displacement;
  const double n = d.norm();
  if (n > params.workspace_radius) d = d / n * params.workspace_radius;
  return params.stiffness * d;
}

Eigen::Vector2d HandleDisplacement(const Pose2& robot, const Pose2& human,
                                   const UserProfile& profile,
                                   const ForceParams& params) {
  // The hand sits where the handle would be if the user stood at their
  // preferred pose, so displacement is zero there.
  const Point2 hand_local(profile.follow_distance - params.handle_distance,
                          -profile.lateral_offset);
  const Point2 hand_world = geometry::FromFrame(hand_local, human);
  return geometry::ToFrame(hand_world, robot) - Point2(-params.handle_distance, 0.0);
}

Eigen::Vector2d SenseForce(const Pose2& robot, const Pose2& human,
                           const UserProfile& profile, const ForceParams& params) {
  return ForceFromDisplacement(HandleDisplacement(robot, human, profile, params),
                               params);
}

void DepthConfig::Validate() const {
  Require(width > 0 && height > 0, "DepthConfig: resolution must be positive");
  Require(fov > 0.0 && fov < std::numbers::pi, "DepthConfig: fov must be in (0, pi)");
  Require(nominal_distance > 0.0 && max_range > 0.0,
          "DepthConfig: distances must be positive");
  Require(semi_axis_x > 0.0 && semi_axis_y > 0.0,
          "DepthConfig: semi-axes must be positive");
  Require(noise_sigma >= 0.0, "DepthConfig: noise must be non-negative");
}

Eigen::VectorXd RenderDepth(const Pose2& robot, const Pose2& human,
                            const DepthConfig& cfg, Rng& rng) {
  Eigen::VectorXd image = Eigen::VectorXd::Zero(cfg.pixels());
  const Point2 p = geometry::ToFrame(human.translation(), robot);
  // Camera looks along -x of the robot; image right is robot +y.
  const double depth = -p.x();
  const double half_tan = std::tan(cfg.fov / 2.0);
  if (depth > 1e-3 && std::abs(p.y() / depth) <= half_tan) {
    const double range = p.norm();
    const double focal = (cfg.width / 2.0) / half_tan;
    const double cu = (cfg.width - 1) / 2.0 + focal * p.y() / depth;
    const double cv = (cfg.height - 1) / 2.0;
    const double scale = cfg.nominal_distance / range;
    const double ax = cfg.semi_axis_x * scale;
    const double ay = cfg.semi_axis_y * scale;
    const double intensity = std::max(0.0, 1.0 - range / cfg.max_range);
    for (int v = 0; v < cfg.height; ++v) {
      for (int u = 0; u < cfg.width; ++u) {
        const double r = std::hypot((u - cu) / ax, (v - cv) / ay);
        const double alpha = std::clamp(0.5 + (1.0 - r) * ax, 0.0, 1.0);
        image(v * cfg.width + u) = intensity * alpha;
      }
    }
  }
  if (cfg.noise_sigma > 0.0) {
    std::normal_distribution<double> noise(0.0, cfg.noise_sigma);
    for (Eigen::Index i = 0; i < image.size(); ++i) {
      image(i) = std::clamp(image(i) + noise(rng), 0.0, 1.0);
    }
  }
  return image;
}

Rng DepthNoiseRng(uint64_t episode_seed, int t) {
  return MakeRng(episode_seed, "depth", static_cast<uint64_t>(t));
}

RobotAction ScriptedController::Act(const Observation& obs) {
  if (obs.t >= 0 && static_cast<size_t>(obs.t) < script_.size()) return script_[obs.t];
  return {0.0, 0.0, 1.0};
}

void ScriptConfig::Validate() const {
  // Splitting any run longer than max_hold must leave a tail >= min_hold.
  Require(min_hold >= 1 && max_hold >= 2 * min_hold - 1,
          "ScriptConfig: invalid hold range");
  Require(min_length >= min_hold + 1 && max_length >= min_length,
          "ScriptConfig: invalid episode length range");
}

std::vector<RobotAction> RandomActionScript(Rng& rng, const RobotParams& params,
                                            const ScriptConfig& cfg) {
  cfg.Validate();
  const int length = std::uniform_int_distribution<int>(cfg.min_length, cfg.max_length)(rng);
  std::uniform_real_distribution<double> wheel(params.omega_min, params.omega_max);
  std::vector<RobotAction> script;
  script.reserve(length);
  int remaining = length - 1;  // the final row is the stop
  while (remaining > 0) {
    int hold = remaining;
    if (remaining > cfg.max_hold) {
      const int hi = std::min(cfg.max_hold, remaining - cfg.min_hold);
      hold = std::uniform_int_distribution<int>(cfg.min_hold, hi)(rng);
    }
    const double left = wheel(rng);
    const double right = wheel(rng);
    for (int k = 0; k < hold; ++k) script.push_back({left, right, 0.0});
    remaining -= hold;
  }
  script.push_back({0.0, 0.0, 1.0});
  return script;
}

std::vector<Point2> Episode::HumanPath() const {
  std::vector<Point2> path;
  path.reserve(rows.size());
  for (const EpisodeRow& r : rows) path.push_back(r.human.translation());
  return path;
}

std::vector<Point2> Episode::RobotPath() const {
  std::vector<Point2> path;
  path.reserve(rows.size());
  for (const EpisodeRow& r : rows) path.push_back(r.robot.translation());
  return path;
}

Response SenseResponse(const Pose2& robot, const Pose2& human,
                       const UserProfile& profile, const WorldConfig& world,
                       uint64_t episode_seed, int t, const DepthEncoder* encoder) {
  Response r = Response::Zero();
  r.head<2>() = SenseForce(robot, human, profile, world.force);
  if (encoder != nullptr) {
    Rng rng = DepthNoiseRng(episode_seed, t);
    const Eigen::VectorXd z = encoder->Encode(RenderDepth(robot, human, world.depth, rng));
    Require(z.size() == kLatentDim, "DepthEncoder: latent must be 16-d");
    r.tail<kLatentDim>() = z;
  }
  return r;
}

Eigen::VectorXd RenderEpisodeFrame(const Episode& episode, int t,
                                   const DepthConfig& cfg) {
  Require(t >= 0 && t < episode.steps(), "RenderEpisodeFrame: row out of range");
  Rng rng = DepthNoiseRng(episode.seed, t);
  return RenderDepth(episode.rows[t].robot, episode.rows[t].human, cfg, rng);
}

Episode Rollout(Controller& controller, const UserProfile& profile,
                const WorldConfig& world, const RolloutOptions& options,
                const DepthEncoder* encoder) {
  Require(options.max_steps >= 1, "Rollout: max_steps must be >= 1");
  world.robot.Validate();
  profile.Validate();
  Episode ep;
  ep.seed = options.seed;
  ep.profile_id = profile.id;
  ep.goal_id = options.goal_id;
  ep.has_latent = encoder != nullptr;
  ep.termination = "timeout";

  Rng human_rng = MakeRng(options.seed, "human");
  Pose2 robot = options.robot_start;
  Pose2 human = options.human_start;
  controller.Reset();
  Observation obs;
  obs.response = SenseResponse(robot, human, profile, world, options.seed, 0, encoder);
  for (int t = 0; t < options.max_steps; ++t) {
    obs.t = t;
    const RobotAction action = controller.Act(obs);
    ep.rows.push_back({robot, human, action, obs.response});
    if (action.stops()) {
      ep.termination = "stop";
      break;
    }
    robot = DriveStep(robot, action, world.robot);
    human = HumanStep(human, robot, profile, t * world.robot.dt, world.robot.dt, human_rng);
    if (!Finite(robot) || !Finite(human) || !obs.response.allFinite()) {
      std::ostringstream dump;
      WriteEpisodeCsv(dump, ep);
      Fail(ErrorCode::kNumeric, "Rollout: non-finite state at step " +
                                    std::to_string(t) + "\n" + dump.str());
    }
    obs.previous_action = action;
    obs.response = SenseResponse(robot, human, profile, world, options.seed, t + 1, encoder);
  }
  return ep;
}

// --- Episode files ----------------------------------------------------------

void WriteEpisodeCsv(std::ostream& out, const Episode& episode) {
  out << "# seed=" << episode.seed << " profile_id=" << episode.profile_id
      << " steps=" << episode.steps() << " termination=" << episode.termination
      << " latent=" << (episode.has_latent ? "vae" : "none")
      << " goal=" << (episode.goal_id.empty() ? "none" : episode.goal_id) << '\n';
  out << "t,rx,ry,rth,hx,hy,hth,wl,wr,stop,fx,fy";
  for (int k = 1; k <= kLatentDim; ++k) out << ",z" << k;
  out << '\n';
  for (int t = 0; t < episode.steps(); ++t) {
    const EpisodeRow& r = episode.rows[t];
    out << t;
    for (double v : {r.robot.x, r.robot.y, r.robot.theta, r.human.x, r.human.y,
                     r.human.theta, r.action.omega_left, r.action.omega_right,
                     r.action.stop_degree}) {
      out << ',' << FormatG9(v);
    }
    for (int k = 0; k < kResponseDim; ++k) out << ',' << FormatG9(r.response(k));
    out << '\n';
  }
}

Episode ReadEpisodeCsv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line.rfind("# ", 0) != 0) {
    Fail(ErrorCode::kIo, "episode: missing metadata line");
  }
  std::map<std::string, std::string> meta;
  std::istringstream ms(line.substr(2));
  std::string kv;
  while (ms >> kv) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) Fail(ErrorCode::kIo, "episode: bad metadata '" + kv + "'");
    meta[kv.substr(0, eq)] = kv.substr(eq + 1);
  }
  for (const char* key : {"seed", "profile_id", "steps", "termination"}) {
    if (!meta.count(key)) Fail(ErrorCode::kIo, std::string("episode: missing ") + key);
  }
  Episode ep;
  ep.seed = ParseUint(meta["seed"], "episode seed");
  ep.profile_id = static_cast<int>(ParseInt(meta["profile_id"], "episode profile_id"));
  ep.termination = meta["termination"];
  ep.has_latent = meta.count("latent") && meta["latent"] == "vae";
  if (meta.count("goal") && meta["goal"] != "none") ep.goal_id = meta["goal"];
  const int64_t steps = ParseInt(meta["steps"], "episode steps");

  if (!std::getline(in, line) || line.rfind("t,rx,ry,rth", 0) != 0) {
    Fail(ErrorCode::kIo, "episode: missing column header");
  }
  constexpr size_t kColumns = 10 + kResponseDim;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = SplitCsv(line);
    if (f.size() != kColumns) Fail(ErrorCode::kIo, "episode: wrong column count");
    if (ParseInt(f[0], "episode t") != static_cast<int64_t>(ep.rows.size())) {
      Fail(ErrorCode::kIo, "episode: non-consecutive timestep");
    }
    std::array<double, kColumns> v{};
    for (size_t k = 1; k < kColumns; ++k) v[k] = ParseDouble(f[k], "episode row");
    EpisodeRow row;
    row.robot = Pose2(v[1], v[2], v[3]);
    row.human = Pose2(v[4], v[5], v[6]);
    row.action = {v[7], v[8], v[9]};
    for (int k = 0; k < kResponseDim; ++k) row.response(k) = v[10 + k];
    ep.rows.push_back(row);
  }
  if (steps != ep.steps()) Fail(ErrorCode::kIo, "episode: step count mismatch");
  return ep;
}

void SaveEpisode(const std::string& path, const Episode& episode) {
  std::ostringstream ss;
  WriteEpisodeCsv(ss, episode);
  WriteFile(path, ss.str());
}

Episode LoadEpisode(const std::string& path) {
  std::istringstream ss(ReadFile(path));
  try {
    return ReadEpisodeCsv(ss);
  } catch (const Error& e) {
    Fail(e.code(), path + ": " + e.what());
  }
}

void WriteManifest(const std::string& path, const std::vector<ManifestEntry>& entries) {
  std::ostringstream ss;
  ss << "file,profile_id,seed,steps\n";
  for (const ManifestEntry& e : entries) {
    ss << e.file << ',' << e.profile_id << ',' << e.seed << ',' << e.steps << '\n';
  }
  WriteFile(path, ss.str());
}

std::vector<ManifestEntry> ReadManifest(const std::string& path) {
  std::istringstream ss(ReadFile(path));
  std::string line;
  if (!std::getline(ss, line) || line != "file,profile_id,seed,steps") {
    Fail(ErrorCode::kIo, path + ": bad manifest header");
  }
  std::vector<ManifestEntry> entries;
  while (std::getline(ss, line)) {
    if (line.empty()) continue;
    const auto f = SplitCsv(line);
    if (f.size() != 4) Fail(ErrorCode::kIo, path + ": bad manifest row");
    entries.push_back({f[0], static_cast<int>(ParseInt(f[1], path)),
                       ParseUint(f[2], path), static_cast<int>(ParseInt(f[3], path))});
  }
  return entries;
}

void WriteProfiles(const std::string& path, const std::vector<UserProfile>& profiles) {
  std::ostringstream ss;
  ss << "id,lateral_offset,follow_distance,response_lag,max_speed,gait_amplitude,"
        "gait_freq,noise_sigma,seed\n";
  for (const UserProfile& p : profiles) {
    ss << p.id;
    for (double v : {p.lateral_offset, p.follow_distance, p.response_lag, p.max_speed,
                     p.gait_amplitude, p.gait_freq, p.noise_sigma}) {
      ss << ',' << FormatG17(v);
    }
    ss << ',' << p.seed << '\n';
  }
  WriteFile(path, ss.str());
}

std::vector<UserProfile> ReadProfiles(const std::string& path) {
  std::istringstream ss(ReadFile(path));
  std::string line;
  if (!std::getline(ss, line) || line.rfind("id,lateral_offset", 0) != 0) {
    Fail(ErrorCode::kIo, path + ": bad profiles header");
  }
  std::vector<UserProfile> profiles;
  while (std::getline(ss, line)) {
    if (line.empty()) continue;
    const auto f = SplitCsv(line);
    if (f.size() != 9) Fail(ErrorCode::kIo, path + ": bad profiles row");
    UserProfile p;
    p.id = static_cast<int>(ParseInt(f[0], path));
    p.lateral_offset = ParseDouble(f[1], path);
    p.follow_distance = ParseDouble(f[2], path);
    p.response_lag = ParseDouble(f[3], path);
    p.max_speed = ParseDouble(f[4], path);
    p.gait_amplitude = ParseDouble(f[5], path);
    p.gait_freq = ParseDouble(f[6], path);
    p.noise_sigma = ParseDouble(f[7], path);
    p.seed = ParseUint(f[8], path);
    profiles.push_back(p);
  }
  return profiles;
}

const UserProfile& Dataset::Profile(int id) const {
  for (const UserProfile& p : profiles) {
    if (p.id == id) return p;
  }
  Fail(ErrorCode::kIo, "dataset: unknown profile id " + std::to_string(id));
}

Dataset LoadDataset(const std::string& dataset_dir) {
  const std::filesystem::path dir(dataset_dir);
  const std::string manifest = (dir / "manifest.csv").string();
  if (!std::filesystem::exists(manifest)) {
    Fail(ErrorCode::kMissingArtifact, "missing artifact: " + manifest);
  }
  Dataset ds;
  ds.profiles = ReadProfiles((dir / "profiles.csv").string());
  for (const ManifestEntry& e : ReadManifest(manifest)) {
    ds.episodes.push_back(LoadEpisode((dir / e.file).string()));
    if (ds.episodes.back().profile_id != e.profile_id) {
      Fail(ErrorCode::kIo, e.file + ": profile id disagrees with manifest");
    }
  }
  if (ds.episodes.empty()) Fail(ErrorCode::kInvalidArgument, "dataset is empty");
  return ds;
}

}  // namespace guidetrain::env
