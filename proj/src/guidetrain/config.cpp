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

// Configuration schema. One visitor walks the structure for both reading and
// writing so the two can never disagree on key names.

#include <limits>
#include <set>

#include "guidetrain/pipeline.hpp"

namespace guidetrain::pipeline {

namespace {

[[noreturn]] void ConfigError(const std::string& message) {
  Fail(ErrorCode::kConfig, "config: " + message);
}

class Writer {
 public:
  explicit Writer(Json& node) : node_(node) { node_ = Json::object(); }

  template <typename T>
  void Field(const char* key, T& value) {
    node_[key] = value;
  }
  void Field(const char* key, env::Range& r) { node_[key] = Json::array({r.lo, r.hi}); }

  template <typename Fn>
  void Section(const char* key, Fn&& fn) {
    Writer sub(node_[key]);
    fn(sub);
  }

 private:
  Json& node_;
};

class Reader {
 public:
  Reader(const Json& node, std::string path) : node_(node), path_(std::move(path)) {
    if (!node_.is_object()) ConfigError(Where() + "expected an object");
  }

  void Field(const char* key, int& value) {
    const Json* j = Take(key);
    if (j == nullptr) return;
    if (!j->is_number_integer()) ConfigError(Where(key) + "expected an integer");
    const auto v = j->get<int64_t>();
    if (v < std::numeric_limits<int>::min() || v > std::numeric_limits<int>::max()) {
      ConfigError(Where(key) + "integer out of range");
    }
    value = static_cast<int>(v);
  }
  void Field(const char* key, uint64_t& value) {
    const Json* j = Take(key);
    if (j == nullptr) return;
    if (j->is_number_unsigned()) {
      value = j->get<uint64_t>();
    } else if (j->is_number_integer() && j->get<int64_t>() >= 0) {
      value = static_cast<uint64_t>(j->get<int64_t>());
    } else {
      ConfigError(Where(key) + "expected a non-negative integer");
    }
  }
  void Field(const char* key, double& value) {
    const Json* j = Take(key);
    if (j == nullptr) return;
    if (!j->is_number()) ConfigError(Where(key) + "expected a number");
    value = j->get<double>();
  }
  void Field(const char* key, bool& value) {
    const Json* j = Take(key);
    if (j == nullptr) return;
    if (!j->is_boolean()) ConfigError(Where(key) + "expected true or false");
    value = j->get<bool>();
  }
  void Field(const char* key, std::vector<int>& value) {
    const Json* j = Take(key);
    if (j == nullptr) return;
    if (!j->is_array()) ConfigError(Where(key) + "expected an array of integers");
    value.clear();
    for (const Json& e : *j) {
      if (!e.is_number_integer()) ConfigError(Where(key) + "expected an array of integers");
      value.push_back(e.get<int>());
    }
  }
  void Field(const char* key, env::Range& r) {
    const Json* j = Take(key);
    if (j == nullptr) return;
    if (!j->is_array() || j->size() != 2 || !(*j)[0].is_number() || !(*j)[1].is_number()) {
      ConfigError(Where(key) + "expected [lo, hi]");
    }
    r.lo = (*j)[0].get<double>();
    r.hi = (*j)[1].get<double>();
  }

  template <typename Fn>
  void Section(const char* key, Fn&& fn) {
    const Json* j = Take(key);
    if (j == nullptr) return;
    Reader sub(*j, path_.empty() ? key : path_ + "." + key);
    fn(sub);
    sub.Finish();
  }

  void Finish() const {
    for (auto it = node_.begin(); it != node_.end(); ++it) {
      if (seen_.count(it.key()) == 0) ConfigError(Where(it.key().c_str()) + "unknown key");
    }
  }

 private:
  const Json* Take(const char* key) {
    seen_.insert(key);
    const auto it = node_.find(key);
    return it == node_.end() ? nullptr : &*it;
  }
  std::string Where(const char* key = nullptr) const {
    std::string p = path_;
    if (key != nullptr) p = p.empty() ? key : p + "." + key;
    return p.empty() ? "" : p + ": ";
  }

  const Json& node_;
  std::string path_;
  std::set<std::string> seen_;
};

template <typename V>
void Visit(V& v, PipelineConfig& c) {
  v.Field("schema_version", c.schema_version);
  v.Field("seed", c.seed);
  v.Field("jobs", c.jobs);
  v.Section("world", [&](V& w) {
    w.Section("robot", [&](V& s) {
      env::RobotParams& r = c.world.robot;
      s.Field("wheel_radius", r.wheel_radius);
      s.Field("track_width", r.track_width);
      s.Field("dt", r.dt);
      s.Field("omega_min", r.omega_min);
      s.Field("omega_max", r.omega_max);
    });
    w.Section("force", [&](V& s) {
      env::ForceParams& f = c.world.force;
      s.Field("stiffness", f.stiffness);
      s.Field("workspace_radius", f.workspace_radius);
      s.Field("handle_distance", f.handle_distance);
    });
    w.Section("depth", [&](V& s) {
      env::DepthConfig& d = c.world.depth;
      s.Field("width", d.width);
      s.Field("height", d.height);
      s.Field("fov", d.fov);
      s.Field("nominal_distance", d.nominal_distance);
      s.Field("semi_axis_x", d.semi_axis_x);
      s.Field("semi_axis_y", d.semi_axis_y);
      s.Field("max_range", d.max_range);
      s.Field("noise_sigma", d.noise_sigma);
    });
  });
  v.Section("dataset", [&](V& s) {
    DatasetConfig& d = c.dataset;
    s.Field("episodes", d.episodes);
    s.Field("train_users", d.train_users);
    s.Field("max_steps", d.max_steps);
    s.Section("script", [&](V& t) {
      t.Field("min_length", d.script.min_length);
      t.Field("max_length", d.script.max_length);
      t.Field("min_hold", d.script.min_hold);
      t.Field("max_hold", d.script.max_hold);
    });
    s.Section("profiles", [&](V& t) {
      env::ProfileRanges& p = d.profiles;
      t.Field("lateral_offset", p.lateral_offset);
      t.Field("follow_distance", p.follow_distance);
      t.Field("response_lag", p.response_lag);
      t.Field("max_speed", p.max_speed);
      t.Field("gait_amplitude", p.gait_amplitude);
      t.Field("gait_freq", p.gait_freq);
      t.Field("noise_sigma", p.noise_sigma);
    });
  });
  v.Section("vae", [&](V& s) {
    s.Field("epochs", c.vae.epochs);
    s.Field("lr", c.vae.lr);
    s.Field("batch", c.vae.batch);
    s.Field("frame_stride", c.vae.frame_stride);
    s.Field("hidden", c.vae.hidden);
    s.Field("kl_weight", c.vae.kl_weight);
  });
  v.Section("hppn", [&](V& s) {
    hppn::HppnConfig& h = c.hppn;
    s.Field("robot_hidden", h.robot_hidden);
    s.Field("human_hidden", h.human_hidden);
    s.Field("window", h.window);
    s.Field("stride", h.stride);
    s.Field("robot_epochs", h.robot_epochs);
    s.Field("human_epochs", h.human_epochs);
    s.Field("lr", h.lr);
    s.Field("robot_batch", h.robot_batch);
    s.Field("human_batch", h.human_batch);
    s.Field("holdout_fraction", h.holdout_fraction);
    s.Field("clip_norm", h.clip_norm);
    s.Field("require_beat_persistence", h.require_beat_persistence);
  });
  v.Section("baseline", [&](V& s) {
    policy::BaselineConfig& b = c.baseline;
    s.Field("hidden", b.hidden);
    s.Field("window", b.window);
    s.Field("stride", b.stride);
    s.Field("epochs", b.epochs);
    s.Field("batch", b.batch);
    s.Field("lr", b.lr);
    s.Field("clip_norm", b.clip_norm);
    s.Field("holdout_fraction", b.holdout_fraction);
    s.Field("target_speed", b.target_speed);
  });
  v.Section("policy", [&](V& s) {
    PolicyTrainConfig& p = c.policy;
    s.Field("lambda", p.cmaes.lambda);
    s.Field("sigma0", p.cmaes.sigma0);
    s.Field("condition_cap", p.cmaes.condition_cap);
    s.Field("max_generations", p.max_generations);
    s.Field("plateau_window", p.plateau_window);
    s.Field("plateau_tolerance", p.plateau_tolerance);
    s.Field("episodes_per_candidate", p.episodes_per_candidate);
    s.Field("goal_length", p.goals.length);
    s.Field("curvature_min", p.goals.curvature_min);
    s.Field("curvature_max", p.goals.curvature_max);
    s.Field("checkpoint_every", p.checkpoint_every);
    s.Field("validation_goals", p.validation_goals);
    s.Field("initial_wheel_bias", p.initial_wheel_bias);
  });
  v.Section("reward", [&](V& s) {
    metrics::RewardConfig& r = c.reward;
    s.Field("w_time", r.w_time);
    s.Field("w_frechet", r.w_frechet);
    s.Field("w_sal", r.w_sal);
    s.Field("timeout_penalty", r.timeout_penalty);
    s.Field("time_in_seconds", r.time_in_seconds);
    s.Field("undefined_sal", r.undefined_sal);
    s.Field("frechet_resolution", r.frechet_resolution);
    s.Section("sal", [&](V& t) {
      t.Field("sample_rate", r.sal.sample_rate);
      t.Field("cutoff_freq", r.sal.cutoff_freq);
      t.Field("pad_factor", r.sal.pad_factor);
    });
  });
  v.Section("evaluation", [&](V& s) {
    EvaluationMatrixConfig& e = c.evaluation;
    s.Field("users", e.users);
    s.Field("first_user_id", e.first_user_id);
    s.Field("trials", e.trials);
    s.Field("path_length", e.path_length);
    s.Field("max_steps", e.max_steps);
  });
}

}  // namespace

void PipelineConfig::Validate() const {
  try {
    Require(schema_version == kConfigSchemaVersion,
            "schema_version must be " + std::to_string(kConfigSchemaVersion));
    Require(jobs >= 1, "jobs must be >= 1");
    world.robot.Validate();
    world.depth.Validate();
    Require(world.force.stiffness > 0.0 && world.force.workspace_radius > 0.0,
            "world.force: stiffness and workspace_radius must be > 0");
    Require(dataset.episodes >= 1 && dataset.train_users >= 1 && dataset.max_steps >= 1,
            "dataset: episodes, train_users and max_steps must be >= 1");
    dataset.script.Validate();
    dataset.profiles.Validate();
    Require(vae.epochs >= 0 && vae.lr > 0.0 && vae.batch >= 1 && vae.frame_stride >= 1 &&
                vae.hidden >= 1 && vae.kl_weight >= 0.0,
            "vae: invalid training settings");
    hppn.Validate();
    Require(hppn.HiddenSize() == policy::kHiddenFeatures,
            "hppn: hidden layers must total " + std::to_string(policy::kHiddenFeatures));
    baseline.Validate();
    policy.cmaes.Validate();
    Require(policy.max_generations >= 1 && policy.plateau_window >= 0 &&
                policy.episodes_per_candidate >= 1 && policy.checkpoint_every >= 0 &&
                policy.validation_goals >= 0,
            "policy: invalid optimization budget");
    Require(policy.goals.length > 0.0 && policy.goals.curvature_min > 0.0 &&
                policy.goals.curvature_max >= policy.goals.curvature_min,
            "policy: invalid goal sampling");
    reward.Validate();
    Require(evaluation.users >= 1 && evaluation.trials >= 1 && evaluation.max_steps >= 1 &&
                evaluation.path_length > 0.0,
            "evaluation: users, trials, max_steps and path_length must be positive");
    Require(evaluation.first_user_id >= dataset.train_users,
            "evaluation: user ids must not overlap training user ids");
  } catch (const Error& e) {
    if (e.code() == ErrorCode::kConfig) throw;
    ConfigError(e.what());
  }
}

PipelineConfig ParseConfig(const Json& json) {
  PipelineConfig c;
  Reader r(json, "");
  if (json.find("schema_version") == json.end()) ConfigError("schema_version is required");
  Visit(r, c);
  r.Finish();
  c.Validate();
  return c;
}

Json ConfigToJson(const PipelineConfig& config) {
  Json j;
  PipelineConfig copy = config;
  Writer w(j);
  Visit(w, copy);
  return j;
}

PipelineConfig LoadConfig(const std::string& path) {
  const std::string text = ReadFile(path);
  Json j;
  try {
    j = Json::parse(text);
  } catch (const Json::exception& e) {
    ConfigError(path + ": " + e.what());
  }
  return ParseConfig(j);
}

}  // namespace guidetrain::pipeline
