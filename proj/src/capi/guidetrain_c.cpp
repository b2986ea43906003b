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

// No exception crosses this boundary: every entry point funnels through
// Guard, which maps guidetrain::Error codes onto gt_status one to one.

#include "guidetrain/guidetrain.h"

#include <cstring>
#include <new>
#include <string>
#include <vector>

#include "guidetrain/metrics.hpp"
#include "guidetrain/pipeline.hpp"

struct gt_config {
  guidetrain::pipeline::PipelineConfig value;
};

struct gt_run {
  guidetrain::pipeline::RunContext ctx;
};

namespace {

using guidetrain::ErrorCode;

thread_local std::string g_last_error;

gt_status Set(gt_status status, const std::string& message) {
  g_last_error = message;
  return status;
}

template <typename Fn>
gt_status Guard(Fn&& fn) {
  g_last_error.clear();
  try {
    fn();
    return GT_OK;
  } catch (const guidetrain::Error& e) {
    return Set(static_cast<gt_status>(static_cast<int>(e.code())), e.what());
  } catch (const std::bad_alloc&) {
    return Set(GT_ERR_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return Set(GT_ERR_INTERNAL, e.what());
  } catch (...) {
    return Set(GT_ERR_INTERNAL, "unknown exception");
  }
}

#define GT_REQUIRE_ARG(cond, what) \
  if (!(cond)) return Set(GT_ERR_INVALID_ARGUMENT, what)

char* CopyString(const std::string& s) {
  char* out = new char[s.size() + 1];
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

std::vector<guidetrain::geometry::Point2> Points(const double* xy, size_t count) {
  std::vector<guidetrain::geometry::Point2> pts(count);
  for (size_t i = 0; i < count; ++i) pts[i] = {xy[2 * i], xy[2 * i + 1]};
  return pts;
}

}  // namespace

extern "C" {

const char* gt_status_name(gt_status status) {
  if (status == GT_OK) return "ok";
  if (status >= GT_ERR_INVALID_ARGUMENT && status <= GT_ERR_INTERNAL) {
    return guidetrain::ErrorCodeName(static_cast<ErrorCode>(status));
  }
  return "unknown";
}

const char* gt_last_error(void) { return g_last_error.c_str(); }

const char* gt_version(void) { return "1.0.0"; }

void gt_string_free(char* text) { delete[] text; }

gt_status gt_config_create_default(gt_config** out) {
  GT_REQUIRE_ARG(out != nullptr, "gt_config_create_default: out is null");
  return Guard([&] { *out = new gt_config{}; });
}

gt_status gt_config_load(const char* path, gt_config** out) {
  GT_REQUIRE_ARG(path != nullptr && out != nullptr, "gt_config_load: null argument");
  return Guard([&] {
    *out = new gt_config{guidetrain::pipeline::LoadConfig(path)};
  });
}

gt_status gt_config_parse(const char* json_text, gt_config** out) {
  GT_REQUIRE_ARG(json_text != nullptr && out != nullptr, "gt_config_parse: null argument");
  return Guard([&] {
    guidetrain::Json j;
    try {
      j = guidetrain::Json::parse(json_text);
    } catch (const guidetrain::Json::exception& e) {
      guidetrain::Fail(ErrorCode::kConfig, std::string("config: ") + e.what());
    }
    *out = new gt_config{guidetrain::pipeline::ParseConfig(j)};
  });
}

gt_status gt_config_set_seed(gt_config* config, uint64_t seed) {
  GT_REQUIRE_ARG(config != nullptr, "gt_config_set_seed: config is null");
  config->value.seed = seed;
  return GT_OK;
}

gt_status gt_config_set_jobs(gt_config* config, int jobs) {
  GT_REQUIRE_ARG(config != nullptr, "gt_config_set_jobs: config is null");
  GT_REQUIRE_ARG(jobs >= 1, "gt_config_set_jobs: jobs must be >= 1");
  config->value.jobs = jobs;
  return GT_OK;
}

gt_status gt_config_seed(const gt_config* config, uint64_t* out) {
  GT_REQUIRE_ARG(config != nullptr && out != nullptr, "gt_config_seed: null argument");
  *out = config->value.seed;
  return GT_OK;
}

gt_status gt_config_to_json(const gt_config* config, char** out_text) {
  GT_REQUIRE_ARG(config != nullptr && out_text != nullptr, "gt_config_to_json: null argument");
  return Guard([&] {
    *out_text = CopyString(guidetrain::pipeline::ConfigToJson(config->value).dump(2));
  });
}

void gt_config_free(gt_config* config) { delete config; }

gt_status gt_run_create(const gt_config* config, const char* out_dir, gt_log_fn log,
                        void* user_data, gt_run** out) {
  GT_REQUIRE_ARG(config != nullptr && out_dir != nullptr && out != nullptr,
                 "gt_run_create: null argument");
  GT_REQUIRE_ARG(out_dir[0] != '\0', "gt_run_create: out_dir is empty");
  return Guard([&] {
    config->value.Validate();
    auto* run = new gt_run{};
    run->ctx.config = config->value;
    run->ctx.out = out_dir;
    if (log != nullptr) {
      run->ctx.log = [log, user_data](const std::string& m) { log(m.c_str(), user_data); };
    }
    *out = run;
  });
}

gt_status gt_run_stage(gt_run* run, gt_stage stage) {
  GT_REQUIRE_ARG(run != nullptr, "gt_run_stage: run is null");
  namespace p = guidetrain::pipeline;
  using guidetrain::metrics::RewardKind;
  return Guard([&] {
    const p::RunContext& ctx = run->ctx;
    switch (stage) {
      case GT_STAGE_DATAGEN: p::RunDatagen(ctx); return;
      case GT_STAGE_TRAIN_VAE: p::RunTrainVae(ctx); return;
      case GT_STAGE_TRAIN_HPPN: p::RunTrainHppn(ctx); return;
      case GT_STAGE_TRAIN_BASELINE: p::RunTrainBaseline(ctx); return;
      case GT_STAGE_TRAIN_POLICY_G_ONLY: p::RunTrainPolicy(ctx, RewardKind::kGOnly); return;
      case GT_STAGE_TRAIN_POLICY_G_PLUS_H: p::RunTrainPolicy(ctx, RewardKind::kGPlusH); return;
      case GT_STAGE_EVALUATE: p::RunEvaluate(ctx); return;
      case GT_STAGE_REPORT: p::RunReport(ctx); return;
      case GT_STAGE_ALL: p::RunAll(ctx); return;
    }
    guidetrain::Fail(ErrorCode::kInvalidArgument, "gt_run_stage: unknown stage");
  });
}

void gt_run_free(gt_run* run) { delete run; }

gt_status gt_discrete_frechet(const double* p, size_t p_count, const double* q,
                              size_t q_count, double* out) {
  GT_REQUIRE_ARG(p != nullptr && q != nullptr && out != nullptr,
                 "gt_discrete_frechet: null argument");
  GT_REQUIRE_ARG(p_count > 0 && q_count > 0, "gt_discrete_frechet: empty path");
  return Guard([&] {
    *out = guidetrain::metrics::DiscreteFrechet(Points(p, p_count), Points(q, q_count));
  });
}

gt_status gt_spectral_arc_length(const double* speed, size_t count, double sample_rate,
                                 double cutoff_freq, int pad_factor, double* out) {
  GT_REQUIRE_ARG(speed != nullptr && out != nullptr, "gt_spectral_arc_length: null argument");
  return Guard([&] {
    guidetrain::metrics::SalConfig cfg;
    cfg.sample_rate = sample_rate;
    cfg.cutoff_freq = cutoff_freq;
    cfg.pad_factor = pad_factor;
    cfg.Validate();
    *out = guidetrain::metrics::SpectralArcLength(std::span(speed, count), cfg);
  });
}

}  // extern "C"
