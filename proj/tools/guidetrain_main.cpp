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

// Command-line front end. Talks to the library only through the C API.
// Failures print exactly one line to stderr:
//   error code=<status name> message="<first line of the message>"
// and exit with the numeric status.

#include <cstdint>
#include <cstdio>
#include <iostream>
#include <memory>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "guidetrain/guidetrain.h"

namespace {

std::string Quote(const std::string& s) {
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '\n') break;
    if (ch == '"' || ch == '\\') out += '\\';
    out += ch;
  }
  return out + "\"";
}

int Report(gt_status status, const std::string& message) {
  std::cerr << "error code=" << gt_status_name(status) << " message=" << Quote(message)
            << std::endl;
  return static_cast<int>(status);
}

int Check(gt_status status) {
  return status == GT_OK ? 0 : Report(status, gt_last_error());
}

void LogLine(const char* message, void* /*user*/) {
  std::fprintf(stdout, "%s\n", message);
  std::fflush(stdout);
}

struct ConfigDeleter {
  void operator()(gt_config* c) const { gt_config_free(c); }
};
struct RunDeleter {
  void operator()(gt_run* r) const { gt_run_free(r); }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Train and evaluate robotic-guide policies on a learned human model"};
  app.require_subcommand(1);
  // Global flags may appear before or after the subcommand.
  app.fallthrough();
  std::string config_path;
  std::optional<uint64_t> seed;
  std::optional<int> jobs;
  std::string out = "run";
  bool quiet = false;
  app.add_option("--config", config_path, "JSON configuration file (defaults when omitted)");
  app.add_option("--seed", seed, "Root seed, overrides the configuration");
  app.add_option("--out", out, "Run directory")->capture_default_str();
  app.add_option("--jobs", jobs, "Worker threads, overrides the configuration")
      ->check(CLI::PositiveNumber);
  app.add_flag("--quiet", quiet, "Suppress progress messages");

  struct Command {
    const char* name;
    const char* help;
    gt_stage stage;
  };
  const Command commands[] = {
      {"datagen", "Roll out scripted episodes in the synthetic world", GT_STAGE_DATAGEN},
      {"train-vae", "Train the depth-image VAE", GT_STAGE_TRAIN_VAE},
      {"train-hppn", "Train the human-robot prediction network", GT_STAGE_TRAIN_HPPN},
      {"train-baseline", "Train the supervised LSTM baseline", GT_STAGE_TRAIN_BASELINE},
      {"evaluate", "Run all policies on held-out users in the synthetic world",
       GT_STAGE_EVALUATE},
      {"report", "Render SVG figures from the evaluation CSVs", GT_STAGE_REPORT},
      {"run-all", "Run every stage in order", GT_STAGE_ALL},
  };
  gt_stage stage = GT_STAGE_ALL;
  for (const Command& c : commands) {
    app.add_subcommand(c.name, c.help)->callback([&stage, s = c.stage] { stage = s; });
  }
  std::string reward;
  CLI::App* train_policy =
      app.add_subcommand("train-policy", "Optimize the linear policy with CMA-ES");
  train_policy->add_option("--reward", reward, "Reward definition")
      ->required()
      ->check(CLI::IsMember({"g-only", "g-plus-h"}));
  train_policy->callback([&] {
    stage = reward == "g-only" ? GT_STAGE_TRAIN_POLICY_G_ONLY : GT_STAGE_TRAIN_POLICY_G_PLUS_H;
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return Report(GT_ERR_INVALID_ARGUMENT, e.what());
  }

  gt_config* raw_config = nullptr;
  const gt_status load = config_path.empty() ? gt_config_create_default(&raw_config)
                                             : gt_config_load(config_path.c_str(), &raw_config);
  if (int rc = Check(load)) return rc;
  std::unique_ptr<gt_config, ConfigDeleter> config(raw_config);
  if (seed) {
    if (int rc = Check(gt_config_set_seed(config.get(), *seed))) return rc;
  }
  if (jobs) {
    if (int rc = Check(gt_config_set_jobs(config.get(), *jobs))) return rc;
  }

  gt_run* raw_run = nullptr;
  if (int rc = Check(gt_run_create(config.get(), out.c_str(), quiet ? nullptr : LogLine,
                                   nullptr, &raw_run))) {
    return rc;
  }
  std::unique_ptr<gt_run, RunDeleter> run(raw_run);
  return Check(gt_run_stage(run.get(), stage));
}
