// Copyright 2026 The DEIR Lab Authors.
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

#ifndef DEIR_HARNESS_CONFIG_HPP_
#define DEIR_HARNESS_CONFIG_HPP_

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "deir/env/grid_world.hpp"
#include "deir/novelty/module.hpp"
#include "deir/ppo/policy.hpp"
#include "deir/ppo/ppo.hpp"

namespace deir::harness {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct ExperimentConfig {
  env::EnvSpec env;
  ppo::PpoConfig ppo;
  ppo::PolicyConfig policy;
  novelty::NoveltyConfig novelty;
  int n_workers = 16;
  int n_steps = 512;
  std::int64_t total_frames = 1'000'000;
  std::vector<std::uint64_t> seeds{0};
  std::string out_dir = "runs";
  int checkpoint_every = 0;  // rollouts between checkpoints, 0 disables
  int return_window = 100;
  /// Stop a seed once the windowed return reaches this value (0 disables).
  double stop_return = 0.0;
  bool trace_ir = false;
};

/// Table of defaults used by the desk-scale experiments: MiniGrid
/// hyperparameters with narrower networks.
ExperimentConfig default_config();

/// Sets one namespaced key (env.*, ppo.*, deir.*, run.*). Throws ConfigError
/// on unknown keys or malformed values.
void apply_setting(ExperimentConfig& cfg, const std::string& key, const std::string& value);

/// Parses flat "key = value" lines; '#' starts a comment.
std::map<std::string, std::string> parse_config_text(const std::string& text);

ExperimentConfig load_config_file(const std::string& path);

/// Applies `settings` on top of `base`, then validates.
ExperimentConfig apply_settings(ExperimentConfig base, const std::map<std::string, std::string>& settings);

/// Throws ConfigError when a value is outside its documented range.
void validate(const ExperimentConfig& cfg);

/// Every key with its current value, one "key = value" per line.
std::string to_text(const ExperimentConfig& cfg);

}  // namespace deir::harness

#endif  // DEIR_HARNESS_CONFIG_HPP_
