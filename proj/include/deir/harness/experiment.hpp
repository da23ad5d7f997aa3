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

#ifndef DEIR_HARNESS_EXPERIMENT_HPP_
#define DEIR_HARNESS_EXPERIMENT_HPP_

#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "deir/harness/config.hpp"
#include "deir/harness/metrics.hpp"
#include "deir/nn/adam.hpp"
#include "deir/novelty/module.hpp"
#include "deir/ppo/buffer.hpp"
#include "deir/ppo/policy.hpp"
#include "deir/ppo/rollout.hpp"

namespace deir::harness {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Independent stream seed derived from (seed, stream, index).
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream, std::uint64_t index = 0);

/// One seed of one configuration: environments, agent, intrinsic-reward
/// module and every piece of state needed to continue bit-exactly.
class Experiment {
 public:
  Experiment(const ExperimentConfig& cfg, std::uint64_t seed);

  /// Collect, compute intrinsic rewards, normalize, GAE, PPO epochs and
  /// model epochs. Returns the row appended to rows().
  const MetricRow& iterate();
  bool finished() const;

  const ExperimentConfig& config() const { return cfg_; }
  std::uint64_t seed() const { return seed_; }
  std::int64_t frames() const { return state_.frames; }
  const std::vector<MetricRow>& rows() const { return rows_; }
  ppo::RecurrentPolicy& policy() { return policy_; }
  novelty::NoveltyModule& novelty() { return novelty_; }
  std::vector<env::Environment>& environments() { return envs_; }
  /// Trace rows written after the most recent iteration (run.trace_ir).
  std::string trace_csv() const;

  /// Writes <dir>/state.blob and <dir>/meta.json.
  void save(const std::string& dir);
  /// Rebuilds an experiment from a checkpoint directory. Nothing is
  /// returned unless every section validated.
  static std::unique_ptr<Experiment> load(const std::string& dir);

 private:
  void restore(const std::string& dir);

  ExperimentConfig cfg_;
  std::uint64_t seed_;
  std::vector<env::Environment> envs_;
  std::mt19937_64 init_rng_;
  ppo::RecurrentPolicy policy_;
  nn::AdamState<float> policy_opt_;
  novelty::NoveltyModule novelty_;
  ppo::RolloutBuffer buffer_;
  ppo::RolloutState state_;
  ppo::RunningNorm adv_norm_;
  std::mt19937_64 act_rng_;
  std::mt19937_64 train_rng_;
  ExplorationTracker tracker_;
  std::deque<double> recent_returns_;
  std::deque<std::uint8_t> recent_success_;
  std::vector<MetricRow> rows_;
  std::string last_trace_;
  double wall_seconds_ = 0.0;
};

using ProgressFn = std::function<void(std::uint64_t seed, const MetricRow& row)>;

/// Runs every seed of cfg to its frame budget, checkpointing into
/// <out>/seed_<s>/ when enabled, then emits the CSV outputs.
std::map<std::uint64_t, std::vector<MetricRow>> run_experiment(const ExperimentConfig& cfg,
                                                               const ProgressFn& progress = {});

}  // namespace deir::harness

#endif  // DEIR_HARNESS_EXPERIMENT_HPP_
