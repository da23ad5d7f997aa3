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

#ifndef DEIR_PPO_ROLLOUT_HPP_
#define DEIR_PPO_ROLLOUT_HPP_

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "deir/env/grid_world.hpp"
#include "deir/ppo/buffer.hpp"
#include "deir/ppo/policy.hpp"

namespace deir::ppo {

/// Producer of intrinsic rewards driven step by step during collection.
class IntrinsicSource {
 public:
  virtual ~IntrinsicSource() = default;

  /// Width of the recurrent state stored with each transition (0 if none).
  virtual int hidden_size() const = 0;
  /// First observation of every worker, before any step.
  virtual void begin(const MatrixF& obs) = 0;
  /// Per-worker state before the current observation was embedded.
  virtual const MatrixF& hidden() const = 0;
  /// Rewards for the transitions into next_obs (the terminal observation
  /// where dones is set). reset_obs rows are only read for finished workers.
  virtual void step(const MatrixF& next_obs, std::span<const std::uint8_t> raw_next, std::span<const int> actions,
                    std::span<const std::uint8_t> dones, const MatrixF& reset_obs, std::span<float> rewards) = 0;
};

struct EpisodeRecord {
  int worker = 0;
  double episode_return = 0.0;
  int length = 0;
  bool reached_goal = false;
};

/// Collection state that persists across rollouts.
struct RolloutState {
  MatrixF obs;
  MatrixF hidden;
  std::vector<std::uint8_t> episode_start;
  std::vector<double> running_return;
  std::vector<int> running_length;
  std::vector<env::StateId> state_ids;  // filled per rollout, buffer row order
  std::vector<EpisodeRecord> finished;  // cleared at the start of each rollout
  std::int64_t frames = 0;
  bool started = false;
};

/// Resets every environment and the intrinsic source.
void start_rollouts(std::vector<env::Environment>& envs, RolloutState& state, int policy_hidden,
                    IntrinsicSource* source);

/// Fills `buffer` with n_workers x n_steps transitions. Raw intrinsic rewards
/// go to buffer.ir_raw; normalization is left to the caller.
void collect_rollouts(RecurrentPolicy& policy, std::vector<env::Environment>& envs, RolloutState& state,
                      RolloutBuffer& buffer, IntrinsicSource* source, std::mt19937_64& rng);

}  // namespace deir::ppo

#endif  // DEIR_PPO_ROLLOUT_HPP_
