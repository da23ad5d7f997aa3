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

#ifndef DEIR_HARNESS_PROBE_HPP_
#define DEIR_HARNESS_PROBE_HPP_

#include <array>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string_view>
#include <vector>

#include "deir/env/grid_world.hpp"
#include "deir/harness/config.hpp"
#include "deir/novelty/models.hpp"
#include "deir/ppo/buffer.hpp"

namespace deir::harness {

using nn::Index;
using ppo::MatrixF;

enum class ProbeTask { KeyPicked, DoorOpened, DistKey, DistDoor, DistGoal };

inline constexpr std::array<ProbeTask, 5> kProbeTasks{ProbeTask::KeyPicked, ProbeTask::DoorOpened, ProbeTask::DistKey,
                                                      ProbeTask::DistDoor, ProbeTask::DistGoal};

std::string_view probe_task_name(ProbeTask task);

/// Binary tasks are scored with cross-entropy, distances with squared error.
inline bool is_binary(ProbeTask task) { return task == ProbeTask::KeyPicked || task == ProbeTask::DoorOpened; }

class ProbeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Per-step labels read from the full grid state.
struct ProbeLabels {
  bool key_picked = false;
  bool door_opened = false;
  double dist_key = 0.0;
  double dist_door = 0.0;
  double dist_goal = 0.0;

  double get(ProbeTask task) const;
};

/// Labels for `world`; `key_seen_carried` latches once the key was picked
/// up earlier in the episode. Distances are Manhattan distances divided by
/// the largest interior distance, so they lie in [0, 1].
ProbeLabels probe_labels(const env::GridWorld& world, bool key_seen_carried);

struct ProbeDataset {
  MatrixF obs;                          // one network input per visited step
  std::vector<std::uint8_t> starts;     // first step of an episode
  std::vector<int> episode;             // episode index of every row
  MatrixF labels;                       // rows x kProbeTasks.size()
  int episodes = 0;

  int size() const { return static_cast<int>(obs.rows()); }
};

/// Follows shortest-path plans from the solver, replanning every step and
/// taking a uniformly random action with probability `random_action`.
ProbeDataset collect_probe_data(const env::EnvSpec& spec, int episodes, double random_action, std::uint64_t seed);

/// Trajectory embeddings for every row, with the recurrent state reset at
/// each episode start. The encoder runs in evaluation mode.
MatrixF trajectory_embeddings(novelty::TrajectoryEncoder<float>& encoder, const ProbeDataset& data);

struct ProbeConfig {
  int hidden = 64;
  int epochs = 40;
  int minibatch = 128;
  double lr = 1e-3;
  double validation_fraction = 0.2;
  int min_rows = 200;
};

struct ProbeResult {
  std::array<double, 5> validation_loss{};
  int train_rows = 0;
  int validation_rows = 0;
};

/// Trains one single-hidden-layer head per task on the episodes of the
/// training split and reports the lowest validation loss seen over epochs.
/// Features are standardized with training-split statistics. Throws
/// ProbeError when fewer than min_rows rows or fewer than two episodes.
ProbeResult probe_embeddings(const MatrixF& features, const MatrixF& labels, std::span<const int> episode,
                             const ProbeConfig& cfg, std::mt19937_64& rng);

struct ProbeComparison {
  ProbeResult trained;
  ProbeResult random;
  std::int64_t frames = 0;
};

/// Trains `cfg` (which must use a trajectory model) for its frame budget,
/// then probes its frozen encoder and a freshly initialized encoder of the
/// same shape on scripted data from the same task.
ProbeComparison compare_probes(const ExperimentConfig& cfg, std::uint64_t seed, int episodes,
                               const ProbeConfig& probe);

}  // namespace deir::harness

#endif  // DEIR_HARNESS_PROBE_HPP_
