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

#ifndef DEIR_NOVELTY_EPISODIC_MEMORY_HPP_
#define DEIR_NOVELTY_EPISODIC_MEMORY_HPP_

#include <cstddef>
#include <span>
#include <vector>

namespace deir::novelty {

inline constexpr double kDefaultEpsilon = 1e-6;

/// Per-worker store of the observation and trajectory embeddings seen in the
/// current episode. Rows are kept contiguous for the nearest-neighbour scan.
class EpisodicMemory {
 public:
  EpisodicMemory(int obs_dim, int traj_dim);

  std::size_t size() const { return count_; }
  bool empty() const { return count_ == 0; }
  int obs_dim() const { return obs_dim_; }
  int traj_dim() const { return traj_dim_; }

  void clear() { count_ = 0; }
  void append(std::span<const float> e_obs, std::span<const float> e_traj);

  std::span<const float> obs(std::size_t i) const;
  std::span<const float> traj(std::size_t i) const;

  /// min_i |e_obs_i - e_obs_next|^2 / (|e_traj_i - e_traj_t| + epsilon); 0 when empty.
  double scaled_novelty(std::span<const float> e_obs_next, std::span<const float> e_traj_t, double epsilon) const;

  /// min_i |e_obs_i - e_obs_next|^2; 0 when empty.
  double plain_novelty(std::span<const float> e_obs_next) const;

 private:
  int obs_dim_;
  int traj_dim_;
  std::size_t count_ = 0;
  std::vector<float> obs_;
  std::vector<float> traj_;
};

/// Squared Euclidean distance accumulated in double in index order.
double squared_distance(std::span<const float> a, std::span<const float> b);

/// Reward for the transition into e_obs_next, then the memory update: cleared
/// when the transition is terminal, otherwise (e_obs_next, e_traj_t) is added.
double intrinsic_reward(std::span<const float> e_obs_next, std::span<const float> e_traj_t, EpisodicMemory& memory,
                        bool terminal, double epsilon = kDefaultEpsilon);

/// Same lifecycle as intrinsic_reward with the trajectory scaling removed.
double plain_novelty_reward(std::span<const float> e_obs_next, std::span<const float> e_traj_t,
                            EpisodicMemory& memory, bool terminal);

}  // namespace deir::novelty

#endif  // DEIR_NOVELTY_EPISODIC_MEMORY_HPP_
