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

#ifndef DEIR_PPO_BUFFER_HPP_
#define DEIR_PPO_BUFFER_HPP_

#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "deir/nn/tensor.hpp"

namespace deir::ppo {

using nn::Index;
using MatrixF = nn::Matrix<float>;

class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// On-policy storage for n_workers x n_steps transitions. Row index is
/// worker * n_steps + step, so each worker's segment is contiguous.
struct RolloutBuffer {
  int n_workers = 0;
  int n_steps = 0;
  int obs_size = 0;

  MatrixF obs;                   // o_t as fed to the networks
  MatrixF next_obs;              // o_{t+1}; the terminal observation when done
  std::vector<std::uint8_t> raw_next;  // integer o_{t+1}, obs_size bytes per row
  std::vector<int> actions;
  std::vector<float> log_probs;
  std::vector<float> values;
  std::vector<float> ext_rewards;
  std::vector<float> ir_raw;
  std::vector<float> ir_normalized;
  std::vector<std::uint8_t> dones;           // episode ended with this transition
  std::vector<std::uint8_t> episode_starts;  // o_t is the first observation of an episode
  MatrixF policy_hidden;         // policy GRU state before step t
  MatrixF model_hidden;          // intrinsic-model GRU state before o_t was embedded
  std::vector<float> bootstrap_values;  // V(o_T) per worker
  std::vector<float> advantages;
  std::vector<float> returns;

  bool full = false;
  bool consumed = false;

  RolloutBuffer() = default;
  RolloutBuffer(int workers, int steps, int obs_dim, int policy_hidden_size, int model_hidden_size);

  int size() const { return n_workers * n_steps; }
  int index(int worker, int step) const { return worker * n_steps + step; }
  std::span<const std::uint8_t> raw_next_row(int i) const {
    return {raw_next.data() + static_cast<std::size_t>(i) * obs_size, static_cast<std::size_t>(obs_size)};
  }
  /// Marks the buffer empty for the next collection.
  void clear();
};

/// coef_E * r_E + beta * r_I.
inline double combine_rewards(double r_ext, double r_int_normalized, double coef_ext, double beta) {
  return coef_ext * r_ext + beta * r_int_normalized;
}

struct GaeResult {
  std::vector<float> advantages;
  std::vector<float> returns;
};

/// Generalized advantage estimation over one worker's segment. dones[t]
/// marks a terminal transition; `bootstrap` is V of the observation after
/// the last step.
GaeResult compute_gae(std::span<const float> rewards, std::span<const float> values,
                      std::span<const std::uint8_t> dones, float bootstrap, double gamma, double lambda);

/// EMA of batch mean and batch standard deviation; starts at (0, 1).
struct RunningNorm {
  double mean = 0.0;
  double std = 1.0;
  double momentum = 0.9;

  void update(std::span<const float> batch);
  float apply(float x) const;
};

/// Normalizes with the current statistics, then folds the batch in.
std::vector<float> normalize_then_update(std::span<const float> batch, RunningNorm& state);

/// Folds the batch in, then normalizes with the blended statistics.
std::vector<float> update_then_normalize(std::span<const float> batch, RunningNorm& state);

}  // namespace deir::ppo

#endif  // DEIR_PPO_BUFFER_HPP_
