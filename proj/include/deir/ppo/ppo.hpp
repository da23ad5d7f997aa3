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

#ifndef DEIR_PPO_PPO_HPP_
#define DEIR_PPO_PPO_HPP_

#include <random>
#include <span>
#include <vector>

#include "deir/nn/adam.hpp"
#include "deir/ppo/buffer.hpp"
#include "deir/ppo/policy.hpp"

namespace deir::ppo {

struct PpoConfig {
  double gamma = 0.99;
  double gae_lambda = 0.95;
  double clip_range = 0.2;
  double ent_coef = 1e-2;
  double value_coef = 0.5;
  double max_grad_norm = 0.5;
  int epochs = 4;
  int minibatch = 512;
  /// Sequence length for truncated backpropagation through time.
  int bptt_len = 512;
  double adv_momentum = 0.9;
  double coef_ext = 1.0;
  double beta = 1e-2;
  nn::AdamConfig adam;
};

struct LossStats {
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double clip_fraction = 0.0;
  double approx_kl = 0.0;
  double grad_norm = 0.0;
};

/// Per-sample data that the clipped objective treats as constants.
template <typename Scalar>
struct PpoTargets {
  std::span<const int> actions;
  std::span<const float> old_log_probs;
  std::span<const float> advantages;
  std::span<const float> returns;
};

/// Mean of min(rho A, clip(rho, 1 - c, 1 + c) A) and of rho A; the first
/// never exceeds the second.
struct Surrogates {
  double clipped = 0.0;
  double unclipped = 0.0;
};
Surrogates surrogate_objectives(std::span<const float> log_probs, std::span<const float> old_log_probs,
                                std::span<const float> advantages, double clip_range);

/// -clipped surrogate + value_coef * MSE(V, returns) - ent_coef * entropy,
/// with an analytic backward into logits (n x A) and values (n x 1).
template <typename Scalar>
nn::Var<Scalar> ppo_loss(nn::Var<Scalar> logits, nn::Var<Scalar> values, const PpoTargets<Scalar>& targets,
                         double clip_range, double value_coef, double ent_coef, LossStats* stats = nullptr);

/// Sums rewards, runs GAE per worker and normalizes the advantages.
void prepare_update(RolloutBuffer& buffer, const PpoConfig& cfg, RunningNorm& adv_norm);

/// Clipped-surrogate epochs over shuffled worker-segment chunks. The buffer
/// must be full and not yet consumed; it is marked consumed afterwards.
LossStats ppo_update(RecurrentPolicy& policy, nn::AdamState<float>& optimizer, RolloutBuffer& buffer,
                     const PpoConfig& cfg, std::mt19937_64& rng);

}  // namespace deir::ppo

#endif  // DEIR_PPO_PPO_HPP_
