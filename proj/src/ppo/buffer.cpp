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

#include "deir/ppo/buffer.hpp"

#include <algorithm>
#include <cmath>

namespace deir::ppo {

RolloutBuffer::RolloutBuffer(int workers, int steps, int obs_dim, int policy_hidden_size, int model_hidden_size)
    : n_workers(workers), n_steps(steps), obs_size(obs_dim) {
  if (workers <= 0 || steps <= 0 || obs_dim <= 0) throw std::invalid_argument("RolloutBuffer: empty dimensions");
  const auto n = static_cast<std::size_t>(size());
  obs = MatrixF::Zero(size(), obs_dim);
  next_obs = MatrixF::Zero(size(), obs_dim);
  raw_next.assign(n * static_cast<std::size_t>(obs_dim), 0);
  actions.assign(n, 0);
  log_probs.assign(n, 0.0f);
  values.assign(n, 0.0f);
  ext_rewards.assign(n, 0.0f);
  ir_raw.assign(n, 0.0f);
  ir_normalized.assign(n, 0.0f);
  dones.assign(n, 0);
  episode_starts.assign(n, 0);
  policy_hidden = MatrixF::Zero(size(), policy_hidden_size);
  model_hidden = MatrixF::Zero(size(), std::max(model_hidden_size, 0));
  bootstrap_values.assign(static_cast<std::size_t>(workers), 0.0f);
  advantages.assign(n, 0.0f);
  returns.assign(n, 0.0f);
}

void RolloutBuffer::clear() {
  full = false;
  consumed = false;
}

GaeResult compute_gae(std::span<const float> rewards, std::span<const float> values,
                      std::span<const std::uint8_t> dones, float bootstrap, double gamma, double lambda) {
  const std::size_t n = rewards.size();
  if (values.size() != n || dones.size() != n) throw std::invalid_argument("compute_gae: length mismatch");
  GaeResult out{std::vector<float>(n), std::vector<float>(n)};
  double next_adv = 0.0;
  for (std::size_t k = n; k-- > 0;) {
    const double next_value = k + 1 < n ? values[k + 1] : bootstrap;
    const double live = dones[k] ? 0.0 : 1.0;
    const double delta = rewards[k] + gamma * next_value * live - values[k];
    next_adv = delta + gamma * lambda * live * next_adv;
    out.advantages[k] = static_cast<float>(next_adv);
    out.returns[k] = static_cast<float>(next_adv + values[k]);
  }
  return out;
}

void RunningNorm::update(std::span<const float> batch) {
  if (batch.empty()) return;
  double sum = 0.0;
  for (float x : batch) sum += x;
  const double mu = sum / static_cast<double>(batch.size());
  double sq = 0.0;
  for (float x : batch) sq += (x - mu) * (x - mu);
  const double sd = std::sqrt(sq / static_cast<double>(batch.size()));
  mean = momentum * mean + (1.0 - momentum) * mu;
  std = momentum * std + (1.0 - momentum) * sd;
}

float RunningNorm::apply(float x) const { return static_cast<float>((x - mean) / std::max(std, 1e-8)); }

std::vector<float> normalize_then_update(std::span<const float> batch, RunningNorm& state) {
  std::vector<float> out(batch.size());
  std::transform(batch.begin(), batch.end(), out.begin(), [&](float x) { return state.apply(x); });
  state.update(batch);
  return out;
}

std::vector<float> update_then_normalize(std::span<const float> batch, RunningNorm& state) {
  state.update(batch);
  std::vector<float> out(batch.size());
  std::transform(batch.begin(), batch.end(), out.begin(), [&](float x) { return state.apply(x); });
  return out;
}

}  // namespace deir::ppo
