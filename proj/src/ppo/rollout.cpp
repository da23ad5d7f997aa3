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

#include "deir/ppo/rollout.hpp"

#include <algorithm>

namespace deir::ppo {

namespace {

void copy_input(const std::vector<float>& input, MatrixF& m, Index row) {
  m.row(row) = Eigen::Map<const nn::RowVector<float>>(input.data(), static_cast<Index>(input.size()));
}

}  // namespace

void start_rollouts(std::vector<env::Environment>& envs, RolloutState& state, int policy_hidden,
                    IntrinsicSource* source) {
  if (envs.empty()) throw ContractError("start_rollouts: no environments");
  const auto n = static_cast<Index>(envs.size());
  state.obs = MatrixF(n, envs.front().input_size());
  state.hidden = MatrixF::Zero(n, policy_hidden);
  state.episode_start.assign(envs.size(), 1);
  state.running_return.assign(envs.size(), 0.0);
  state.running_length.assign(envs.size(), 0);
  state.finished.clear();
  for (Index w = 0; w < n; ++w) copy_input(envs[static_cast<std::size_t>(w)].reset(), state.obs, w);
  if (source != nullptr) source->begin(state.obs);
  state.started = true;
}

void collect_rollouts(RecurrentPolicy& policy, std::vector<env::Environment>& envs, RolloutState& state,
                      RolloutBuffer& buffer, IntrinsicSource* source, std::mt19937_64& rng) {
  if (!state.started) throw ContractError("collect_rollouts: start_rollouts was not called");
  if (buffer.full && !buffer.consumed) throw ContractError("collect_rollouts: buffer holds an unused rollout");
  const int workers = static_cast<int>(envs.size());
  if (buffer.n_workers != workers || buffer.obs_size != envs.front().input_size())
    throw ContractError("collect_rollouts: buffer shape does not match the environments");
  buffer.clear();
  std::fill(buffer.ir_raw.begin(), buffer.ir_raw.end(), 0.0f);
  state.finished.clear();
  state.state_ids.assign(static_cast<std::size_t>(buffer.size()), 0);
  const int obs_size = buffer.obs_size;

  MatrixF next_obs(workers, obs_size);
  MatrixF reset_obs = MatrixF::Zero(workers, obs_size);
  std::vector<std::uint8_t> raw_next(static_cast<std::size_t>(workers * obs_size));
  std::vector<std::uint8_t> dones(static_cast<std::size_t>(workers));
  std::vector<float> intrinsic(static_cast<std::size_t>(workers), 0.0f);

  for (int step = 0; step < buffer.n_steps; ++step) {
    for (int w = 0; w < workers; ++w) {
      const int i = buffer.index(w, step);
      buffer.obs.row(i) = state.obs.row(w);
      buffer.policy_hidden.row(i) = state.hidden.row(w);
      buffer.episode_starts[static_cast<std::size_t>(i)] = state.episode_start[static_cast<std::size_t>(w)];
      if (source != nullptr && source->hidden_size() > 0) buffer.model_hidden.row(i) = source->hidden().row(w);
      state.state_ids[static_cast<std::size_t>(i)] = env::state_id(envs[static_cast<std::size_t>(w)].world());
    }
    RecurrentPolicy::Decision decision = policy.act(state.obs, state.hidden, rng);
    for (int w = 0; w < workers; ++w) {
      const auto uw = static_cast<std::size_t>(w);
      env::Environment& e = envs[uw];
      const env::StepResult result = e.step(static_cast<env::Action>(decision.actions[uw]));
      copy_input(e.input(), next_obs, w);
      std::copy(e.raw().data.begin(), e.raw().data.end(), raw_next.begin() + static_cast<std::ptrdiff_t>(uw * obs_size));
      dones[uw] = result.done ? 1 : 0;
      state.running_return[uw] += result.reward;
      state.running_length[uw] += 1;

      const int i = buffer.index(w, step);
      const auto ui = static_cast<std::size_t>(i);
      buffer.next_obs.row(i) = next_obs.row(w);
      std::copy(e.raw().data.begin(), e.raw().data.end(),
                buffer.raw_next.begin() + static_cast<std::ptrdiff_t>(ui * static_cast<std::size_t>(obs_size)));
      buffer.actions[ui] = decision.actions[uw];
      buffer.log_probs[ui] = decision.log_probs[uw];
      buffer.values[ui] = decision.values[uw];
      buffer.ext_rewards[ui] = static_cast<float>(result.reward);
      buffer.dones[ui] = dones[uw];

      if (result.done) {
        state.finished.push_back({w, state.running_return[uw], state.running_length[uw], result.reached_goal});
        state.running_return[uw] = 0.0;
        state.running_length[uw] = 0;
        copy_input(e.reset(), reset_obs, w);
        decision.hidden.row(w).setZero();
      }
      state.episode_start[uw] = dones[uw];
    }
    if (source != nullptr) {
      source->step(next_obs, raw_next, decision.actions, dones, reset_obs, intrinsic);
      for (int w = 0; w < workers; ++w)
        buffer.ir_raw[static_cast<std::size_t>(buffer.index(w, step))] = intrinsic[static_cast<std::size_t>(w)];
    }
    for (int w = 0; w < workers; ++w) state.obs.row(w) = dones[static_cast<std::size_t>(w)] ? reset_obs.row(w) : next_obs.row(w);
    state.hidden = std::move(decision.hidden);
    state.frames += workers;
  }
  const std::vector<float> bootstrap = policy.value(state.obs, state.hidden);
  std::copy(bootstrap.begin(), bootstrap.end(), buffer.bootstrap_values.begin());
  buffer.full = true;
  buffer.consumed = false;
}

}  // namespace deir::ppo
