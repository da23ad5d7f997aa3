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

#include "deir/ppo/ppo.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace deir::ppo {

Surrogates surrogate_objectives(std::span<const float> log_probs, std::span<const float> old_log_probs,
                                std::span<const float> advantages, double clip_range) {
  Surrogates s;
  const std::size_t n = log_probs.size();
  if (n == 0 || old_log_probs.size() != n || advantages.size() != n)
    throw std::invalid_argument("surrogate_objectives: length mismatch");
  for (std::size_t i = 0; i < n; ++i) {
    const double ratio = std::exp(static_cast<double>(log_probs[i]) - old_log_probs[i]);
    const double clipped = std::clamp(ratio, 1.0 - clip_range, 1.0 + clip_range);
    s.unclipped += ratio * advantages[i];
    s.clipped += std::min(ratio * advantages[i], clipped * advantages[i]);
  }
  s.clipped /= static_cast<double>(n);
  s.unclipped /= static_cast<double>(n);
  return s;
}

template <typename Scalar>
nn::Var<Scalar> ppo_loss(nn::Var<Scalar> logits, nn::Var<Scalar> values, const PpoTargets<Scalar>& targets,
                         double clip_range, double value_coef, double ent_coef, LossStats* stats) {
  using M = nn::Matrix<Scalar>;
  const M& z = logits.value();
  const Index n = z.rows();
  const Index actions = z.cols();
  const auto un = static_cast<std::size_t>(n);
  if (n == 0 || values.rows() != n || values.cols() != 1 || targets.actions.size() != un ||
      targets.old_log_probs.size() != un || targets.advantages.size() != un || targets.returns.size() != un)
    throw nn::ShapeError("ppo_loss: batch shapes disagree");
  const M logp = nn::log_softmax_rows(z);
  const M p = logp.array().exp().matrix();
  M grad_logits(n, actions);
  M grad_values(n, 1);
  double policy = 0.0;
  double value = 0.0;
  double entropy = 0.0;
  double clipped_count = 0.0;
  double kl = 0.0;
  const double inv_n = 1.0 / static_cast<double>(n);
  for (Index i = 0; i < n; ++i) {
    const auto ui = static_cast<std::size_t>(i);
    const int a = targets.actions[ui];
    if (a < 0 || a >= actions) throw nn::ShapeError("ppo_loss: action out of range");
    const double adv = targets.advantages[ui];
    const double log_ratio = static_cast<double>(logp(i, a)) - targets.old_log_probs[ui];
    const double ratio = std::exp(log_ratio);
    const double clipped_ratio = std::clamp(ratio, 1.0 - clip_range, 1.0 + clip_range);
    const bool unclipped_active = ratio * adv <= clipped_ratio * adv;
    policy -= std::min(ratio * adv, clipped_ratio * adv);
    if (std::abs(ratio - 1.0) > clip_range) clipped_count += 1.0;
    kl += (ratio - 1.0) - log_ratio;
    double h = 0.0;
    for (Index k = 0; k < actions; ++k) h -= static_cast<double>(p(i, k)) * logp(i, k);
    entropy += h;
    const double d_logpi = unclipped_active ? -adv * ratio : 0.0;
    for (Index k = 0; k < actions; ++k) {
      const double pk = p(i, k);
      const double g_pi = d_logpi * ((k == a ? 1.0 : 0.0) - pk);
      const double g_ent = ent_coef * pk * (static_cast<double>(logp(i, k)) + h);
      grad_logits(i, k) = static_cast<Scalar>((g_pi + g_ent) * inv_n);
    }
    const double err = static_cast<double>(values.value()(i, 0)) - targets.returns[ui];
    value += err * err;
    grad_values(i, 0) = static_cast<Scalar>(2.0 * value_coef * err * inv_n);
  }
  policy *= inv_n;
  value *= inv_n;
  entropy *= inv_n;
  if (stats != nullptr) {
    stats->policy_loss = policy;
    stats->value_loss = value;
    stats->entropy = entropy;
    stats->clip_fraction = clipped_count * inv_n;
    stats->approx_kl = kl * inv_n;
  }
  M out(1, 1);
  out(0, 0) = static_cast<Scalar>(policy + value_coef * value - ent_coef * entropy);
  nn::Tape<Scalar>& tape = *logits.tape;
  return tape.record(std::move(out), {logits, values},
                     [lid = logits.id, vid = values.id, gl = std::move(grad_logits), gv = std::move(grad_values)](
                         nn::Tape<Scalar>& t, std::size_t self) {
                       const Scalar g = t.grad(self)(0, 0);
                       t.accumulate(lid, gl * g);
                       t.accumulate(vid, gv * g);
                     });
}

void prepare_update(RolloutBuffer& buffer, const PpoConfig& cfg, RunningNorm& adv_norm) {
  if (!buffer.full) throw ContractError("prepare_update: rollout buffer is not full");
  const auto steps = static_cast<std::size_t>(buffer.n_steps);
  std::vector<float> rewards(steps);
  std::vector<float> advantages(static_cast<std::size_t>(buffer.size()));
  for (int w = 0; w < buffer.n_workers; ++w) {
    const auto base = static_cast<std::size_t>(buffer.index(w, 0));
    for (std::size_t k = 0; k < steps; ++k)
      rewards[k] = static_cast<float>(
          combine_rewards(buffer.ext_rewards[base + k], buffer.ir_normalized[base + k], cfg.coef_ext, cfg.beta));
    const GaeResult gae = compute_gae(rewards, std::span(buffer.values).subspan(base, steps),
                                      std::span(buffer.dones).subspan(base, steps),
                                      buffer.bootstrap_values[static_cast<std::size_t>(w)], cfg.gamma, cfg.gae_lambda);
    std::copy(gae.advantages.begin(), gae.advantages.end(), advantages.begin() + static_cast<std::ptrdiff_t>(base));
    std::copy(gae.returns.begin(), gae.returns.end(), buffer.returns.begin() + static_cast<std::ptrdiff_t>(base));
  }
  adv_norm.momentum = cfg.adv_momentum;
  buffer.advantages = update_then_normalize(advantages, adv_norm);
}

LossStats ppo_update(RecurrentPolicy& policy, nn::AdamState<float>& optimizer, RolloutBuffer& buffer,
                     const PpoConfig& cfg, std::mt19937_64& rng) {
  if (!buffer.full) throw ContractError("ppo_update: rollout buffer is not full");
  if (buffer.consumed) throw ContractError("ppo_update: rollout buffer was already used for an update");
  const int length = std::min(cfg.bptt_len, buffer.n_steps);
  if (length <= 0 || buffer.n_steps % length != 0)
    throw std::invalid_argument("ppo_update: bptt_len must divide the rollout length");
  const int chunks_per_batch = std::max(1, cfg.minibatch / length);
  const int per_worker = buffer.n_steps / length;
  const int total_chunks = buffer.n_workers * per_worker;
  std::vector<int> chunk_start(static_cast<std::size_t>(total_chunks));
  for (int w = 0; w < buffer.n_workers; ++w)
    for (int c = 0; c < per_worker; ++c)
      chunk_start[static_cast<std::size_t>(w * per_worker + c)] = buffer.index(w, c * length);

  nn::Registry<float> params;
  policy.collect(params);
  LossStats total;
  int updates = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(chunk_start.begin(), chunk_start.end(), rng);
    for (int first = 0; first < total_chunks; first += chunks_per_batch) {
      const int chunks = std::min(chunks_per_batch, total_chunks - first);
      const int rows = chunks * length;
      MatrixF obs(rows, buffer.obs_size);
      MatrixF h0(chunks, policy.hidden_size());
      std::vector<std::uint8_t> starts(static_cast<std::size_t>(rows));
      std::vector<int> actions(static_cast<std::size_t>(rows));
      std::vector<float> old_logp(static_cast<std::size_t>(rows));
      std::vector<float> adv(static_cast<std::size_t>(rows));
      std::vector<float> ret(static_cast<std::size_t>(rows));
      for (int c = 0; c < chunks; ++c) {
        const int base = chunk_start[static_cast<std::size_t>(first + c)];
        h0.row(c) = buffer.policy_hidden.row(base);
        for (int k = 0; k < length; ++k) {
          const int src = base + k;
          const int dst = k * chunks + c;
          const auto s = static_cast<std::size_t>(src);
          const auto d = static_cast<std::size_t>(dst);
          obs.row(dst) = buffer.obs.row(src);
          starts[d] = buffer.episode_starts[s];
          actions[d] = buffer.actions[s];
          old_logp[d] = buffer.log_probs[s];
          adv[d] = buffer.advantages[s];
          ret[d] = buffer.returns[s];
        }
      }
      params.zero_grad();
      nn::Tape<float> tape;
      const auto out = policy.unroll(tape, obs, h0, starts, length, true);
      LossStats stats;
      const PpoTargets<float> targets{actions, old_logp, adv, ret};
      auto loss = ppo_loss(out.logits, out.values, targets, cfg.clip_range, cfg.value_coef, cfg.ent_coef, &stats);
      tape.backward(loss);
      stats.grad_norm = nn::clip_grad_norm(params, cfg.max_grad_norm);
      nn::adam_step(optimizer, params);
      total.policy_loss += stats.policy_loss;
      total.value_loss += stats.value_loss;
      total.entropy += stats.entropy;
      total.clip_fraction += stats.clip_fraction;
      total.approx_kl += stats.approx_kl;
      total.grad_norm += stats.grad_norm;
      ++updates;
    }
  }
  buffer.consumed = true;
  if (updates > 0) {
    const double inv = 1.0 / updates;
    total.policy_loss *= inv;
    total.value_loss *= inv;
    total.entropy *= inv;
    total.clip_fraction *= inv;
    total.approx_kl *= inv;
    total.grad_norm *= inv;
  }
  return total;
}

template nn::Var<float> ppo_loss<float>(nn::Var<float>, nn::Var<float>, const PpoTargets<float>&, double, double,
                                        double, LossStats*);
template nn::Var<double> ppo_loss<double>(nn::Var<double>, nn::Var<double>, const PpoTargets<double>&, double,
                                          double, double, LossStats*);

}  // namespace deir::ppo
