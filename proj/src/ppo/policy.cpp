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

#include "deir/ppo/policy.hpp"

#include <array>
#include <cmath>

namespace deir::ppo {

RecurrentPolicy::RecurrentPolicy(const PolicyConfig& cfg, std::mt19937_64& rng) : n_actions_(cfg.n_actions) {
  encoder_ = nn::ConvEncoder<float>("policy.cnn", cfg.encoder, rng);
  gru_ = nn::GruCell<float>("policy.gru", cfg.encoder.features, cfg.encoder.features, rng);
  const std::array<Index, 1> hidden{cfg.head_hidden};
  policy_head_ = nn::Mlp<float>("policy.pi", cfg.encoder.features, hidden, cfg.n_actions, cfg.encoder.norm, 0.01, rng);
  value_head_ = nn::Mlp<float>("policy.vf", cfg.encoder.features, hidden, 1, cfg.encoder.norm, 1.0, rng);
}

RecurrentPolicy::Outputs RecurrentPolicy::heads(nn::Tape<float>& t, nn::Var<float> h, bool training) {
  return {policy_head_(t, h, training), value_head_(t, h, training)};
}

int sample_categorical(std::span<const float> probs, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  const double u = uniform(rng);
  double acc = 0.0;
  for (std::size_t a = 0; a < probs.size(); ++a) {
    acc += probs[a];
    if (u < acc) return static_cast<int>(a);
  }
  return static_cast<int>(probs.size()) - 1;
}

RecurrentPolicy::Decision RecurrentPolicy::act(const MatrixF& obs, const MatrixF& hidden, std::mt19937_64& rng,
                                               bool greedy) {
  nn::Tape<float> t(false);
  nn::Var<float> h = gru_(t, encoder_(t, t.constant(obs), false), t.constant(hidden));
  Outputs out = heads(t, h, false);
  const MatrixF logp = nn::log_softmax_rows(out.logits.value());
  Decision d;
  const auto n = static_cast<std::size_t>(obs.rows());
  d.actions.resize(n);
  d.log_probs.resize(n);
  d.values.resize(n);
  std::vector<float> probs(static_cast<std::size_t>(n_actions_));
  for (Index i = 0; i < obs.rows(); ++i) {
    int a = 0;
    if (greedy) {
      logp.row(i).maxCoeff(&a);
    } else {
      for (int k = 0; k < n_actions_; ++k) probs[static_cast<std::size_t>(k)] = std::exp(logp(i, k));
      a = sample_categorical(probs, rng);
    }
    d.actions[static_cast<std::size_t>(i)] = a;
    d.log_probs[static_cast<std::size_t>(i)] = logp(i, a);
    d.values[static_cast<std::size_t>(i)] = out.values.value()(i, 0);
  }
  d.hidden = h.value();
  return d;
}

std::vector<float> RecurrentPolicy::value(const MatrixF& obs, const MatrixF& hidden) {
  nn::Tape<float> t(false);
  nn::Var<float> h = gru_(t, encoder_(t, t.constant(obs), false), t.constant(hidden));
  const MatrixF& v = value_head_(t, h, false).value();
  return std::vector<float>(v.data(), v.data() + v.size());
}

MatrixF RecurrentPolicy::probabilities(const MatrixF& obs, const MatrixF& hidden) {
  nn::Tape<float> t(false);
  nn::Var<float> h = gru_(t, encoder_(t, t.constant(obs), false), t.constant(hidden));
  return nn::log_softmax_rows(policy_head_(t, h, false).value()).array().exp().matrix();
}

RecurrentPolicy::Outputs RecurrentPolicy::unroll(nn::Tape<float>& t, const MatrixF& obs, const MatrixF& h0,
                                                 std::span<const std::uint8_t> starts, int length, bool training) {
  const Index chunks = h0.rows();
  if (length <= 0 || obs.rows() != chunks * length || static_cast<Index>(starts.size()) != obs.rows())
    throw nn::ShapeError("RecurrentPolicy::unroll: rows must equal chunks * length");
  nn::Var<float> e = encoder_(t, t.constant(obs), training);
  nn::Var<float> h = t.constant(h0);
  std::vector<nn::Var<float>> states;
  states.reserve(static_cast<std::size_t>(length));
  nn::ColVector<float> mask(chunks);
  for (int k = 0; k < length; ++k) {
    bool any_start = false;
    for (Index c = 0; c < chunks; ++c) {
      const bool start = starts[static_cast<std::size_t>(k * chunks + c)] != 0;
      mask(c) = start ? 0.0f : 1.0f;
      any_start = any_start || start;
    }
    if (any_start) h = nn::scale_rows(h, mask);
    h = gru_(t, nn::slice_rows(e, k * chunks, chunks), h);
    states.push_back(h);
  }
  return heads(t, nn::concat_rows<float>(states), training);
}

void RecurrentPolicy::collect(nn::Registry<float>& r) {
  encoder_.collect(r);
  gru_.collect(r);
  policy_head_.collect(r);
  value_head_.collect(r);
}

}  // namespace deir::ppo
