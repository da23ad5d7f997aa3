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

#ifndef DEIR_PPO_POLICY_HPP_
#define DEIR_PPO_POLICY_HPP_

#include <random>
#include <span>
#include <vector>

#include "deir/nn/layers.hpp"
#include "deir/ppo/buffer.hpp"

namespace deir::ppo {

struct PolicyConfig {
  nn::EncoderConfig encoder;
  int head_hidden = 128;
  int n_actions = 7;
};

/// Shared CNN and GRU trunk with separate policy and value heads.
class RecurrentPolicy {
 public:
  RecurrentPolicy() = default;
  RecurrentPolicy(const PolicyConfig& cfg, std::mt19937_64& rng);

  struct Decision {
    std::vector<int> actions;
    std::vector<float> log_probs;
    std::vector<float> values;
    MatrixF hidden;
  };

  /// Eval-mode step for every worker; actions are sampled unless greedy.
  Decision act(const MatrixF& obs, const MatrixF& hidden, std::mt19937_64& rng, bool greedy = false);
  std::vector<float> value(const MatrixF& obs, const MatrixF& hidden);
  /// Eval-mode action probabilities.
  MatrixF probabilities(const MatrixF& obs, const MatrixF& hidden);

  struct Outputs {
    nn::Var<float> logits;
    nn::Var<float> values;
  };

  /// Unrolls `chunks` sequences of `length` steps. Rows of obs are ordered
  /// step-major (row = step * chunks + chunk); h0 holds one row per chunk and
  /// the state is zeroed wherever starts[row] is set.
  Outputs unroll(nn::Tape<float>& t, const MatrixF& obs, const MatrixF& h0, std::span<const std::uint8_t> starts,
                 int length, bool training);

  void collect(nn::Registry<float>& r);
  int hidden_size() const { return static_cast<int>(gru_.hidden_size()); }
  int n_actions() const { return n_actions_; }
  int input_size() const { return static_cast<int>(encoder_.in_features()); }

 private:
  Outputs heads(nn::Tape<float>& t, nn::Var<float> h, bool training);

  int n_actions_ = 7;
  nn::ConvEncoder<float> encoder_;
  nn::GruCell<float> gru_;
  nn::Mlp<float> policy_head_;
  nn::Mlp<float> value_head_;
};

/// Inverse-CDF draw from one row of probabilities.
int sample_categorical(std::span<const float> probs, std::mt19937_64& rng);

}  // namespace deir::ppo

#endif  // DEIR_PPO_POLICY_HPP_
