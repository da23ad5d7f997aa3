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

#ifndef DEIR_NOVELTY_MODELS_HPP_
#define DEIR_NOVELTY_MODELS_HPP_

#include <random>
#include <span>
#include <string_view>
#include <vector>

#include "deir/nn/layers.hpp"

namespace deir::novelty {

using nn::Index;
using nn::Matrix;
using nn::Var;

enum class Method { DEIR, PlainNovelty, ForwardError, InverseDriven, RND, NoIntrinsic };

std::string_view method_name(Method m);
/// Throws std::invalid_argument for an unknown name.
Method parse_method(std::string_view name);

struct ModelConfig {
  nn::EncoderConfig encoder;
  int head_hidden = 128;
  int n_actions = 7;
};

/// Rows of one-hot action codes.
template <typename Scalar>
Matrix<Scalar> one_hot(std::span<const int> actions, int n_actions);

/// CNN observation embedding followed by a GRU that folds it into the
/// trajectory embedding. The GRU hidden width equals the feature width.
template <typename Scalar>
class TrajectoryEncoder {
 public:
  TrajectoryEncoder() = default;
  TrajectoryEncoder(const std::string& name, const nn::EncoderConfig& cfg, std::mt19937_64& rng);

  Var<Scalar> observe(nn::Tape<Scalar>& t, Var<Scalar> obs, bool training) { return cnn_(t, obs, training); }
  Var<Scalar> advance(nn::Tape<Scalar>& t, Var<Scalar> e_obs, Var<Scalar> h_prev) { return gru_(t, e_obs, h_prev); }
  void collect(nn::Registry<Scalar>& r) {
    cnn_.collect(r);
    gru_.collect(r);
  }
  Index embed_size() const { return cnn_.out_features(); }
  Index input_size() const { return cnn_.in_features(); }

 private:
  nn::ConvEncoder<Scalar> cnn_;
  nn::GruCell<Scalar> gru_;
};

template <typename Scalar>
struct Embedding {
  Matrix<Scalar> e_obs;
  Matrix<Scalar> e_traj;  // also the next hidden state
};

/// Eval-mode embedding of a batch of observations under the given hidden states.
template <typename Scalar>
Embedding<Scalar> embed(TrajectoryEncoder<Scalar>& encoder, const Matrix<Scalar>& obs, const Matrix<Scalar>& h_prev);

/// Scores whether o_x follows o_t under action a_t. Each candidate row j of
/// obs_x is paired with anchor source[j]; anchors carry o_t, a_t and h_{t-1}.
template <typename Scalar>
class DiscModel {
 public:
  DiscModel() = default;
  DiscModel(const ModelConfig& cfg, std::mt19937_64& rng);

  /// Probabilities in [0, 1], one row per candidate.
  Var<Scalar> likelihood(nn::Tape<Scalar>& t, const Matrix<Scalar>& obs_t, const Matrix<Scalar>& obs_x,
                         std::span<const Index> source, std::span<const int> actions, const Matrix<Scalar>& h_prev,
                         bool training);
  void collect(nn::Registry<Scalar>& r) {
    encoder.collect(r);
    head_.collect(r);
  }

  TrajectoryEncoder<Scalar> encoder;

 private:
  int n_actions_ = 7;
  nn::Mlp<Scalar> head_;
};

/// Predicts the next observation embedding from (e_traj_t, a_t).
template <typename Scalar>
class ForwardModel {
 public:
  ForwardModel() = default;
  ForwardModel(const ModelConfig& cfg, std::mt19937_64& rng);

  /// Mean squared error against the detached embedding of o_{t+1}.
  Var<Scalar> loss(nn::Tape<Scalar>& t, const Matrix<Scalar>& obs_t, const Matrix<Scalar>& obs_next,
                   std::span<const int> actions, const Matrix<Scalar>& h_prev, bool training);
  /// Eval-mode prediction of e_obs_{t+1}.
  Matrix<Scalar> predict(const Matrix<Scalar>& e_traj_t, std::span<const int> actions);
  void collect(nn::Registry<Scalar>& r) {
    encoder.collect(r);
    head_.collect(r);
  }

  TrajectoryEncoder<Scalar> encoder;

 private:
  int n_actions_ = 7;
  nn::Mlp<Scalar> head_;
};

/// Classifies a_t from (e_traj_t, e_traj_{t+1}).
template <typename Scalar>
class InverseModel {
 public:
  InverseModel() = default;
  InverseModel(const ModelConfig& cfg, std::mt19937_64& rng);

  Var<Scalar> loss(nn::Tape<Scalar>& t, const Matrix<Scalar>& obs_t, const Matrix<Scalar>& obs_next,
                   std::span<const int> actions, const Matrix<Scalar>& h_prev, bool training);
  void collect(nn::Registry<Scalar>& r) {
    encoder.collect(r);
    head_.collect(r);
  }

  TrajectoryEncoder<Scalar> encoder;

 private:
  nn::Mlp<Scalar> head_;
};

/// Predictor regressing the features of a frozen, randomly initialized
/// target network. Only the predictor is registered for training.
template <typename Scalar>
class RndModel {
 public:
  RndModel() = default;
  RndModel(const ModelConfig& cfg, std::mt19937_64& rng);

  Var<Scalar> loss(nn::Tape<Scalar>& t, const Matrix<Scalar>& obs, bool training);
  /// Eval-mode squared prediction error per row.
  std::vector<double> error(const Matrix<Scalar>& obs);
  void collect(nn::Registry<Scalar>& r) {
    predictor_.collect(r);
    predictor_head_.collect(r);
  }
  /// Target weights belong in checkpoints although they never train.
  void collect_target(nn::Registry<Scalar>& r) { target_.collect(r); }

 private:
  Matrix<Scalar> target_features(const Matrix<Scalar>& obs);

  nn::ConvEncoder<Scalar> target_;
  nn::ConvEncoder<Scalar> predictor_;
  nn::Mlp<Scalar> predictor_head_;
};

}  // namespace deir::novelty

#endif  // DEIR_NOVELTY_MODELS_HPP_
