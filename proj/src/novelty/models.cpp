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

#include "deir/novelty/models.hpp"

#include <array>
#include <cmath>
#include <stdexcept>
#include <string>

namespace deir::novelty {

namespace {

constexpr std::array<std::pair<Method, std::string_view>, 6> kMethodNames{{
    {Method::DEIR, "DEIR"},
    {Method::PlainNovelty, "PlainNovelty"},
    {Method::ForwardError, "ForwardError"},
    {Method::InverseDriven, "InverseDriven"},
    {Method::RND, "RND"},
    {Method::NoIntrinsic, "NoIntrinsic"},
}};

template <typename Scalar>
void check_anchor_shapes(const Matrix<Scalar>& obs_t, const Matrix<Scalar>& other, std::span<const int> actions,
                         const Matrix<Scalar>& h_prev, Index hidden, const char* who) {
  if (obs_t.rows() == 0) throw nn::ShapeError(std::string(who) + ": empty batch");
  if (other.cols() != obs_t.cols()) throw nn::ShapeError(std::string(who) + ": observation widths differ");
  if (static_cast<Index>(actions.size()) != obs_t.rows())
    throw nn::ShapeError(std::string(who) + ": one action per anchor expected");
  if (h_prev.rows() != obs_t.rows() || h_prev.cols() != hidden)
    throw nn::ShapeError(std::string(who) + ": hidden state shape mismatch");
}

template <typename Scalar>
Matrix<Scalar> stack_rows(const Matrix<Scalar>& a, const Matrix<Scalar>& b) {
  Matrix<Scalar> out(a.rows() + b.rows(), a.cols());
  out.topRows(a.rows()) = a;
  out.bottomRows(b.rows()) = b;
  return out;
}

}  // namespace

std::string_view method_name(Method m) {
  for (const auto& [method, name] : kMethodNames)
    if (method == m) return name;
  throw std::invalid_argument("unknown intrinsic reward mode");
}

Method parse_method(std::string_view name) {
  for (const auto& [method, text] : kMethodNames)
    if (text == name) return method;
  throw std::invalid_argument("unknown intrinsic reward mode '" + std::string(name) + "'");
}

template <typename Scalar>
Matrix<Scalar> one_hot(std::span<const int> actions, int n_actions) {
  Matrix<Scalar> out = Matrix<Scalar>::Zero(static_cast<Index>(actions.size()), n_actions);
  for (std::size_t i = 0; i < actions.size(); ++i) {
    if (actions[i] < 0 || actions[i] >= n_actions) throw nn::ShapeError("one_hot: action out of range");
    out(static_cast<Index>(i), actions[i]) = Scalar(1);
  }
  return out;
}

template <typename Scalar>
TrajectoryEncoder<Scalar>::TrajectoryEncoder(const std::string& name, const nn::EncoderConfig& cfg,
                                             std::mt19937_64& rng)
    : cnn_(name + ".cnn", cfg, rng), gru_(name + ".gru", cfg.features, cfg.features, rng) {}

template <typename Scalar>
Embedding<Scalar> embed(TrajectoryEncoder<Scalar>& encoder, const Matrix<Scalar>& obs, const Matrix<Scalar>& h_prev) {
  if (obs.cols() != encoder.input_size() || h_prev.rows() != obs.rows() || h_prev.cols() != encoder.embed_size())
    throw nn::ShapeError("embed: shape mismatch");
  nn::Tape<Scalar> t(false);
  Var<Scalar> e = encoder.observe(t, t.constant(obs), false);
  Var<Scalar> traj = encoder.advance(t, e, t.constant(h_prev));
  return {e.value(), traj.value()};
}

template <typename Scalar>
DiscModel<Scalar>::DiscModel(const ModelConfig& cfg, std::mt19937_64& rng)
    : encoder("disc", cfg.encoder, rng), n_actions_(cfg.n_actions) {
  const std::array<Index, 2> hidden{cfg.head_hidden, cfg.head_hidden};
  head_ = nn::Mlp<Scalar>("disc.head", 2 * cfg.encoder.features + cfg.n_actions, hidden, 1, cfg.encoder.norm, 1.0,
                          rng);
}

template <typename Scalar>
Var<Scalar> DiscModel<Scalar>::likelihood(nn::Tape<Scalar>& t, const Matrix<Scalar>& obs_t,
                                          const Matrix<Scalar>& obs_x, std::span<const Index> source,
                                          std::span<const int> actions, const Matrix<Scalar>& h_prev,
                                          bool training) {
  check_anchor_shapes(obs_t, obs_x, actions, h_prev, encoder.embed_size(), "DiscModel");
  const Index n = obs_t.rows();
  const Index k = obs_x.rows();
  if (static_cast<Index>(source.size()) != k) throw nn::ShapeError("DiscModel: one source per candidate expected");
  for (Index s : source)
    if (s < 0 || s >= n) throw nn::ShapeError("DiscModel: candidate source out of range");
  Var<Scalar> e = encoder.observe(t, t.constant(stack_rows(obs_t, obs_x)), training);
  Var<Scalar> traj_t = encoder.advance(t, nn::slice_rows(e, 0, n), t.constant(h_prev));
  Var<Scalar> traj_anchor = nn::gather_rows(traj_t, source);
  Var<Scalar> traj_x = encoder.advance(t, nn::slice_rows(e, n, k), traj_anchor);
  std::vector<int> candidate_actions(source.size());
  for (std::size_t j = 0; j < source.size(); ++j) candidate_actions[j] = actions[static_cast<std::size_t>(source[j])];
  const std::array<Var<Scalar>, 3> parts{traj_anchor, traj_x,
                                         t.constant(one_hot<Scalar>(candidate_actions, n_actions_))};
  return nn::sigmoid(head_(t, nn::concat_cols<Scalar>(parts), training));
}

template <typename Scalar>
ForwardModel<Scalar>::ForwardModel(const ModelConfig& cfg, std::mt19937_64& rng)
    : encoder("forward", cfg.encoder, rng), n_actions_(cfg.n_actions) {
  const std::array<Index, 2> hidden{cfg.head_hidden, cfg.head_hidden};
  head_ = nn::Mlp<Scalar>("forward.head", cfg.encoder.features + cfg.n_actions, hidden, cfg.encoder.features,
                          cfg.encoder.norm, 1.0, rng);
}

template <typename Scalar>
Var<Scalar> ForwardModel<Scalar>::loss(nn::Tape<Scalar>& t, const Matrix<Scalar>& obs_t,
                                       const Matrix<Scalar>& obs_next, std::span<const int> actions,
                                       const Matrix<Scalar>& h_prev, bool training) {
  check_anchor_shapes(obs_t, obs_next, actions, h_prev, encoder.embed_size(), "ForwardModel");
  if (obs_next.rows() != obs_t.rows()) throw nn::ShapeError("ForwardModel: one next observation per anchor");
  const Index n = obs_t.rows();
  Var<Scalar> e = encoder.observe(t, t.constant(stack_rows(obs_t, obs_next)), training);
  Var<Scalar> traj_t = encoder.advance(t, nn::slice_rows(e, 0, n), t.constant(h_prev));
  const Matrix<Scalar> target = nn::slice_rows(e, n, n).value();
  const std::array<Var<Scalar>, 2> parts{traj_t, t.constant(one_hot<Scalar>(actions, n_actions_))};
  return nn::mse(head_(t, nn::concat_cols<Scalar>(parts), training), target);
}

template <typename Scalar>
Matrix<Scalar> ForwardModel<Scalar>::predict(const Matrix<Scalar>& e_traj_t, std::span<const int> actions) {
  nn::Tape<Scalar> t(false);
  const std::array<Var<Scalar>, 2> parts{t.constant(e_traj_t), t.constant(one_hot<Scalar>(actions, n_actions_))};
  return head_(t, nn::concat_cols<Scalar>(parts), false).value();
}

template <typename Scalar>
InverseModel<Scalar>::InverseModel(const ModelConfig& cfg, std::mt19937_64& rng) : encoder("inverse", cfg.encoder, rng) {
  const std::array<Index, 2> hidden{cfg.head_hidden, cfg.head_hidden};
  head_ = nn::Mlp<Scalar>("inverse.head", 2 * cfg.encoder.features, hidden, cfg.n_actions, cfg.encoder.norm, 1.0, rng);
}

template <typename Scalar>
Var<Scalar> InverseModel<Scalar>::loss(nn::Tape<Scalar>& t, const Matrix<Scalar>& obs_t,
                                       const Matrix<Scalar>& obs_next, std::span<const int> actions,
                                       const Matrix<Scalar>& h_prev, bool training) {
  check_anchor_shapes(obs_t, obs_next, actions, h_prev, encoder.embed_size(), "InverseModel");
  if (obs_next.rows() != obs_t.rows()) throw nn::ShapeError("InverseModel: one next observation per anchor");
  const Index n = obs_t.rows();
  Var<Scalar> e = encoder.observe(t, t.constant(stack_rows(obs_t, obs_next)), training);
  Var<Scalar> traj_t = encoder.advance(t, nn::slice_rows(e, 0, n), t.constant(h_prev));
  Var<Scalar> traj_next = encoder.advance(t, nn::slice_rows(e, n, n), traj_t);
  const std::array<Var<Scalar>, 2> parts{traj_t, traj_next};
  return nn::softmax_cross_entropy(head_(t, nn::concat_cols<Scalar>(parts), training), actions);
}

template <typename Scalar>
RndModel<Scalar>::RndModel(const ModelConfig& cfg, std::mt19937_64& rng) {
  nn::EncoderConfig target_cfg = cfg.encoder;
  target_cfg.norm = nn::NormKind::None;
  target_ = nn::ConvEncoder<Scalar>("rnd.target", target_cfg, rng);
  predictor_ = nn::ConvEncoder<Scalar>("rnd.predictor", cfg.encoder, rng);
  const std::array<Index, 1> hidden{cfg.head_hidden};
  predictor_head_ = nn::Mlp<Scalar>("rnd.predictor.head", cfg.encoder.features, hidden, cfg.encoder.features,
                                    cfg.encoder.norm, 1.0, rng);
}

template <typename Scalar>
Matrix<Scalar> RndModel<Scalar>::target_features(const Matrix<Scalar>& obs) {
  nn::Tape<Scalar> t(false);
  return target_(t, t.constant(obs), false).value();
}

template <typename Scalar>
Var<Scalar> RndModel<Scalar>::loss(nn::Tape<Scalar>& t, const Matrix<Scalar>& obs, bool training) {
  const Matrix<Scalar> target = target_features(obs);
  return nn::mse(predictor_head_(t, predictor_(t, t.constant(obs), training), training), target);
}

template <typename Scalar>
std::vector<double> RndModel<Scalar>::error(const Matrix<Scalar>& obs) {
  const Matrix<Scalar> target = target_features(obs);
  nn::Tape<Scalar> t(false);
  const Matrix<Scalar>& pred = predictor_head_(t, predictor_(t, t.constant(obs), false), false).value();
  std::vector<double> out(static_cast<std::size_t>(obs.rows()));
  for (Index i = 0; i < obs.rows(); ++i) {
    double d = 0.0;
    for (Index k = 0; k < pred.cols(); ++k) {
      const double diff = static_cast<double>(pred(i, k)) - static_cast<double>(target(i, k));
      d += diff * diff;
    }
    out[static_cast<std::size_t>(i)] = d;
  }
  return out;
}

#define DEIR_INSTANTIATE_MODELS(S)                                                                   \
  template Matrix<S> one_hot<S>(std::span<const int>, int);                                          \
  template class TrajectoryEncoder<S>;                                                               \
  template Embedding<S> embed<S>(TrajectoryEncoder<S>&, const Matrix<S>&, const Matrix<S>&);         \
  template class DiscModel<S>;                                                                       \
  template class ForwardModel<S>;                                                                    \
  template class InverseModel<S>;                                                                    \
  template class RndModel<S>;

DEIR_INSTANTIATE_MODELS(float)
DEIR_INSTANTIATE_MODELS(double)

}  // namespace deir::novelty
