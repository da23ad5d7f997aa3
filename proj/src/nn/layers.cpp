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

#include "deir/nn/layers.hpp"

#include <cmath>

namespace deir::nn {

template <typename Scalar>
void init_orthogonal(Matrix<Scalar>& m, double gain, std::mt19937_64& rng) {
  const Index rows = m.rows();
  const Index cols = m.cols();
  const bool tall = rows >= cols;
  const Index big = tall ? rows : cols;
  const Index small = tall ? cols : rows;
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::MatrixXd a(big, small);
  for (Index i = 0; i < a.size(); ++i) a.data()[i] = normal(rng);
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(a);
  Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(big, small);
  // Sign fix: makes the distribution uniform over orthogonal matrices.
  const Eigen::MatrixXd r = qr.matrixQR().topRows(small).template triangularView<Eigen::Upper>();
  for (Index j = 0; j < small; ++j)
    if (r(j, j) < 0) q.col(j) *= -1.0;
  q *= gain;
  if (tall)
    m = q.cast<Scalar>();
  else
    m = q.transpose().cast<Scalar>();
}

template <typename Scalar>
void init_uniform(Matrix<Scalar>& m, double bound, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> uniform(-bound, bound);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<Scalar>(uniform(rng));
}

template <typename Scalar>
Dense<Scalar>::Dense(const std::string& name, Index in, Index out, double gain, std::mt19937_64& rng)
    : weight(name + ".weight", Matrix<Scalar>(in, out)), bias(name + ".bias", Matrix<Scalar>::Zero(1, out)) {
  init_orthogonal(weight.value, gain, rng);
}

template <typename Scalar>
Conv2d<Scalar>::Conv2d(const std::string& name, const ConvGeometry& g, double gain, std::mt19937_64& rng)
    : geometry(g),
      weight(name + ".weight", Matrix<Scalar>(g.kernel * g.kernel * g.in_channels, g.out_channels)),
      bias(name + ".bias", Matrix<Scalar>::Zero(1, g.out_channels)) {
  init_orthogonal(weight.value, gain, rng);
}

template <typename Scalar>
Norm<Scalar>::Norm(const std::string& name, NormKind k, Index channels, Index features) : kind(k) {
  const Index width = kind == NormKind::Layer ? features : channels;
  if (kind == NormKind::None) return;
  gamma = Parameter<Scalar>(name + ".gamma", Matrix<Scalar>::Ones(1, width));
  beta = Parameter<Scalar>(name + ".beta", Matrix<Scalar>::Zero(1, width));
  if (kind == NormKind::Batch) {
    state.running_mean = RowVector<Scalar>::Zero(width);
    state.running_var = RowVector<Scalar>::Ones(width);
  }
}

template <typename Scalar>
Var<Scalar> Norm<Scalar>::operator()(Tape<Scalar>& t, Var<Scalar> x, bool training) {
  switch (kind) {
    case NormKind::Batch:
      return batch_norm(x, t.parameter(gamma), t.parameter(beta), state, training);
    case NormKind::Layer:
      return layer_norm(x, t.parameter(gamma), t.parameter(beta));
    case NormKind::None:
      break;
  }
  return x;
}

template <typename Scalar>
void Norm<Scalar>::collect(Registry<Scalar>& r) {
  if (kind == NormKind::None) return;
  r.add(gamma);
  r.add(beta);
  if (kind == NormKind::Batch) {
    r.add_buffer(gamma.name + ".running_mean", state.running_mean.data(), state.running_mean.size());
    r.add_buffer(gamma.name + ".running_var", state.running_var.data(), state.running_var.size());
  }
}

template <typename Scalar>
GruCell<Scalar>::GruCell(const std::string& name, Index in, Index hidden, std::mt19937_64& rng)
    : w_input(name + ".w_input", Matrix<Scalar>(in, 3 * hidden)),
      w_gates(name + ".w_gates", Matrix<Scalar>(hidden, 2 * hidden)),
      w_candidate(name + ".w_candidate", Matrix<Scalar>(hidden, hidden)),
      bias(name + ".bias", Matrix<Scalar>(1, 3 * hidden)) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(hidden));
  init_uniform(w_input.value, bound, rng);
  init_uniform(w_gates.value, bound, rng);
  init_uniform(w_candidate.value, bound, rng);
  init_uniform(bias.value, bound, rng);
}

template <typename Scalar>
ConvEncoder<Scalar>::ConvEncoder(const std::string& name, const EncoderConfig& cfg, std::mt19937_64& rng) {
  if (cfg.view != 3 && cfg.view != 7) throw ShapeError("ConvEncoder: view must be 3 or 7");
  const double gain = std::sqrt(2.0);
  Index h = cfg.view;
  Index c = 3;
  input_norm_ = Norm<Scalar>(name + ".input_norm", cfg.norm, c, h * h * c);
  for (std::size_t i = 0; i < convs_.size(); ++i) {
    ConvGeometry g{h, h, c, cfg.channels[i], 2, 1, (cfg.view == 3 && i == 0) ? 1 : 0};
    const std::string id = name + ".conv" + std::to_string(i);
    convs_[i] = Conv2d<Scalar>(id, g, gain, rng);
    conv_norms_[i] = Norm<Scalar>(id + ".norm", cfg.norm, g.out_channels, g.out_size());
    h = g.out_height();
    c = g.out_channels;
  }
  fc_ = Dense<Scalar>(name + ".fc", h * h * c, cfg.features, gain, rng);
  fc_norm_ = Norm<Scalar>(name + ".fc.norm", cfg.norm, cfg.features, cfg.features);
}

template <typename Scalar>
Var<Scalar> ConvEncoder<Scalar>::operator()(Tape<Scalar>& t, Var<Scalar> obs, bool training) {
  Var<Scalar> x = input_norm_(t, obs, training);
  for (std::size_t i = 0; i < convs_.size(); ++i) x = relu(conv_norms_[i](t, convs_[i](t, x), training));
  return relu(fc_norm_(t, fc_(t, x), training));
}

template <typename Scalar>
void ConvEncoder<Scalar>::collect(Registry<Scalar>& r) {
  input_norm_.collect(r);
  for (std::size_t i = 0; i < convs_.size(); ++i) {
    convs_[i].collect(r);
    conv_norms_[i].collect(r);
  }
  fc_.collect(r);
  fc_norm_.collect(r);
}

template <typename Scalar>
Mlp<Scalar>::Mlp(const std::string& name, Index in, std::span<const Index> hidden, Index out, NormKind norm,
                 double out_gain, std::mt19937_64& rng) {
  Index width = in;
  for (std::size_t i = 0; i < hidden.size(); ++i) {
    const std::string id = name + ".fc" + std::to_string(i);
    hidden_.emplace_back(id, width, hidden[i], std::sqrt(2.0), rng);
    norms_.emplace_back(id + ".norm", norm, hidden[i], hidden[i]);
    width = hidden[i];
  }
  out_ = Dense<Scalar>(name + ".out", width, out, out_gain, rng);
}

template <typename Scalar>
Var<Scalar> Mlp<Scalar>::operator()(Tape<Scalar>& t, Var<Scalar> x, bool training) {
  for (std::size_t i = 0; i < hidden_.size(); ++i) x = relu(norms_[i](t, hidden_[i](t, x), training));
  return out_(t, x);
}

template <typename Scalar>
void Mlp<Scalar>::collect(Registry<Scalar>& r) {
  for (std::size_t i = 0; i < hidden_.size(); ++i) {
    hidden_[i].collect(r);
    norms_[i].collect(r);
  }
  out_.collect(r);
}

template <typename Scalar>
void copy_state(const Registry<Scalar>& src, Registry<Scalar>& dst) {
  if (src.parameters.size() != dst.parameters.size() || src.buffers.size() != dst.buffers.size())
    throw ShapeError("copy_state: registries differ in layout");
  for (std::size_t i = 0; i < src.parameters.size(); ++i) {
    if (src.parameters[i]->value.rows() != dst.parameters[i]->value.rows() ||
        src.parameters[i]->value.cols() != dst.parameters[i]->value.cols())
      throw ShapeError("copy_state: parameter '" + src.parameters[i]->name + "' shape mismatch");
    dst.parameters[i]->value = src.parameters[i]->value;
  }
  for (std::size_t i = 0; i < src.buffers.size(); ++i) {
    if (src.buffers[i].size != dst.buffers[i].size) throw ShapeError("copy_state: buffer size mismatch");
    std::copy(src.buffers[i].data, src.buffers[i].data + src.buffers[i].size, dst.buffers[i].data);
  }
}

#define DEIR_INSTANTIATE_LAYERS(S)                                                 \
  template void init_orthogonal<S>(Matrix<S>&, double, std::mt19937_64&);         \
  template void init_uniform<S>(Matrix<S>&, double, std::mt19937_64&);            \
  template class Dense<S>;                                                        \
  template class Conv2d<S>;                                                       \
  template class Norm<S>;                                                         \
  template class GruCell<S>;                                                      \
  template class ConvEncoder<S>;                                                  \
  template class Mlp<S>;                                                          \
  template void copy_state<S>(const Registry<S>&, Registry<S>&);

DEIR_INSTANTIATE_LAYERS(float)
DEIR_INSTANTIATE_LAYERS(double)

}  // namespace deir::nn
