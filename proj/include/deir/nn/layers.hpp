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

#ifndef DEIR_NN_LAYERS_HPP_
#define DEIR_NN_LAYERS_HPP_

#include <array>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "deir/nn/tape.hpp"

namespace deir::nn {

/// Non-trainable state that still belongs in a checkpoint (running stats).
template <typename Scalar>
struct Buffer {
  std::string name;
  Scalar* data = nullptr;
  Index size = 0;
};

/// Flat view over a model's trainable parameters and buffers.
template <typename Scalar>
struct Registry {
  std::vector<Parameter<Scalar>*> parameters;
  std::vector<Buffer<Scalar>> buffers;

  void add(Parameter<Scalar>& p) { parameters.push_back(&p); }
  void add_buffer(std::string name, Scalar* data, Index size) { buffers.push_back({std::move(name), data, size}); }
  void zero_grad() {
    for (auto* p : parameters) p->zero_grad();
  }
  Index parameter_count() const {
    Index n = 0;
    for (const auto* p : parameters) n += p->value.size();
    return n;
  }
};

/// Orthogonal init scaled by `gain`, columns orthonormal when rows >= cols.
template <typename Scalar>
void init_orthogonal(Matrix<Scalar>& m, double gain, std::mt19937_64& rng);

template <typename Scalar>
void init_uniform(Matrix<Scalar>& m, double bound, std::mt19937_64& rng);

template <typename Scalar>
class Dense {
 public:
  Dense() = default;
  Dense(const std::string& name, Index in, Index out, double gain, std::mt19937_64& rng);

  Var<Scalar> operator()(Tape<Scalar>& t, Var<Scalar> x) {
    return linear(x, t.parameter(weight), t.parameter(bias));
  }
  void collect(Registry<Scalar>& r) {
    r.add(weight);
    r.add(bias);
  }
  Index in_features() const { return weight.value.rows(); }
  Index out_features() const { return weight.value.cols(); }

  Parameter<Scalar> weight;
  Parameter<Scalar> bias;
};

template <typename Scalar>
class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(const std::string& name, const ConvGeometry& g, double gain, std::mt19937_64& rng);

  Var<Scalar> operator()(Tape<Scalar>& t, Var<Scalar> x) {
    return conv2d(x, t.parameter(weight), t.parameter(bias), geometry);
  }
  void collect(Registry<Scalar>& r) {
    r.add(weight);
    r.add(bias);
  }

  ConvGeometry geometry;
  Parameter<Scalar> weight;
  Parameter<Scalar> bias;
};

enum class NormKind { Batch, Layer, None };

/// Batch mode normalizes each of `channels` over batch and positions; layer
/// mode normalizes each sample over all `features`.
template <typename Scalar>
class Norm {
 public:
  Norm() = default;
  Norm(const std::string& name, NormKind kind, Index channels, Index features);

  Var<Scalar> operator()(Tape<Scalar>& t, Var<Scalar> x, bool training);
  void collect(Registry<Scalar>& r);

  NormKind kind = NormKind::None;
  Parameter<Scalar> gamma;
  Parameter<Scalar> beta;
  BatchNormState<Scalar> state;
};

template <typename Scalar>
class GruCell {
 public:
  GruCell() = default;
  GruCell(const std::string& name, Index in, Index hidden, std::mt19937_64& rng);

  Var<Scalar> operator()(Tape<Scalar>& t, Var<Scalar> x, Var<Scalar> h) {
    return gru_cell(x, h, t.parameter(w_input), t.parameter(w_gates), t.parameter(w_candidate), t.parameter(bias));
  }
  void collect(Registry<Scalar>& r) {
    r.add(w_input);
    r.add(w_gates);
    r.add(w_candidate);
    r.add(bias);
  }
  Index hidden_size() const { return w_candidate.value.rows(); }

  Parameter<Scalar> w_input;
  Parameter<Scalar> w_gates;
  Parameter<Scalar> w_candidate;
  Parameter<Scalar> bias;
};

struct EncoderConfig {
  int view = 7;
  std::array<int, 3> channels{32, 64, 64};
  int features = 64;
  NormKind norm = NormKind::Batch;
};

/// Normalized input, three 2x2 convolutions and a dense projection, each
/// followed by normalization and ReLU. A 3x3 view pads the first convolution.
template <typename Scalar>
class ConvEncoder {
 public:
  ConvEncoder() = default;
  ConvEncoder(const std::string& name, const EncoderConfig& cfg, std::mt19937_64& rng);

  Var<Scalar> operator()(Tape<Scalar>& t, Var<Scalar> obs, bool training);
  void collect(Registry<Scalar>& r);
  Index in_features() const { return convs_[0].geometry.in_size(); }
  Index out_features() const { return fc_.out_features(); }
  Index flat_features() const { return fc_.in_features(); }

 private:
  Norm<Scalar> input_norm_;
  std::array<Conv2d<Scalar>, 3> convs_;
  std::array<Norm<Scalar>, 3> conv_norms_;
  Dense<Scalar> fc_;
  Norm<Scalar> fc_norm_;
};

/// Hidden layers of Dense + Norm + ReLU followed by a linear output layer.
template <typename Scalar>
class Mlp {
 public:
  Mlp() = default;
  Mlp(const std::string& name, Index in, std::span<const Index> hidden, Index out, NormKind norm, double out_gain,
      std::mt19937_64& rng);

  Var<Scalar> operator()(Tape<Scalar>& t, Var<Scalar> x, bool training);
  void collect(Registry<Scalar>& r);

 private:
  std::vector<Dense<Scalar>> hidden_;
  std::vector<Norm<Scalar>> norms_;
  Dense<Scalar> out_;
};

/// Copies values of `src` parameters and buffers into `dst` (same layout).
template <typename Scalar>
void copy_state(const Registry<Scalar>& src, Registry<Scalar>& dst);

}  // namespace deir::nn

#endif  // DEIR_NN_LAYERS_HPP_
