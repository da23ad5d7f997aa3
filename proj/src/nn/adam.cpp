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

#include "deir/nn/adam.hpp"

#include <cmath>

namespace deir::nn {

template <typename Scalar>
AdamState<Scalar>::AdamState(const AdamConfig& cfg, const Registry<Scalar>& params) : config(cfg) {
  for (const auto* p : params.parameters) {
    m.push_back(Matrix<Scalar>::Zero(p->value.rows(), p->value.cols()));
    v.push_back(Matrix<Scalar>::Zero(p->value.rows(), p->value.cols()));
  }
}

template <typename Scalar>
void adam_step(AdamState<Scalar>& state, Registry<Scalar>& params) {
  if (params.parameters.size() != state.m.size()) throw ShapeError("adam_step: parameter count changed");
  ++state.step;
  const auto& c = state.config;
  const double t = static_cast<double>(state.step);
  const auto b1 = static_cast<Scalar>(c.beta1);
  const auto b2 = static_cast<Scalar>(c.beta2);
  const auto step_size = static_cast<Scalar>(c.lr / (1.0 - std::pow(c.beta1, t)));
  const auto v_scale = static_cast<Scalar>(1.0 / std::sqrt(1.0 - std::pow(c.beta2, t)));
  const auto eps = static_cast<Scalar>(c.eps);
  for (std::size_t i = 0; i < params.parameters.size(); ++i) {
    Parameter<Scalar>& p = *params.parameters[i];
    if (p.grad.rows() != p.value.rows() || p.grad.cols() != p.value.cols() || state.m[i].rows() != p.value.rows() ||
        state.m[i].cols() != p.value.cols())
      throw ShapeError("adam_step: shape mismatch for '" + p.name + "'");
    state.m[i] = b1 * state.m[i] + (Scalar(1) - b1) * p.grad;
    state.v[i] = b2 * state.v[i] + (Scalar(1) - b2) * p.grad.cwiseAbs2();
    p.value.array() -= step_size * state.m[i].array() / (state.v[i].array().sqrt() * v_scale + eps);
  }
}

template <typename Scalar>
double clip_grad_norm(Registry<Scalar>& params, double max_norm) {
  double total = 0.0;
  for (const auto* p : params.parameters) total += p->grad.template cast<double>().squaredNorm();
  const double norm = std::sqrt(total);
  if (norm > max_norm) {
    const auto factor = static_cast<Scalar>(max_norm / (norm + 1e-6));
    for (auto* p : params.parameters) p->grad *= factor;
  }
  return norm;
}

template struct AdamState<float>;
template struct AdamState<double>;
template void adam_step<float>(AdamState<float>&, Registry<float>&);
template void adam_step<double>(AdamState<double>&, Registry<double>&);
template double clip_grad_norm<float>(Registry<float>&, double);
template double clip_grad_norm<double>(Registry<double>&, double);

}  // namespace deir::nn
