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

#ifndef DEIR_NN_ADAM_HPP_
#define DEIR_NN_ADAM_HPP_

#include <cstdint>
#include <vector>

#include "deir/nn/layers.hpp"

namespace deir::nn {

struct AdamConfig {
  double lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-5;
};

template <typename Scalar>
struct AdamState {
  AdamConfig config;
  std::int64_t step = 0;
  std::vector<Matrix<Scalar>> m;
  std::vector<Matrix<Scalar>> v;

  AdamState() = default;
  AdamState(const AdamConfig& cfg, const Registry<Scalar>& params);
};

/// One bias-corrected Adam update of every registered parameter from its
/// accumulated gradient. Throws ShapeError if the registry changed shape.
template <typename Scalar>
void adam_step(AdamState<Scalar>& state, Registry<Scalar>& params);

/// Rescales all gradients so that their joint L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
template <typename Scalar>
double clip_grad_norm(Registry<Scalar>& params, double max_norm);

}  // namespace deir::nn

#endif  // DEIR_NN_ADAM_HPP_
