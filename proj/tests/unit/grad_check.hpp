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

#ifndef DEIR_TESTS_GRAD_CHECK_HPP_
#define DEIR_TESTS_GRAD_CHECK_HPP_

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "deir/nn/layers.hpp"
#include "deir/nn/tape.hpp"

namespace deir::testing {

using nn::Matrix;
using nn::Tape;
using nn::Var;

inline Matrix<double> random_matrix(nn::Index r, nn::Index c, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> d(0.0, scale);
  Matrix<double> m(r, c);
  for (nn::Index i = 0; i < m.size(); ++i) m.data()[i] = d(rng);
  return m;
}

/// Elementwise relative error with a small absolute floor in the denominator.
inline double relative_error(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-4});
}

/// Builds f(inputs) on a fresh tape, projects the output onto a fixed random
/// direction to get a scalar, and compares the analytic gradient of every
/// input against central differences with step h. Returns the max error.
/// `fn` must be deterministic in its inputs (no running-stat dependence).
inline double check_gradients(std::vector<Matrix<double>> inputs,
                              const std::function<Var<double>(Tape<double>&, std::vector<Var<double>>&)>& fn,
                              std::mt19937_64& rng, double h = 1e-4) {
  Matrix<double> direction;
  auto evaluate = [&](const std::vector<Matrix<double>>& xs, std::vector<Matrix<double>>* grads) {
    Tape<double> tape(grads != nullptr);
    std::vector<Var<double>> vars;
    for (const auto& x : xs) vars.push_back(tape.leaf(x));
    Var<double> out = fn(tape, vars);
    if (direction.size() == 0) direction = random_matrix(out.rows(), out.cols(), rng);
    const double value = out.value().cwiseProduct(direction).sum();
    if (grads != nullptr) {
      tape.backward(out, direction);
      grads->clear();
      for (const auto& v : vars)
        grads->push_back(tape.grad(v).size() == 0 ? Matrix<double>::Zero(v.rows(), v.cols()) : tape.grad(v));
    }
    return value;
  };
  std::vector<Matrix<double>> analytic;
  evaluate(inputs, &analytic);
  double worst = 0.0;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    for (nn::Index i = 0; i < inputs[k].size(); ++i) {
      const double saved = inputs[k].data()[i];
      inputs[k].data()[i] = saved + h;
      const double up = evaluate(inputs, nullptr);
      inputs[k].data()[i] = saved - h;
      const double down = evaluate(inputs, nullptr);
      inputs[k].data()[i] = saved;
      const double numeric = (up - down) / (2 * h);
      worst = std::max(worst, relative_error(analytic[k].data()[i], numeric));
    }
  }
  return worst;
}

/// Central differences on up to `per_tensor` random entries of every
/// registered parameter against the analytic gradient of a scalar loss.
/// `loss` must rebuild the graph on the tape it is given.
inline double check_parameter_gradients(nn::Registry<double>& params,
                                        const std::function<Var<double>(Tape<double>&)>& loss, std::mt19937_64& rng,
                                        int per_tensor = 6, double h = 1e-5) {
  params.zero_grad();
  {
    Tape<double> tape;
    tape.backward(loss(tape));
  }
  auto value = [&] {
    Tape<double> tape(false);
    return loss(tape).value()(0, 0);
  };
  double worst = 0.0;
  for (auto* p : params.parameters) {
    std::uniform_int_distribution<nn::Index> pick(0, p->value.size() - 1);
    for (int k = 0; k < per_tensor; ++k) {
      const nn::Index i = pick(rng);
      const double saved = p->value.data()[i];
      p->value.data()[i] = saved + h;
      const double up = value();
      p->value.data()[i] = saved - h;
      const double down = value();
      p->value.data()[i] = saved;
      worst = std::max(worst, relative_error(p->grad.data()[i], (up - down) / (2 * h)));
    }
  }
  return worst;
}

}  // namespace deir::testing

#endif  // DEIR_TESTS_GRAD_CHECK_HPP_
