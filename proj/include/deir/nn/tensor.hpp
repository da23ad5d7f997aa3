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

#ifndef DEIR_NN_TENSOR_HPP_
#define DEIR_NN_TENSOR_HPP_

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace deir::nn {

// Dense tensors are row-major matrices whose first dimension is the batch.
// Images are stored one sample per row in (y, x, channel) order, so an
// (N, H*W*C) tensor and an (N*H*W, C) tensor share the same memory layout.
template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename Scalar>
using RowVector = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

template <typename Scalar>
using ColVector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
using MatrixMap = Eigen::Map<Matrix<Scalar>>;

template <typename Scalar>
using ConstMatrixMap = Eigen::Map<const Matrix<Scalar>>;

using Index = Eigen::Index;

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class GraphError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Trainable tensor. `grad` accumulates across backward passes until zeroed.
template <typename Scalar>
struct Parameter {
  std::string name;
  Matrix<Scalar> value;
  Matrix<Scalar> grad;

  Parameter() = default;
  Parameter(std::string n, Matrix<Scalar> v)
      : name(std::move(n)), value(std::move(v)), grad(Matrix<Scalar>::Zero(value.rows(), value.cols())) {}

  void zero_grad() { grad.setZero(value.rows(), value.cols()); }
};

/// Name + shape + 32-bit payload, the unit of the parameter blob format.
struct NamedTensor {
  std::string name;
  std::vector<std::uint64_t> shape;
  std::vector<float> data;
};

template <typename Scalar>
NamedTensor to_named(const std::string& name, const Matrix<Scalar>& m) {
  NamedTensor t{name, {static_cast<std::uint64_t>(m.rows()), static_cast<std::uint64_t>(m.cols())}, {}};
  t.data.resize(static_cast<std::size_t>(m.size()));
  for (Index i = 0; i < m.size(); ++i) t.data[static_cast<std::size_t>(i)] = static_cast<float>(m.data()[i]);
  return t;
}

template <typename Scalar>
void from_named(const NamedTensor& t, Matrix<Scalar>& m) {
  if (t.shape.size() != 2 || static_cast<Index>(t.shape[0]) != m.rows() ||
      static_cast<Index>(t.shape[1]) != m.cols())
    throw ShapeError("tensor '" + t.name + "' does not match the destination shape");
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<Scalar>(t.data[static_cast<std::size_t>(i)]);
}

}  // namespace deir::nn

#endif  // DEIR_NN_TENSOR_HPP_
