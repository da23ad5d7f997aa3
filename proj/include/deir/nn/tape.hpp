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

#ifndef DEIR_NN_TAPE_HPP_
#define DEIR_NN_TAPE_HPP_

#include <algorithm>
#include <functional>
#include <initializer_list>
#include <span>
#include <unordered_map>
#include <utility>
#include <vector>

#include "deir/nn/tensor.hpp"

namespace deir::nn {

template <typename Scalar>
class Tape;

/// Handle to a value recorded on a tape.
template <typename Scalar>
struct Var {
  Tape<Scalar>* tape = nullptr;
  std::size_t id = 0;

  const Matrix<Scalar>& value() const { return tape->value(*this); }
  Index rows() const { return value().rows(); }
  Index cols() const { return value().cols(); }
};

/// Reverse-mode record. Each node owns its forward value; a node created from
/// differentiable parents also stores a closure that pushes its gradient back
/// to them. With recording off the tape only evaluates (inference mode).
template <typename Scalar>
class Tape {
 public:
  using MatrixType = Matrix<Scalar>;
  using BackwardFn = std::function<void(Tape&, std::size_t)>;

  explicit Tape(bool record = true) : record_(record) { nodes_.reserve(256); }
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const { return record_; }
  std::size_t size() const { return nodes_.size(); }

  Var<Scalar> constant(MatrixType value) { return push(std::move(value), false, nullptr, {}); }

  /// Differentiable leaf, e.g. an input under a gradient check.
  Var<Scalar> leaf(MatrixType value) { return push(std::move(value), record_, nullptr, {}); }

  /// Leaf bound to a parameter; gradients flow into `p.grad` on backward.
  /// Repeated uses on one tape share a single node.
  Var<Scalar> parameter(Parameter<Scalar>& p) {
    if (auto it = param_nodes_.find(&p); it != param_nodes_.end()) return Var<Scalar>{this, it->second};
    Var<Scalar> v = push(p.value, record_, &p, {});
    param_nodes_.emplace(&p, v.id);
    return v;
  }

  /// Records an op result. `fn` runs during backward with this tape and the
  /// node's id; it reads `grad(id)` and calls `accumulate` on the parents.
  Var<Scalar> record(MatrixType value, std::initializer_list<Var<Scalar>> parents, BackwardFn fn) {
    bool needs = false;
    if (record_)
      for (const Var<Scalar>& p : parents) needs = needs || nodes_[p.id].needs_grad;
    return push(std::move(value), needs, nullptr, needs ? std::move(fn) : BackwardFn{});
  }
  Var<Scalar> record(MatrixType value, std::span<const Var<Scalar>> parents, BackwardFn fn) {
    bool needs = false;
    if (record_)
      for (const Var<Scalar>& p : parents) needs = needs || nodes_[p.id].needs_grad;
    return push(std::move(value), needs, nullptr, needs ? std::move(fn) : BackwardFn{});
  }

  const MatrixType& value(Var<Scalar> v) const { return nodes_[v.id].value; }
  const MatrixType& value(std::size_t id) const { return nodes_[id].value; }
  /// Gradient after backward; an empty matrix when nothing reached the node.
  const MatrixType& grad(Var<Scalar> v) const { return nodes_[v.id].grad; }
  const MatrixType& grad(std::size_t id) const { return nodes_[id].grad; }
  bool needs_grad(Var<Scalar> v) const { return nodes_[v.id].needs_grad; }
  bool needs_grad(std::size_t id) const { return nodes_[id].needs_grad; }

  template <typename Expr>
  void accumulate(std::size_t id, const Expr& g) {
    Node& n = nodes_[id];
    if (!n.needs_grad) return;
    if (n.grad.size() == 0)
      n.grad = g;
    else
      n.grad += g;
  }

  /// Seeds d(output) = seed and propagates to every reachable parameter.
  void backward(Var<Scalar> output, const MatrixType& seed) { backward({{output, seed}}); }

  /// Scalar output, seed 1.
  void backward(Var<Scalar> output) {
    if (!record_ || output.id >= nodes_.size())
      throw GraphError("backward() requires a forward pass recorded in training mode");
    if (value(output).size() != 1) throw GraphError("backward() without a seed needs a scalar output");
    backward(output, MatrixType::Ones(1, 1));
  }

  void backward(std::initializer_list<std::pair<Var<Scalar>, MatrixType>> seeds) {
    if (!record_ || nodes_.empty()) throw GraphError("backward() requires a forward pass recorded in training mode");
    if (backward_done_) throw GraphError("backward() already ran on this tape");
    backward_done_ = true;
    std::size_t last = 0;
    for (const auto& [v, s] : seeds) {
      if (s.rows() != value(v).rows() || s.cols() != value(v).cols())
        throw ShapeError("backward seed shape does not match output");
      accumulate(v.id, s);
      last = std::max(last, v.id);
    }
    for (std::size_t i = last + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (n.grad.size() == 0) continue;
      if (n.backward) n.backward(*this, i);
      if (n.param != nullptr) n.param->grad += n.grad;
    }
  }

 private:
  struct Node {
    MatrixType value;
    MatrixType grad;
    BackwardFn backward;
    Parameter<Scalar>* param = nullptr;
    bool needs_grad = false;
  };

  Var<Scalar> push(MatrixType value, bool needs, Parameter<Scalar>* param, BackwardFn fn) {
    nodes_.push_back(Node{std::move(value), MatrixType(), std::move(fn), param, needs});
    return Var<Scalar>{this, nodes_.size() - 1};
  }

  std::vector<Node> nodes_;
  std::unordered_map<const Parameter<Scalar>*, std::size_t> param_nodes_;
  bool record_ = true;
  bool backward_done_ = false;
};

// ---------------------------------------------------------------------------
// Primitive ops. Shapes are checked eagerly and mismatches throw ShapeError.

template <typename Scalar> Var<Scalar> matmul(Var<Scalar> a, Var<Scalar> b);
/// x * W + b with b a 1 x out row broadcast over the batch.
template <typename Scalar> Var<Scalar> linear(Var<Scalar> x, Var<Scalar> weight, Var<Scalar> bias);
template <typename Scalar> Var<Scalar> add(Var<Scalar> a, Var<Scalar> b);
template <typename Scalar> Var<Scalar> sub(Var<Scalar> a, Var<Scalar> b);
template <typename Scalar> Var<Scalar> mul(Var<Scalar> a, Var<Scalar> b);
template <typename Scalar> Var<Scalar> add_row(Var<Scalar> a, Var<Scalar> row);
template <typename Scalar> Var<Scalar> scale(Var<Scalar> a, Scalar s);
/// Multiplies row i by mask(i); the mask is not differentiated.
template <typename Scalar> Var<Scalar> scale_rows(Var<Scalar> a, const ColVector<Scalar>& mask);
template <typename Scalar> Var<Scalar> relu(Var<Scalar> a);
template <typename Scalar> Var<Scalar> sigmoid(Var<Scalar> a);
template <typename Scalar> Var<Scalar> tanh(Var<Scalar> a);
template <typename Scalar> Var<Scalar> square(Var<Scalar> a);
template <typename Scalar> Var<Scalar> sum(Var<Scalar> a);
template <typename Scalar> Var<Scalar> mean(Var<Scalar> a);
template <typename Scalar> Var<Scalar> concat_cols(std::span<const Var<Scalar>> parts);
template <typename Scalar> Var<Scalar> concat_rows(std::span<const Var<Scalar>> parts);
template <typename Scalar> Var<Scalar> slice_cols(Var<Scalar> a, Index start, Index count);
template <typename Scalar> Var<Scalar> slice_rows(Var<Scalar> a, Index start, Index count);
/// Selects rows by index (repeats allowed; gradients scatter-add back).
template <typename Scalar> Var<Scalar> gather_rows(Var<Scalar> a, std::span<const Index> rows);
template <typename Scalar> Var<Scalar> reshape(Var<Scalar> a, Index rows, Index cols);

struct ConvGeometry {
  Index in_height = 0;
  Index in_width = 0;
  Index in_channels = 0;
  Index out_channels = 0;
  Index kernel = 2;
  Index stride = 1;
  Index pad = 0;

  Index out_height() const { return (in_height + 2 * pad - kernel) / stride + 1; }
  Index out_width() const { return (in_width + 2 * pad - kernel) / stride + 1; }
  Index in_size() const { return in_height * in_width * in_channels; }
  Index out_size() const { return out_height() * out_width() * out_channels; }
};

/// 2-D convolution over (N, H*W*C) images; weight is (k*k*C_in, C_out).
template <typename Scalar>
Var<Scalar> conv2d(Var<Scalar> x, Var<Scalar> weight, Var<Scalar> bias, const ConvGeometry& g);

/// Standardizes each of `channels` features over every row and spatial
/// position, x viewed as (N * positions, channels). Training mode uses batch
/// statistics and folds them into the running stats (PyTorch momentum
/// convention); eval mode uses the running stats.
template <typename Scalar>
struct BatchNormState {
  RowVector<Scalar> running_mean;
  RowVector<Scalar> running_var;
  Scalar momentum = Scalar(0.1);
  Scalar eps = Scalar(1e-8);
};

template <typename Scalar>
Var<Scalar> batch_norm(Var<Scalar> x, Var<Scalar> gamma, Var<Scalar> beta, BatchNormState<Scalar>& state,
                       bool training);

/// Standardizes each row over all of its features, then applies the
/// elementwise affine gamma/beta (1 x features).
template <typename Scalar>
Var<Scalar> layer_norm(Var<Scalar> x, Var<Scalar> gamma, Var<Scalar> beta, Scalar eps = Scalar(1e-8));

/// One GRU step:
///   z = s(x Wz + h Uz + bz), r = s(x Wr + h Ur + br)
///   n = tanh(x Wn + (r * h) Un + bn), h' = (1 - z) * n + z * h
/// w_input is (in, 3H) laid out [z | r | n], w_gates (H, 2H) is [Uz | Ur],
/// w_candidate is Un (H, H), bias (1, 3H).
template <typename Scalar>
Var<Scalar> gru_cell(Var<Scalar> x, Var<Scalar> h, Var<Scalar> w_input, Var<Scalar> w_gates,
                     Var<Scalar> w_candidate, Var<Scalar> bias);

/// Mean binary cross-entropy of probabilities clamped to [1e-7, 1 - 1e-7].
template <typename Scalar>
Var<Scalar> binary_cross_entropy(Var<Scalar> probs, const Matrix<Scalar>& labels);

/// Mean softmax cross-entropy of logits against integer class labels.
template <typename Scalar>
Var<Scalar> softmax_cross_entropy(Var<Scalar> logits, std::span<const int> labels);

/// Mean over all elements of (a - target)^2; target is not differentiated.
template <typename Scalar>
Var<Scalar> mse(Var<Scalar> a, const Matrix<Scalar>& target);

template <typename Scalar> Var<Scalar> operator+(Var<Scalar> a, Var<Scalar> b) { return add(a, b); }
template <typename Scalar> Var<Scalar> operator-(Var<Scalar> a, Var<Scalar> b) { return sub(a, b); }
template <typename Scalar> Var<Scalar> operator*(Var<Scalar> a, Var<Scalar> b) { return mul(a, b); }

/// Row-wise log-softmax, helper shared by the policy and losses.
template <typename Scalar>
Matrix<Scalar> log_softmax_rows(const Matrix<Scalar>& logits);

}  // namespace deir::nn

#endif  // DEIR_NN_TAPE_HPP_
