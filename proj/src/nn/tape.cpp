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

#include "deir/nn/tape.hpp"

#include <cmath>
#include <string>

namespace deir::nn {
namespace {

std::string shape_str(Index r, Index c) { return "(" + std::to_string(r) + ", " + std::to_string(c) + ")"; }

template <typename Scalar>
void require_same_shape(Var<Scalar> a, Var<Scalar> b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.rows(), a.cols()) + " vs " +
                     shape_str(b.rows(), b.cols()));
}

template <typename Scalar>
void im2col(const Matrix<Scalar>& x, const ConvGeometry& g, Matrix<Scalar>& cols) {
  const Index n = x.rows();
  const Index oh = g.out_height();
  const Index ow = g.out_width();
  const Index c = g.in_channels;
  cols.setZero(n * oh * ow, g.kernel * g.kernel * c);
  for (Index b = 0; b < n; ++b) {
    const Scalar* src = x.data() + b * x.cols();
    for (Index oy = 0; oy < oh; ++oy) {
      for (Index ox = 0; ox < ow; ++ox) {
        Scalar* dst = cols.data() + ((b * oh + oy) * ow + ox) * cols.cols();
        for (Index ky = 0; ky < g.kernel; ++ky) {
          const Index iy = oy * g.stride - g.pad + ky;
          if (iy < 0 || iy >= g.in_height) continue;
          for (Index kx = 0; kx < g.kernel; ++kx) {
            const Index ix = ox * g.stride - g.pad + kx;
            if (ix < 0 || ix >= g.in_width) continue;
            const Scalar* s = src + (iy * g.in_width + ix) * c;
            std::copy(s, s + c, dst + (ky * g.kernel + kx) * c);
          }
        }
      }
    }
  }
}

template <typename Scalar>
void col2im(const Matrix<Scalar>& dcols, const ConvGeometry& g, Matrix<Scalar>& dx) {
  const Index n = dx.rows();
  const Index oh = g.out_height();
  const Index ow = g.out_width();
  const Index c = g.in_channels;
  for (Index b = 0; b < n; ++b) {
    Scalar* dst = dx.data() + b * dx.cols();
    for (Index oy = 0; oy < oh; ++oy) {
      for (Index ox = 0; ox < ow; ++ox) {
        const Scalar* src = dcols.data() + ((b * oh + oy) * ow + ox) * dcols.cols();
        for (Index ky = 0; ky < g.kernel; ++ky) {
          const Index iy = oy * g.stride - g.pad + ky;
          if (iy < 0 || iy >= g.in_height) continue;
          for (Index kx = 0; kx < g.kernel; ++kx) {
            const Index ix = ox * g.stride - g.pad + kx;
            if (ix < 0 || ix >= g.in_width) continue;
            Scalar* d = dst + (iy * g.in_width + ix) * c;
            const Scalar* s = src + (ky * g.kernel + kx) * c;
            for (Index k = 0; k < c; ++k) d[k] += s[k];
          }
        }
      }
    }
  }
}

}  // namespace

template <typename Scalar>
Var<Scalar> matmul(Var<Scalar> a, Var<Scalar> b) {
  if (a.cols() != b.rows())
    throw ShapeError("matmul: " + shape_str(a.rows(), a.cols()) + " x " + shape_str(b.rows(), b.cols()));
  Matrix<Scalar> out = a.value() * b.value();
  return a.tape->record(std::move(out), {a, b}, [a = a.id, b = b.id](Tape<Scalar>& t, std::size_t self) {
    const auto& g = t.grad(self);
    if (t.needs_grad(a)) t.accumulate(a, g * t.value(b).transpose());
    if (t.needs_grad(b)) t.accumulate(b, t.value(a).transpose() * g);
  });
}

template <typename Scalar>
Var<Scalar> linear(Var<Scalar> x, Var<Scalar> w, Var<Scalar> bias) {
  if (x.cols() != w.rows() || bias.rows() != 1 || bias.cols() != w.cols())
    throw ShapeError("linear: input " + shape_str(x.rows(), x.cols()) + ", weight " + shape_str(w.rows(), w.cols()) +
                     ", bias " + shape_str(bias.rows(), bias.cols()));
  Matrix<Scalar> out(x.rows(), w.cols());
  out.noalias() = x.value() * w.value();
  out.rowwise() += bias.value().row(0);
  return x.tape->record(std::move(out), {x, w, bias},
                        [x = x.id, w = w.id, b = bias.id](Tape<Scalar>& t, std::size_t self) {
                          const auto& g = t.grad(self);
                          if (t.needs_grad(x)) t.accumulate(x, g * t.value(w).transpose());
                          if (t.needs_grad(w)) t.accumulate(w, t.value(x).transpose() * g);
                          if (t.needs_grad(b)) t.accumulate(b, g.colwise().sum());
                        });
}

template <typename Scalar>
Var<Scalar> add(Var<Scalar> a, Var<Scalar> b) {
  require_same_shape(a, b, "add");
  return a.tape->record(a.value() + b.value(), {a, b}, [a = a.id, b = b.id](Tape<Scalar>& t, std::size_t self) {
    t.accumulate(a, t.grad(self));
    t.accumulate(b, t.grad(self));
  });
}

template <typename Scalar>
Var<Scalar> sub(Var<Scalar> a, Var<Scalar> b) {
  require_same_shape(a, b, "sub");
  return a.tape->record(a.value() - b.value(), {a, b}, [a = a.id, b = b.id](Tape<Scalar>& t, std::size_t self) {
    t.accumulate(a, t.grad(self));
    t.accumulate(b, -t.grad(self));
  });
}

template <typename Scalar>
Var<Scalar> mul(Var<Scalar> a, Var<Scalar> b) {
  require_same_shape(a, b, "mul");
  Matrix<Scalar> out = a.value().cwiseProduct(b.value());
  return a.tape->record(std::move(out), {a, b}, [a = a.id, b = b.id](Tape<Scalar>& t, std::size_t self) {
    if (t.needs_grad(a)) t.accumulate(a, t.grad(self).cwiseProduct(t.value(b)));
    if (t.needs_grad(b)) t.accumulate(b, t.grad(self).cwiseProduct(t.value(a)));
  });
}

template <typename Scalar>
Var<Scalar> add_row(Var<Scalar> a, Var<Scalar> row) {
  if (row.rows() != 1 || row.cols() != a.cols()) throw ShapeError("add_row: row does not match columns");
  Matrix<Scalar> out = a.value();
  out.rowwise() += row.value().row(0);
  return a.tape->record(std::move(out), {a, row}, [a = a.id, r = row.id](Tape<Scalar>& t, std::size_t self) {
    t.accumulate(a, t.grad(self));
    if (t.needs_grad(r)) t.accumulate(r, t.grad(self).colwise().sum());
  });
}

template <typename Scalar>
Var<Scalar> scale(Var<Scalar> a, Scalar s) {
  return a.tape->record(a.value() * s, {a},
                        [a = a.id, s](Tape<Scalar>& t, std::size_t self) { t.accumulate(a, t.grad(self) * s); });
}

template <typename Scalar>
Var<Scalar> scale_rows(Var<Scalar> a, const ColVector<Scalar>& mask) {
  if (mask.size() != a.rows()) throw ShapeError("scale_rows: mask length does not match rows");
  Matrix<Scalar> out = mask.asDiagonal() * a.value();
  return a.tape->record(std::move(out), {a}, [a = a.id, mask](Tape<Scalar>& t, std::size_t self) {
    t.accumulate(a, mask.asDiagonal() * t.grad(self));
  });
}

template <typename Scalar>
Var<Scalar> relu(Var<Scalar> a) {
  Matrix<Scalar> out = a.value().cwiseMax(Scalar(0));
  return a.tape->record(std::move(out), {a}, [a](Tape<Scalar>& t, std::size_t self) {
    t.accumulate(a.id, (t.value(self).array() > Scalar(0)).select(t.grad(self), Scalar(0)));
  });
}

template <typename Scalar>
Var<Scalar> sigmoid(Var<Scalar> a) {
  Matrix<Scalar> out = (Scalar(1) + (-a.value().array()).exp()).inverse().matrix();
  return a.tape->record(std::move(out), {a}, [a = a.id](Tape<Scalar>& t, std::size_t self) {
    const auto& y = t.value(self).array();
    t.accumulate(a, (t.grad(self).array() * y * (Scalar(1) - y)).matrix());
  });
}

template <typename Scalar>
Var<Scalar> tanh(Var<Scalar> a) {
  Matrix<Scalar> out = a.value().array().tanh().matrix();
  return a.tape->record(std::move(out), {a}, [a = a.id](Tape<Scalar>& t, std::size_t self) {
    const auto& y = t.value(self).array();
    t.accumulate(a, (t.grad(self).array() * (Scalar(1) - y.square())).matrix());
  });
}

template <typename Scalar>
Var<Scalar> square(Var<Scalar> a) {
  Matrix<Scalar> out = a.value().array().square().matrix();
  return a.tape->record(std::move(out), {a}, [a = a.id](Tape<Scalar>& t, std::size_t self) {
    t.accumulate(a, (Scalar(2) * t.grad(self).array() * t.value(a).array()).matrix());
  });
}

template <typename Scalar>
Var<Scalar> sum(Var<Scalar> a) {
  Matrix<Scalar> out(1, 1);
  out(0, 0) = a.value().sum();
  return a.tape->record(std::move(out), {a}, [a = a.id](Tape<Scalar>& t, std::size_t self) {
    const Scalar g = t.grad(self)(0, 0);
    t.accumulate(a, Matrix<Scalar>::Constant(t.value(a).rows(), t.value(a).cols(), g));
  });
}

template <typename Scalar>
Var<Scalar> mean(Var<Scalar> a) {
  const auto n = static_cast<Scalar>(a.value().size());
  return scale(sum(a), Scalar(1) / n);
}

template <typename Scalar>
Var<Scalar> concat_cols(std::span<const Var<Scalar>> parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no inputs");
  const Index rows = parts.front().rows();
  Index cols = 0;
  for (const auto& p : parts) {
    if (p.rows() != rows) throw ShapeError("concat_cols: row count mismatch");
    cols += p.cols();
  }
  Matrix<Scalar> out(rows, cols);
  std::vector<std::pair<std::size_t, Index>> layout;
  Index offset = 0;
  for (const auto& p : parts) {
    out.middleCols(offset, p.cols()) = p.value();
    layout.emplace_back(p.id, offset);
    offset += p.cols();
  }
  return parts.front().tape->record(std::move(out), parts, [layout](Tape<Scalar>& t, std::size_t self) {
    const auto& g = t.grad(self);
    for (const auto& [id, off] : layout)
      if (t.needs_grad(id)) t.accumulate(id, g.middleCols(off, t.value(id).cols()));
  });
}

template <typename Scalar>
Var<Scalar> concat_rows(std::span<const Var<Scalar>> parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no inputs");
  const Index cols = parts.front().cols();
  Index rows = 0;
  for (const auto& p : parts) {
    if (p.cols() != cols) throw ShapeError("concat_rows: column count mismatch");
    rows += p.rows();
  }
  Matrix<Scalar> out(rows, cols);
  std::vector<std::pair<std::size_t, Index>> layout;
  Index offset = 0;
  for (const auto& p : parts) {
    out.middleRows(offset, p.rows()) = p.value();
    layout.emplace_back(p.id, offset);
    offset += p.rows();
  }
  return parts.front().tape->record(std::move(out), parts, [layout](Tape<Scalar>& t, std::size_t self) {
    const auto& g = t.grad(self);
    for (const auto& [id, off] : layout)
      if (t.needs_grad(id)) t.accumulate(id, g.middleRows(off, t.value(id).rows()));
  });
}

template <typename Scalar>
Var<Scalar> slice_cols(Var<Scalar> a, Index start, Index count) {
  if (start < 0 || count < 0 || start + count > a.cols()) throw ShapeError("slice_cols: out of range");
  Matrix<Scalar> out = a.value().middleCols(start, count);
  return a.tape->record(std::move(out), {a}, [a = a.id, start, count](Tape<Scalar>& t, std::size_t self) {
    Matrix<Scalar> g = Matrix<Scalar>::Zero(t.value(a).rows(), t.value(a).cols());
    g.middleCols(start, count) = t.grad(self);
    t.accumulate(a, g);
  });
}

template <typename Scalar>
Var<Scalar> slice_rows(Var<Scalar> a, Index start, Index count) {
  if (start < 0 || count < 0 || start + count > a.rows()) throw ShapeError("slice_rows: out of range");
  Matrix<Scalar> out = a.value().middleRows(start, count);
  return a.tape->record(std::move(out), {a}, [a = a.id, start, count](Tape<Scalar>& t, std::size_t self) {
    Matrix<Scalar> g = Matrix<Scalar>::Zero(t.value(a).rows(), t.value(a).cols());
    g.middleRows(start, count) = t.grad(self);
    t.accumulate(a, g);
  });
}

template <typename Scalar>
Var<Scalar> gather_rows(Var<Scalar> a, std::span<const Index> rows) {
  Matrix<Scalar> out(static_cast<Index>(rows.size()), a.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] < 0 || rows[i] >= a.rows()) throw ShapeError("gather_rows: index out of range");
    out.row(static_cast<Index>(i)) = a.value().row(rows[i]);
  }
  std::vector<Index> index(rows.begin(), rows.end());
  return a.tape->record(std::move(out), {a}, [a = a.id, index](Tape<Scalar>& t, std::size_t self) {
    Matrix<Scalar> g = Matrix<Scalar>::Zero(t.value(a).rows(), t.value(a).cols());
    const auto& src = t.grad(self);
    for (std::size_t i = 0; i < index.size(); ++i) g.row(index[i]) += src.row(static_cast<Index>(i));
    t.accumulate(a, g);
  });
}

template <typename Scalar>
Var<Scalar> reshape(Var<Scalar> a, Index rows, Index cols) {
  if (rows * cols != a.value().size()) throw ShapeError("reshape: element count mismatch");
  Matrix<Scalar> out = ConstMatrixMap<Scalar>(a.value().data(), rows, cols);
  return a.tape->record(std::move(out), {a}, [a = a.id](Tape<Scalar>& t, std::size_t self) {
    const auto& src = t.value(a);
    t.accumulate(a, ConstMatrixMap<Scalar>(t.grad(self).data(), src.rows(), src.cols()));
  });
}

template <typename Scalar>
Var<Scalar> conv2d(Var<Scalar> x, Var<Scalar> weight, Var<Scalar> bias, const ConvGeometry& g) {
  if (x.cols() != g.in_size())
    throw ShapeError("conv2d: input has " + std::to_string(x.cols()) + " features, geometry expects " +
                     std::to_string(g.in_size()));
  if (weight.rows() != g.kernel * g.kernel * g.in_channels || weight.cols() != g.out_channels)
    throw ShapeError("conv2d: weight shape does not match geometry");
  if (bias.rows() != 1 || bias.cols() != g.out_channels) throw ShapeError("conv2d: bias shape mismatch");
  if (g.out_height() <= 0 || g.out_width() <= 0) throw ShapeError("conv2d: empty output");

  const Index n = x.rows();
  const Index positions = g.out_height() * g.out_width();
  Matrix<Scalar> cols;
  im2col(x.value(), g, cols);
  Matrix<Scalar> out(n, positions * g.out_channels);
  MatrixMap<Scalar> out_view(out.data(), n * positions, g.out_channels);
  out_view.noalias() = cols * weight.value();
  out_view.rowwise() += bias.value().row(0);

  if (!x.tape->recording()) return x.tape->constant(std::move(out));
  return x.tape->record(
      std::move(out), {x, weight, bias},
      [x = x.id, w = weight.id, b = bias.id, g, cols = std::move(cols)](Tape<Scalar>& t, std::size_t self) {
        const auto& grad = t.grad(self);
        ConstMatrixMap<Scalar> gview(grad.data(), cols.rows(), g.out_channels);
        if (t.needs_grad(w)) t.accumulate(w, cols.transpose() * gview);
        if (t.needs_grad(b)) t.accumulate(b, gview.colwise().sum());
        if (t.needs_grad(x)) {
          Matrix<Scalar> dcols = gview * t.value(w).transpose();
          Matrix<Scalar> dx = Matrix<Scalar>::Zero(t.value(x).rows(), t.value(x).cols());
          col2im(dcols, g, dx);
          t.accumulate(x, dx);
        }
      });
}

template <typename Scalar>
Var<Scalar> batch_norm(Var<Scalar> x, Var<Scalar> gamma, Var<Scalar> beta, BatchNormState<Scalar>& state,
                       bool training) {
  const Index channels = gamma.cols();
  if (gamma.rows() != 1 || beta.rows() != 1 || beta.cols() != channels || channels == 0 || x.cols() % channels != 0)
    throw ShapeError("batch_norm: parameter shape does not divide the input features");
  if (state.running_mean.size() != channels) throw ShapeError("batch_norm: running statistics shape mismatch");
  const Index rows = x.rows() * (x.cols() / channels);
  ConstMatrixMap<Scalar> xv(x.value().data(), rows, channels);
  Matrix<Scalar> out(x.rows(), x.cols());
  MatrixMap<Scalar> yv(out.data(), rows, channels);

  if (!training) {
    const RowVector<Scalar> inv_std = (state.running_var.array() + state.eps).rsqrt().matrix();
    const RowVector<Scalar> scale_row = inv_std.cwiseProduct(gamma.value().row(0));
    yv = ((xv.rowwise() - state.running_mean).array().rowwise() * scale_row.array()).matrix();
    yv.rowwise() += beta.value().row(0);
    RowVector<Scalar> mean_row = state.running_mean;
    return x.tape->record(std::move(out), {x, gamma, beta},
                          [x = x.id, gm = gamma.id, bt = beta.id, inv_std, mean_row, rows, channels](
                              Tape<Scalar>& t, std::size_t self) {
                            ConstMatrixMap<Scalar> gv(t.grad(self).data(), rows, channels);
                            ConstMatrixMap<Scalar> xin(t.value(x).data(), rows, channels);
                            const Matrix<Scalar> xhat =
                                ((xin.rowwise() - mean_row).array().rowwise() * inv_std.array()).matrix();
                            if (t.needs_grad(gm)) t.accumulate(gm, gv.cwiseProduct(xhat).colwise().sum());
                            if (t.needs_grad(bt)) t.accumulate(bt, gv.colwise().sum());
                            if (t.needs_grad(x)) {
                              const RowVector<Scalar> s = inv_std.cwiseProduct(t.value(gm).row(0));
                              Matrix<Scalar> dx = (gv.array().rowwise() * s.array()).matrix();
                              t.accumulate(x, ConstMatrixMap<Scalar>(dx.data(), t.value(x).rows(), t.value(x).cols()));
                            }
                          });
  }

  if (rows < 2) throw ShapeError("batch_norm: training mode needs at least two samples per channel");
  const RowVector<Scalar> mu = xv.colwise().mean();
  Matrix<Scalar> centered = xv.rowwise() - mu;
  const RowVector<Scalar> var = centered.array().square().colwise().sum().matrix() / static_cast<Scalar>(rows);
  const RowVector<Scalar> inv_std = (var.array() + state.eps).rsqrt().matrix();
  Matrix<Scalar> xhat = (centered.array().rowwise() * inv_std.array()).matrix();
  yv = (xhat.array().rowwise() * gamma.value().row(0).array()).matrix();
  yv.rowwise() += beta.value().row(0);

  const Scalar m = state.momentum;
  const Scalar unbias = static_cast<Scalar>(rows) / static_cast<Scalar>(rows - 1);
  state.running_mean = (Scalar(1) - m) * state.running_mean + m * mu;
  state.running_var = (Scalar(1) - m) * state.running_var + m * unbias * var;

  return x.tape->record(
      std::move(out), {x, gamma, beta},
      [x = x.id, gm = gamma.id, bt = beta.id, inv_std, xhat = std::move(xhat), rows, channels](Tape<Scalar>& t,
                                                                                              std::size_t self) {
        ConstMatrixMap<Scalar> gv(t.grad(self).data(), rows, channels);
        if (t.needs_grad(gm)) t.accumulate(gm, gv.cwiseProduct(xhat).colwise().sum());
        if (t.needs_grad(bt)) t.accumulate(bt, gv.colwise().sum());
        if (t.needs_grad(x)) {
          const Matrix<Scalar> dxhat = (gv.array().rowwise() * t.value(gm).row(0).array()).matrix();
          const RowVector<Scalar> sum_d = dxhat.colwise().sum();
          const RowVector<Scalar> sum_dx = dxhat.cwiseProduct(xhat).colwise().sum();
          const Scalar inv_n = Scalar(1) / static_cast<Scalar>(rows);
          Matrix<Scalar> dx = dxhat;
          dx.rowwise() -= sum_d * inv_n;
          dx -= (xhat.array().rowwise() * (sum_dx * inv_n).array()).matrix();
          dx = (dx.array().rowwise() * inv_std.array()).matrix();
          t.accumulate(x, ConstMatrixMap<Scalar>(dx.data(), t.value(x).rows(), t.value(x).cols()));
        }
      });
}

template <typename Scalar>
Var<Scalar> layer_norm(Var<Scalar> x, Var<Scalar> gamma, Var<Scalar> beta, Scalar eps) {
  if (gamma.rows() != 1 || gamma.cols() != x.cols() || beta.rows() != 1 || beta.cols() != x.cols())
    throw ShapeError("layer_norm: affine parameters must be 1 x features");
  const Index d = x.cols();
  const ColVector<Scalar> mu = x.value().rowwise().mean();
  Matrix<Scalar> centered = x.value().colwise() - mu;
  const ColVector<Scalar> var = centered.array().square().rowwise().sum().matrix() / static_cast<Scalar>(d);
  const ColVector<Scalar> inv_std = (var.array() + eps).rsqrt().matrix();
  Matrix<Scalar> xhat = inv_std.asDiagonal() * centered;
  Matrix<Scalar> out = (xhat.array().rowwise() * gamma.value().row(0).array()).matrix();
  out.rowwise() += beta.value().row(0);
  return x.tape->record(
      std::move(out), {x, gamma, beta},
      [x = x.id, gm = gamma.id, bt = beta.id, inv_std, xhat = std::move(xhat), d](Tape<Scalar>& t, std::size_t self) {
        const auto& g = t.grad(self);
        if (t.needs_grad(gm)) t.accumulate(gm, g.cwiseProduct(xhat).colwise().sum());
        if (t.needs_grad(bt)) t.accumulate(bt, g.colwise().sum());
        if (t.needs_grad(x)) {
          const Matrix<Scalar> dxhat = (g.array().rowwise() * t.value(gm).row(0).array()).matrix();
          const ColVector<Scalar> sum_d = dxhat.rowwise().sum();
          const ColVector<Scalar> sum_dx = dxhat.cwiseProduct(xhat).rowwise().sum();
          const Scalar inv_d = Scalar(1) / static_cast<Scalar>(d);
          Matrix<Scalar> dx = dxhat;
          dx.colwise() -= sum_d * inv_d;
          dx -= (sum_dx * inv_d).asDiagonal() * xhat;
          t.accumulate(x, inv_std.asDiagonal() * dx);
        }
      });
}

template <typename Scalar>
Var<Scalar> gru_cell(Var<Scalar> x, Var<Scalar> h, Var<Scalar> w_input, Var<Scalar> w_gates, Var<Scalar> w_candidate,
                     Var<Scalar> bias) {
  const Index hidden = h.cols();
  if (x.rows() != h.rows()) throw ShapeError("gru_cell: batch mismatch between input and hidden state");
  if (w_input.rows() != x.cols() || w_input.cols() != 3 * hidden || w_gates.rows() != hidden ||
      w_gates.cols() != 2 * hidden || w_candidate.rows() != hidden || w_candidate.cols() != hidden ||
      bias.rows() != 1 || bias.cols() != 3 * hidden)
    throw ShapeError("gru_cell: parameter shapes inconsistent with input size and hidden size");

  const auto& hv = h.value();
  Matrix<Scalar> gx = x.value() * w_input.value();
  gx.rowwise() += bias.value().row(0);
  Matrix<Scalar> gh = hv * w_gates.value();
  Matrix<Scalar> zr = (gx.leftCols(2 * hidden) + gh).array();
  zr = (Scalar(1) + (-zr.array()).exp()).inverse().matrix();
  Matrix<Scalar> rh = zr.rightCols(hidden).cwiseProduct(hv);
  Matrix<Scalar> n = (gx.rightCols(hidden) + rh * w_candidate.value()).array().tanh().matrix();
  const auto z = zr.leftCols(hidden).array();
  Matrix<Scalar> out = ((Scalar(1) - z) * n.array() + z * hv.array()).matrix();

  if (!x.tape->recording()) return x.tape->constant(std::move(out));
  return x.tape->record(
      std::move(out), {x, h, w_input, w_gates, w_candidate, bias},
      [x = x.id, h = h.id, wi = w_input.id, wg = w_gates.id, wc = w_candidate.id, b = bias.id, hidden,
       zr = std::move(zr), rh = std::move(rh), n = std::move(n)](Tape<Scalar>& t, std::size_t self) {
        const auto& dh_next = t.grad(self).array();
        const auto& hv = t.value(h);
        const auto z = zr.leftCols(hidden).array();
        const auto r = zr.rightCols(hidden).array();
        const auto na = n.array();
        const Matrix<Scalar> dan = (dh_next * (Scalar(1) - z) * (Scalar(1) - na.square())).matrix();
        const Matrix<Scalar> drh = dan * t.value(wc).transpose();
        Matrix<Scalar> dgates(hv.rows(), 2 * hidden);
        dgates.leftCols(hidden) = (dh_next * (hv.array() - na) * z * (Scalar(1) - z)).matrix();
        dgates.rightCols(hidden) = (drh.array() * hv.array() * r * (Scalar(1) - r)).matrix();
        if (t.needs_grad(wc)) t.accumulate(wc, rh.transpose() * dan);
        if (t.needs_grad(wg)) t.accumulate(wg, hv.transpose() * dgates);
        Matrix<Scalar> dgx(hv.rows(), 3 * hidden);
        dgx.leftCols(2 * hidden) = dgates;
        dgx.rightCols(hidden) = dan;
        if (t.needs_grad(wi)) t.accumulate(wi, t.value(x).transpose() * dgx);
        if (t.needs_grad(b)) t.accumulate(b, dgx.colwise().sum());
        if (t.needs_grad(x)) t.accumulate(x, dgx * t.value(wi).transpose());
        if (t.needs_grad(h)) {
          Matrix<Scalar> dh = (dh_next * z + drh.array() * r).matrix();
          dh.noalias() += dgates * t.value(wg).transpose();
          t.accumulate(h, dh);
        }
      });
}

template <typename Scalar>
Var<Scalar> binary_cross_entropy(Var<Scalar> probs, const Matrix<Scalar>& labels) {
  if (probs.rows() != labels.rows() || probs.cols() != labels.cols())
    throw ShapeError("binary_cross_entropy: labels shape mismatch");
  if (probs.value().size() == 0) throw ShapeError("binary_cross_entropy: empty batch");
  static constexpr Scalar kLo = Scalar(1e-7);
  static constexpr Scalar kHi = Scalar(1) - Scalar(1e-7);
  const auto p = probs.value().array().cwiseMax(kLo).cwiseMin(kHi);
  const auto y = labels.array();
  Matrix<Scalar> out(1, 1);
  out(0, 0) = -(y * p.log() + (Scalar(1) - y) * (Scalar(1) - p).log()).mean();
  return probs.tape->record(std::move(out), {probs}, [pid = probs.id, labels](Tape<Scalar>& t, std::size_t self) {
    const auto& raw = t.value(pid).array();
    const auto pc = raw.cwiseMax(kLo).cwiseMin(kHi);
    const auto y = labels.array();
    const Scalar scale = t.grad(self)(0, 0) / static_cast<Scalar>(raw.size());
    Matrix<Scalar> g = ((raw > kLo && raw < kHi)
                            .select((Scalar(1) - y) / (Scalar(1) - pc) - y / pc, Scalar(0)) *
                        scale)
                           .matrix();
    t.accumulate(pid, g);
  });
}

template <typename Scalar>
Matrix<Scalar> log_softmax_rows(const Matrix<Scalar>& logits) {
  const ColVector<Scalar> mx = logits.rowwise().maxCoeff();
  Matrix<Scalar> shifted = logits.colwise() - mx;
  const ColVector<Scalar> lse = shifted.array().exp().rowwise().sum().log().matrix();
  shifted.colwise() -= lse;
  return shifted;
}

template <typename Scalar>
Var<Scalar> softmax_cross_entropy(Var<Scalar> logits, std::span<const int> labels) {
  if (static_cast<Index>(labels.size()) != logits.rows()) throw ShapeError("softmax_cross_entropy: label count");
  const Matrix<Scalar> logp = log_softmax_rows(logits.value());
  Matrix<Scalar> out(1, 1);
  Scalar total = 0;
  for (Index i = 0; i < logp.rows(); ++i) {
    const int c = labels[static_cast<std::size_t>(i)];
    if (c < 0 || c >= logp.cols()) throw ShapeError("softmax_cross_entropy: label out of range");
    total -= logp(i, c);
  }
  out(0, 0) = total / static_cast<Scalar>(logp.rows());
  std::vector<int> y(labels.begin(), labels.end());
  return logits.tape->record(std::move(out), {logits}, [id = logits.id, logp, y](Tape<Scalar>& t, std::size_t self) {
    Matrix<Scalar> g = logp.array().exp().matrix();
    for (Index i = 0; i < g.rows(); ++i) g(i, y[static_cast<std::size_t>(i)]) -= Scalar(1);
    g *= t.grad(self)(0, 0) / static_cast<Scalar>(g.rows());
    t.accumulate(id, g);
  });
}

template <typename Scalar>
Var<Scalar> mse(Var<Scalar> a, const Matrix<Scalar>& target) {
  if (a.rows() != target.rows() || a.cols() != target.cols()) throw ShapeError("mse: target shape mismatch");
  Matrix<Scalar> diff = a.value() - target;
  Matrix<Scalar> out(1, 1);
  out(0, 0) = diff.squaredNorm() / static_cast<Scalar>(diff.size());
  return a.tape->record(std::move(out), {a}, [id = a.id, diff = std::move(diff)](Tape<Scalar>& t, std::size_t self) {
    t.accumulate(id, diff * (Scalar(2) * t.grad(self)(0, 0) / static_cast<Scalar>(diff.size())));
  });
}

#define DEIR_INSTANTIATE_OPS(S)                                                                          \
  template Var<S> matmul(Var<S>, Var<S>);                                                                \
  template Var<S> linear(Var<S>, Var<S>, Var<S>);                                                        \
  template Var<S> add(Var<S>, Var<S>);                                                                   \
  template Var<S> sub(Var<S>, Var<S>);                                                                   \
  template Var<S> mul(Var<S>, Var<S>);                                                                   \
  template Var<S> add_row(Var<S>, Var<S>);                                                               \
  template Var<S> scale(Var<S>, S);                                                                      \
  template Var<S> scale_rows(Var<S>, const ColVector<S>&);                                               \
  template Var<S> relu(Var<S>);                                                                          \
  template Var<S> sigmoid(Var<S>);                                                                       \
  template Var<S> tanh(Var<S>);                                                                          \
  template Var<S> square(Var<S>);                                                                        \
  template Var<S> sum(Var<S>);                                                                           \
  template Var<S> mean(Var<S>);                                                                          \
  template Var<S> concat_cols(std::span<const Var<S>>);                                                  \
  template Var<S> concat_rows(std::span<const Var<S>>);                                                  \
  template Var<S> slice_cols(Var<S>, Index, Index);                                                      \
  template Var<S> slice_rows(Var<S>, Index, Index);                                                      \
  template Var<S> gather_rows(Var<S>, std::span<const Index>);                                           \
  template Var<S> reshape(Var<S>, Index, Index);                                                         \
  template Var<S> conv2d(Var<S>, Var<S>, Var<S>, const ConvGeometry&);                                   \
  template Var<S> batch_norm(Var<S>, Var<S>, Var<S>, BatchNormState<S>&, bool);                          \
  template Var<S> layer_norm(Var<S>, Var<S>, Var<S>, S);                                                 \
  template Var<S> gru_cell(Var<S>, Var<S>, Var<S>, Var<S>, Var<S>, Var<S>);                              \
  template Var<S> binary_cross_entropy(Var<S>, const Matrix<S>&);                                        \
  template Var<S> softmax_cross_entropy(Var<S>, std::span<const int>);                                   \
  template Var<S> mse(Var<S>, const Matrix<S>&);                                                         \
  template Matrix<S> log_softmax_rows(const Matrix<S>&);

DEIR_INSTANTIATE_OPS(float)
DEIR_INSTANTIATE_OPS(double)

}  // namespace deir::nn
