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

#include <doctest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "deir/nn/adam.hpp"
#include "deir/nn/layers.hpp"
#include "deir/nn/serialize.hpp"
#include "grad_check.hpp"

using namespace deir::nn;
using deir::testing::check_gradients;
using deir::testing::random_matrix;

namespace {

using Inputs = std::vector<Var<double>>;
constexpr double kTol = 1e-4;
constexpr int kDraws = 10;

}  // namespace

TEST_CASE("identity and dense forward") {
  Tape<float> t(false);
  Matrix<float> x(2, 3);
  x << 1, 2, 3, 4, 5, 6;
  auto v = t.constant(x);
  CHECK(v.value() == x);
  Parameter<float> w("w", Matrix<float>::Identity(3, 3));
  Parameter<float> b("b", Matrix<float>::Zero(1, 3));
  CHECK(linear(v, t.parameter(w), t.parameter(b)).value() == x);
}

TEST_CASE("conv of ones over a 2x2 ones image is 4") {
  Tape<double> t(false);
  ConvGeometry g{2, 2, 1, 1, 2, 1, 0};
  auto out = conv2d(t.constant(Matrix<double>::Ones(1, 4)), t.constant(Matrix<double>::Ones(4, 1)),
                    t.constant(Matrix<double>::Zero(1, 1)), g);
  REQUIRE(out.value().size() == 1);
  CHECK(out.value()(0, 0) == 4.0);
}

TEST_CASE("square derivative at 3 is 6") {
  Tape<double> t;
  auto x = t.leaf(Matrix<double>::Constant(1, 1, 3.0));
  auto y = x * x;
  t.backward(y);
  CHECK(t.grad(x)(0, 0) == doctest::Approx(6.0));
}

TEST_CASE("parameter used twice accumulates both branches") {
  Parameter<double> p("p", Matrix<double>::Constant(1, 1, 2.0));
  Tape<double> t;
  auto a = t.parameter(p);
  auto y = add(scale(a, 3.0), scale(t.parameter(p), 5.0));
  t.backward(sum(y));
  CHECK(p.grad(0, 0) == doctest::Approx(8.0));
}

TEST_CASE("backward contract errors") {
  Tape<double> empty;
  CHECK_THROWS_AS(empty.backward(Var<double>{&empty, 0}), GraphError);
  Tape<double> eval(false);
  auto v = eval.constant(Matrix<double>::Ones(1, 1));
  CHECK_THROWS_AS(eval.backward(v), GraphError);
  Tape<double> t;
  auto x = t.leaf(Matrix<double>::Ones(1, 1));
  t.backward(x);
  CHECK_THROWS_AS(t.backward(x), GraphError);
}

TEST_CASE("shape mismatches throw ShapeError") {
  Tape<double> t;
  auto a = t.leaf(Matrix<double>::Ones(2, 3));
  auto b = t.leaf(Matrix<double>::Ones(2, 2));
  CHECK_THROWS_AS(add(a, b), ShapeError);
  CHECK_THROWS_AS(matmul(a, a), ShapeError);
  ConvGeometry g{3, 3, 1, 1};
  CHECK_THROWS_AS(conv2d(a, b, b, g), ShapeError);
}

TEST_CASE("finite differences: elementwise and structural ops") {
  std::mt19937_64 rng(1);
  for (int d = 0; d < kDraws; ++d) {
    auto a = random_matrix(3, 4, rng);
    auto b = random_matrix(3, 4, rng);
    auto w = random_matrix(4, 2, rng);
    auto row = random_matrix(1, 4, rng);
    CHECK(check_gradients({a, w}, [](auto&, Inputs& v) { return matmul(v[0], v[1]); }, rng) < kTol);
    CHECK(check_gradients({a, b}, [](auto&, Inputs& v) { return mul(v[0], v[1]) - v[0]; }, rng) < kTol);
    CHECK(check_gradients({a, row}, [](auto&, Inputs& v) { return add_row(v[0], v[1]); }, rng) < kTol);
    CHECK(check_gradients({a}, [](auto&, Inputs& v) { return sigmoid(v[0]); }, rng) < kTol);
    CHECK(check_gradients({a}, [](auto&, Inputs& v) { return tanh(v[0]); }, rng) < kTol);
    CHECK(check_gradients({a}, [](auto&, Inputs& v) { return square(v[0]); }, rng) < kTol);
    CHECK(check_gradients({a}, [](auto&, Inputs& v) { return mean(v[0]); }, rng) < kTol);
    // Relu away from its kink.
    Matrix<double> shifted = (a.array() >= 0).select(a.array() + 0.5, a.array() - 0.5);
    CHECK(check_gradients({shifted}, [](auto&, Inputs& v) { return relu(v[0]); }, rng) < kTol);
    CHECK(check_gradients({a, b},
                          [](auto&, Inputs& v) {
                            std::vector<Var<double>> parts{v[0], v[1]};
                            auto c = concat_cols<double>(parts);
                            auto r = concat_rows<double>(parts);
                            return add(slice_cols(c, 2, 4), slice_rows(r, 1, 3));
                          },
                          rng) < kTol);
    CHECK(check_gradients({a},
                          [](auto&, Inputs& v) {
                            std::vector<Index> idx{2, 0, 2};
                            return reshape(gather_rows<double>(v[0], idx), 2, 6);
                          },
                          rng) < kTol);
    ColVector<double> mask(3);
    mask << 1.0, 0.0, 1.0;
    CHECK(check_gradients({a}, [&](auto&, Inputs& v) { return scale_rows(v[0], mask); }, rng) < kTol);
  }
}

TEST_CASE("finite differences: dense layer") {
  std::mt19937_64 rng(2);
  for (int d = 0; d < kDraws; ++d) {
    CHECK(check_gradients({random_matrix(5, 6, rng), random_matrix(6, 3, rng), random_matrix(1, 3, rng)},
                          [](auto&, Inputs& v) { return linear(v[0], v[1], v[2]); }, rng) < kTol);
  }
}

TEST_CASE("finite differences: conv layer, padded and unpadded") {
  std::mt19937_64 rng(3);
  for (int d = 0; d < kDraws; ++d) {
    ConvGeometry g{4, 3, 2, 3, 2, 1, d % 2};
    CHECK(check_gradients(
              {random_matrix(2, g.in_size(), rng), random_matrix(g.kernel * g.kernel * 2, 3, rng),
               random_matrix(1, 3, rng)},
              [&](auto&, Inputs& v) { return conv2d(v[0], v[1], v[2], g); }, rng) < kTol);
  }
}

TEST_CASE("finite differences: GRU cell") {
  std::mt19937_64 rng(4);
  const Index in = 5;
  const Index hidden = 4;
  for (int d = 0; d < kDraws; ++d) {
    CHECK(check_gradients({random_matrix(3, in, rng), random_matrix(3, hidden, rng),
                           random_matrix(in, 3 * hidden, rng, 0.5), random_matrix(hidden, 2 * hidden, rng, 0.5),
                           random_matrix(hidden, hidden, rng, 0.5), random_matrix(1, 3 * hidden, rng, 0.5)},
                          [](auto&, Inputs& v) { return gru_cell(v[0], v[1], v[2], v[3], v[4], v[5]); }, rng) <
          kTol);
  }
}

TEST_CASE("finite differences: batch and layer normalization") {
  std::mt19937_64 rng(5);
  for (int d = 0; d < kDraws; ++d) {
    // Two channels over three spatial positions.
    BatchNormState<double> state{RowVector<double>::Zero(2), RowVector<double>::Ones(2)};
    CHECK(check_gradients({random_matrix(4, 6, rng), random_matrix(1, 2, rng), random_matrix(1, 2, rng)},
                          [&](auto&, Inputs& v) { return batch_norm(v[0], v[1], v[2], state, true); }, rng) < kTol);
    CHECK(check_gradients({random_matrix(4, 6, rng), random_matrix(1, 2, rng), random_matrix(1, 2, rng)},
                          [&](auto&, Inputs& v) { return batch_norm(v[0], v[1], v[2], state, false); }, rng) < kTol);
    CHECK(check_gradients({random_matrix(3, 5, rng), random_matrix(1, 5, rng), random_matrix(1, 5, rng)},
                          [](auto&, Inputs& v) { return layer_norm(v[0], v[1], v[2]); }, rng) < kTol);
  }
}

TEST_CASE("finite differences: losses") {
  std::mt19937_64 rng(6);
  for (int d = 0; d < kDraws; ++d) {
    Matrix<double> labels = (random_matrix(6, 1, rng).array() > 0).cast<double>();
    CHECK(check_gradients({random_matrix(6, 1, rng)},
                          [&](auto&, Inputs& v) { return binary_cross_entropy(sigmoid(v[0]), labels); }, rng) <
          kTol);
    std::vector<int> classes{0, 3, 1, 2};
    CHECK(check_gradients({random_matrix(4, 4, rng)},
                          [&](auto&, Inputs& v) { return softmax_cross_entropy<double>(v[0], classes); }, rng) <
          kTol);
    Matrix<double> target = random_matrix(3, 2, rng);
    CHECK(check_gradients({random_matrix(3, 2, rng)}, [&](auto&, Inputs& v) { return mse(v[0], target); }, rng) <
          kTol);
  }
}

TEST_CASE("gru with zero parameters halves the hidden state") {
  Tape<double> t(false);
  Matrix<double> h(1, 3);
  h << 0.4, -1.0, 2.0;
  auto out = gru_cell(t.constant(Matrix<double>::Ones(1, 2)), t.constant(h), t.constant(Matrix<double>::Zero(2, 9)),
                      t.constant(Matrix<double>::Zero(3, 6)), t.constant(Matrix<double>::Zero(3, 3)),
                      t.constant(Matrix<double>::Zero(1, 9)));
  CHECK((out.value() - 0.5 * h).cwiseAbs().maxCoeff() < 1e-15);
  auto zero = gru_cell(t.constant(Matrix<double>::Ones(1, 2)), t.constant(Matrix<double>::Zero(1, 3)),
                       t.constant(Matrix<double>::Zero(2, 9)), t.constant(Matrix<double>::Zero(3, 6)),
                       t.constant(Matrix<double>::Zero(3, 3)), t.constant(Matrix<double>::Zero(1, 9)));
  CHECK(zero.value().isZero(0.0));
}

TEST_CASE("gru unrolled on one tape equals sequential single steps") {
  std::mt19937_64 rng(7);
  GruCell<float> cell("gru", 4, 6, rng);
  std::vector<Matrix<float>> xs;
  for (int i = 0; i < 5; ++i) xs.push_back(random_matrix(2, 4, rng).cast<float>());
  Tape<float> unrolled;
  auto h = unrolled.constant(Matrix<float>::Zero(2, 6));
  for (const auto& x : xs) h = cell(unrolled, unrolled.constant(x), h);
  Matrix<float> seq = Matrix<float>::Zero(2, 6);
  for (const auto& x : xs) {
    Tape<float> t(false);
    seq = cell(t, t.constant(x), t.constant(seq)).value();
  }
  CHECK(h.value() == seq);
}

TEST_CASE("batch norm statistics and modes") {
  std::mt19937_64 rng(8);
  Norm<double> bn("bn", NormKind::Batch, 3, 3);
  Matrix<double> x = random_matrix(16, 3, rng, 3.0).array() + 2.0;
  Tape<double> t;
  auto y = bn(t, t.constant(x), true).value();
  const RowVector<double> mu = y.colwise().mean();
  const RowVector<double> var = (y.rowwise() - mu).array().square().colwise().mean();
  CHECK(mu.cwiseAbs().maxCoeff() < 1e-5);
  CHECK((var.array() - 1.0).abs().maxCoeff() < 1e-5);

  Tape<double> one(false);
  CHECK_THROWS_AS(bn(one, one.constant(x.topRows(1)), true), ShapeError);
  Matrix<double> single = x.topRows(1);
  auto out = bn(one, one.constant(single), false).value();
  // Hand-applied running-stat formula (gamma 1, beta 0).
  Matrix<double> expect = (single - bn.state.running_mean).array() / (bn.state.running_var.array() + 1e-8).sqrt();
  CHECK((out - expect).cwiseAbs().maxCoeff() < 1e-12);
  // Running stats after one step: 0.9 * init + 0.1 * batch (unbiased variance).
  const RowVector<double> xm = x.colwise().mean();
  const RowVector<double> xv = (x.rowwise() - xm).array().square().colwise().sum() / 15.0;
  CHECK((bn.state.running_mean - 0.1 * xm).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((bn.state.running_var.array() - (0.9 + 0.1 * xv.array())).abs().maxCoeff() < 1e-12);

  Tape<double> a(false);
  Tape<double> b(false);
  CHECK(bn(a, a.constant(x), false).value() == bn(b, b.constant(x), false).value());
}

TEST_CASE("layer norm of a constant row returns the shift") {
  Norm<double> ln("ln", NormKind::Layer, 4, 4);
  ln.beta.value << 0.1, -0.2, 0.3, 0.4;
  Tape<double> t(false);
  auto y = ln(t, t.constant(Matrix<double>::Constant(2, 4, 7.0)), true).value();
  for (Index r = 0; r < 2; ++r) CHECK((y.row(r) - ln.beta.value.row(0)).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("encoder eval forward is pure and shapes follow the view") {
  std::mt19937_64 rng(9);
  ConvEncoder<float> enc7("enc", EncoderConfig{7, {8, 8, 8}, 16}, rng);
  ConvEncoder<float> enc3("enc", EncoderConfig{3, {8, 8, 8}, 16}, rng);
  CHECK(enc7.flat_features() == 4 * 4 * 8);
  CHECK(enc3.flat_features() == 2 * 2 * 8);
  Matrix<float> x = random_matrix(3, 147, rng).cast<float>();
  Tape<float> a(false);
  Tape<float> b(false);
  CHECK(enc7(a, a.constant(x), false).value() == enc7(b, b.constant(x), false).value());
}

TEST_CASE("adam update values") {
  Parameter<double> p("p", Matrix<double>::Zero(1, 1));
  Registry<double> reg;
  reg.add(p);
  AdamState<double> s(AdamConfig{1e-3, 0.9, 0.999, 1e-5}, reg);
  p.grad(0, 0) = 0.5;
  adam_step(s, reg);
  CHECK(p.value(0, 0) == doctest::Approx(-1e-3 * 0.5 / (0.5 + 1e-5)).epsilon(1e-12));
  CHECK(p.value(0, 0) == doctest::Approx(-9.9998e-4).epsilon(1e-5));
  CHECK(s.step == 1);

  // Zero gradient leaves a fresh parameter unchanged.
  Parameter<double> q("q", Matrix<double>::Constant(2, 2, 1.5));
  Registry<double> rq;
  rq.add(q);
  AdamState<double> sq(AdamConfig{}, rq);
  adam_step(sq, rq);
  CHECK(q.value.isConstant(1.5, 0.0));

  // Bias correction: two steps with g differ from one step with doubled lr.
  Parameter<double> a("a", Matrix<double>::Zero(1, 1));
  Parameter<double> b("b", Matrix<double>::Zero(1, 1));
  Registry<double> ra;
  ra.add(a);
  Registry<double> rb;
  rb.add(b);
  AdamState<double> sa(AdamConfig{1e-3}, ra);
  AdamState<double> sb(AdamConfig{2e-3}, rb);
  for (int i = 0; i < 2; ++i) {
    a.grad(0, 0) = 0.5;
    adam_step(sa, ra);
  }
  b.grad(0, 0) = 0.5;
  adam_step(sb, rb);
  CHECK(a.value(0, 0) != b.value(0, 0));
}

TEST_CASE("adam with zero learning rate is the identity") {
  std::mt19937_64 rng(10);
  Dense<float> layer("d", 4, 3, 1.0, rng);
  Registry<float> reg;
  layer.collect(reg);
  const Matrix<float> before = layer.weight.value;
  AdamState<float> s(AdamConfig{0.0}, reg);
  for (auto* p : reg.parameters) p->grad.setConstant(0.3f);
  adam_step(s, reg);
  CHECK(layer.weight.value == before);
}

TEST_CASE("gradient norm clipping") {
  Parameter<double> p("p", Matrix<double>::Zero(1, 2));
  Registry<double> reg;
  reg.add(p);
  p.grad << 3.0, 4.0;
  CHECK(clip_grad_norm(reg, 0.5) == doctest::Approx(5.0));
  CHECK(p.grad.norm() == doctest::Approx(0.5).epsilon(1e-5));
}

TEST_CASE("orthogonal init has orthonormal columns") {
  std::mt19937_64 rng(11);
  Matrix<double> m(8, 5);
  init_orthogonal(m, 1.0, rng);
  CHECK((m.transpose() * m - Matrix<double>::Identity(5, 5)).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("blob round trip and corruption") {
  std::mt19937_64 rng(12);
  ConvEncoder<float> enc("enc", EncoderConfig{7, {4, 4, 4}, 8}, rng);
  Registry<float> reg;
  enc.collect(reg);
  const std::string bytes = encode_blob(export_registry(reg));
  CHECK(encode_blob(decode_blob(bytes)) == bytes);

  std::mt19937_64 other(13);
  ConvEncoder<float> copy("enc", EncoderConfig{7, {4, 4, 4}, 8}, other);
  Registry<float> creg;
  copy.collect(creg);
  import_registry(creg, decode_blob(bytes));
  CHECK(encode_blob(export_registry(creg)) == bytes);

  std::string bad = bytes;
  bad[0] = 'X';
  CHECK_THROWS_AS(decode_blob(bad), BlobError);
  CHECK_THROWS_AS(decode_blob(bytes.substr(0, bytes.size() - 3)), BlobError);
  std::string huge = bytes;
  huge[8] = static_cast<char>(0xff);
  huge[15] = static_cast<char>(0x7f);
  CHECK_THROWS_AS(decode_blob(huge), BlobError);

  ConvEncoder<float> wrong("enc", EncoderConfig{7, {4, 4, 4}, 16}, other);
  Registry<float> wreg;
  wrong.collect(wreg);
  const Matrix<float> untouched = wreg.parameters.front()->value;
  CHECK_THROWS_AS(import_registry(wreg, decode_blob(bytes)), BlobError);
  CHECK(wreg.parameters.front()->value == untouched);
}

TEST_CASE("gradient checker rejects a wrong backward") {
  std::mt19937_64 rng(14);
  const double err = check_gradients(
      {random_matrix(3, 3, rng)},
      [](Tape<double>& t, Inputs& v) {
        Matrix<double> out = v[0].value().array().square();
        return t.record(out, {v[0]}, [id = v[0].id](Tape<double>& tape, std::size_t self) {
          tape.accumulate(id, tape.grad(self).cwiseProduct(tape.value(id)));  // missing factor 2
        });
      },
      rng);
  CHECK(err > 0.1);
}
