// Copyright 2026 The tdsep Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <catch2/catch_amalgamated.hpp>

#include "tdsep/conv_ops.hpp"
#include "test_util.hpp"

using namespace tdsep;
using tdsep::testing::gradient_check;
using tdsep::testing::project;
using tdsep::testing::random_matrix;

namespace {

Var<double> param(Index r, Index c, Rng& rng) { return Var<double>::parameter(random_matrix(r, c, rng)); }

}  // namespace

TEST_CASE("elementwise ops and affine pass finite-difference checks", "[autograd]") {
  Rng rng(7);
  auto a = param(6, 4, rng), b = param(6, 4, rng), w = param(4, 3, rng), bias = param(1, 3, rng);
  auto slope = param(1, 3, rng);
  Rng proj_rng(1);
  const auto probe = tdsep::testing::random_matrix(6, 3, proj_rng);
  auto objective = [&] {
    Var<double> h = (a * b - a) + scale(b, 0.5);
    h = prelu(affine(sigmoid(h) * one_minus(sigmoid(a)), w, bias), slope);
    return sum_all(h * Var<double>::constant(probe));
  };
  const auto check = gradient_check({a, b, w, bias, slope}, objective);
  CHECK(check.relative_error < 1e-7);
}

TEST_CASE("structural ops pass finite-difference checks", "[autograd]") {
  Rng rng(11);
  auto x = param(9, 6, rng);
  auto sig = param(23, 1, rng);
  auto wts = param(1, 3, rng);
  Rng p(2);
  const auto r1 = random_matrix(5, 3, p);
  const auto r2 = random_matrix(9, 3, p);
  const auto r3 = random_matrix(23, 1, p);
  const auto r4 = random_matrix(1, 6, p);
  auto objective = [&] {
    Var<double> s = softmax_groups(x, 2);
    Var<double> left = slice_cols(s, 0, 3);
    Var<double> rows = concat_rows<double>({slice_rows(left, 0, 2), slice_rows(left, 6, 3)});
    Var<double> total = sum_all(rows * Var<double>::constant(r1));
    total = total + sum_all(scale_by_entry(slice_cols(x, 3, 3), softmax_groups(wts, 3), 1) * Var<double>::constant(r2));
    total = total + sum_all(overlap_add(frame_signal(sig, 5, 2), 2) * Var<double>::constant(r3));
    total = total + sum_all(max_pool_time(x) * Var<double>::constant(r4));
    return total + sum_all(mean_of<double>({left, slice_cols(x, 0, 3)}));
  };
  CHECK(gradient_check({x, sig, wts}, objective).relative_error < 1e-7);
}

TEST_CASE("convolution and normalization ops pass finite-difference checks", "[autograd]") {
  Rng rng(5);
  auto x = param(11, 4, rng);
  auto k = param(3, 4, rng);
  auto w = param(2 * 4, 5, rng);
  auto b = param(1, 5, rng);
  auto g = param(1, 4, rng), s = param(1, 4, rng);
  auto objective = [&] {
    Rng q(3);
    Var<double> h = depthwise_conv(x, k, 2);
    h = global_norm(h, g, s);
    h = layer_norm(h, g, s);
    return project(conv1d(h, w, b, 2, 3), q);
  };
  CHECK(gradient_check({x, k, w, b, g, s}, objective).relative_error < 1e-6);
}

TEST_CASE("detached normalization statistics only drop the statistics path", "[autograd]") {
  Rng rng(8);
  auto x = param(7, 3, rng);
  auto g = Var<double>::constant(Matrix<double>::Ones(1, 3));
  auto s = Var<double>::constant(Matrix<double>::Zero(1, 3));
  backward(sum_all(global_norm(x, g, s, true)));
  const double count = 21.0;
  const double mean = x.value().sum() / count;
  const double var = (x.value().array() - mean).square().sum() / count;
  const double expected = 1.0 / std::sqrt(var + kNormEpsilon);
  CHECK((x.grad().array() - expected).abs().maxCoeff() < 1e-12);
}

TEST_CASE("shared subexpressions accumulate gradients", "[autograd]") {
  auto x = Var<double>::parameter(Matrix<double>::Constant(1, 1, 3.0));
  auto y = x * x + x;  // dy/dx = 2x + 1
  backward(sum_all(y));
  CHECK(x.grad()(0, 0) == Catch::Approx(7.0));
}

TEST_CASE("no-grad mode builds no graph", "[autograd]") {
  auto x = Var<double>::parameter(Matrix<double>::Ones(2, 2));
  NoGradGuard guard;
  auto y = x * x;
  CHECK_FALSE(y.requires_grad());
  CHECK(y.node()->parents.empty());
}

TEST_CASE("shape mismatches raise ShapeError", "[autograd]") {
  auto a = Var<double>::constant(Matrix<double>::Ones(2, 2));
  auto b = Var<double>::constant(Matrix<double>::Ones(3, 2));
  CHECK_THROWS_AS(a + b, ShapeError);
  CHECK_THROWS_AS(affine(a, b), ShapeError);
  CHECK_THROWS_AS(backward(a), ShapeError);
}
