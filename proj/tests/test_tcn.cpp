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

#include "tdsep/tcn.hpp"
#include "test_util.hpp"

using namespace tdsep;
using tdsep::testing::gradient_check;
using tdsep::testing::project;
using tdsep::testing::random_matrix;

namespace {

/// Brute-force sum over s + d*t = p for every p of the full output, then the
/// length-preserving window starting at the right padding.
Matrix<double> dilated_conv_oracle(const Matrix<double>& x, const Matrix<double>& k, Index d) {
  const Index steps = x.rows(), taps = k.rows(), span = (taps - 1) * d;
  const Index pad_right = span - span / 2;
  Matrix<double> out(steps, x.cols());
  for (Index c = 0; c < x.cols(); ++c) {
    std::vector<double> full(static_cast<std::size_t>(steps + span), 0.0);
    for (Index s = 0; s < steps; ++s)
      for (Index t = 0; t < taps; ++t) full[static_cast<std::size_t>(s + d * t)] += x(s, c) * k(t, c);
    for (Index p = 0; p < steps; ++p) out(p, c) = full[static_cast<std::size_t>(p + pad_right)];
  }
  return out;
}

Matrix<double> dw(const Matrix<double>& x, const Matrix<double>& k, Index d) {
  return depthwise_conv(Var<double>::constant(x), Var<double>::constant(k), d).value();
}

ConvBlockConfig block_config(BlockKind kind, Index in = 5, Index hidden = 5, Index kernel = 3, Index dilation = 2) {
  ConvBlockConfig c;
  c.in_channels = in;
  c.hidden_channels = hidden;
  c.kernel = kernel;
  c.dilation = dilation;
  c.kind = kind;
  return c;
}

void fill_prefix(ParamStore<double>& store, const std::string& prefix, double value) {
  store.for_each_with_prefix(prefix, [value](const std::string&, Matrix<double>& m) { m.setConstant(value); });
}

}  // namespace

TEST_CASE("depthwise dilated convolution", "[tcn][conv]") {
  Rng rng(1);
  SECTION("K=1 scales each channel") {
    const Matrix<double> x = random_matrix(9, 3, rng);
    Matrix<double> k(1, 3);
    k << 2.0, -0.5, 0.0;
    const Matrix<double> y = dw(x, k, 4);
    for (Index c = 0; c < 3; ++c) CHECK(y.col(c) == k(0, c) * x.col(c));
  }
  SECTION("two taps at dilation 2 on an impulse") {
    Matrix<double> x = Matrix<double>::Zero(5, 1);
    x(0, 0) = 1.0;
    const Matrix<double> k = Matrix<double>::Ones(2, 1);
    // The sum over s + 2t = p is [1, 0, 1, 0, 0]; symmetric padding shifts it by one.
    const Matrix<double> expected = dilated_conv_oracle(x, k, 2);
    CHECK(expected(1, 0) == 1.0);
    CHECK(expected.sum() == 1.0);
    CHECK(dw(x, k, 2) == expected);
    CHECK(same_padding_left(2, 2) == 1);
  }
  SECTION("d=1 equals a standard length-preserving convolution") {
    const Matrix<double> x = random_matrix(12, 2, rng), k = random_matrix(3, 2, rng);
    const Matrix<double> y = dw(x, k, 1);
    for (Index c = 0; c < 2; ++c)
      for (Index p = 0; p < 12; ++p) {
        double acc = 0.0;
        for (Index t = 0; t < 3; ++t) {
          const Index s = p + 1 - t;
          if (s >= 0 && s < 12) acc += k(t, c) * x(s, c);
        }
        CHECK(y(p, c) == Catch::Approx(acc).margin(1e-14));
      }
  }
  SECTION("matches the brute-force oracle for random shapes") {
    for (int trial = 0; trial < 50; ++trial) {
      const Index steps = 1 + static_cast<Index>(uniform_index(rng, 30));
      const Index taps = 1 + static_cast<Index>(uniform_index(rng, 4));
      const Index d = 1 + static_cast<Index>(uniform_index(rng, 6));
      const Matrix<double> x = random_matrix(steps, 3, rng), k = random_matrix(taps, 3, rng);
      CHECK((dw(x, k, d) - dilated_conv_oracle(x, k, d)).cwiseAbs().maxCoeff() < 1e-12);
    }
  }
  SECTION("channel mismatch") {
    CHECK_THROWS_AS(dw(random_matrix(4, 3, rng), random_matrix(3, 2, rng), 1), ShapeError);
  }
}

TEST_CASE("global normalization", "[tcn][norm]") {
  Rng rng(2);
  const auto unit = [](Index c) {
    return std::pair{Var<double>::constant(Matrix<double>::Ones(1, c)), Var<double>::constant(Matrix<double>::Zero(1, c))};
  };
  SECTION("a standardized input is a fixed point") {
    Matrix<double> x = random_matrix(6, 4, rng);
    x.array() -= x.mean();
    x /= std::sqrt(x.squaredNorm() / 24.0);
    const auto [g, b] = unit(4);
    CHECK((global_norm(Var<double>::constant(x), g, b).value() - x).cwiseAbs().maxCoeff() < 1e-6);
  }
  SECTION("a constant input maps to zeros") {
    const auto [g, b] = unit(3);
    const auto y = global_norm(Var<double>::constant(Matrix<double>::Constant(5, 3, 7.5)), g, b).value();
    CHECK(y.isZero(0.0));
    CHECK(y.allFinite());
  }
  SECTION("random 4x3 input has joint moments (0, 1)") {
    const auto [g, b] = unit(3);
    const Matrix<double> y = global_norm(Var<double>::constant(random_matrix(4, 3, rng, 5.0)), g, b).value();
    double mean = 0.0;
    for (Index i = 0; i < y.size(); ++i) mean += y.data()[i];
    mean /= 12.0;
    double var = 0.0;
    for (Index i = 0; i < y.size(); ++i) var += (y.data()[i] - mean) * (y.data()[i] - mean);
    var /= 12.0;
    CHECK(std::abs(mean) < 1e-6);
    CHECK(std::abs(var - 1.0) < 1e-6);
  }
  SECTION("gain and bias act per channel") {
    const Matrix<double> x = random_matrix(5, 2, rng);
    Matrix<double> gain(1, 2), bias(1, 2);
    gain << 2.0, -1.0;
    bias << 0.5, 3.0;
    const auto [g1, b0] = unit(2);
    const Matrix<double> base = global_norm(Var<double>::constant(x), g1, b0).value();
    const Matrix<double> y = global_norm(Var<double>::constant(x), Var<double>::constant(gain), Var<double>::constant(bias)).value();
    for (Index c = 0; c < 2; ++c) CHECK((y.col(c) - (gain(0, c) * base.col(c)).array().matrix() - Matrix<double>::Constant(5, 1, bias(0, c))).cwiseAbs().maxCoeff() < 1e-12);
  }
  SECTION("a single value is rejected") {
    const auto [g, b] = unit(1);
    CHECK_THROWS_AS(global_norm(Var<double>::constant(Matrix<double>::Ones(1, 1)), g, b), ShapeError);
  }
}

TEST_CASE("conv block residual identity", "[tcn][block]") {
  Rng rng(3);
  for (BlockKind kind : {BlockKind::kPlain, BlockKind::kGated, BlockKind::kParallel}) {
    ParamStore<double> store;
    Rng init(10);
    ConvBlock<double> block(block_config(kind), store, "blk", init);
    fill_prefix(store, "blk.a", 0.0);
    fill_prefix(store, "blk.b", 0.0);
    const Matrix<double> x = random_matrix(10, 5, rng);
    INFO(to_string(kind));
    CHECK(block.forward(Var<double>::constant(x)).value() == x);
  }
}

TEST_CASE("single-frame block matches a hand evaluation", "[tcn][block]") {
  ParamStore<double> store;
  Rng init(4);
  ConvBlock<double> block(block_config(BlockKind::kPlain, 4, 3, 3, 1), store, "blk", init);
  Rng rng(5);
  const Matrix<double> x = random_matrix(1, 4, rng);
  const auto p = [&](const std::string& n) { return store.at("blk." + n).value(); };

  const auto prelu_row = [](Matrix<double> v, const Matrix<double>& slope) {
    for (Index c = 0; c < v.cols(); ++c)
      if (v(0, c) < 0.0) v(0, c) *= slope(0, c);
    return v;
  };
  const auto norm_row = [](const Matrix<double>& v, const Matrix<double>& g, const Matrix<double>& b) {
    const double mean = v.mean();
    const double var = (v.array() - mean).square().mean();
    Matrix<double> out(1, v.cols());
    for (Index c = 0; c < v.cols(); ++c) out(0, c) = g(0, c) * (v(0, c) - mean) / std::sqrt(var + 1e-8) + b(0, c);
    return out;
  };
  Matrix<double> a = norm_row(prelu_row(x * p("a.conv.w") + p("a.conv.b"), p("a.prelu")), p("a.norm.gain"), p("a.norm.bias"));
  // Only the centre tap overlaps the single frame; the others read padding.
  const Matrix<double> centre = a.cwiseProduct(p("b.dw.kernel").row(1));
  const Matrix<double> b = norm_row(prelu_row(centre, p("b.prelu")), p("b.norm.gain"), p("b.norm.bias"));
  const Matrix<double> expected = x + b * p("b.conv.w") + p("b.conv.b");
  CHECK((block.forward(Var<double>::constant(x)).value() - expected).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("gated block limits", "[tcn][block]") {
  Rng rng(6);
  ParamStore<double> gated_store, plain_store;
  Rng init_a(7), init_b(8);
  ConvBlock<double> gated(block_config(BlockKind::kGated), gated_store, "blk", init_a);
  ConvBlock<double> plain(block_config(BlockKind::kPlain), plain_store, "blk", init_b);
  for (auto& [name, p] : plain_store.entries()) p.mutable_value() = gated_store.at(name).value();
  const Matrix<double> x = random_matrix(12, 5, rng);

  SECTION("fully open gates reproduce the ungated block") {
    gated_store.at("blk.gate_a.b").mutable_value().setConstant(40.0);
    gated_store.at("blk.gate_b.b").mutable_value().setConstant(40.0);
    const Matrix<double> diff = gated.forward(Var<double>::constant(x)).value() - plain.forward(Var<double>::constant(x)).value();
    CHECK(diff.cwiseAbs().maxCoeff() < 1e-4);
  }
  SECTION("fully closed gates leave only the residual") {
    gated_store.at("blk.gate_a.b").mutable_value().setConstant(-1e3);
    gated_store.at("blk.gate_b.b").mutable_value().setConstant(-1e3);
    CHECK(gated.forward(Var<double>::constant(x)).value() == x);
  }
  SECTION("zero main path gives the identity for any gate") {
    fill_prefix(gated_store, "blk.a", 0.0);
    fill_prefix(gated_store, "blk.b", 0.0);
    CHECK(gated.forward(Var<double>::constant(x)).value() == x);
  }
}

TEST_CASE("receptive field arithmetic", "[tcn][rf]") {
  CHECK(receptive_field({1, 2, 4, 4}, 1) == 1);
  CHECK(receptive_field({8}, 1) == 1);
  CHECK(receptive_field({1}, 3) == 3);
  CHECK(receptive_field({1, 2, 4, 4}, 3) == 23);
  CHECK_THROWS_AS(receptive_field({}, 3), ConfigError);
}

TEST_CASE("receptive field equals the measured gradient support", "[tcn][rf][property]") {
  Rng rng(9);
  const Index choices[] = {1, 2, 4, 8};
  for (int trial = 0; trial < 24; ++trial) {
    TcnConfig cfg;
    cfg.block = block_config(BlockKind::kGated, 3, 3, 2 + static_cast<Index>(uniform_index(rng, 2)), 1);
    cfg.dilations.clear();
    const std::size_t depth = 1 + uniform_index(rng, 4);
    for (std::size_t i = 0; i < depth; ++i) cfg.dilations.push_back(choices[uniform_index(rng, 4)]);
    ParamStore<double> store;
    Tcn<double> tcn(cfg, store, "tcn", rng);
    const Index rf = receptive_field(cfg.dilations, cfg.block.kernel);
    const Index steps = 2 * rf + 9;
    const Index centre = steps / 2;
    auto x = Var<double>::parameter(random_matrix(steps, 3, rng));
    const auto y = tcn.forward(x, true);
    Matrix<double> select = Matrix<double>::Zero(steps, 3);
    select.row(centre).setOnes();
    backward(sum_all(y * Var<double>::constant(select)));
    Index first = -1, last = -1;
    for (Index t = 0; t < steps; ++t) {
      if (x.grad().row(t).cwiseAbs().maxCoeff() > 0.0) {
        if (first < 0) first = t;
        last = t;
      }
    }
    INFO("K=" << cfg.block.kernel << " depth=" << depth);
    CHECK(last - first + 1 == rf);
  }
}

TEST_CASE("conv block configuration errors", "[tcn][config]") {
  ParamStore<double> store;
  Rng rng(1);
  auto c = block_config(BlockKind::kGated);
  c.causal = true;
  CHECK_THROWS_AS(ConvBlock<double>(c, store, "x", rng), ConfigError);
  CHECK_THROWS_AS(ConvBlock<double>(block_config(BlockKind::kHighway, 4, 6), store, "y", rng), ConfigError);
  CHECK_THROWS_AS(ConvBlock<double>(block_config(BlockKind::kPlain, 4, 4, 0), store, "z", rng), ConfigError);
  TcnConfig t;
  t.dilations = {};
  CHECK_THROWS_AS(Tcn<double>(t, store, "w", rng), ConfigError);
}

TEST_CASE("block and stack gradients match finite differences", "[tcn][grad]") {
  for (BlockKind kind : {BlockKind::kPlain, BlockKind::kGated, BlockKind::kParallel, BlockKind::kHighway}) {
    ParamStore<double> store;
    Rng rng(static_cast<std::uint64_t>(kind) + 20);
    ConvBlock<double> block(block_config(kind, 6, 6, 3, 2), store, "blk", rng);
    auto x = Var<double>::parameter(random_matrix(14, 6, rng));
    const Matrix<double> probe = random_matrix(14, 6, rng);
    std::vector<Var<double>> leaves{x};
    for (const auto& [name, p] : store.entries()) leaves.push_back(p);
    const auto result = gradient_check(leaves, [&] { return sum_all(block.forward(x) * Var<double>::constant(probe)); });
    INFO(to_string(kind) << " rel err " << result.relative_error);
    CHECK(result.relative_error < 1e-5);
  }
  ParamStore<double> store;
  Rng rng(30);
  TcnConfig cfg;
  cfg.dilations = {1, 2};
  cfg.block = block_config(BlockKind::kGated, 4, 8, 3, 1);
  Tcn<double> tcn(cfg, store, "tcn", rng);
  auto x = Var<double>::parameter(random_matrix(16, 4, rng));
  std::vector<Var<double>> leaves{x};
  for (const auto& [name, p] : store.entries()) leaves.push_back(p);
  Rng probe_rng(31);
  const Matrix<double> probe = random_matrix(16, 4, probe_rng);
  const auto result = gradient_check(leaves, [&] { return sum_all(tcn.forward(x) * Var<double>::constant(probe)); });
  CHECK(result.relative_error < 1e-5);
}
