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

#include <regex>

#include "tdsep/frontend.hpp"
#include "tdsep/separator.hpp"
#include "test_util.hpp"

using namespace tdsep;
using tdsep::testing::gradient_check;
using tdsep::testing::project;
using tdsep::testing::random_matrix;

namespace {

constexpr Index kBasis = 6;

SeparatorConfig small_config(Variant v) {
  SeparatorConfig c;
  c.variant = v;
  c.num_tcns = 2;
  c.bottleneck_channels = 4;
  c.hidden_channels = 4;
  c.dilations = {1, 2};
  c.py_branch_depths = {1, 2, 3};
  c.weightor.hidden_channels = 5;
  return c;
}

struct Built {
  ParamStore<double> store;
  Rng rng;
  Separator<double> sep;
  Built(const SeparatorConfig& cfg, std::uint64_t seed) : rng(seed), sep(cfg, kBasis, store, rng) {}
};

Matrix<double> masks_of(const Separator<double>& sep, const Matrix<double>& rep,
                        const std::optional<Var<double>>& w = std::nullopt) {
  return sep.forward(Var<double>::constant(rep), w).masks.value();
}

Var<double> weights(std::initializer_list<double> v) {
  Matrix<double> m(1, static_cast<Index>(v.size()));
  Index i = 0;
  for (double x : v) m(0, i++) = x;
  return Var<double>::constant(m);
}

void fill_prefix(ParamStore<double>& store, const std::string& prefix, double value) {
  store.for_each_with_prefix(prefix, [value](const std::string&, Matrix<double>& m) { m.setConstant(value); });
}

ConvBlockConfig highway_block() {
  ConvBlockConfig c;
  c.in_channels = 4;
  c.hidden_channels = 4;
  c.dilation = 2;
  c.kind = BlockKind::kHighway;
  return c;
}

}  // namespace

TEST_CASE("every variant produces complete masks", "[separator]") {
  Rng rng(1);
  const Matrix<double> rep = random_matrix(8, kBasis, rng).cwiseAbs();
  for (Variant v : all_variants()) {
    Built b(small_config(v), 2);
    const Matrix<double> m = masks_of(b.sep, rep);
    INFO(to_string(v));
    REQUIRE(m.rows() == 8);
    REQUIRE(m.cols() == 2 * kBasis);
    CHECK((m.leftCols(kBasis) + m.rightCols(kBasis) - Matrix<double>::Ones(8, kBasis)).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(m.minCoeff() >= 0.0);
    const auto split = apply_masks(Var<double>::constant(rep), Var<double>::constant(m), 2);
    CHECK(split.size() == 2);
    CHECK(split[1].rows() == 8);
    CHECK(split[1].cols() == kBasis);
  }
}

TEST_CASE("zeroed output conv gives uniform masks", "[separator]") {
  Built b(small_config(Variant::kPorta), 3);
  fill_prefix(b.store, "sep.out", 0.0);
  Rng rng(4);
  CHECK(masks_of(b.sep, random_matrix(8, kBasis, rng)) == Matrix<double>::Constant(8, 2 * kBasis, 0.5));
}

TEST_CASE("pyramid branch weighting", "[separator][py]") {
  Rng rng(5);
  const Matrix<double> rep = random_matrix(9, kBasis, rng);
  Built b(small_config(Variant::kPy), 6);
  const auto h = b.sep.bottleneck(Var<double>::constant(rep));

  SECTION("one-hot weights select a single branch") {
    for (std::size_t br = 0; br < 3; ++br) {
      Matrix<double> w = Matrix<double>::Zero(1, 3);
      w(0, static_cast<Index>(br)) = 1.0;
      const Matrix<double> alone = softmax_groups(b.sep.branch_logits(h, br), Index{2}).value();
      CHECK((masks_of(b.sep, rep, Var<double>::constant(w)) - alone).cwiseAbs().maxCoeff() < 1e-12);
    }
  }
  SECTION("logits are the weighted sum of branch logits") {
    for (int trial = 0; trial < 5; ++trial) {
      Matrix<double> w = random_matrix(1, 3, rng).cwiseAbs();
      w /= w.sum();
      Matrix<double> logits = Matrix<double>::Zero(9, 2 * kBasis);
      for (std::size_t br = 0; br < 3; ++br) logits += w(0, static_cast<Index>(br)) * b.sep.branch_logits(h, br).value();
      const Matrix<double> expected = softmax_groups(Var<double>::constant(logits), Index{2}).value();
      CHECK((masks_of(b.sep, rep, Var<double>::constant(w)) - expected).cwiseAbs().maxCoeff() < 1e-12);
    }
  }
  SECTION("weightor output lies on the simplex") {
    for (int trial = 0; trial < 10; ++trial) {
      const auto out = b.sep.forward(Var<double>::constant(random_matrix(5 + trial, kBasis, rng, 3.0)));
      const Matrix<double> w = out.branch_weights.value();
      REQUIRE(w.cols() == 3);
      CHECK(std::abs(w.sum() - 1.0) < 1e-12);
      CHECK(w.minCoeff() >= 0.0);
    }
  }
  SECTION("branch weight shape is checked") {
    CHECK_THROWS_AS(b.sep.forward(Var<double>::constant(rep), weights({0.5, 0.5})), ShapeError);
  }
}

TEST_CASE("identical pyramid branches ignore the weights", "[separator][py]") {
  auto cfg = small_config(Variant::kPy);
  cfg.py_branch_depths = {2, 2, 2};
  Built b(cfg, 7);
  b.store.copy_prefix("sep.branch0", "sep.branch1");
  b.store.copy_prefix("sep.branch0", "sep.branch2");
  Rng rng(8);
  const Matrix<double> rep = random_matrix(7, kBasis, rng);
  const Matrix<double> m1 = masks_of(b.sep, rep, weights({0.2, 0.5, 0.3}));
  const Matrix<double> m2 = masks_of(b.sep, rep, weights({0.7, 0.1, 0.2}));
  CHECK((m1 - m2).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("shared-tap variant", "[separator][sh]") {
  auto porta_cfg = small_config(Variant::kPorta);
  porta_cfg.num_tcns = 1;
  porta_cfg.dilations = {2};
  auto sh_cfg = porta_cfg;
  sh_cfg.variant = Variant::kSh;
  Built porta(porta_cfg, 9), sh(sh_cfg, 9);
  Rng rng(10);
  const Matrix<double> rep = random_matrix(8, kBasis, rng);
  CHECK(masks_of(porta.sep, rep) == masks_of(sh.sep, rep));

  CHECK(count_parameters(small_config(Variant::kSh), kBasis) == count_parameters(small_config(Variant::kPorta), kBasis));
  SeparatorConfig porta_default, sh_default;
  sh_default.variant = Variant::kSh;
  CHECK(count_parameters(sh_default, 256) == count_parameters(porta_default, 256));
}

TEST_CASE("parallel-branch variant", "[separator][pa]") {
  Rng rng(11);
  SECTION("tied branches reproduce porta") {
    Built porta(small_config(Variant::kPorta), 12), pa(small_config(Variant::kPa), 13);
    const std::regex copy_tag(R"(\.([ab])[01]\.)");
    for (auto& [name, p] : pa.store.entries()) p.mutable_value() = porta.store.at(std::regex_replace(name, copy_tag, ".$1.")).value();
    const Matrix<double> rep = random_matrix(8, kBasis, rng);
    CHECK((masks_of(porta.sep, rep) - masks_of(pa.sep, rep)).cwiseAbs().maxCoeff() < 1e-6);
  }
  SECTION("a zeroed branch halves the other branch's contribution") {
    ConvBlockConfig c = highway_block();
    c.kind = BlockKind::kParallel;
    ParamStore<double> store;
    ConvBlock<double> block(c, store, "blk", rng);
    InputSubChain<double> a0(store, "ref.a", 4, 4, rng);
    OutputSubChain<double> b0(store, "ref.b", 4, 4, 3, 2, rng);
    Gate<double> ga(store, "ref.gate_a", 4, 4, rng), gb(store, "ref.gate_b", 4, 4, rng);
    store.copy_prefix("blk.a0", "ref.a");
    store.copy_prefix("blk.b0", "ref.b");
    store.for_each_with_prefix("blk.gate_", [&](const std::string&, Matrix<double>& m) { m = random_matrix(m.rows(), m.cols(), rng); });
    store.copy_prefix("blk.gate_a", "ref.gate_a");
    store.copy_prefix("blk.gate_b", "ref.gate_b");
    fill_prefix(store, "blk.a1", 0.0);
    fill_prefix(store, "blk.b1", 0.0);
    const auto x = Var<double>::constant(random_matrix(10, 4, rng));
    const auto a = scale(a0(x, false) * ga(x), 0.5);
    const Matrix<double> expected = (x + scale(b0(a, false), 0.5) * gb(a)).value();
    CHECK((block.forward(x).value() - expected).cwiseAbs().maxCoeff() < 1e-12);
  }
  SECTION("parameter census") {
    const auto cfg = SeparatorConfig{};
    const std::size_t b = static_cast<std::size_t>(cfg.bottleneck_channels);
    const std::size_t h = static_cast<std::size_t>(cfg.hidden_channels);
    const std::size_t k = static_cast<std::size_t>(cfg.kernel);
    const std::size_t sub_a = b * h + h + h + 2 * h;
    const std::size_t sub_b = k * h + h + 2 * h + h * b + b;
    const std::size_t blocks = static_cast<std::size_t>(cfg.num_tcns) * cfg.dilations.size();
    SeparatorConfig pa = cfg;
    pa.variant = Variant::kPa;
    CHECK(count_parameters(pa, 256) - count_parameters(cfg, 256) == blocks * (sub_a + sub_b));
  }
}

TEST_CASE("highway variant", "[separator][su]") {
  Rng rng(14);
  ParamStore<double> store;
  ConvBlock<double> block(highway_block(), store, "blk", rng);
  std::vector<InputSubChain<double>> a;
  std::vector<OutputSubChain<double>> b;
  for (int i = 0; i < 3; ++i) {
    a.emplace_back(store, "ref.a" + std::to_string(i), 4, 4, rng);
    b.emplace_back(store, "ref.b" + std::to_string(i), 4, 4, 3, 2, rng);
  }
  const auto sync = [&] {
    for (int i = 0; i < 3; ++i) {
      store.copy_prefix("blk.a" + std::to_string(i), "ref.a" + std::to_string(i));
      store.copy_prefix("blk.b" + std::to_string(i), "ref.b" + std::to_string(i));
    }
  };
  const auto x = Var<double>::constant(random_matrix(10, 4, rng));

  SECTION("identical transform branches leave the carry path") {
    store.copy_prefix("blk.a1", "blk.a2");
    store.copy_prefix("blk.b1", "blk.b2");
    sync();
    const auto mid = one_minus(sigmoid(a[0](x, false))) * x;
    const Matrix<double> expected = (one_minus(sigmoid(b[0](mid, false))) * mid).value();
    CHECK((block.forward(x).value() - expected).cwiseAbs().maxCoeff() < 1e-12);
  }
  SECTION("closed gates give the identity") {
    store.at("blk.a0.norm.bias").mutable_value().setConstant(-1e3);
    store.at("blk.b0.conv.b").mutable_value().setConstant(-1e3);
    CHECK(block.forward(x).value() == x.value());
  }
  SECTION("open gates give the branch difference") {
    store.at("blk.a0.norm.bias").mutable_value().setConstant(1e3);
    store.at("blk.b0.conv.b").mutable_value().setConstant(1e3);
    sync();
    const auto mid = a[1](x, false) - a[2](x, false);
    const Matrix<double> expected = (b[1](mid, false) - b[2](mid, false)).value();
    CHECK((block.forward(x).value() - expected).cwiseAbs().maxCoeff() < 1e-12);
  }
  SECTION("tied branches with gate bias -20 give an identity stack") {
    ParamStore<double> s;
    TcnConfig cfg;
    cfg.block = highway_block();
    Tcn<double> tcn(cfg, s, "tcn", rng);
    for (std::size_t i = 0; i < cfg.dilations.size(); ++i) {
      const std::string p = "tcn.block" + std::to_string(i);
      s.copy_prefix(p + ".a1", p + ".a2");
      s.copy_prefix(p + ".b1", p + ".b2");
      s.at(p + ".a0.norm.bias").mutable_value().setConstant(-20.0);
      s.at(p + ".b0.conv.b").mutable_value().setConstant(-20.0);
    }
    CHECK((tcn.forward(x).value() - x.value()).cwiseAbs().maxCoeff() < 1e-6);
  }
}

TEST_CASE("parameter counts and configuration checks", "[separator][config]") {
  const SeparatorConfig porta{};
  SeparatorConfig py = porta;
  py.variant = Variant::kPy;
  CHECK(count_parameters(py, 256) > count_parameters(porta, 256));

  Rng rng(1);
  ParamStore<double> store;
  auto bad = small_config(Variant::kPorta);
  bad.num_tcns = 0;
  CHECK_THROWS_AS(Separator<double>(bad, kBasis, store, rng), ConfigError);
  bad = small_config(Variant::kPy);
  bad.py_branch_depths = {};
  CHECK_THROWS_AS(Separator<double>(bad, kBasis, store, rng), ConfigError);
  bad.py_branch_depths = {2, 0};
  CHECK_THROWS_AS(Separator<double>(bad, kBasis, store, rng), ConfigError);
  bad = small_config(Variant::kPorta);
  bad.num_sources = 1;
  CHECK_THROWS_AS(Separator<double>(bad, kBasis, store, rng), ConfigError);
  bad = small_config(Variant::kSu);
  bad.hidden_channels = 6;
  CHECK_THROWS_AS(Separator<double>(bad, kBasis, store, rng), ConfigError);
  CHECK_THROWS_AS(parse_variant("bogus"), ConfigError);
  for (Variant v : all_variants()) CHECK(parse_variant(to_string(v)) == v);
}

TEST_CASE("separator gradients match finite differences", "[separator][grad]") {
  for (Variant v : all_variants()) {
    auto cfg = small_config(v);
    cfg.py_branch_depths = {1, 2};
    Built b(cfg, 20 + static_cast<std::uint64_t>(v));
    Rng rng(40);
    auto rep = Var<double>::parameter(random_matrix(12, kBasis, rng).cwiseAbs());
    const Matrix<double> probe = random_matrix(12, 2 * kBasis, rng);
    std::vector<Var<double>> leaves{rep};
    for (const auto& [name, p] : b.store.entries()) leaves.push_back(p);
    const auto result = gradient_check(leaves, [&] { return sum_all(b.sep.forward(rep).masks * Var<double>::constant(probe)); });
    INFO(to_string(v) << " rel err " << result.relative_error);
    CHECK(result.relative_error < 1e-5);
  }
}
