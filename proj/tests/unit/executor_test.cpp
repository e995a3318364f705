// Copyright (C) 2026 The mari Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "generators.hpp"
#include "mari/errors.hpp"
#include "mari/executor.hpp"
#include "mari/fixtures.hpp"
#include "mari/rewrite.hpp"
#include "oracles.hpp"

namespace mari {
namespace {

TEST(Strategy, Names) {
  EXPECT_EQ(strategy_name(Strategy::kVanI), "vani");
  EXPECT_EQ(*parse_strategy("uoi"), Strategy::kUOI);
  EXPECT_FALSE(parse_strategy("fast"));
}

TEST(RandomBundle, ShapesAndReproducibility) {
  const Graph g = fixture_ranking_model().graph;
  const auto a = random_bundle<double>(g, 7, 3);
  EXPECT_EQ(a.values.at("u").shape(), Shape({1, 12}));
  EXPECT_EQ(a.values.at("us").shape(), Shape({1, 5, 6}));
  EXPECT_EQ(a.values.at("i").shape(), Shape({7, 10}));
  EXPECT_EQ(a.values.at("c").shape(), Shape({7, 4}));
  EXPECT_EQ(a.values.at("i"), random_bundle<double>(g, 7, 3).values.at("i"));
  const auto f = random_bundle<float>(g, 7, 3);
  EXPECT_EQ(f.values.at("i"), tensor_cast<float>(a.values.at("i")));
  EXPECT_THROW(random_bundle<double>(g, 0, 3), InvalidArgument);
}

TEST(Run, ValidatesBundle) {
  const Graph g = single_site_graph({3, 2, 2, 0, 2});
  auto bundle = random_bundle<double>(g, 3, 1);
  const Executor<double> exec(g);
  auto missing = bundle;
  missing.values.erase("i");
  EXPECT_THROW(exec.run(missing, Strategy::kUOI), InputError);
  auto extra = bundle;
  extra.values.emplace("zzz", Tensor(Shape{1, 1}));
  EXPECT_THROW(exec.run(extra, Strategy::kUOI), InputError);
  auto wrong = bundle;
  wrong.values.at("i") = Tensor(Shape{4, 2});
  EXPECT_THROW(exec.run(wrong, Strategy::kUOI), DimensionError);
}

TEST(Run, VanIAndUoiAgreeOnRandomGraphs) {
  testing::Rng rng(17);
  for (int t = 0; t < 60; ++t) {
    const Graph g = testing::random_ranking_graph(rng);
    const auto bundle = random_bundle<double>(g, testing::uniform_int(rng, 1, 9), rng());
    const Executor<double> exec(g);
    const auto a = exec.run(bundle, Strategy::kVanI);
    const auto b = exec.run(bundle, Strategy::kUOI);
    for (const auto& [id, v] : a.outputs) {
      // User-only outputs stay on one row under UOI.
      Tensor u = b.outputs.at(id);
      if (u.rows() == 1 && v.rows() > 1) u = tile_rows(u, v.rows());
      ASSERT_EQ(v.shape(), u.shape()) << id;
      ASSERT_LE(relative_deviation(v, u), 1e-13) << id;
    }
    EXPECT_LE(b.flops_total, a.flops_total);
  }
}

TEST(Run, SingleSiteFlopsMatchClosedForms) {
  const MatmulDims d{5, 4, 3, 2, 6};
  const Graph g = single_site_graph(d);
  const Graph r = rewrite_all(g).graph;
  const auto bundle = random_bundle<double>(g, d.B, 1);
  const auto base = execute(g, bundle, Strategy::kUOI);
  const auto opt = execute(r, bundle, Strategy::kUOI);
  EXPECT_EQ(base.flops_total, testing::vanilla_matmul_flops(5, 4, 3, 2, 6));
  EXPECT_EQ(opt.flops_total, testing::mari_matmul_flops(5, 4, 3, 2, 6));
  EXPECT_EQ(opt.branch_flops.at("m/user"), 2u * 4 * 6);
  EXPECT_EQ(opt.branch_flops.at("m/item"), 2u * 5 * 3 * 6);
  EXPECT_EQ(opt.branch_flops.at("m/cross"), 2u * 5 * 2 * 6);
  EXPECT_EQ(opt.node_flops[r.index_of("m")], opt.flops_total);
}

TEST(Run, KeepValues) {
  const Graph g = single_site_graph({3, 2, 2, 0, 2});
  const auto bundle = random_bundle<double>(g, 3, 1);
  const auto rep = execute(g, bundle, Strategy::kUOI, RunOptions{true});
  ASSERT_EQ(rep.values.size(), g.size());
  EXPECT_EQ(*rep.values[g.index_of("u")], bundle.values.at("u"));
  EXPECT_TRUE(execute(g, bundle, Strategy::kUOI).values.empty());
}

TEST(CrossAttention, MatchesNaiveOracle) {
  testing::Rng rng(23);
  for (int t = 0; t < 30; ++t) {
    const auto B = testing::uniform_int(rng, 1, 5);
    const auto L = testing::uniform_int(rng, 1, 6);
    const auto C = testing::uniform_int(rng, 1, 4);
    const auto h = testing::uniform_int(rng, 1, 5);
    const bool shared = testing::coin(rng, 0.5);
    const Tensor q = seeded_weight(B, h, rng());
    const auto S = shared ? 1 : B;
    const Tensor flat = seeded_weight(S, L * C, rng());
    const Tensor seq(Shape{S, L, C}, std::vector<double>(flat.data().begin(), flat.data().end()));
    const Tensor wk = seeded_weight(C, h, rng());
    const Tensor wv = seeded_weight(C, h, rng());
    std::uint64_t proj = 0, core = 0;
    const Tensor got = cross_attention(q, seq, wk, wv, &proj, &core);
    EXPECT_LE(relative_deviation(got, testing::naive_attention(q, seq, wk, wv)), 1e-13);
    EXPECT_EQ(proj, static_cast<std::uint64_t>(2 * 2 * S * L * C * h));
    EXPECT_EQ(core, static_cast<std::uint64_t>(2 * 2 * B * L * h));
  }
}

TEST(CrossAttention, RejectsMismatchedShapes) {
  const Tensor q(Shape{2, 3});
  const Tensor seq(Shape{3, 4, 2});
  EXPECT_THROW(cross_attention(q, seq, Tensor(Shape{2, 3}), Tensor(Shape{2, 3})), DimensionError);
  EXPECT_THROW(cross_attention(q, Tensor(Shape{1, 4, 2}), Tensor(Shape{2, 2}), Tensor(Shape{2, 2})),
               DimensionError);
}

TEST(RelativeDeviation, Cases) {
  const Tensor a = Tensor::matrix({{1, -2}});
  EXPECT_EQ(relative_deviation(a, a), 0.0);
  EXPECT_DOUBLE_EQ(relative_deviation(a, Tensor::matrix({{1, -1.5}})), 0.25);
  EXPECT_EQ(relative_deviation(Tensor(Shape{1, 2}), Tensor(Shape{1, 2})), 0.0);
  const double nan = std::numeric_limits<double>::quiet_NaN();
  EXPECT_TRUE(std::isinf(relative_deviation(a, Tensor::matrix({{1, nan}}))));
  EXPECT_THROW(relative_deviation(a, Tensor(Shape{2, 1})), DimensionError);
}

TEST(CheckEquivalence, DetectsDifferenceAndSignatureMismatch) {
  const Graph g = single_site_graph({3, 2, 2, 0, 2}, 1);
  const Graph h = single_site_graph({3, 2, 2, 0, 2}, 2);
  EquivalenceOptions eq;
  eq.trials = 3;
  const auto r = check_equivalence<double>(g, h, eq);
  EXPECT_FALSE(r.pass);
  EXPECT_GT(r.max_deviation, 1e-3);
  EXPECT_EQ(r.trials, 3);
  EXPECT_TRUE(check_equivalence<double>(g, g, eq).pass);
  EXPECT_THROW(check_equivalence<double>(g, single_site_graph({3, 2, 2, 1, 2}), eq), ContractError);
  eq.trials = 0;
  EXPECT_THROW(check_equivalence<double>(g, g, eq), InvalidArgument);
}

TEST(Run, FloatExecutionTracksDouble) {
  const Graph g = fixture_ranking_model().graph;
  const auto bd = random_bundle<double>(g, 8, 2);
  const auto bf = random_bundle<float>(g, 8, 2);
  const auto d = execute(g, bd, Strategy::kUOI);
  const auto f = execute(g, bf, Strategy::kUOI);
  for (const auto& [id, v] : d.outputs) {
    EXPECT_LE(relative_deviation(v, tensor_cast<double>(f.outputs.at(id))), 1e-5);
  }
  EXPECT_EQ(d.flops_total, f.flops_total);
}

}  // namespace
}  // namespace mari
