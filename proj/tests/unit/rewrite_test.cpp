// Copyright (C) 2026 The mari Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <set>

#include "generators.hpp"
#include "mari/errors.hpp"
#include "mari/executor.hpp"
#include "mari/fixtures.hpp"
#include "mari/gca.hpp"
#include "mari/rewrite.hpp"
#include "oracles.hpp"

namespace mari {
namespace {

EquivalenceOptions quick(int trials = 10, std::uint64_t seed = 1) {
  EquivalenceOptions eq;
  eq.trials = trials;
  eq.seed = seed;
  return eq;
}

TEST(RewriteSite, SingleSiteStructure) {
  const Graph g = single_site_graph({4, 3, 2, 1, 5}, 9);
  SiteRewrite r;
  const Graph out = rewrite_site(g, "m", &r);
  EXPECT_EQ(r.matmul, "m");
  EXPECT_EQ(r.concat, "x");
  EXPECT_EQ(r.D_u, 3);
  EXPECT_EQ(r.D_i, 2);
  EXPECT_EQ(r.D_c, 1);
  EXPECT_EQ(r.d, 5);
  const Node& m = out.node("m");
  ASSERT_EQ(m.kind(), OpKind::kMatMulMaRI);
  EXPECT_EQ(std::get<MatMulMaRIOp>(m.op), (MatMulMaRIOp{3, 2, 1}));
  EXPECT_EQ(out.node(m.inputs[0]).id, "u");  // un-replicated user operand
  EXPECT_FALSE(out.find("x"));
  EXPECT_FALSE(out.find("u_tiled"));
  EXPECT_TRUE(check_equivalence<double>(g, out, quick()).pass);
}

TEST(RewriteSite, MatchesNaiveBlockProduct) {
  const Graph g = single_site_graph({6, 4, 3, 2, 3}, 2);
  const Graph out = rewrite_site(g, "m");
  const auto bundle = random_bundle<double>(g, 6, 5);
  const auto got = execute(out, bundle, Strategy::kUOI).outputs.at("out");

  const Tensor& w = *std::get<WeightOp>(g.node("w").op).value;
  const Tensor x = concat_cols({tile_rows(bundle.values.at("u"), 6), bundle.values.at("i"), bundle.values.at("c")});
  EXPECT_LE(relative_deviation(got, testing::naive_matmul(x, w)), 1e-14);
}

TEST(RewriteSite, Preconditions) {
  const Graph g = fixture_ranking_model().graph;
  EXPECT_THROW(rewrite_site(g, "nope"), InvalidArgument);
  EXPECT_THROW(rewrite_site(g, "u"), InvalidArgument);
  EXPECT_THROW(rewrite_site(g, "user_fc"), PreconditionError);
  EXPECT_THROW(rewrite_site(g, "expert0_fc2"), PreconditionError);

  ModelDims dims;
  dims.fragmented = true;
  EXPECT_THROW(rewrite_site(fixture_ranking_model(dims).graph, "expert0_fc1"), PreconditionError);

  GraphSpec s;
  s.add("u", InputOp{FeatureDomain::kUser, 2});
  s.add("ut", TileOp{}, {"u"});
  s.add("v", InputOp{FeatureDomain::kUser, 2});
  s.add("vt", TileOp{}, {"v"});
  s.add("x", ConcatOp{{{FeatureDomain::kUser, 4}}}, {"ut", "vt"});
  s.add("w", WeightOp{std::make_shared<const Tensor>(seeded_weight(4, 2, 1))});
  s.add("m", MatMulOp{}, {"x", "w"});
  s.add("o", OutputOp{}, {"m"});
  EXPECT_THROW(rewrite_site(build_graph(s), "m"), PreconditionError);
}

TEST(RewriteAll, FixtureSitesAndEquivalence) {
  const Graph g = fixture_ranking_model().graph;
  const RewriteResult r = rewrite_all(g);
  ASSERT_EQ(r.sites.size(), 5u);
  std::set<std::string> concats;
  for (const auto& s : r.sites) {
    concats.insert(s.concat);
    EXPECT_FALSE(s.reorganized);
    EXPECT_EQ(r.graph.node(s.matmul).kind(), OpKind::kMatMulMaRI);
  }
  EXPECT_EQ(concats, (std::set<std::string>{"attn_in", "mmoe_in", "task0_tower_in", "task1_tower_in"}));
  EXPECT_TRUE(run_gca(r.graph).empty());
  EXPECT_TRUE(check_equivalence<double>(g, r.graph, quick(20)).pass);
  EXPECT_TRUE(check_equivalence<float>(g, r.graph, [] {
                auto eq = quick(20);
                eq.tolerance = 1e-5;
                return eq;
              }()).pass);
}

TEST(RewriteAll, ExpertsShareTheUserOperand) {
  const RewriteResult r = rewrite_all(fixture_ranking_model().graph);
  const Node& a = r.graph.node("expert0_fc1");
  const Node& b = r.graph.node("expert1_fc1");
  EXPECT_EQ(a.inputs[0], b.inputs[0]);
  EXPECT_EQ(a.inputs[2], b.inputs[2]);
  EXPECT_FALSE(r.graph.node(a.inputs[0]).shape.batched());
}

TEST(RewriteAll, FragmentedFixtureIsReorganized) {
  ModelDims dims;
  dims.fragmented = true;
  const Graph g = fixture_ranking_model(dims).graph;
  const RewriteResult r = rewrite_all(g);
  ASSERT_EQ(r.sites.size(), 5u);
  for (const auto& s : r.sites) EXPECT_TRUE(s.reorganized);
  EXPECT_TRUE(check_equivalence<double>(g, r.graph, quick(20)).pass);
}

TEST(RewriteAll, RandomGraphsPreserveOutputs) {
  testing::Rng rng(31);
  testing::RandomGraphOptions opts;
  opts.require_mixed_concat = true;
  for (int t = 0; t < 60; ++t) {
    const Graph g = testing::random_ranking_graph(rng, opts);
    const RewriteResult r = rewrite_all(g);
    EXPECT_FALSE(r.sites.empty());
    const auto v = check_equivalence<double>(g, r.graph, quick(5, rng()));
    ASSERT_TRUE(v.pass) << v.max_deviation << "\n" << serialize(g);
  }
}

TEST(RewriteAll, ReducesInstrumentedFlops) {
  const Graph g = fixture_ranking_model().graph;
  const Graph r = rewrite_all(g).graph;
  const auto bundle = random_bundle<double>(g, 32, 3);
  EXPECT_LT(execute(r, bundle, Strategy::kUOI).flops_total, execute(g, bundle, Strategy::kUOI).flops_total);
}

TEST(FragmentSite, ChunkedSumIsEquivalent) {
  const Graph g = single_site_graph({5, 7, 4, 2, 3}, 4);
  for (std::int64_t chunk : {1, 2, 3, 5, 12, 13, 100}) {
    const Graph f = fragment_site(g, "m", chunk);
    EXPECT_TRUE(check_equivalence<double>(g, f, quick(5)).pass) << chunk;
  }
  EXPECT_TRUE(structurally_equal(fragment_site(g, "m", 13), g));
  EXPECT_THROW(fragment_site(g, "m", 0), InvalidArgument);
}

TEST(FragmentSite, ChunkCountAndUserChunksStayUnreplicated) {
  const Graph g = single_site_graph({5, 6, 4, 0, 3}, 4);
  const Graph f = fragment_site(g, "m", 3);
  int chunks = 0;
  for (const Node& n : f.nodes()) {
    if (n.kind() == OpKind::kMatMul) ++chunks;
  }
  EXPECT_EQ(chunks, 4);
  EXPECT_FALSE(f.node("m__chunk0").shape.batched());
  EXPECT_FALSE(f.node("m__chunk1").shape.batched());
  EXPECT_TRUE(f.node("m__chunk2").shape.batched());
  EXPECT_EQ(f.node("m").kind(), OpKind::kAdd);
}

}  // namespace
}  // namespace mari
