// Copyright (C) 2026 The mari Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cstdio>
#include <fstream>

#include "generators.hpp"
#include "mari/errors.hpp"
#include "mari/fixtures.hpp"
#include "mari/graph.hpp"
#include "mari/rewrite.hpp"

namespace mari {
namespace {

WeightOp weight(std::int64_t r, std::int64_t c, std::uint64_t seed = 1) {
  return WeightOp{std::make_shared<const Tensor>(seeded_weight(r, c, seed))};
}

GraphSpec tiny_site() {
  GraphSpec s;
  s.add("u", InputOp{FeatureDomain::kUser, 3});
  s.add("ut", TileOp{}, {"u"});
  s.add("i", InputOp{FeatureDomain::kItem, 2});
  s.add("x", ConcatOp{{{FeatureDomain::kUser, 3}, {FeatureDomain::kItem, 2}}}, {"ut", "i"});
  s.add("w", weight(5, 4));
  s.add("m", MatMulOp{}, {"x", "w"});
  s.add("out", OutputOp{}, {"m"});
  return s;
}

TEST(FeatureLayout, NeatnessAndWidths) {
  const FeatureLayout neat{{FeatureDomain::kUser, 3}, {FeatureDomain::kUser, 1}, {FeatureDomain::kItem, 2},
                           {FeatureDomain::kCross, 1}};
  EXPECT_TRUE(neat.is_neat());
  EXPECT_EQ(neat.total_width(), 7);
  EXPECT_EQ(neat.domain_width(FeatureDomain::kUser), 4);
  EXPECT_EQ(neat.merged().segments().size(), 3u);

  const FeatureLayout frag{{FeatureDomain::kItem, 2}, {FeatureDomain::kUser, 3}};
  EXPECT_FALSE(frag.is_neat());
  const FeatureLayout split{{FeatureDomain::kUser, 1}, {FeatureDomain::kItem, 1}, {FeatureDomain::kUser, 1}};
  EXPECT_FALSE(split.is_neat());
  EXPECT_TRUE(FeatureLayout({{FeatureDomain::kItem, 4}}).is_neat());
  EXPECT_THROW(FeatureLayout({{FeatureDomain::kItem, 0}}), InvalidArgument);
}

TEST(GraphSpec, FreshIdAndDuplicates) {
  GraphSpec s = tiny_site();
  EXPECT_EQ(s.fresh_id("q"), "q");
  EXPECT_EQ(s.fresh_id("m"), "m_2");
  s.add("m_2", IdentityOp{}, {"m"});
  EXPECT_EQ(s.fresh_id("m"), "m_3");
  EXPECT_THROW(s.add("m", IdentityOp{}, {"x"}), InvalidArgument);
  EXPECT_THROW(s.at("nope"), InvalidArgument);
}

TEST(GraphSpec, PruneRemovesOrphansButKeepsInputs) {
  GraphSpec s = tiny_site();
  s.add("dead", IdentityOp{}, {"i"});
  s.add("dead2", ReluOp{}, {"dead"});
  s.prune_unused({"dead2"});
  EXPECT_FALSE(s.contains("dead2"));
  EXPECT_FALSE(s.contains("dead"));
  EXPECT_TRUE(s.contains("i"));
  s.prune_unused({"m"});
  EXPECT_TRUE(s.contains("m"));  // still consumed
}

TEST(BuildGraph, InfersShapesAndOrdersTopologically) {
  const Graph g = build_graph(tiny_site());
  EXPECT_EQ(g.node("u").shape, (ValueShape{1, 0, 3}));
  EXPECT_EQ(g.node("i").shape, (ValueShape{ValueShape::kBatch, 0, 2}));
  EXPECT_EQ(g.node("m").shape, (ValueShape{ValueShape::kBatch, 0, 4}));
  for (const Node& n : g.nodes()) {
    for (NodeIndex in : n.inputs) EXPECT_LT(in, g.index_of(n.id));
  }
  EXPECT_EQ(g.edge_count(), 6u);
  EXPECT_EQ(g.inputs().size(), 2u);
  EXPECT_EQ(g.outputs().size(), 1u);
}

TEST(BuildGraph, TiesBrokenById) {
  GraphSpec s;
  s.add("zeta", InputOp{FeatureDomain::kItem, 2});
  s.add("alpha", InputOp{FeatureDomain::kItem, 2});
  s.add("out", OutputOp{}, {"zeta"});
  s.add("out2", OutputOp{}, {"alpha"});
  const Graph g = build_graph(s);
  EXPECT_EQ(g.node(0).id, "alpha");
  EXPECT_EQ(g.node(1).id, "out2");
}

TEST(BuildGraph, DetectsCycleAndNamesEdge) {
  GraphSpec s;
  s.add("i", InputOp{FeatureDomain::kItem, 2});
  s.add("a", AddOp{}, {"i", "b"});
  s.add("b", ReluOp{}, {"a"});
  try {
    build_graph(s);
    FAIL() << "expected CycleError";
  } catch (const CycleError& e) {
    const std::string what = e.what();
    EXPECT_NE(what.find("->"), std::string::npos) << what;
  }
}

TEST(BuildGraph, RejectsBadReferencesAndShapes) {
  {
    GraphSpec s;
    s.add("o", OutputOp{}, {"missing"});
    EXPECT_THROW(build_graph(s), InvalidArgument);
  }
  {
    GraphSpec s;
    s.add("u", InputOp{FeatureDomain::kUser, 3});
    s.add("i", InputOp{FeatureDomain::kItem, 2});
    s.add("x", ConcatOp{{{FeatureDomain::kUser, 3}, {FeatureDomain::kItem, 2}}}, {"u", "i"});
    EXPECT_THROW(build_graph(s), DimensionError);  // untiled user tensor
  }
  {
    GraphSpec s = tiny_site();
    s.at("x").op = ConcatOp{{{FeatureDomain::kUser, 3}, {FeatureDomain::kItem, 1}}};
    EXPECT_THROW(build_graph(s), DimensionError);  // layout width
  }
  {
    GraphSpec s = tiny_site();
    s.at("w").op = weight(4, 4);
    EXPECT_THROW(build_graph(s), DimensionError);
  }
  {
    GraphSpec s = tiny_site();
    s.add("m2", MatMulOp{}, {"x", "i"});
    EXPECT_THROW(build_graph(s), DimensionError);  // weight slot must be a Weight
  }
  {
    GraphSpec s = tiny_site();
    s.add("sl", SliceOp{4, 2}, {"x"});
    EXPECT_THROW(build_graph(s), DimensionError);
  }
  {
    GraphSpec s = tiny_site();
    s.add("bad", AddOp{}, {"x"});
    EXPECT_THROW(build_graph(s), InvalidArgument);
  }
}

TEST(BuildGraph, MaRIOperandBatching) {
  GraphSpec s;
  s.add("u", InputOp{FeatureDomain::kUser, 3});
  s.add("i", InputOp{FeatureDomain::kItem, 2});
  s.add("wu", weight(3, 4));
  s.add("wi", weight(2, 4));
  s.add("m", MatMulMaRIOp{3, 2, 0}, {"u", "wu", "i", "wi"});
  EXPECT_EQ(build_graph(s).node("m").shape, (ValueShape{ValueShape::kBatch, 0, 4}));

  GraphSpec bad = s;
  bad.add("ut", TileOp{}, {"u"});
  bad.at("m").inputs = {"ut", "wu", "i", "wi"};
  EXPECT_THROW(build_graph(bad), DimensionError);
}

TEST(Serialize, ExactTextOfSmallGraph) {
  GraphSpec s;
  s.add("i", InputOp{FeatureDomain::kItem, 2});
  s.add("w", WeightOp{std::make_shared<const Tensor>(Tensor::matrix({{0.5, -1}, {0.1, 3}}))});
  s.add("m", MatMulOp{}, {"i", "w"});
  s.add("o", OutputOp{}, {"m"});
  const std::string text = serialize(build_graph(s));
  EXPECT_EQ(text,
            "mari-graph v1\n"
            "i = Input(width=2) inputs=[] domain=Item layout=[]\n"
            "w = Weight(rows=2,cols=2) inputs=[] domain=none layout=[] data=[0.5,-1,0.1,3]\n"
            "m = MatMul() inputs=[i,w] domain=none layout=[]\n"
            "o = Output() inputs=[m] domain=none layout=[]\n"
            "end\n");
}

TEST(Serialize, RoundTripsFixtureAndRewrites) {
  for (bool fragmented : {false, true}) {
    ModelDims dims;
    dims.fragmented = fragmented;
    const Graph g = fixture_ranking_model(dims).graph;
    EXPECT_TRUE(structurally_equal(parse_graph(serialize(g)), g));
    const Graph r = rewrite_all(g).graph;
    EXPECT_TRUE(structurally_equal(parse_graph(serialize(r)), r));
    EXPECT_EQ(serialize(parse_graph(serialize(r))), serialize(r));
  }
}

TEST(Serialize, RoundTripsRandomGraphs) {
  testing::Rng rng(99);
  for (int t = 0; t < 200; ++t) {
    const Graph g = testing::random_ranking_graph(rng);
    ASSERT_TRUE(structurally_equal(parse_graph(serialize(g)), g)) << serialize(g);
  }
}

TEST(StructurallyEqual, DetectsDifferences) {
  const Graph a = build_graph(tiny_site());
  GraphSpec s = tiny_site();
  s.at("w").op = weight(5, 4, 2);
  EXPECT_FALSE(structurally_equal(a, build_graph(s)));
  GraphSpec t = tiny_site();
  t.at("x").op = ConcatOp{{{FeatureDomain::kUser, 2}, {FeatureDomain::kUser, 1}, {FeatureDomain::kItem, 2}}};
  EXPECT_FALSE(structurally_equal(a, build_graph(t)));
  EXPECT_TRUE(structurally_equal(a, build_graph(tiny_site())));
}

TEST(Parse, AcceptsCommentsAndSeededWeights) {
  const Graph g = parse_graph(
      "mari-graph v1\n"
      "# a comment\n"
      "i = Input(width=3) inputs=[] domain=Item layout=[]\n"
      "\n"
      "w = Weight(rows=3,cols=2,seed=5) inputs=[] domain=none layout=[]\n"
      "m = MatMul() inputs=[i,w] domain=none layout=[]  # trailing\n"
      "o = Output() inputs=[m] domain=none layout=[]\n"
      "end\n");
  EXPECT_EQ(*std::get<WeightOp>(g.node("w").op).value, seeded_weight(3, 2, 5));
}

std::size_t parse_error_line(const std::string& text) {
  try {
    parse_graph(text);
  } catch (const ParseError& e) {
    return e.line();
  }
  return 0;
}

TEST(Parse, ErrorsCarryLineNumbers) {
  EXPECT_EQ(parse_error_line(""), 1u);
  EXPECT_EQ(parse_error_line("graph v2\n"), 1u);
  EXPECT_EQ(parse_error_line("mari-graph v1\ni = Input(width=3) inputs=[] domain=Item layout=[]\n"), 2u);
  EXPECT_EQ(parse_error_line("mari-graph v1\ni = Bogus() inputs=[] domain=none layout=[]\nend\n"), 2u);
  EXPECT_EQ(parse_error_line("mari-graph v1\n\ni = Input(width=x) inputs=[] domain=Item layout=[]\nend\n"), 3u);
  EXPECT_EQ(parse_error_line("mari-graph v1\no = Output() inputs=[q] domain=none layout=[]\nend\n"), 2u);
  EXPECT_EQ(parse_error_line("mari-graph v1\nend\nx\n"), 3u);
  EXPECT_EQ(parse_error_line("mari-graph v1\ni = Input(width=3) inputs=[] domain=Item layout=[]\n"
                             "i = Input(width=3) inputs=[] domain=Item layout=[]\nend\n"),
            3u);
}

TEST(Io, SaveAndLoad) {
  const Graph g = build_graph(tiny_site());
  const std::string path = ::testing::TempDir() + "/graph_io_test.g";
  save_graph(g, path);
  EXPECT_TRUE(structurally_equal(load_graph(path), g));
  std::remove(path.c_str());
  EXPECT_THROW(load_graph(path), IoError);
}

TEST(SeededWeight, DeterministicAndScaled) {
  const Tensor a = seeded_weight(4, 5, 3, 0.25);
  EXPECT_EQ(a, seeded_weight(4, 5, 3, 0.25));
  EXPECT_NE(a, seeded_weight(4, 5, 4, 0.25));
  for (double v : a.data()) EXPECT_LE(std::abs(v), 0.25);
}

}  // namespace
}  // namespace mari
