// Copyright (C) 2026 The mari Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mari/flops.hpp"
#include "mari/graph.hpp"

namespace mari {

struct ModelDims {
  std::int64_t user_width = 12;
  std::int64_t user_seq_len = 5;
  std::int64_t user_seq_width = 6;
  std::int64_t item_width = 10;
  std::int64_t cross_width = 4;
  std::int64_t user_hidden = 8;
  std::int64_t attn_hidden = 6;
  std::int64_t expert_hidden = 16;
  std::int64_t expert_out = 8;
  std::int64_t num_experts = 2;
  std::int64_t num_tasks = 2;
  std::int64_t tower_hidden = 8;
  std::uint64_t seed = 7;
  // Interleave user/item/cross inputs in every mixed concat.
  bool fragmented = false;

  void validate() const;
};

// A ranking model as served with one-shot user inference: user-only MLP
// computed once, tiled just before it meets item features.
//
//   u ─ user_fc ─ relu ─ user_h ─ Tile ─┐
//   i ────────────────────────────────── attn_in ─ attn_q ─ CrossAttention(us) ─┐
//   Tile(u), Tile(user_h), i, attn, c ─ mmoe_in ─ expert_k_fc1 ─ .. ─ Mixture_t ─┘
//   Tile(user_h), mix_t ─ tower_t_in ─ tower_t_fc1 ─ .. ─ score_t
//
// Gates read item features only.
struct RankingFixture {
  Graph graph;
  std::vector<std::string> expert_first_fc;
  std::vector<std::string> tower_first_fc;
  std::string attention_query;
};

RankingFixture fixture_ranking_model(const ModelDims& dims = {});

// Item features projected into a query attending over a user sequence.
// Query width, sequence width and hidden width are all d.
Graph attention_fixture(std::int64_t d, std::int64_t L, std::uint64_t seed = 1);

// Concat(Tile(u), i, c) -> MatMul -> Output, with zero-width inputs omitted.
// Node ids: u, u_tiled, i, c, x, w, m, out.
Graph single_site_graph(const MatmulDims& dims, std::uint64_t seed = 1);

}  // namespace mari
