// Copyright (C) 2026 The mari Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "mari/graph.hpp"

namespace mari {

// new column j reads old column perm[j].
struct ColumnPermutation {
  std::vector<std::int64_t> perm;
  std::int64_t D_user = 0;
  std::int64_t D_item = 0;
  std::int64_t D_cross = 0;

  std::int64_t size() const noexcept { return static_cast<std::int64_t>(perm.size()); }
  bool is_identity() const noexcept;
  ColumnPermutation inverse() const;
  // Composition: (a.then(b)).perm[j] == a.perm[b.perm[j]].
  ColumnPermutation then(const ColumnPermutation& b) const;

  friend bool operator==(const ColumnPermutation&, const ColumnPermutation&) = default;
};

// Stable grouping into user, item, cross blocks.
ColumnPermutation plan_reorg(const FeatureLayout& layout);

// The layout after applying `p` to columns described by `layout`, with
// adjacent same-domain segments merged.
FeatureLayout permuted_layout(const FeatureLayout& layout, const ColumnPermutation& p);

// Row i of the result is row perm[i] of `w`.
Tensor apply_to_weights(const Tensor& w, const ColumnPermutation& p);

// A contiguous run of concat columns that comes from one input and one
// layout segment.
struct ColumnPiece {
  std::string input;
  std::int64_t offset = 0;  // first column within `input`
  std::int64_t width = 0;
  FeatureDomain domain = FeatureDomain::kUser;
  bool whole = false;  // covers all of `input`
};

// Pieces of a concat in column order, split at input and segment
// boundaries; same-domain neighbours within one input are fused.
std::vector<ColumnPiece> concat_pieces(const Graph& g, NodeIndex concat);

// Rebuilds the concat `site` with its columns permuted by `p` (as
// `<site>__neat`) and row-permutes the weight of every MatMul fed by it
// through non-computational nodes. Other consumers keep the old concat.
Graph apply_to_graph(const Graph& g, std::string_view site, const ColumnPermutation& p);

// plan_reorg + apply_to_graph for every fragmented concat GCA reports.
// Appends the reorganized concat ids to `reorganized` if given.
Graph reorg_all(const Graph& g, std::vector<std::string>* reorganized = nullptr);

}  // namespace mari
