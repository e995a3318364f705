// Copyright (C) 2026 The mari Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "mari/flops.hpp"
#include "mari/gca.hpp"
#include "mari/graph.hpp"

namespace mari {

struct SiteRewrite {
  std::string matmul;
  std::string concat;  // provoking concat in the input graph
  bool reorganized = false;
  std::int64_t D_u = 0;
  std::int64_t D_i = 0;
  std::int64_t D_c = 0;
  std::int64_t d = 0;

  MatmulDims dims(std::int64_t batch) const { return {batch, D_u, D_i, D_c, d}; }
  MariFlopsReport flops(std::int64_t batch) const { return mari_flops(dims(batch)); }
};

// Replaces MatMul `matmul` by MatMulMaRI. Its input must come from a concat
// with a neat layout through non-computational nodes; otherwise
// PreconditionError. User columns are recomputed without the Tile (a
// single row); item and cross columns are gathered into `<concat>__item`
// and `<concat>__cross`. The MaRI node keeps the MatMul's id, so bias and
// other consumers are untouched.
Graph rewrite_site(const Graph& g, std::string_view matmul, SiteRewrite* report = nullptr);

struct RewriteResult {
  Graph graph;
  std::vector<SiteRewrite> sites;
};

// GCA, then reorg of fragmented sites, then rewrite_site for every site.
// Graphs without mixed concats come back unchanged.
RewriteResult rewrite_all(const Graph& g, const GcaOptions& options = {});

// Splits the product at `matmul` into ceil(D / chunk) column chunks over
// its neat input, each with its own MatMul, summed left to right. Chunks
// holding only user columns run on the untiled row. chunk >= D leaves the
// graph unchanged.
Graph fragment_site(const Graph& g, std::string_view matmul, std::int64_t chunk);

}  // namespace mari
