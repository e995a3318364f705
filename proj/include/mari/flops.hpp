// Copyright (C) 2026 The mari Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace mari {

// One matmul site: a [B x (D_u + D_i + D_c)] input times a [.. x d] weight.
struct MatmulDims {
  std::int64_t B = 1;
  std::int64_t D_u = 0;
  std::int64_t D_i = 0;
  std::int64_t D_c = 0;
  std::int64_t d = 1;

  std::int64_t D() const noexcept { return D_u + D_i + D_c; }
  void validate() const;
};

// Cross-attention with one query per item; hidden width d for both the
// query/key/value inputs and the projections.
struct AttnDims {
  std::int64_t B = 1;
  std::int64_t L = 1;
  std::int64_t d = 1;

  void validate() const;
};

struct FlopsReport {
  std::uint64_t flops_baseline = 0;
  std::uint64_t flops_optimized = 0;
  double speedup = 0;           // baseline / optimized
  std::int64_t absolute_saving = 0;  // baseline - optimized
};

struct MariFlopsReport : FlopsReport {
  double asymptotic_save_ratio = 0;  // D_u / D, the saving fraction as B grows
};

struct AttnFlopsReport : FlopsReport {
  double ratio = 0;           // optimized / baseline = (B + 2L) / (B (1 + 2L))
  double ratio_limit_L = 0;   // L -> inf: 1 / B
  double ratio_limit_B = 0;   // B -> inf: 1 / (1 + 2L)
};

// Vanilla 2 B d D versus re-parameterized 2 d (D_u + B (D_i + D_c)).
MariFlopsReport mari_flops(const MatmulDims& dims);

// Vanilla per-row projections 2 B d^2 (1 + 2L) versus one-shot key/value
// projection 2 d^2 (B + 2L).
AttnFlopsReport uoi_attention_flops(const AttnDims& dims);

struct SweepPoint {
  std::string axis;  // "B", "D_u", "D_ic", "d", or "custom"
  std::int64_t value = 0;
  MatmulDims dims;
};

struct SweepRow {
  SweepPoint point;
  MariFlopsReport report;
};

std::vector<SweepRow> flops_speedup_table(const std::vector<SweepPoint>& grid);

// The four offline-simulation blocks: varying B (D_u=4000, D_i=1000,
// D_c=1000, d=512), varying D_u (B=2000, D_i+D_c=1000, d=512), varying
// D_i+D_c (B=2000, D_u=4000, d=512) and varying d (B=2000, D_u=4000,
// D_i+D_c=1000). 23 points.
std::vector<SweepPoint> table2_grid();

}  // namespace mari
