// Copyright (C) 2026 The mari Authors
// SPDX-License-Identifier: Apache-2.0

#include "mari/flops.hpp"

#include "mari/errors.hpp"

namespace mari {

void MatmulDims::validate() const {
  if (B < 1) throw InvalidArgument("batch size must be at least 1");
  if (D_u < 0 || D_i < 0 || D_c < 0) throw InvalidArgument("feature widths must be non-negative");
  if (d < 1) throw InvalidArgument("output width must be at least 1");
}

void AttnDims::validate() const {
  if (B < 1 || L < 1 || d < 1) throw InvalidArgument("attention dimensions must be at least 1");
}

MariFlopsReport mari_flops(const MatmulDims& dims) {
  dims.validate();
  if (dims.D() == 0) throw InvalidArgument("all feature widths are zero");
  const auto B = static_cast<std::uint64_t>(dims.B);
  const auto d = static_cast<std::uint64_t>(dims.d);
  const auto Du = static_cast<std::uint64_t>(dims.D_u);
  const auto Dic = static_cast<std::uint64_t>(dims.D_i + dims.D_c);

  MariFlopsReport r;
  r.flops_baseline = 2 * B * d * (Du + Dic);
  r.flops_optimized = 2 * d * (Du + B * Dic);
  r.speedup = static_cast<double>(r.flops_baseline) / static_cast<double>(r.flops_optimized);
  r.absolute_saving = static_cast<std::int64_t>(2 * d * Du * (B - 1));
  r.asymptotic_save_ratio = static_cast<double>(Du) / static_cast<double>(Du + Dic);
  return r;
}

AttnFlopsReport uoi_attention_flops(const AttnDims& dims) {
  dims.validate();
  const auto B = static_cast<std::uint64_t>(dims.B);
  const auto L = static_cast<std::uint64_t>(dims.L);
  const auto dd = static_cast<std::uint64_t>(dims.d) * static_cast<std::uint64_t>(dims.d);

  AttnFlopsReport r;
  r.flops_baseline = 2 * B * dd * (1 + 2 * L);
  r.flops_optimized = 2 * dd * (B + 2 * L);
  r.speedup = static_cast<double>(r.flops_baseline) / static_cast<double>(r.flops_optimized);
  r.absolute_saving = static_cast<std::int64_t>(r.flops_baseline - r.flops_optimized);
  r.ratio = static_cast<double>(B + 2 * L) / static_cast<double>(B * (1 + 2 * L));
  r.ratio_limit_L = 1.0 / static_cast<double>(B);
  r.ratio_limit_B = 1.0 / static_cast<double>(1 + 2 * L);
  return r;
}

std::vector<SweepRow> flops_speedup_table(const std::vector<SweepPoint>& grid) {
  if (grid.empty()) throw InvalidArgument("empty sweep grid");
  std::vector<SweepRow> rows;
  rows.reserve(grid.size());
  for (const auto& p : grid) rows.push_back({p, mari_flops(p.dims)});
  return rows;
}

std::vector<SweepPoint> table2_grid() {
  std::vector<SweepPoint> g;
  for (std::int64_t b : {100, 500, 1000, 2000, 5000, 8000, 10000}) {
    g.push_back({"B", b, {b, 4000, 1000, 1000, 512}});
  }
  for (std::int64_t du : {500, 1000, 2000, 5000, 8000, 10000}) {
    g.push_back({"D_u", du, {2000, du, 1000, 0, 512}});
  }
  for (std::int64_t di : {500, 1000, 2000, 5000, 8000, 10000}) {
    g.push_back({"D_ic", di, {2000, 4000, di, 0, 512}});
  }
  for (std::int64_t d : {128, 512, 1024, 2048}) {
    g.push_back({"d", d, {2000, 4000, 1000, 0, d}});
  }
  return g;
}

}  // namespace mari
