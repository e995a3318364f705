// Copyright (C) 2026 The mari Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "mari/fixtures.hpp"
#include "mari/flops.hpp"
#include "mari/rewrite.hpp"

namespace mari {

enum class DType { kF64, kF32 };

std::string_view dtype_name(DType t);

// A fixture large enough for timings to dominate dispatch overhead.
ModelDims bench_model_dims();

struct BenchConfig {
  int repeats = 100;
  int warmup = 10;
  std::uint64_t seed = 42;
  DType dtype = DType::kF64;

  // table2: restrict to one sweep axis ("B", "D_u", "D_ic", "d"); empty
  // runs all four.
  std::string axis;

  // fragmentation
  std::vector<std::int64_t> chunks{50, 100, 200, 400, 800};
  MatmulDims fragment_dims{2000, 4000, 1000, 0, 256};

  // fixture
  ModelDims model = bench_model_dims();
  std::int64_t fixture_batch = 512;
  int equivalence_trials = 20;

  void validate() const;
};

struct TimingStats {
  double mean_ns = 0;
  double std_ns = 0;  // sample standard deviation
  double median_ns = 0;
  std::size_t count = 0;
};

TimingStats summarize(const std::vector<double>& samples);

struct BenchRow {
  SweepPoint point;
  double theoretical_speedup = 0;
  TimingStats vanilla;
  TimingStats mari;
  double measured_speedup = 0;  // mean T_vanilla / mean T_mari
};

std::vector<BenchRow> bench_sweep(const BenchConfig& cfg, const std::vector<SweepPoint>& grid);

// table2_grid() filtered by cfg.axis.
std::vector<SweepPoint> bench_grid(const BenchConfig& cfg);

struct FragmentationRow {
  std::int64_t chunk = 0;
  MatmulDims dims;
  TimingStats vanilla;
  TimingStats neat;
  TimingStats fragmented;
  // (T_fragmented - T_baseline) / T_baseline in percent, from means.
  double degradation_vs_original_pct = 0;
  double degradation_vs_neat_pct = 0;
  double max_deviation = 0;  // fragmented vs vanilla output
};

std::vector<FragmentationRow> bench_fragmentation(const BenchConfig& cfg);

struct FixtureSummary {
  std::int64_t batch = 0;
  std::vector<SiteRewrite> sites;
  // Fixture role of each entry in `sites`: "attention_query",
  // "expert_first_fc" or "tower_first_fc".
  std::vector<std::string> roles;
  TimingStats baseline;  // UOI on the original graph
  TimingStats mari;      // UOI on the rewritten graph
  double speedup = 0;
  bool equivalent = false;
  double max_deviation = 0;
  double tolerance = 0;

  std::size_t site_groups() const;  // distinct roles
};

FixtureSummary bench_fixture(const BenchConfig& cfg);

// Spearman rank correlation; tied values get their average rank.
double spearman(const std::vector<double>& x, const std::vector<double>& y);

// CSV writers. Each begins with a `#` comment line naming mode, seed,
// dtype, repeats, warmup and version.
void write_sweep_csv(std::ostream& os, const BenchConfig& cfg, const std::vector<BenchRow>& rows);
void write_fragmentation_csv(std::ostream& os, const BenchConfig& cfg, const std::vector<FragmentationRow>& rows);
void write_fixture_csv(std::ostream& os, const BenchConfig& cfg, const FixtureSummary& summary);

}  // namespace mari
