// Copyright (C) 2026 The mari Authors
// SPDX-License-Identifier: Apache-2.0

#include "mari/bench.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <ostream>
#include <set>

#include "mari/errors.hpp"
#include "mari/executor.hpp"

namespace mari {

std::string_view dtype_name(DType t) { return t == DType::kF64 ? "f64" : "f32"; }

ModelDims bench_model_dims() {
  ModelDims d;
  d.user_width = 1024;
  d.user_seq_len = 32;
  d.user_seq_width = 64;
  d.item_width = 256;
  d.cross_width = 128;
  d.user_hidden = 512;
  d.attn_hidden = 64;
  d.expert_hidden = 256;
  d.expert_out = 128;
  d.num_experts = 4;
  d.num_tasks = 2;
  d.tower_hidden = 128;
  return d;
}

void BenchConfig::validate() const {
  if (repeats < 2) throw InvalidArgument("repeats must be at least 2");
  if (warmup < 0) throw InvalidArgument("warmup must be non-negative");
  for (auto c : chunks) {
    if (c < 1) throw InvalidArgument("chunk sizes must be positive");
  }
  if (fixture_batch < 1) throw InvalidArgument("fixture batch must be at least 1");
  if (equivalence_trials < 1) throw InvalidArgument("equivalence trials must be at least 1");
}

TimingStats summarize(const std::vector<double>& samples) {
  TimingStats s;
  s.count = samples.size();
  if (samples.empty()) return s;
  s.mean_ns = std::accumulate(samples.begin(), samples.end(), 0.0) / static_cast<double>(samples.size());
  if (samples.size() > 1) {
    double ss = 0;
    for (double v : samples) ss += (v - s.mean_ns) * (v - s.mean_ns);
    s.std_ns = std::sqrt(ss / static_cast<double>(samples.size() - 1));
  }
  std::vector<double> sorted = samples;
  std::sort(sorted.begin(), sorted.end());
  const std::size_t n = sorted.size();
  s.median_ns = n % 2 ? sorted[n / 2] : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);
  return s;
}

namespace {

// Runs the variants round-robin so drift affects all of them alike.
template <typename T>
std::vector<TimingStats> time_variants(const std::vector<const Executor<T>*>& variants, const InputBundle<T>& bundle,
                                       const BenchConfig& cfg) {
  std::vector<std::vector<double>> samples(variants.size());
  for (int r = 0; r < cfg.warmup + cfg.repeats; ++r) {
    for (std::size_t v = 0; v < variants.size(); ++v) {
      const auto rep = variants[v]->run(bundle, Strategy::kUOI);
      if (r >= cfg.warmup) samples[v].push_back(static_cast<double>(rep.wall_time_ns));
    }
  }
  std::vector<TimingStats> out;
  for (const auto& s : samples) out.push_back(summarize(s));
  return out;
}

template <typename T>
std::vector<BenchRow> sweep_impl(const BenchConfig& cfg, const std::vector<SweepPoint>& grid) {
  std::vector<BenchRow> rows;
  for (const auto& p : grid) {
    const Graph g = single_site_graph(p.dims, cfg.seed);
    const Graph rewritten = rewrite_all(g).graph;
    const auto bundle = random_bundle<T>(g, p.dims.B, cfg.seed);
    const Executor<T> vanilla(g);
    const Executor<T> mari(rewritten);
    const auto t = time_variants<T>({&vanilla, &mari}, bundle, cfg);
    BenchRow row{p, mari_flops(p.dims).speedup, t[0], t[1], 0};
    row.measured_speedup = t[0].mean_ns / t[1].mean_ns;
    rows.push_back(row);
  }
  return rows;
}

double pct(double t, double base) { return 100.0 * (t - base) / base; }

template <typename T>
std::vector<FragmentationRow> fragmentation_impl(const BenchConfig& cfg) {
  const MatmulDims& dims = cfg.fragment_dims;
  const Graph g = single_site_graph(dims, cfg.seed);
  const Graph neat = rewrite_all(g).graph;
  const auto bundle = random_bundle<T>(g, dims.B, cfg.seed);

  const Executor<T> vanilla(g);
  const Executor<T> neat_exec(neat);
  std::vector<Executor<T>> fragmented;
  fragmented.reserve(cfg.chunks.size());
  for (auto c : cfg.chunks) fragmented.emplace_back(fragment_site(g, "m", c));

  std::vector<const Executor<T>*> variants{&vanilla, &neat_exec};
  for (const auto& f : fragmented) variants.push_back(&f);
  const auto t = time_variants<T>(variants, bundle, cfg);

  const auto reference = vanilla.run(bundle, Strategy::kUOI).outputs.at("out");
  std::vector<FragmentationRow> rows;
  for (std::size_t k = 0; k < cfg.chunks.size(); ++k) {
    FragmentationRow row;
    row.chunk = cfg.chunks[k];
    row.dims = dims;
    row.vanilla = t[0];
    row.neat = t[1];
    row.fragmented = t[k + 2];
    row.degradation_vs_original_pct = pct(row.fragmented.mean_ns, row.vanilla.mean_ns);
    row.degradation_vs_neat_pct = pct(row.fragmented.mean_ns, row.neat.mean_ns);
    row.max_deviation = relative_deviation(reference, fragmented[k].run(bundle, Strategy::kUOI).outputs.at("out"));
    rows.push_back(row);
  }
  return rows;
}

template <typename T>
FixtureSummary fixture_impl(const BenchConfig& cfg) {
  const RankingFixture fx = fixture_ranking_model(cfg.model);
  const RewriteResult rewritten = rewrite_all(fx.graph);

  FixtureSummary s;
  s.batch = cfg.fixture_batch;
  s.sites = rewritten.sites;
  for (const auto& site : s.sites) {
    const auto in = [&](const std::vector<std::string>& v) {
      return std::find(v.begin(), v.end(), site.matmul) != v.end();
    };
    s.roles.push_back(site.matmul == fx.attention_query ? "attention_query"
                      : in(fx.expert_first_fc)          ? "expert_first_fc"
                      : in(fx.tower_first_fc)           ? "tower_first_fc"
                                                        : "other");
  }
  s.tolerance = std::is_same_v<T, double> ? 1e-12 : 1e-5;
  EquivalenceOptions eq;
  eq.trials = cfg.equivalence_trials;
  eq.tolerance = s.tolerance;
  eq.batch = cfg.fixture_batch;
  eq.seed = cfg.seed;
  const auto verdict = check_equivalence<T>(fx.graph, rewritten.graph, eq);
  s.equivalent = verdict.pass;
  s.max_deviation = verdict.max_deviation;

  const Executor<T> base(fx.graph);
  const Executor<T> mari(rewritten.graph);
  const auto bundle = random_bundle<T>(fx.graph, cfg.fixture_batch, cfg.seed);
  const auto t = time_variants<T>({&base, &mari}, bundle, cfg);
  s.baseline = t[0];
  s.mari = t[1];
  s.speedup = t[0].mean_ns / t[1].mean_ns;
  return s;
}

std::string num(double v, int precision) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", precision, v);
  return buf;
}

void header(std::ostream& os, const char* mode, const BenchConfig& cfg) {
  os << "# mari bench mode=" << mode << " seed=" << cfg.seed << " dtype=" << dtype_name(cfg.dtype)
     << " repeats=" << cfg.repeats << " warmup=" << cfg.warmup << " version=" << MARI_VERSION << "\n";
}

constexpr const char* kSweepColumns =
    "axis,value,B,D_u,D_i,D_c,d,theoretical_speedup,t_vanilla_mean_ns,t_vanilla_std_ns,t_mari_mean_ns,"
    "t_mari_std_ns,measured_speedup";

void sweep_fields(std::ostream& os, const std::string& axis, std::int64_t value, const MatmulDims& d,
                  double theoretical, const TimingStats& a, const TimingStats& b) {
  os << axis << ',' << value << ',' << d.B << ',' << d.D_u << ',' << d.D_i << ',' << d.D_c << ',' << d.d << ','
     << num(theoretical, 4) << ',' << num(a.mean_ns, 1) << ',' << num(a.std_ns, 1) << ',' << num(b.mean_ns, 1)
     << ',' << num(b.std_ns, 1) << ',' << num(a.mean_ns / b.mean_ns, 4);
}

}  // namespace

std::vector<SweepPoint> bench_grid(const BenchConfig& cfg) {
  std::vector<SweepPoint> out;
  for (auto& p : table2_grid()) {
    if (cfg.axis.empty() || p.axis == cfg.axis) out.push_back(p);
  }
  if (out.empty()) throw InvalidArgument("unknown sweep axis '" + cfg.axis + "' (expected B, D_u, D_ic or d)");
  return out;
}

std::vector<BenchRow> bench_sweep(const BenchConfig& cfg, const std::vector<SweepPoint>& grid) {
  cfg.validate();
  if (grid.empty()) throw InvalidArgument("empty sweep grid");
  return cfg.dtype == DType::kF64 ? sweep_impl<double>(cfg, grid) : sweep_impl<float>(cfg, grid);
}

std::vector<FragmentationRow> bench_fragmentation(const BenchConfig& cfg) {
  cfg.validate();
  return cfg.dtype == DType::kF64 ? fragmentation_impl<double>(cfg) : fragmentation_impl<float>(cfg);
}

FixtureSummary bench_fixture(const BenchConfig& cfg) {
  cfg.validate();
  return cfg.dtype == DType::kF64 ? fixture_impl<double>(cfg) : fixture_impl<float>(cfg);
}

std::size_t FixtureSummary::site_groups() const {
  return std::set<std::string>(roles.begin(), roles.end()).size();
}

double spearman(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) throw DimensionError("spearman: sequences differ in length");
  const std::size_t n = x.size();
  if (n < 2) throw InvalidArgument("spearman: need at least two points");
  auto ranks = [n](const std::vector<double>& v) {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> r(n);
    for (std::size_t i = 0; i < n;) {
      std::size_t j = i;
      while (j + 1 < n && v[idx[j + 1]] == v[idx[i]]) ++j;
      const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
      for (std::size_t k = i; k <= j; ++k) r[idx[k]] = avg;
      i = j + 1;
    }
    return r;
  };
  const auto rx = ranks(x);
  const auto ry = ranks(y);
  const double mean = 0.5 * static_cast<double>(n + 1);
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    sxy += (rx[i] - mean) * (ry[i] - mean);
    sxx += (rx[i] - mean) * (rx[i] - mean);
    syy += (ry[i] - mean) * (ry[i] - mean);
  }
  if (sxx == 0 || syy == 0) return 0;
  return sxy / std::sqrt(sxx * syy);
}

void write_sweep_csv(std::ostream& os, const BenchConfig& cfg, const std::vector<BenchRow>& rows) {
  header(os, "table2", cfg);
  os << kSweepColumns << '\n';
  for (const auto& r : rows) {
    sweep_fields(os, r.point.axis, r.point.value, r.point.dims, r.theoretical_speedup, r.vanilla, r.mari);
    os << '\n';
  }
}

void write_fragmentation_csv(std::ostream& os, const BenchConfig& cfg, const std::vector<FragmentationRow>& rows) {
  header(os, "fragmentation", cfg);
  os << kSweepColumns << ",t_neat_mean_ns,t_neat_std_ns,degradation_vs_original_pct,degradation_vs_neat_pct\n";
  for (const auto& r : rows) {
    sweep_fields(os, "chunk", r.chunk, r.dims, mari_flops(r.dims).speedup, r.vanilla, r.fragmented);
    os << ',' << num(r.neat.mean_ns, 1) << ',' << num(r.neat.std_ns, 1) << ','
       << num(r.degradation_vs_original_pct, 2) << ',' << num(r.degradation_vs_neat_pct, 2) << '\n';
  }
}

void write_fixture_csv(std::ostream& os, const BenchConfig& cfg, const FixtureSummary& s) {
  header(os, "fixture", cfg);
  os << "site,role,concat,reorganized,B,D_u,D_i,D_c,d,flops_vanilla,flops_mari,flops_saving,"
        "t_vanilla_mean_ns,t_vanilla_std_ns,t_mari_mean_ns,t_mari_std_ns,measured_speedup,equivalent,max_deviation\n";
  std::uint64_t base = 0, opt = 0;
  for (std::size_t k = 0; k < s.sites.size(); ++k) {
    const auto& site = s.sites[k];
    const auto f = site.flops(s.batch);
    base += f.flops_baseline;
    opt += f.flops_optimized;
    os << site.matmul << ',' << s.roles[k] << ',' << site.concat << ',' << (site.reorganized ? "yes" : "no") << ',' << s.batch << ','
       << site.D_u << ',' << site.D_i << ',' << site.D_c << ',' << site.d << ',' << f.flops_baseline << ','
       << f.flops_optimized << ',' << f.absolute_saving << ",,,,,,,\n";
  }
  char dev[32];
  std::snprintf(dev, sizeof(dev), "%.3e", s.max_deviation);
  os << "total,,,," << s.batch << ",,,,," << base << ',' << opt << ',' << (base - opt) << ','
     << num(s.baseline.mean_ns, 1) << ',' << num(s.baseline.std_ns, 1) << ',' << num(s.mari.mean_ns, 1) << ','
     << num(s.mari.std_ns, 1) << ',' << num(s.speedup, 4) << ',' << (s.equivalent ? "pass" : "fail") << ','
     << dev << '\n';
}

}  // namespace mari
