// Copyright (C) 2026 The mari Authors
// SPDX-License-Identifier: Apache-2.0

#include <CLI11.hpp>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <optional>
#include <sstream>
#include <string>

#include "mari/bench.hpp"
#include "mari/errors.hpp"
#include "mari/executor.hpp"
#include "mari/fixtures.hpp"
#include "mari/flops.hpp"
#include "mari/gca.hpp"
#include "mari/graph.hpp"
#include "mari/reorg.hpp"
#include "mari/rewrite.hpp"

namespace {

using namespace mari;

std::string fmt(double v, int precision) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", precision, v);
  return buf;
}

// Writes to `path`, or stdout for "" / "-".
template <typename Fn>
void emit(const std::string& path, Fn&& write) {
  if (path.empty() || path == "-") {
    write(std::cout);
    std::cout.flush();
    return;
  }
  std::ofstream out(path);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  write(out);
  if (!out) throw IoError("failed writing '" + path + "'");
}

void cmd_gca(const std::string& path) {
  const Graph g = load_graph(path);
  for (const auto& [matmul, site] : run_gca(g)) std::cout << matmul << ' ' << site.concat << '\n';
}

void cmd_reorg(const std::string& path, const std::string& out) {
  std::vector<std::string> sites;
  const Graph g = reorg_all(load_graph(path), &sites);
  save_graph(g, out);
  for (const auto& s : sites) std::cerr << "reorganized " << s << '\n';
}

void cmd_rewrite(const std::string& path, const std::string& out, std::optional<std::int64_t> fragment) {
  const Graph g = load_graph(path);
  if (fragment) {
    Graph cur = reorg_all(g);
    for (const auto& [matmul, site] : run_gca(cur)) {
      cur = fragment_site(cur, matmul, *fragment);
      std::cout << matmul << " fragmented chunk=" << *fragment << '\n';
    }
    save_graph(cur, out);
    return;
  }
  const RewriteResult r = rewrite_all(g);
  save_graph(r.graph, out);
  for (const auto& s : r.sites) {
    std::cout << s.matmul << " concat=" << s.concat << " reorganized=" << (s.reorganized ? "yes" : "no")
              << " D_u=" << s.D_u << " D_i=" << s.D_i << " D_c=" << s.D_c << " d=" << s.d << '\n';
  }
}

template <typename T>
void cmd_run(const std::string& path, Strategy strategy, std::int64_t batch, std::uint64_t seed, DType dtype) {
  const Graph g = load_graph(path);
  const auto bundle = random_bundle<T>(g, batch, seed);
  const auto rep = execute(g, bundle, strategy);

  nlohmann::ordered_json j;
  j["strategy"] = std::string(strategy_name(strategy));
  j["B"] = batch;
  j["seed"] = seed;
  j["dtype"] = std::string(dtype_name(dtype));
  nlohmann::ordered_json outputs = nlohmann::ordered_json::object();
  for (const auto& [id, t] : rep.outputs) {
    nlohmann::ordered_json o;
    o["shape"] = t.shape().dims();
    o["data"] = std::vector<double>(t.data().begin(), t.data().end());
    outputs[id] = std::move(o);
  }
  j["outputs"] = std::move(outputs);
  nlohmann::ordered_json flops;
  flops["total"] = rep.flops_total;
  flops["attention_core"] = rep.flops_attention_core;
  nlohmann::ordered_json per_node = nlohmann::ordered_json::object();
  for (NodeIndex i = 0; i < g.size(); ++i) {
    if (rep.node_flops[i]) per_node[g.node(i).id] = rep.node_flops[i];
  }
  flops["per_node"] = std::move(per_node);
  nlohmann::ordered_json branches = nlohmann::ordered_json::object();
  for (const auto& [k, v] : rep.branch_flops) branches[k] = v;
  flops["branches"] = std::move(branches);
  j["flops"] = std::move(flops);
  j["wall_time_ns"] = rep.wall_time_ns;
  std::cout << j.dump(2) << '\n';
}

void write_flops_row(std::ostream& os, const SweepRow& r) {
  const auto& d = r.point.dims;
  os << r.point.axis << ',' << r.point.value << ',' << d.B << ',' << d.D_u << ',' << d.D_i << ',' << d.D_c << ','
     << d.d << ',' << r.report.flops_baseline << ',' << r.report.flops_optimized << ',' << fmt(r.report.speedup, 4)
     << ',' << r.report.absolute_saving << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"mari: matrix re-parameterized inference for ranking models"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(MARI_VERSION));

  std::string graph_path;
  std::string out_path;

  auto* gca = app.add_subcommand("gca", "Print MaRI-optimizable MatMuls and their provoking Concat");
  gca->add_option("graph", graph_path, "Graph file")->required();

  auto* reorg = app.add_subcommand("reorg", "Reorganize fragmented layouts at every detected site");
  reorg->add_option("graph", graph_path, "Graph file")->required();
  reorg->add_option("-o,--output", out_path, "Output graph file")->required();

  std::optional<std::int64_t> fragment;
  auto* rewrite = app.add_subcommand("rewrite", "Rewrite every detected site into MatMulMaRI");
  rewrite->add_option("graph", graph_path, "Graph file")->required();
  rewrite->add_option("-o,--output", out_path, "Output graph file")->required();
  rewrite->add_option("--fragment", fragment, "Emit the chunked variant with this chunk size instead")
      ->check(CLI::PositiveNumber);

  std::string strategy_text = "uoi";
  std::int64_t batch = 16;
  std::uint64_t seed = 42;
  std::string dtype_text = "f64";
  auto* run = app.add_subcommand("run", "Execute a graph on random inputs and print an ExecReport");
  run->add_option("graph", graph_path, "Graph file")->required();
  run->add_option("--strategy", strategy_text, "vani or uoi")->check(CLI::IsMember({"vani", "uoi"}));
  run->add_option("--B", batch, "Batch size")->check(CLI::PositiveNumber);
  run->add_option("--seed", seed, "Input seed");
  run->add_option("--dtype", dtype_text, "f32 or f64")->check(CLI::IsMember({"f32", "f64"}));

  std::string preset;
  MatmulDims dims{1, 0, 0, 0, 1};
  std::optional<std::int64_t> seq_len;
  auto* flops = app.add_subcommand("flops", "Closed-form FLOPs and speedups as CSV");
  auto* preset_opt = flops->add_option("--preset", preset, "Named grid")->check(CLI::IsMember({"table2"}));
  auto* b_opt = flops->add_option("--B", dims.B, "Batch size");
  flops->add_option("--du", dims.D_u, "User width")->excludes(preset_opt);
  flops->add_option("--di", dims.D_i, "Item width")->excludes(preset_opt);
  flops->add_option("--dc", dims.D_c, "Cross width")->excludes(preset_opt);
  flops->add_option("--d", dims.d, "Output width")->excludes(preset_opt);
  flops->add_option("--L", seq_len, "Sequence length: report the cross-attention model instead")
      ->excludes(preset_opt);
  b_opt->excludes(preset_opt);

  std::string mode;
  BenchConfig cfg;
  std::string chunks_text;
  auto* bench = app.add_subcommand("bench", "Timing benchmarks (CSV)");
  bench->add_option("mode", mode, "table2, fragmentation or fixture")
      ->required()
      ->check(CLI::IsMember({"table2", "fragmentation", "fixture"}));
  bench->add_option("--repeats", cfg.repeats, "Timed runs per variant")->check(CLI::Range(2, 1000000));
  bench->add_option("--warmup", cfg.warmup, "Untimed runs per variant")->check(CLI::NonNegativeNumber);
  bench->add_option("--seed", cfg.seed, "Seed for weights and inputs");
  bench->add_option("--dtype", dtype_text, "f32 or f64")->check(CLI::IsMember({"f32", "f64"}));
  bench->add_option("-o,--output", out_path, "CSV file (default stdout)");
  bench->add_option("--axis", cfg.axis, "table2: only this axis")->check(CLI::IsMember({"B", "D_u", "D_ic", "d"}));
  bench->add_option("--chunks", cfg.chunks, "fragmentation: chunk sizes")->delimiter(',');
  bench->add_option("--batch", cfg.fixture_batch, "fixture: batch size")->check(CLI::PositiveNumber);

  ModelDims model;
  auto* fixture = app.add_subcommand("fixture", "Write the example ranking model graph");
  fixture->add_option("-o,--output", out_path, "Graph file (default stdout)");
  fixture->add_flag("--fragmented", model.fragmented, "Interleave domains in the mixed concats");
  fixture->add_option("--experts", model.num_experts, "MMoE experts")->check(CLI::PositiveNumber);
  fixture->add_option("--tasks", model.num_tasks, "Task towers")->check(CLI::PositiveNumber);
  fixture->add_option("--seed", model.seed, "Weight seed");

  CLI11_PARSE(app, argc, argv);

  try {
    const DType dtype = dtype_text == "f32" ? DType::kF32 : DType::kF64;
    if (*gca) {
      cmd_gca(graph_path);
    } else if (*reorg) {
      cmd_reorg(graph_path, out_path);
    } else if (*rewrite) {
      cmd_rewrite(graph_path, out_path, fragment);
    } else if (*run) {
      const Strategy s = *parse_strategy(strategy_text);
      if (dtype == DType::kF64) {
        cmd_run<double>(graph_path, s, batch, seed, dtype);
      } else {
        cmd_run<float>(graph_path, s, batch, seed, dtype);
      }
    } else if (*flops) {
      if (seq_len) {
        const auto r = uoi_attention_flops({dims.B, *seq_len, dims.d});
        std::cout << "B,L,d,flops_baseline,flops_optimized,speedup,saving,ratio\n"
                  << dims.B << ',' << *seq_len << ',' << dims.d << ',' << r.flops_baseline << ','
                  << r.flops_optimized << ',' << fmt(r.speedup, 4) << ',' << r.absolute_saving << ','
                  << fmt(r.ratio, 6) << '\n';
      } else {
        const auto grid = preset.empty() ? std::vector<SweepPoint>{{"custom", 0, dims}} : table2_grid();
        std::cout << "axis,value,B,D_u,D_i,D_c,d,flops_baseline,flops_optimized,speedup,saving\n";
        for (const auto& row : flops_speedup_table(grid)) write_flops_row(std::cout, row);
      }
    } else if (*bench) {
      cfg.dtype = dtype;
      if (mode == "table2") {
        const auto rows = bench_sweep(cfg, bench_grid(cfg));
        emit(out_path, [&](std::ostream& os) { write_sweep_csv(os, cfg, rows); });
      } else if (mode == "fragmentation") {
        const auto rows = bench_fragmentation(cfg);
        emit(out_path, [&](std::ostream& os) { write_fragmentation_csv(os, cfg, rows); });
      } else {
        const auto summary = bench_fixture(cfg);
        emit(out_path, [&](std::ostream& os) { write_fixture_csv(os, cfg, summary); });
        std::cerr << "sites=" << summary.sites.size() << " speedup=" << fmt(summary.speedup, 3)
                  << " groups=" << summary.site_groups() << " equivalence=" << (summary.equivalent ? "pass" : "fail") << '\n';
      }
    } else if (*fixture) {
      const auto fx = fixture_ranking_model(model);
      emit(out_path, [&](std::ostream& os) { os << serialize(fx.graph); });
    }
  } catch (const mari::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
