// Copyright (C) 2026 The mari Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "mari/graph.hpp"
#include "mari/tensor.hpp"

namespace mari {

// VanI replicates user inputs to the batch before the graph runs; UOI
// feeds them as single rows and replicates at Tile nodes.
enum class Strategy { kVanI, kUOI };

std::string_view strategy_name(Strategy s);
std::optional<Strategy> parse_strategy(std::string_view name);

template <typename T>
struct InputBundle {
  std::int64_t batch = 1;
  std::map<std::string, BasicTensor<T>> values;  // by Input node id
};

template <typename T>
struct ExecReport {
  std::map<std::string, BasicTensor<T>> outputs;  // by Output node id
  // 2 x multiply-adds of matrix products, indexed by NodeIndex. For
  // MatMulMaRI, `branch_flops` splits the count as "<id>/user" etc.
  std::vector<std::uint64_t> node_flops;
  std::map<std::string, std::uint64_t> branch_flops;
  std::uint64_t flops_total = 0;
  // Attention score and weighted-sum products, kept out of the total.
  std::uint64_t flops_attention_core = 0;
  std::int64_t wall_time_ns = 0;
  // Every node's value, when requested.
  std::vector<std::shared_ptr<const BasicTensor<T>>> values;
};

struct RunOptions {
  bool keep_values = false;
};

// Interpreter bound to one graph. Weights are converted to T once.
template <typename T>
class Executor {
 public:
  explicit Executor(const Graph& g);

  const Graph& graph() const noexcept { return graph_; }

  ExecReport<T> run(const InputBundle<T>& in, Strategy strategy, const RunOptions& options = {}) const;

 private:
  Graph graph_;
  std::vector<std::shared_ptr<const BasicTensor<T>>> weights_;
  std::vector<int> consumer_count_;
};

template <typename T>
ExecReport<T> execute(const Graph& g, const InputBundle<T>& in, Strategy strategy,
                      const RunOptions& options = {}) {
  return Executor<T>(g).run(in, strategy, options);
}

// softmax(q k^T / sqrt(hidden)) v with k = seq W_K, v = seq W_V. The
// sequence has one row (shared by all queries) or one row per query.
// Optional counters receive projection and core FLOPs.
template <typename T>
BasicTensor<T> cross_attention(const BasicTensor<T>& q, const BasicTensor<T>& seq, const BasicTensor<T>& wk,
                               const BasicTensor<T>& wv, std::uint64_t* projection_flops = nullptr,
                               std::uint64_t* core_flops = nullptr);

// Uniform [-1, 1) values for every Input node; user inputs get one row.
// Values are drawn in double and converted, so f32 and f64 bundles with
// one seed hold the same numbers up to rounding.
template <typename T>
InputBundle<T> random_bundle(const Graph& g, std::int64_t batch, std::uint64_t seed);

// max |a - b| / max(max |a|, max |b|); 0 when both are zero.
template <typename T>
double relative_deviation(const BasicTensor<T>& a, const BasicTensor<T>& b);

struct EquivalenceResult {
  bool pass = false;
  double max_deviation = 0;
  int trials = 0;
};

struct EquivalenceOptions {
  int trials = 100;
  double tolerance = 1e-12;
  std::int64_t batch = 16;
  std::uint64_t seed = 1;
  Strategy strategy = Strategy::kUOI;
};

// Runs both graphs on the same random bundles. Throws ContractError when
// their Input or Output signatures differ.
template <typename T>
EquivalenceResult check_equivalence(const Graph& a, const Graph& b, const EquivalenceOptions& options = {});

}  // namespace mari
