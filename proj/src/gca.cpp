// Copyright (C) 2026 The mari Authors
// SPDX-License-Identifier: Apache-2.0

#include "mari/gca.hpp"

#include <algorithm>
#include <random>
#include <stdexcept>

namespace mari {

std::string_view color_name(Color c) {
  switch (c) {
    case Color::kYellow: return "Yellow";
    case Color::kBlue: return "Blue";
    case Color::kUncolored: break;
  }
  return "Uncolored";
}

Coloring initialize_colors(const Graph& g) {
  Coloring colors(g.size(), Color::kUncolored);
  for (NodeIndex i = 0; i < g.size(); ++i) {
    if (const auto* in = std::get_if<InputOp>(&g.node(i).op)) {
      colors[i] = in->domain == FeatureDomain::kUser ? Color::kYellow : Color::kBlue;
    }
  }
  return colors;
}

Coloring propagate_colors(const std::vector<std::vector<NodeIndex>>& successors, Coloring colors,
                          const WorklistOrder& order, PropagationStats* stats) {
  const std::size_t n = successors.size();
  if (colors.size() != n) throw std::invalid_argument("coloring does not match graph size");
  std::size_t edges = 0;
  for (const auto& s : successors) edges += s.size();
  const std::uint64_t change_budget = 2 * n;
  const std::uint64_t relax_budget = 2 * n * edges;

  std::mt19937_64 rng(order.seed);
  std::vector<NodeIndex> stack;
  for (NodeIndex v = 0; v < n; ++v) {
    if (colors[v] != Color::kUncolored) stack.push_back(v);
  }
  std::reverse(stack.begin(), stack.end());

  PropagationStats local;
  while (!stack.empty()) {
    if (order.randomized) {
      std::uniform_int_distribution<std::size_t> pick(0, stack.size() - 1);
      std::swap(stack[pick(rng)], stack.back());
    }
    const NodeIndex v = stack.back();
    stack.pop_back();
    ++local.pops;
    const Color cv = colors[v];
    for (NodeIndex s : successors[v]) {
      if (++local.relaxations > relax_budget) throw std::logic_error("color propagation budget exceeded");
      Color& cs = colors[s];
      const bool to_blue = cv == Color::kBlue && cs != Color::kBlue;
      const bool to_yellow = cv == Color::kYellow && cs == Color::kUncolored;
      if (!to_blue && !to_yellow) continue;
      cs = cv;
      if (++local.color_changes > change_budget) throw std::logic_error("color change budget exceeded");
      stack.push_back(s);
    }
  }
  if (stats) *stats = local;
  return colors;
}

Coloring propagate(const Graph& g, Coloring colors, const WorklistOrder& order,
                   PropagationStats* stats) {
  std::vector<std::vector<NodeIndex>> succ(g.size());
  for (NodeIndex i = 0; i < g.size(); ++i) succ[i] = g.consumers(i);
  return propagate_colors(succ, std::move(colors), order, stats);
}

OptSet detect_optimizable(const Graph& g, const Coloring& colors, const GcaOptions& options) {
  OptSet out;
  for (NodeIndex c = 0; c < g.size(); ++c) {
    const Node& node = g.node(c);
    const auto* cat = std::get_if<ConcatOp>(&node.op);
    if (!cat) continue;
    bool yellow = false;
    bool blue = false;
    for (NodeIndex in : node.inputs) {
      yellow = yellow || colors[in] == Color::kYellow;
      blue = blue || colors[in] == Color::kBlue;
    }
    if (!yellow || !blue) continue;

    std::vector<NodeIndex> stack{c};
    std::vector<bool> seen(g.size(), false);
    seen[c] = true;
    while (!stack.empty()) {
      const NodeIndex v = stack.back();
      stack.pop_back();
      for (NodeIndex s : g.consumers(v)) {
        if (seen[s]) continue;
        seen[s] = true;
        const OpKind k = g.node(s).kind();
        if (k == OpKind::kMatMul) {
          out.emplace(g.node(s).id, OptSite{node.id, cat->layout});
        } else if (options.non_computational.count(k)) {
          stack.push_back(s);
        }
      }
    }
  }
  return out;
}

OptSet run_gca(const Graph& g, const GcaOptions& options) {
  return detect_optimizable(g, propagate(g, initialize_colors(g)), options);
}

}  // namespace mari
