// Copyright (C) 2026 The mari Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "mari/graph.hpp"

namespace mari {

enum class Color : std::uint8_t { kUncolored, kYellow, kBlue };

std::string_view color_name(Color c);

// Indexed by NodeIndex.
using Coloring = std::vector<Color>;

Coloring initialize_colors(const Graph& g);

struct WorklistOrder {
  std::uint64_t seed = 0;
  // Shuffle the initial stack and the order successors are pushed.
  bool randomized = false;
};

struct PropagationStats {
  std::uint64_t pops = 0;
  std::uint64_t relaxations = 0;  // edge inspections
  std::uint64_t color_changes = 0;
};

// Change-driven worklist over an explicit successor list; Blue overrides
// anything, Yellow only fills Uncolored. Throws std::logic_error if the
// change or relaxation budget (2|V| and 2|V||E|) is exceeded.
Coloring propagate_colors(const std::vector<std::vector<NodeIndex>>& successors, Coloring colors,
                          const WorklistOrder& order = {}, PropagationStats* stats = nullptr);

Coloring propagate(const Graph& g, Coloring colors, const WorklistOrder& order = {},
                   PropagationStats* stats = nullptr);

struct OptSite {
  std::string concat;
  FeatureLayout layout;

  friend bool operator==(const OptSite&, const OptSite&) = default;
};

// MatMul id -> provoking Concat. A MatMul reachable from several mixed
// concats keeps the first in topological order.
using OptSet = std::map<std::string, OptSite>;

struct GcaOptions {
  std::set<OpKind> non_computational{OpKind::kReshape, OpKind::kIdentity, OpKind::kTile};
};

OptSet detect_optimizable(const Graph& g, const Coloring& colors, const GcaOptions& options = {});

OptSet run_gca(const Graph& g, const GcaOptions& options = {});

}  // namespace mari
