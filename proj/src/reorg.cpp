// Copyright (C) 2026 The mari Authors
// SPDX-License-Identifier: Apache-2.0

#include "mari/reorg.hpp"

#include <algorithm>
#include <map>
#include <set>
#include <tuple>

#include "mari/errors.hpp"
#include "mari/gca.hpp"

namespace mari {

bool ColumnPermutation::is_identity() const noexcept {
  for (std::size_t j = 0; j < perm.size(); ++j) {
    if (perm[j] != static_cast<std::int64_t>(j)) return false;
  }
  return true;
}

ColumnPermutation ColumnPermutation::inverse() const {
  ColumnPermutation inv = *this;
  for (std::size_t j = 0; j < perm.size(); ++j) inv.perm[static_cast<std::size_t>(perm[j])] = static_cast<std::int64_t>(j);
  return inv;
}

ColumnPermutation ColumnPermutation::then(const ColumnPermutation& b) const {
  if (b.size() != size()) throw DimensionError("composing permutations of different sizes");
  ColumnPermutation out = b;
  for (std::size_t j = 0; j < b.perm.size(); ++j) out.perm[j] = perm[static_cast<std::size_t>(b.perm[j])];
  return out;
}

ColumnPermutation plan_reorg(const FeatureLayout& layout) {
  if (layout.empty()) throw InvalidArgument("cannot reorganize an empty layout");
  ColumnPermutation p;
  p.perm.reserve(static_cast<std::size_t>(layout.total_width()));
  for (FeatureDomain dom : {FeatureDomain::kUser, FeatureDomain::kItem, FeatureDomain::kCross}) {
    std::int64_t col = 0;
    for (const auto& s : layout.segments()) {
      if (s.domain == dom) {
        for (std::int64_t k = 0; k < s.width; ++k) p.perm.push_back(col + k);
      }
      col += s.width;
    }
  }
  p.D_user = layout.domain_width(FeatureDomain::kUser);
  p.D_item = layout.domain_width(FeatureDomain::kItem);
  p.D_cross = layout.domain_width(FeatureDomain::kCross);
  return p;
}

namespace {

std::vector<FeatureDomain> column_domains(const FeatureLayout& layout) {
  std::vector<FeatureDomain> out;
  for (const auto& s : layout.segments()) out.insert(out.end(), static_cast<std::size_t>(s.width), s.domain);
  return out;
}

void check_permutation(const ColumnPermutation& p, std::int64_t width) {
  if (p.size() != width) {
    throw DimensionError("permutation of " + std::to_string(p.size()) + " columns applied to " +
                         std::to_string(width) + " columns");
  }
  std::vector<bool> hit(static_cast<std::size_t>(width), false);
  for (auto v : p.perm) {
    if (v < 0 || v >= width || hit[static_cast<std::size_t>(v)]) {
      throw InvalidArgument("column permutation is not a bijection");
    }
    hit[static_cast<std::size_t>(v)] = true;
  }
}

}  // namespace

FeatureLayout permuted_layout(const FeatureLayout& layout, const ColumnPermutation& p) {
  check_permutation(p, layout.total_width());
  const auto doms = column_domains(layout);
  std::vector<LayoutSegment> segs;
  for (auto src : p.perm) {
    const FeatureDomain d = doms[static_cast<std::size_t>(src)];
    if (!segs.empty() && segs.back().domain == d) {
      ++segs.back().width;
    } else {
      segs.push_back({d, 1});
    }
  }
  return FeatureLayout(std::move(segs));
}

Tensor apply_to_weights(const Tensor& w, const ColumnPermutation& p) {
  if (w.rank() != 2) throw DimensionError("weight must be a matrix, got " + w.shape().to_string());
  if (w.rows() != p.size()) {
    throw DimensionError("weight " + w.shape().to_string() + " has " + std::to_string(w.rows()) +
                         " rows, permutation has " + std::to_string(p.size()));
  }
  check_permutation(p, w.rows());
  const std::int64_t cols = w.cols();
  std::vector<double> out(static_cast<std::size_t>(w.size()));
  const auto src = w.data();
  for (std::int64_t i = 0; i < w.rows(); ++i) {
    std::copy_n(src.begin() + p.perm[static_cast<std::size_t>(i)] * cols, cols, out.begin() + i * cols);
  }
  return Tensor(w.shape(), std::move(out));
}

std::vector<ColumnPiece> concat_pieces(const Graph& g, NodeIndex concat) {
  const Node& node = g.node(concat);
  const auto* cat = std::get_if<ConcatOp>(&node.op);
  if (!cat) throw InvalidArgument("node '" + node.id + "' is not a Concat");
  const auto doms = column_domains(cat->layout);

  std::vector<ColumnPiece> out;
  std::int64_t col = 0;
  for (NodeIndex in : node.inputs) {
    const Node& src = g.node(in);
    const std::int64_t width = src.shape.cols;
    for (std::int64_t k = 0; k < width; ++k, ++col) {
      const FeatureDomain d = doms[static_cast<std::size_t>(col)];
      if (k > 0 && out.back().domain == d) {
        ++out.back().width;
      } else {
        out.push_back({src.id, k, 1, d, false});
      }
    }
    for (auto it = out.rbegin(); it != out.rend() && it->input == src.id; ++it) {
      it->whole = it->offset == 0 && it->width == width;
    }
  }
  return out;
}

namespace {

// Emits a node producing columns [offset, offset + width) of `input`.
std::string slice_of(GraphSpec& spec, const std::string& base, const std::string& input,
                     std::int64_t offset, std::int64_t width, bool whole,
                     std::map<std::tuple<std::string, std::int64_t, std::int64_t>, std::string>& memo) {
  if (whole) return input;
  const auto key = std::make_tuple(input, offset, width);
  if (auto it = memo.find(key); it != memo.end()) return it->second;
  const std::string id = spec.fresh_id(base);
  spec.add(id, SliceOp{offset, width}, {input});
  memo.emplace(key, id);
  return id;
}

}  // namespace

Graph apply_to_graph(const Graph& g, std::string_view site, const ColumnPermutation& p) {
  const auto ci = g.find(site);
  if (!ci) throw InvalidArgument("no node '" + std::string(site) + "'");
  const Node& concat = g.node(*ci);
  const auto* cat = std::get_if<ConcatOp>(&concat.op);
  if (!cat) throw InvalidArgument("reorg site '" + concat.id + "' is not a Concat");
  check_permutation(p, concat.shape.cols);
  if (p.is_identity()) return g;

  // Column -> (input, column within input, input width).
  struct Source {
    NodeIndex input;
    std::int64_t col;
  };
  std::vector<Source> sources;
  for (NodeIndex in : concat.inputs) {
    for (std::int64_t k = 0; k < g.node(in).shape.cols; ++k) sources.push_back({in, k});
  }
  const auto doms = column_domains(cat->layout);

  GraphSpec spec = g.to_spec();
  const std::string new_id = spec.fresh_id(concat.id + "__neat");
  std::map<std::tuple<std::string, std::int64_t, std::int64_t>, std::string> slices;
  std::vector<std::string> inputs;
  std::vector<LayoutSegment> segs;
  std::size_t j = 0;
  while (j < p.perm.size()) {
    const auto start = static_cast<std::size_t>(p.perm[j]);
    const Source src = sources[start];
    const FeatureDomain dom = doms[start];
    std::size_t len = 1;
    while (j + len < p.perm.size()) {
      const auto next = static_cast<std::size_t>(p.perm[j + len]);
      if (next != start + len || sources[next].input != src.input ||
          sources[next].col != src.col + static_cast<std::int64_t>(len) || doms[next] != dom) {
        break;
      }
      ++len;
    }
    const Node& in = g.node(src.input);
    const auto w = static_cast<std::int64_t>(len);
    inputs.push_back(slice_of(spec, new_id + "_slice", in.id, src.col, w,
                              src.col == 0 && w == in.shape.cols, slices));
    segs.push_back({dom, w});
    j += len;
  }
  spec.add(new_id, ConcatOp{FeatureLayout(std::move(segs)).merged()}, std::move(inputs));

  // Follow non-computational consumers to the MatMuls and rewire them.
  const std::set<OpKind> passthrough{OpKind::kReshape, OpKind::kIdentity, OpKind::kTile};
  std::vector<std::string> replaced{concat.id};
  std::map<std::string, std::string> permuted_weights;
  std::vector<std::pair<NodeIndex, std::string>> stack{{*ci, new_id}};
  std::map<NodeIndex, std::string> cloned{{*ci, new_id}};
  while (!stack.empty()) {
    const auto [v, v_new] = stack.back();
    stack.pop_back();
    for (NodeIndex s : g.consumers(v)) {
      const Node& node = g.node(s);
      if (node.kind() == OpKind::kMatMul && node.inputs[0] == v) {
        const Node& w = g.node(node.inputs[1]);
        auto it = permuted_weights.find(w.id);
        if (it == permuted_weights.end()) {
          const auto& value = *std::get<WeightOp>(w.op).value;
          const std::string wid = spec.fresh_id(w.id + "__reorg");
          spec.add(wid, WeightOp{std::make_shared<const Tensor>(apply_to_weights(value, p))});
          it = permuted_weights.emplace(w.id, wid).first;
          replaced.push_back(w.id);
        }
        spec.at(node.id).inputs = {v_new, it->second};
      } else if (passthrough.count(node.kind()) && !cloned.count(s)) {
        const std::string id = spec.fresh_id(node.id + "__neat");
        spec.add(id, node.op, {v_new});
        cloned.emplace(s, id);
        replaced.push_back(node.id);
        stack.emplace_back(s, id);
      }
    }
  }
  spec.prune_unused(std::move(replaced));
  std::vector<std::string> clones;
  for (const auto& [idx, id] : cloned) clones.push_back(id);
  spec.prune_unused(std::move(clones));
  return build_graph(spec);
}

Graph reorg_all(const Graph& g, std::vector<std::string>* reorganized) {
  std::vector<std::string> sites;
  for (const auto& [matmul, site] : run_gca(g)) {
    if (!site.layout.is_neat() && std::find(sites.begin(), sites.end(), site.concat) == sites.end()) {
      sites.push_back(site.concat);
    }
  }
  Graph out = g;
  for (const auto& c : sites) {
    const auto& layout = std::get<ConcatOp>(out.node(c).op).layout;
    out = apply_to_graph(out, c, plan_reorg(layout));
    if (reorganized) reorganized->push_back(c);
  }
  return out;
}

}  // namespace mari
