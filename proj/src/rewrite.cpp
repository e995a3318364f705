// Copyright (C) 2026 The mari Authors
// SPDX-License-Identifier: Apache-2.0

#include "mari/rewrite.hpp"

#include <algorithm>
#include <map>

#include "mari/errors.hpp"
#include "mari/reorg.hpp"

namespace mari {

namespace {

constexpr FeatureDomain kDomains[] = {FeatureDomain::kUser, FeatureDomain::kItem, FeatureDomain::kCross};

std::string lower_name(FeatureDomain d) {
  switch (d) {
    case FeatureDomain::kUser: return "user";
    case FeatureDomain::kItem: return "item";
    case FeatureDomain::kCross: break;
  }
  return "cross";
}

struct Site {
  NodeIndex matmul;
  NodeIndex concat;
  std::vector<NodeIndex> chain;  // between concat and matmul
  FeatureLayout layout;
  std::vector<ColumnPiece> pieces;
};

Site locate_site(const Graph& g, std::string_view matmul) {
  const auto mi = g.find(matmul);
  if (!mi) throw InvalidArgument("no node '" + std::string(matmul) + "'");
  const Node& m = g.node(*mi);
  if (m.kind() != OpKind::kMatMul) {
    throw InvalidArgument("node '" + m.id + "' is a " + std::string(kind_name(m.kind())) + ", not a MatMul");
  }
  Site site{*mi, 0, {}, {}, {}};
  NodeIndex v = m.inputs[0];
  for (;;) {
    const OpKind k = g.node(v).kind();
    if (k == OpKind::kConcat) break;
    if (k != OpKind::kReshape && k != OpKind::kIdentity && k != OpKind::kTile) {
      throw PreconditionError("MatMul '" + m.id + "' is not fed by a Concat through non-computational nodes (reached " +
                              std::string(kind_name(k)) + " '" + g.node(v).id + "')");
    }
    site.chain.push_back(v);
    v = g.node(v).inputs[0];
  }
  site.concat = v;
  site.layout = std::get<ConcatOp>(g.node(v).op).layout;
  if (!site.layout.is_neat()) {
    throw PreconditionError("Concat '" + g.node(v).id + "' feeding MatMul '" + m.id + "' has fragmented layout " +
                            site.layout.to_string() + "; reorganize it first");
  }
  if (site.layout.domain_width(FeatureDomain::kItem) + site.layout.domain_width(FeatureDomain::kCross) == 0) {
    throw PreconditionError("Concat '" + g.node(v).id + "' has no item or cross columns");
  }
  site.pieces = concat_pieces(g, v);
  return site;
}

// Emits `op(inputs)` under `base`, reusing an identical node left by an
// earlier rewrite of the same concat.
std::string emit(GraphSpec& spec, const std::string& base, Op op, std::vector<std::string> inputs) {
  if (spec.contains(base)) {
    const NodeSpec& existing = spec.at(base);
    if (existing.op == op && existing.inputs == inputs) return base;
  }
  const std::string id = spec.fresh_id(base);
  spec.add(id, std::move(op), std::move(inputs));
  return id;
}

// Rebuilds user-derived batched values on a single row.
class Untiler {
 public:
  Untiler(const Graph& g, GraphSpec& spec) : g_(g), spec_(spec), colors_(propagate(g, initialize_colors(g))) {}

  std::string operator()(NodeIndex v) {
    const Node& node = g_.node(v);
    if (!node.shape.batched()) return node.id;
    if (auto it = memo_.find(v); it != memo_.end()) return it->second;
    std::string id;
    if (node.kind() == OpKind::kTile) {
      id = (*this)(node.inputs[0]);
    } else if (colors_[v] == Color::kBlue) {
      throw PreconditionError("user columns depend on item/cross node '" + node.id + "'");
    } else {
      std::vector<std::string> ins;
      for (NodeIndex in : node.inputs) ins.push_back((*this)(in));
      id = emit(spec_, node.id + "__untiled", node.op, std::move(ins));
    }
    memo_.emplace(v, id);
    return id;
  }

 private:
  const Graph& g_;
  GraphSpec& spec_;
  Coloring colors_;
  std::map<NodeIndex, std::string> memo_;
};

// Columns [offset, offset + width) of `source`, whose full width is `cols`.
std::string columns_of(GraphSpec& spec, const std::string& source, std::int64_t offset, std::int64_t width,
                       std::int64_t cols) {
  if (offset == 0 && width == cols) return source;
  return emit(spec, source + "__cols" + std::to_string(offset) + "_" + std::to_string(offset + width),
              SliceOp{offset, width}, {source});
}

struct Span {
  NodeIndex input;
  std::int64_t offset;
  std::int64_t width;
  FeatureDomain domain;
};

std::vector<Span> to_spans(const Graph& g, const std::vector<ColumnPiece>& pieces) {
  std::vector<Span> out;
  for (const auto& p : pieces) out.push_back({g.index_of(p.input), p.offset, p.width, p.domain});
  return out;
}

// Concatenation of the given column spans; user-only operands read the
// untiled sources.
std::string gather(const Graph& g, GraphSpec& spec, Untiler& untile, const std::string& base,
                   const std::vector<Span>& spans, bool untiled) {
  std::vector<std::string> parts;
  std::vector<LayoutSegment> segs;
  for (const auto& s : spans) {
    const std::string src = untiled ? untile(s.input) : g.node(s.input).id;
    parts.push_back(columns_of(spec, src, s.offset, s.width, g.node(s.input).shape.cols));
    segs.push_back({s.domain, s.width});
  }
  if (parts.size() == 1) return parts[0];
  return emit(spec, base, ConcatOp{FeatureLayout(std::move(segs))}, std::move(parts));
}

Tensor weight_rows(const Tensor& w, std::int64_t start, std::int64_t count) {
  const auto cols = w.cols();
  const auto src = w.data().subspan(static_cast<std::size_t>(start * cols), static_cast<std::size_t>(count * cols));
  return Tensor(Shape{count, cols}, std::vector<double>(src.begin(), src.end()));
}

std::vector<std::string> replaced_ids(const Graph& g, const Site& site) {
  std::vector<std::string> out{g.node(site.concat).id, g.node(g.node(site.matmul).inputs[1]).id};
  for (NodeIndex c : site.chain) out.push_back(g.node(c).id);
  return out;
}

template <typename Fn>
auto with_site(const std::string& site, Fn&& fn) {
  try {
    return fn();
  } catch (const PreconditionError& e) {
    throw PreconditionError("site '" + site + "': " + e.what());
  } catch (const DimensionError& e) {
    throw DimensionError("site '" + site + "': " + e.what());
  } catch (const InvalidArgument& e) {
    throw InvalidArgument("site '" + site + "': " + e.what());
  }
}

}  // namespace

Graph rewrite_site(const Graph& g, std::string_view matmul, SiteRewrite* report) {
  const Site site = locate_site(g, matmul);
  const Node& m = g.node(site.matmul);
  const Node& concat = g.node(site.concat);
  const auto& w = *std::get<WeightOp>(g.node(m.inputs[1]).op).value;

  GraphSpec spec = g.to_spec();
  Untiler untile(g, spec);
  const auto spans = to_spans(g, site.pieces);

  std::vector<std::string> inputs;
  std::int64_t widths[3] = {0, 0, 0};
  std::int64_t row = 0;
  for (int k = 0; k < 3; ++k) {
    const FeatureDomain dom = kDomains[k];
    std::vector<Span> mine;
    for (const auto& s : spans) {
      if (s.domain == dom) mine.push_back(s);
    }
    widths[k] = site.layout.domain_width(dom);
    if (widths[k] == 0) continue;
    const std::string name = lower_name(dom);
    inputs.push_back(gather(g, spec, untile, concat.id + "__" + name, mine, dom == FeatureDomain::kUser));
    const std::string wid = spec.fresh_id(m.id + "__w_" + name);
    spec.add(wid, WeightOp{std::make_shared<const Tensor>(weight_rows(w, row, widths[k]))});
    inputs.push_back(wid);
    row += widths[k];
  }

  NodeSpec& node = spec.at(m.id);
  node.op = MatMulMaRIOp{widths[0], widths[1], widths[2]};
  node.inputs = std::move(inputs);
  spec.prune_unused(replaced_ids(g, site));

  if (report) {
    *report = SiteRewrite{m.id, concat.id, false, widths[0], widths[1], widths[2], w.cols()};
  }
  return build_graph(spec);
}

RewriteResult rewrite_all(const Graph& g, const GcaOptions& options) {
  const OptSet opt = run_gca(g, options);
  // Group sites by concat, in topological order of the MatMuls.
  std::vector<std::pair<std::string, std::vector<std::string>>> groups;
  for (const Node& n : g.nodes()) {
    auto it = opt.find(n.id);
    if (it == opt.end()) continue;
    auto grp = std::find_if(groups.begin(), groups.end(), [&](const auto& e) { return e.first == it->second.concat; });
    if (grp == groups.end()) {
      groups.push_back({it->second.concat, {}});
      grp = std::prev(groups.end());
    }
    grp->second.push_back(n.id);
  }

  RewriteResult result{g, {}};
  for (const auto& [concat, matmuls] : groups) {
    const auto& layout = std::get<ConcatOp>(result.graph.node(concat).op).layout;
    const bool fragmented = !layout.is_neat();
    if (fragmented) {
      result.graph = with_site(concat, [&] { return apply_to_graph(result.graph, concat, plan_reorg(layout)); });
    }
    for (const auto& m : matmuls) {
      SiteRewrite r;
      result.graph = with_site(m, [&] { return rewrite_site(result.graph, m, &r); });
      r.concat = concat;
      r.reorganized = fragmented;
      result.sites.push_back(std::move(r));
    }
  }
  return result;
}

Graph fragment_site(const Graph& g, std::string_view matmul, std::int64_t chunk) {
  if (chunk < 1) throw InvalidArgument("chunk size must be at least 1");
  const Site site = locate_site(g, matmul);
  const std::int64_t D = site.layout.total_width();
  if (chunk >= D) return g;

  const Node& m = g.node(site.matmul);
  const auto& w = *std::get<WeightOp>(g.node(m.inputs[1]).op).value;
  GraphSpec spec = g.to_spec();
  Untiler untile(g, spec);
  const auto spans = to_spans(g, site.pieces);

  std::vector<std::string> products;
  for (std::int64_t start = 0, k = 0; start < D; start += chunk, ++k) {
    const std::int64_t end = std::min(D, start + chunk);
    std::vector<Span> mine;
    bool user_only = true;
    std::int64_t col = 0;
    for (const auto& s : spans) {
      const std::int64_t lo = std::max(start, col);
      const std::int64_t hi = std::min(end, col + s.width);
      if (lo < hi) {
        mine.push_back({s.input, s.offset + (lo - col), hi - lo, s.domain});
        user_only = user_only && s.domain == FeatureDomain::kUser;
      }
      col += s.width;
    }
    const std::string base = m.id + "__chunk" + std::to_string(k);
    const std::string x = gather(g, spec, untile, base + "_x", mine, user_only);
    const std::string wid = spec.fresh_id(base + "_w");
    spec.add(wid, WeightOp{std::make_shared<const Tensor>(weight_rows(w, start, end - start))});
    const std::string prod = spec.fresh_id(base);
    spec.add(prod, MatMulOp{}, {x, wid});
    products.push_back(prod);
  }

  std::string acc = products[0];
  for (std::size_t k = 1; k + 1 < products.size(); ++k) {
    const std::string id = spec.fresh_id(m.id + "__partial" + std::to_string(k));
    spec.add(id, AddOp{}, {acc, products[k]});
    acc = id;
  }
  NodeSpec& node = spec.at(m.id);
  node.op = AddOp{};
  node.inputs = {acc, products.back()};
  spec.prune_unused(replaced_ids(g, site));
  return build_graph(spec);
}

}  // namespace mari
