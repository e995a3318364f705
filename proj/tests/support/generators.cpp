// Copyright (C) 2026 The mari Authors
// SPDX-License-Identifier: Apache-2.0

#include "generators.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <string>

namespace mari::testing {

std::int64_t uniform_int(Rng& rng, std::int64_t lo, std::int64_t hi) {
  return std::uniform_int_distribution<std::int64_t>(lo, hi)(rng);
}

bool coin(Rng& rng, double p) { return std::bernoulli_distribution(p)(rng); }

Adjacency dag_from_mask(int n, std::uint64_t mask) {
  Adjacency adj(static_cast<std::size_t>(n));
  int bit = 0;
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j, ++bit) {
      if (mask >> bit & 1) adj[static_cast<std::size_t>(i)].push_back(static_cast<NodeIndex>(j));
    }
  }
  return adj;
}

Adjacency random_dag(Rng& rng, int n, double edge_probability) {
  Adjacency adj(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      if (coin(rng, edge_probability)) adj[static_cast<std::size_t>(i)].push_back(static_cast<NodeIndex>(j));
    }
  }
  return adj;
}

namespace {

struct Value {
  std::string id;
  bool batched;
  std::int64_t width;
  bool blue;  // depends on item/cross inputs
  FeatureDomain label;
};

class GraphGen {
 public:
  GraphGen(Rng& rng, const RandomGraphOptions& o) : rng_(rng), o_(o) {}

  std::int64_t width() { return uniform_int(rng_, o_.min_width, o_.max_width); }

  std::string fresh(const std::string& base) { return base + std::to_string(counter_++); }

  Value input(FeatureDomain dom) {
    const auto w = width();
    const std::string id = spec_.add(fresh(dom == FeatureDomain::kUser ? "u" : dom == FeatureDomain::kItem ? "i" : "c"),
                                     InputOp{dom, w, 0});
    return {id, dom != FeatureDomain::kUser, w, dom != FeatureDomain::kUser, dom};
  }

  std::string weight(std::int64_t rows, std::int64_t cols) {
    const double scale = 1.0 / std::sqrt(static_cast<double>(rows));
    return spec_.add(fresh("w"), WeightOp{std::make_shared<const Tensor>(seeded_weight(rows, cols, rng_(), scale))});
  }

  Value derived(const std::string& id, const Value& like, std::int64_t w) {
    return {id, like.batched, w, like.blue, like.label};
  }

  Value dense(const Value& x) {
    const auto w = width();
    Value out = derived(spec_.add(fresh("mm"), MatMulOp{}, {x.id, weight(x.width, w)}), x, w);
    if (coin(rng_, 0.5)) out.id = spec_.add(fresh("bias"), AddOp{}, {out.id, weight(1, w)});
    if (coin(rng_, 0.5)) out.id = spec_.add(fresh("relu"), ReluOp{}, {out.id});
    return out;
  }

  Value tile(const Value& x) {
    Value out = x;
    out.id = spec_.add(fresh("tile"), TileOp{}, {x.id});
    out.batched = true;
    return out;
  }

  Value passthrough(const Value& x) {
    Value out = x;
    out.id = coin(rng_, 0.5) ? spec_.add(fresh("id"), IdentityOp{}, {x.id}) : spec_.add(fresh("rs"), ReshapeOp{}, {x.id});
    return out;
  }

  Value concat(std::vector<Value> parts) {
    if (!o_.fragmented_layouts) {
      std::stable_sort(parts.begin(), parts.end(),
                       [](const Value& a, const Value& b) { return static_cast<int>(a.label) < static_cast<int>(b.label); });
    }
    std::vector<LayoutSegment> segs;
    std::vector<std::string> ids;
    bool blue = false;
    for (const auto& p : parts) {
      ids.push_back(p.id);
      blue = blue || p.blue;
      // Occasionally describe one input with two same-domain segments.
      if (p.width >= 2 && coin(rng_, 0.25)) {
        const auto cut = uniform_int(rng_, 1, p.width - 1);
        segs.push_back({p.label, cut});
        segs.push_back({p.label, p.width - cut});
      } else {
        segs.push_back({p.label, p.width});
      }
    }
    std::int64_t total = 0;
    for (const auto& p : parts) total += p.width;
    const std::string id = spec_.add(fresh("cat"), ConcatOp{FeatureLayout(std::move(segs))}, std::move(ids));
    const FeatureDomain label = blue ? FeatureDomain::kItem : FeatureDomain::kUser;
    return {id, parts.front().batched, total, blue, label};
  }

  // Concat of 2-4 batched values, at least one user-derived and one
  // item-derived when `mixed`.
  Value mixed_concat(bool mixed) {
    std::vector<Value> yellow, blue;
    for (const auto& v : pool_) (v.blue ? blue : yellow).push_back(v);
    std::vector<Value> parts;
    const auto k = uniform_int(rng_, 2, 4);
    if (mixed && !yellow.empty() && !blue.empty()) {
      parts.push_back(pick(yellow));
      parts.push_back(pick(blue));
    }
    while (static_cast<std::int64_t>(parts.size()) < k) parts.push_back(pick(pool_));
    std::shuffle(parts.begin(), parts.end(), rng_);
    for (auto& p : parts) {
      if (!p.batched) p = tile(p);
    }
    return concat(std::move(parts));
  }

  Value pick(const std::vector<Value>& from) {
    return from[static_cast<std::size_t>(uniform_int(rng_, 0, static_cast<std::int64_t>(from.size()) - 1))];
  }

  void add_site() {
    Value x = mixed_concat(true);
    pool_.push_back(x);
    while (coin(rng_, 0.4)) x = passthrough(x);
    const auto consumers = uniform_int(rng_, 1, 2);
    for (std::int64_t k = 0; k < consumers; ++k) pool_.push_back(dense(x));
  }

  Graph build() {
    const auto nu = uniform_int(rng_, 1, 2);
    const auto ni = uniform_int(rng_, 1, 2);
    const auto nc = uniform_int(rng_, 0, 1);
    for (std::int64_t k = 0; k < nu; ++k) pool_.push_back(input(FeatureDomain::kUser));
    for (std::int64_t k = 0; k < ni; ++k) pool_.push_back(input(FeatureDomain::kItem));
    for (std::int64_t k = 0; k < nc; ++k) pool_.push_back(input(FeatureDomain::kCross));
    if (coin(rng_, 0.3)) {
      // Flattened user sequence.
      const auto L = uniform_int(rng_, 2, 3);
      const auto C = uniform_int(rng_, 2, 3);
      const std::string s = spec_.add(fresh("us"), InputOp{FeatureDomain::kUser, C, L});
      pool_.push_back({spec_.add(fresh("flat"), ReshapeOp{}, {s}), false, L * C, false, FeatureDomain::kUser});
    }
    if (o_.require_mixed_concat) add_site();

    const auto budget = static_cast<std::size_t>(uniform_int(rng_, 8, o_.max_nodes));
    while (spec_.nodes().size() + 8 < budget) {
      // Undo a step that would overshoot max_nodes once outputs are added.
      const GraphSpec spec_before = spec_;
      const auto pool_before = pool_;
      step();
      if (spec_.nodes().size() + sinks().size() > static_cast<std::size_t>(o_.max_nodes)) {
        spec_ = spec_before;
        pool_ = pool_before;
        break;
      }
    }

    auto out = sinks();
    if (out.empty()) out.push_back(pool_.back().id);
    for (const auto& s : out) spec_.add(fresh("out"), OutputOp{}, {s});
    return build_graph(spec_);
  }

  void step() {
    const double r = std::uniform_real_distribution<double>(0, 1)(rng_);
    const Value x = pick(pool_);
    if (r < 0.22) {
      add_site();
    } else if (r < 0.45) {
      pool_.push_back(dense(x));
    } else if (r < 0.55) {
      if (!x.batched) pool_.push_back(tile(x));
    } else if (r < 0.65) {
      // A slice can drop every item column of a concat, which structural
      // coloring cannot see.
      if (!o_.computational_detours && x.blue) return;
      const auto w = uniform_int(rng_, std::min<std::int64_t>(2, x.width), x.width);
      const auto start = uniform_int(rng_, 0, x.width - w);
      Value out = derived(spec_.add(fresh("sl"), SliceOp{start, w}, {x.id}), x, w);
      pool_.push_back(out);
    } else if (r < 0.75) {
      std::vector<Value> partners;
      for (const auto& v : pool_) {
        if (v.width == x.width && v.id != x.id && (v.batched == x.batched || !v.batched || !x.batched)) {
          partners.push_back(v);
        }
      }
      if (partners.empty()) return;
      const Value y = pick(partners);
      Value out = derived(spec_.add(fresh("add"), AddOp{}, {x.id, y.id}), x, x.width);
      out.batched = x.batched || y.batched;
      out.blue = x.blue || y.blue;
      out.label = out.blue ? (x.blue ? x.label : y.label) : FeatureDomain::kUser;
      pool_.push_back(out);
    } else if (r < 0.87) {
      if (x.width >= 2 && coin(rng_, 0.5)) {
        pool_.push_back(derived(spec_.add(fresh("sm"), SoftmaxOp{}, {x.id}), x, x.width));
      } else {
        pool_.push_back(derived(spec_.add(fresh("relu"), ReluOp{}, {x.id}), x, x.width));
      }
    } else {
      pool_.push_back(passthrough(x));
    }
  }

  // Values nothing consumes.
  std::vector<std::string> sinks() const {
    std::vector<int> uses(spec_.nodes().size(), 0);
    std::map<std::string, std::size_t> pos;
    for (std::size_t k = 0; k < spec_.nodes().size(); ++k) pos[spec_.nodes()[k].id] = k;
    for (const auto& n : spec_.nodes()) {
      for (const auto& in : n.inputs) ++uses[pos[in]];
    }
    std::vector<std::string> out;
    for (std::size_t k = 0; k < spec_.nodes().size(); ++k) {
      const auto& n = spec_.nodes()[k];
      const OpKind kind = kind_of(n.op);
      if (uses[k] == 0 && kind != OpKind::kInput && kind != OpKind::kWeight) out.push_back(n.id);
    }
    return out;
  }

 private:
  Rng& rng_;
  RandomGraphOptions o_;
  GraphSpec spec_;
  std::vector<Value> pool_;
  int counter_ = 0;
};

}  // namespace

Graph random_ranking_graph(Rng& rng, const RandomGraphOptions& options) {
  return GraphGen(rng, options).build();
}

Graph random_fragmented_site(Rng& rng, int max_segments, std::int64_t d) {
  const int nseg = static_cast<int>(uniform_int(rng, 3, max_segments));
  std::vector<FeatureDomain> doms(static_cast<std::size_t>(nseg));
  for (auto& dom : doms) dom = static_cast<FeatureDomain>(uniform_int(rng, 0, 2));
  // Make sure every domain appears.
  std::vector<int> slots(static_cast<std::size_t>(nseg));
  std::iota(slots.begin(), slots.end(), 0);
  std::shuffle(slots.begin(), slots.end(), rng);
  for (int k = 0; k < 3; ++k) doms[static_cast<std::size_t>(slots[static_cast<std::size_t>(k)])] = static_cast<FeatureDomain>(k);

  GraphSpec spec;
  std::vector<LayoutSegment> segs;
  std::vector<std::string> inputs;
  int counter = 0;
  for (int s = 0; s < nseg;) {
    // One concat input covers a run of 1-3 segments that are all user or
    // all item/cross.
    const bool user = doms[static_cast<std::size_t>(s)] == FeatureDomain::kUser;
    int e = s + 1;
    const int limit = s + static_cast<int>(uniform_int(rng, 1, 3));
    while (e < nseg && e < limit && (doms[static_cast<std::size_t>(e)] == FeatureDomain::kUser) == user) ++e;
    std::int64_t width = 0;
    for (int k = s; k < e; ++k) {
      const auto w = uniform_int(rng, 1, 8);
      segs.push_back({doms[static_cast<std::size_t>(k)], w});
      width += w;
    }
    const std::string id = "in" + std::to_string(counter++);
    const FeatureDomain dom = user ? FeatureDomain::kUser : doms[static_cast<std::size_t>(s)];
    spec.add(id, InputOp{dom, width, 0});
    if (user) {
      spec.add(id + "_tiled", TileOp{}, {id});
      inputs.push_back(id + "_tiled");
    } else {
      inputs.push_back(id);
    }
    s = e;
  }
  std::int64_t D = 0;
  for (const auto& sg : segs) D += sg.width;
  spec.add("x", ConcatOp{FeatureLayout(std::move(segs))}, std::move(inputs));
  const double scale = 1.0 / std::sqrt(static_cast<double>(D));
  spec.add("w", WeightOp{std::make_shared<const Tensor>(seeded_weight(D, d, rng(), scale))});
  spec.add("m", MatMulOp{}, {"x", "w"});
  spec.add("b", WeightOp{std::make_shared<const Tensor>(seeded_weight(1, d, rng()))});
  spec.add("h", AddOp{}, {"m", "b"});
  spec.add("out", OutputOp{}, {"h"});
  spec.add("xi", IdentityOp{}, {"x"});
  spec.add("w2", WeightOp{std::make_shared<const Tensor>(seeded_weight(D, 3, rng(), scale))});
  spec.add("m2", MatMulOp{}, {"xi", "w2"});
  spec.add("out2", OutputOp{}, {"m2"});
  return build_graph(spec);
}

}  // namespace mari::testing
