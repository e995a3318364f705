// Copyright (C) 2026 The mari Authors
// SPDX-License-Identifier: Apache-2.0

#include "mari/fixtures.hpp"

#include <cmath>

#include "mari/errors.hpp"

namespace mari {

namespace {

class Builder {
 public:
  explicit Builder(std::uint64_t seed) : seed_(seed) {}

  std::string input(const std::string& id, FeatureDomain dom, std::int64_t width,
                    std::int64_t seq = 0) {
    return spec_.add(id, InputOp{dom, width, seq});
  }
  std::string weight(const std::string& id, std::int64_t rows, std::int64_t cols) {
    const double scale = 1.0 / std::sqrt(static_cast<double>(rows));
    return spec_.add(id, WeightOp{std::make_shared<const Tensor>(
                             seeded_weight(rows, cols, seed_ + 7919 * ++count_, scale))});
  }
  std::string op(const std::string& id, Op op, std::vector<std::string> inputs) {
    return spec_.add(id, std::move(op), std::move(inputs));
  }
  // x W + b, then optionally relu.
  std::string dense(const std::string& prefix, const std::string& x, std::int64_t in,
                    std::int64_t out, bool activate) {
    const auto w = weight(prefix + "_w", in, out);
    const auto mm = op(prefix, MatMulOp{}, {x, w});
    const auto b = weight(prefix + "_b", 1, out);
    const auto y = op(prefix + "_bias", AddOp{}, {mm, b});
    return activate ? op(prefix + "_relu", ReluOp{}, {y}) : y;
  }

  Graph build() const { return build_graph(spec_); }

 private:
  GraphSpec spec_;
  std::uint64_t seed_;
  std::uint64_t count_ = 0;
};

struct Part {
  std::string id;
  FeatureDomain dom;
  std::int64_t width;
};

std::string concat(Builder& b, const std::string& id, const std::vector<Part>& parts) {
  std::vector<LayoutSegment> segs;
  std::vector<std::string> ids;
  for (const auto& p : parts) {
    segs.push_back({p.dom, p.width});
    ids.push_back(p.id);
  }
  return b.op(id, ConcatOp{FeatureLayout(std::move(segs))}, std::move(ids));
}

}  // namespace

void ModelDims::validate() const {
  for (std::int64_t v : {user_width, user_seq_len, user_seq_width, item_width, cross_width,
                         user_hidden, attn_hidden, expert_hidden, expert_out, num_experts,
                         num_tasks, tower_hidden}) {
    if (v <= 0) throw InvalidArgument("model dimensions must be positive");
  }
}

RankingFixture fixture_ranking_model(const ModelDims& dims) {
  dims.validate();
  using FD = FeatureDomain;
  Builder b(dims.seed);
  RankingFixture fx;

  const auto u = b.input("u", FD::kUser, dims.user_width);
  const auto us = b.input("us", FD::kUser, dims.user_seq_width, dims.user_seq_len);
  const auto i = b.input("i", FD::kItem, dims.item_width);
  const auto c = b.input("c", FD::kCross, dims.cross_width);

  // User-only tower, run once per request.
  const auto user_h = b.dense("user_fc", u, dims.user_width, dims.user_hidden, true);
  const auto user_h_t = b.op("user_h_tiled", TileOp{}, {user_h});
  const auto u_t = b.op("u_tiled", TileOp{}, {u});

  // Attention query from [user_h | item].
  const Part p_user_h{user_h_t, FD::kUser, dims.user_hidden};
  const Part p_u{u_t, FD::kUser, dims.user_width};
  const Part p_i{i, FD::kItem, dims.item_width};
  const Part p_c{c, FD::kCross, dims.cross_width};
  const auto attn_in = concat(b, "attn_in", dims.fragmented ? std::vector<Part>{p_i, p_user_h}
                                                            : std::vector<Part>{p_user_h, p_i});
  const auto wq = b.weight("attn_wq", dims.user_hidden + dims.item_width, dims.attn_hidden);
  fx.attention_query = b.op("attn_q", MatMulOp{}, {attn_in, wq});
  const auto wk = b.weight("attn_wk", dims.user_seq_width, dims.attn_hidden);
  const auto wv = b.weight("attn_wv", dims.user_seq_width, dims.attn_hidden);
  const auto attn = b.op("attn", CrossAttentionOp{dims.user_seq_width, dims.attn_hidden},
                         {fx.attention_query, us, wk, wv});
  const Part p_attn{attn, FD::kItem, dims.attn_hidden};

  // MMoE experts share one mixed input.
  const auto mmoe_in = concat(b, "mmoe_in", dims.fragmented
                                                ? std::vector<Part>{p_c, p_u, p_i, p_user_h, p_attn}
                                                : std::vector<Part>{p_u, p_user_h, p_i, p_attn, p_c});
  const auto mmoe_x = b.op("mmoe_x", IdentityOp{}, {mmoe_in});
  const std::int64_t mmoe_width =
      dims.user_width + dims.user_hidden + dims.item_width + dims.attn_hidden + dims.cross_width;
  std::vector<std::string> experts;
  for (std::int64_t k = 0; k < dims.num_experts; ++k) {
    const std::string name = "expert" + std::to_string(k);
    const auto h = b.dense(name + "_fc1", mmoe_x, mmoe_width, dims.expert_hidden, true);
    fx.expert_first_fc.push_back(name + "_fc1");
    experts.push_back(b.dense(name + "_fc2", h, dims.expert_hidden, dims.expert_out, false));
  }

  for (std::int64_t t = 0; t < dims.num_tasks; ++t) {
    const std::string name = "task" + std::to_string(t);
    const auto gate_logits = b.dense(name + "_gate", i, dims.item_width, dims.num_experts, false);
    const auto gate = b.op(name + "_gate_softmax", SoftmaxOp{}, {gate_logits});
    std::vector<std::string> mix_in{gate};
    mix_in.insert(mix_in.end(), experts.begin(), experts.end());
    const auto mix = b.op(name + "_mix", MixtureOp{}, std::move(mix_in));

    const Part p_mix{mix, FD::kItem, dims.expert_out};
    const auto tower_in = concat(b, name + "_tower_in",
                                 dims.fragmented ? std::vector<Part>{p_mix, p_user_h}
                                                 : std::vector<Part>{p_user_h, p_mix});
    const auto h = b.dense(name + "_tower_fc1", tower_in, dims.user_hidden + dims.expert_out,
                           dims.tower_hidden, true);
    fx.tower_first_fc.push_back(name + "_tower_fc1");
    const auto score = b.dense(name + "_tower_fc2", h, dims.tower_hidden, 1, false);
    b.op(name + "_score", OutputOp{}, {score});
  }

  fx.graph = b.build();
  return fx;
}

Graph attention_fixture(std::int64_t d, std::int64_t L, std::uint64_t seed) {
  if (d <= 0 || L <= 0) throw InvalidArgument("attention dimensions must be positive");
  Builder b(seed);
  const auto i = b.input("i", FeatureDomain::kItem, d);
  const auto us = b.input("us", FeatureDomain::kUser, d, L);
  const auto q = b.op("q", MatMulOp{}, {i, b.weight("wq", d, d)});
  const auto attn =
      b.op("attn", CrossAttentionOp{d, d}, {q, us, b.weight("wk", d, d), b.weight("wv", d, d)});
  b.op("out", OutputOp{}, {attn});
  return b.build();
}

Graph single_site_graph(const MatmulDims& dims, std::uint64_t seed) {
  dims.validate();
  if (dims.D() == 0) throw InvalidArgument("all feature widths are zero");
  Builder b(seed);
  std::vector<Part> parts;
  if (dims.D_u > 0) {
    b.input("u", FeatureDomain::kUser, dims.D_u);
    parts.push_back({b.op("u_tiled", TileOp{}, {"u"}), FeatureDomain::kUser, dims.D_u});
  }
  if (dims.D_i > 0) parts.push_back({b.input("i", FeatureDomain::kItem, dims.D_i), FeatureDomain::kItem, dims.D_i});
  if (dims.D_c > 0) parts.push_back({b.input("c", FeatureDomain::kCross, dims.D_c), FeatureDomain::kCross, dims.D_c});
  const auto x = concat(b, "x", parts);
  const auto m = b.op("m", MatMulOp{}, {x, b.weight("w", dims.D(), dims.d)});
  b.op("out", OutputOp{}, {m});
  return b.build();
}

}  // namespace mari
