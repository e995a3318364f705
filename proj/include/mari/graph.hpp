// Copyright (C) 2026 The mari Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <variant>
#include <vector>

#include "mari/tensor.hpp"

namespace mari {

enum class FeatureDomain { kUser, kItem, kCross };

std::string_view domain_name(FeatureDomain d);
std::optional<FeatureDomain> parse_domain(std::string_view name);

struct LayoutSegment {
  FeatureDomain domain;
  std::int64_t width;

  friend bool operator==(const LayoutSegment&, const LayoutSegment&) = default;
};

// Column layout of a concatenated feature tensor: ordered (domain, width)
// segments covering the columns left to right.
class FeatureLayout {
 public:
  FeatureLayout() = default;
  explicit FeatureLayout(std::vector<LayoutSegment> segments);
  FeatureLayout(std::initializer_list<LayoutSegment> segments)
      : FeatureLayout(std::vector<LayoutSegment>(segments)) {}

  const std::vector<LayoutSegment>& segments() const noexcept { return segments_; }
  bool empty() const noexcept { return segments_.empty(); }
  std::int64_t total_width() const noexcept;
  std::int64_t domain_width(FeatureDomain d) const noexcept;

  // User, then item, then cross; each domain occupies one contiguous block.
  bool is_neat() const noexcept;

  // Adjacent segments of the same domain fused into one.
  FeatureLayout merged() const;

  std::string to_string() const;

  friend bool operator==(const FeatureLayout&, const FeatureLayout&) = default;

 private:
  std::vector<LayoutSegment> segments_;
};

// ---------------------------------------------------------------------------
// Node operations. Each alternative carries only its own attributes; edges
// live on the node.

struct InputOp {
  FeatureDomain domain;
  std::int64_t width;
  std::int64_t seq_len = 0;  // > 0 for [rows, seq_len, width] sequences
  friend bool operator==(const InputOp&, const InputOp&) = default;
};

// Learnable parameter; values are shared between graph copies.
struct WeightOp {
  std::shared_ptr<const Tensor> value;
  friend bool operator==(const WeightOp& a, const WeightOp& b) {
    return a.value == b.value || (a.value && b.value && *a.value == *b.value);
  }
};

struct MatMulOp {
  friend bool operator==(const MatMulOp&, const MatMulOp&) = default;
};

// Re-parameterized matmul over a [user | item | cross] input. Inputs are
// (operand, weight) pairs for each domain of non-zero width, in domain
// order. The user product is computed on the un-replicated user operand and
// broadcast-added onto the batched item/cross product.
struct MatMulMaRIOp {
  std::int64_t user_width;
  std::int64_t item_width;
  std::int64_t cross_width;
  friend bool operator==(const MatMulMaRIOp&, const MatMulMaRIOp&) = default;
};

struct ConcatOp {
  FeatureLayout layout;
  friend bool operator==(const ConcatOp&, const ConcatOp&) = default;
};

struct TileOp {
  friend bool operator==(const TileOp&, const TileOp&) = default;
};
struct AddOp {
  friend bool operator==(const AddOp&, const AddOp&) = default;
};
struct ReluOp {
  friend bool operator==(const ReluOp&, const ReluOp&) = default;
};
struct SoftmaxOp {
  friend bool operator==(const SoftmaxOp&, const SoftmaxOp&) = default;
};

// Inputs: projected query [R x hidden], user sequence [S x L x kv_width],
// key weight, value weight (both kv_width x hidden).
struct CrossAttentionOp {
  std::int64_t kv_width;
  std::int64_t hidden;
  friend bool operator==(const CrossAttentionOp&, const CrossAttentionOp&) = default;
};

struct ReshapeOp {
  friend bool operator==(const ReshapeOp&, const ReshapeOp&) = default;
};
struct IdentityOp {
  friend bool operator==(const IdentityOp&, const IdentityOp&) = default;
};
struct OutputOp {
  friend bool operator==(const OutputOp&, const OutputOp&) = default;
};

struct SliceOp {
  std::int64_t start;
  std::int64_t width;
  friend bool operator==(const SliceOp&, const SliceOp&) = default;
};

// MMoE combination: inputs are a gate [R x E] followed by E expert outputs.
struct MixtureOp {
  friend bool operator==(const MixtureOp&, const MixtureOp&) = default;
};

using Op = std::variant<InputOp, WeightOp, MatMulOp, MatMulMaRIOp, ConcatOp, TileOp, AddOp, ReluOp,
                        SoftmaxOp, CrossAttentionOp, ReshapeOp, IdentityOp, OutputOp, SliceOp,
                        MixtureOp>;

enum class OpKind {
  kInput,
  kWeight,
  kMatMul,
  kMatMulMaRI,
  kConcat,
  kTile,
  kAdd,
  kRelu,
  kSoftmax,
  kCrossAttention,
  kReshape,
  kIdentity,
  kOutput,
  kSlice,
  kMixture,
};

inline OpKind kind_of(const Op& op) { return static_cast<OpKind>(op.index()); }
std::string_view kind_name(OpKind kind);
std::optional<OpKind> parse_kind(std::string_view name);

// ---------------------------------------------------------------------------

// Symbolic value shape. `rows` is either a fixed count or the batch
// dimension B, which is bound only at execution time.
struct ValueShape {
  static constexpr std::int64_t kBatch = -1;

  std::int64_t rows = 1;
  std::int64_t seq = 0;  // 0 for matrices
  std::int64_t cols = 1;

  bool batched() const noexcept { return rows == kBatch; }
  bool is_matrix() const noexcept { return seq == 0; }
  std::string to_string() const;

  friend bool operator==(const ValueShape&, const ValueShape&) = default;
};

using NodeIndex = std::uint32_t;

struct NodeSpec {
  std::string id;
  Op op;
  std::vector<std::string> inputs;
};

// Editable description of a graph. Passes work on specs and hand them back
// to build_graph, which validates and freezes them.
class GraphSpec {
 public:
  GraphSpec() = default;
  explicit GraphSpec(std::vector<NodeSpec> nodes);

  // Appends a node and returns its id.
  const std::string& add(std::string id, Op op, std::vector<std::string> inputs = {});

  NodeSpec& at(std::string_view id);
  const NodeSpec& at(std::string_view id) const;
  bool contains(std::string_view id) const;

  // `base` if unused, otherwise `base_2`, `base_3`, ...
  std::string fresh_id(std::string_view base) const;

  // Removes `candidates` that no longer have consumers, then whatever that
  // orphans upstream. Inputs and outputs are never removed.
  void prune_unused(std::vector<std::string> candidates);

  std::vector<NodeSpec>& nodes() noexcept { return nodes_; }
  const std::vector<NodeSpec>& nodes() const noexcept { return nodes_; }

 private:
  std::vector<NodeSpec> nodes_;
  std::unordered_map<std::string, std::size_t> index_;
};

struct Node {
  std::string id;
  Op op;
  std::vector<NodeIndex> inputs;
  ValueShape shape;

  OpKind kind() const { return kind_of(op); }
};

// Validated, immutable DAG. Nodes are stored in topological order (ties
// broken by id), so a NodeIndex is also a position in that order.
class Graph {
 public:
  std::size_t size() const noexcept { return nodes_.size(); }
  std::span<const Node> nodes() const noexcept { return nodes_; }
  const Node& node(NodeIndex i) const { return nodes_.at(i); }
  const Node& node(std::string_view id) const;
  std::optional<NodeIndex> find(std::string_view id) const;
  NodeIndex index_of(std::string_view id) const;

  const std::vector<NodeIndex>& consumers(NodeIndex i) const { return consumers_.at(i); }
  std::size_t edge_count() const noexcept;

  std::vector<NodeIndex> inputs() const;   // Input nodes
  std::vector<NodeIndex> outputs() const;  // Output nodes

  GraphSpec to_spec() const;

 private:
  friend Graph build_graph(const GraphSpec& spec);

  std::vector<Node> nodes_;
  std::vector<std::vector<NodeIndex>> consumers_;
  std::unordered_map<std::string, NodeIndex> index_;
};

// Validates ids, references, acyclicity and shapes.
Graph build_graph(const GraphSpec& spec);

// Same node ids in the same order with equal ops, attributes, weight values
// and edges.
bool structurally_equal(const Graph& a, const Graph& b);

// Line-oriented text format:
//
//   mari-graph v1
//   <id> = <Kind>(<args>) inputs=[<ids>] domain=<User|Item|Cross|none> layout=[(dom,width),...]
//   ...
//   end
//
// Weight nodes carry `data=[...]` (row-major, shortest round-trip
// decimals); on input `seed=<n>` in the argument list may replace it.
// `#` starts a comment.
std::string serialize(const Graph& g);
Graph parse_graph(std::string_view text);

Graph load_graph(const std::string& path);
void save_graph(const Graph& g, const std::string& path);

// Uniform [-scale, scale] matrix from a mt19937_64 stream; reproducible
// across platforms.
Tensor seeded_weight(std::int64_t rows, std::int64_t cols, std::uint64_t seed, double scale = 1.0);

}  // namespace mari
