// Copyright (C) 2026 The mari Authors
// SPDX-License-Identifier: Apache-2.0

#include "mari/graph.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <queue>
#include <set>
#include <sstream>

#include "mari/errors.hpp"
#include "mari/random.hpp"

namespace mari {

namespace {

constexpr std::string_view kDomainNames[] = {"User", "Item", "Cross"};

constexpr std::string_view kKindNames[] = {
    "Input",   "Weight",         "MatMul",  "MatMulMaRI", "Concat", "Tile",  "Add",     "Relu",
    "Softmax", "CrossAttention", "Reshape", "Identity",   "Output", "Slice", "Mixture",
};
static_assert(std::size(kKindNames) == std::variant_size_v<Op>);

}  // namespace

std::string_view domain_name(FeatureDomain d) { return kDomainNames[static_cast<int>(d)]; }

std::optional<FeatureDomain> parse_domain(std::string_view name) {
  for (int i = 0; i < 3; ++i) {
    if (kDomainNames[i] == name) return static_cast<FeatureDomain>(i);
  }
  return std::nullopt;
}

std::string_view kind_name(OpKind kind) { return kKindNames[static_cast<int>(kind)]; }

std::optional<OpKind> parse_kind(std::string_view name) {
  for (std::size_t i = 0; i < std::size(kKindNames); ++i) {
    if (kKindNames[i] == name) return static_cast<OpKind>(i);
  }
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// FeatureLayout

FeatureLayout::FeatureLayout(std::vector<LayoutSegment> segments) : segments_(std::move(segments)) {
  for (const auto& s : segments_) {
    if (s.width <= 0) throw InvalidArgument("layout segment widths must be positive");
  }
}

std::int64_t FeatureLayout::total_width() const noexcept {
  std::int64_t w = 0;
  for (const auto& s : segments_) w += s.width;
  return w;
}

std::int64_t FeatureLayout::domain_width(FeatureDomain d) const noexcept {
  std::int64_t w = 0;
  for (const auto& s : segments_) {
    if (s.domain == d) w += s.width;
  }
  return w;
}

bool FeatureLayout::is_neat() const noexcept {
  for (std::size_t i = 1; i < segments_.size(); ++i) {
    if (static_cast<int>(segments_[i].domain) < static_cast<int>(segments_[i - 1].domain)) {
      return false;
    }
  }
  return true;
}

FeatureLayout FeatureLayout::merged() const {
  std::vector<LayoutSegment> out;
  for (const auto& s : segments_) {
    if (!out.empty() && out.back().domain == s.domain) {
      out.back().width += s.width;
    } else {
      out.push_back(s);
    }
  }
  return FeatureLayout(std::move(out));
}

std::string FeatureLayout::to_string() const {
  std::string out = "[";
  for (std::size_t i = 0; i < segments_.size(); ++i) {
    if (i) out += ',';
    out += '(';
    out += domain_name(segments_[i].domain);
    out += ',';
    out += std::to_string(segments_[i].width);
    out += ')';
  }
  return out + "]";
}

std::string ValueShape::to_string() const {
  std::string out = "[" + (batched() ? std::string("B") : std::to_string(rows));
  if (seq) out += "x" + std::to_string(seq);
  return out + "x" + std::to_string(cols) + "]";
}

// ---------------------------------------------------------------------------
// GraphSpec

GraphSpec::GraphSpec(std::vector<NodeSpec> nodes) : nodes_(std::move(nodes)) {
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (!index_.emplace(nodes_[i].id, i).second) {
      throw InvalidArgument("duplicate node id '" + nodes_[i].id + "'");
    }
  }
}

const std::string& GraphSpec::add(std::string id, Op op, std::vector<std::string> inputs) {
  if (!index_.emplace(id, nodes_.size()).second) {
    throw InvalidArgument("duplicate node id '" + id + "'");
  }
  nodes_.push_back(NodeSpec{std::move(id), std::move(op), std::move(inputs)});
  return nodes_.back().id;
}

NodeSpec& GraphSpec::at(std::string_view id) {
  auto it = index_.find(std::string(id));
  if (it == index_.end()) throw InvalidArgument("no node '" + std::string(id) + "'");
  return nodes_[it->second];
}

const NodeSpec& GraphSpec::at(std::string_view id) const {
  return const_cast<GraphSpec*>(this)->at(id);
}

bool GraphSpec::contains(std::string_view id) const { return index_.count(std::string(id)) > 0; }

std::string GraphSpec::fresh_id(std::string_view base) const {
  std::string id(base);
  for (int n = 2; contains(id); ++n) id = std::string(base) + "_" + std::to_string(n);
  return id;
}

void GraphSpec::prune_unused(std::vector<std::string> candidates) {
  std::unordered_map<std::string, int> uses;
  for (const auto& n : nodes_) {
    for (const auto& in : n.inputs) ++uses[in];
  }
  std::set<std::string> removed;
  while (!candidates.empty()) {
    std::string id = std::move(candidates.back());
    candidates.pop_back();
    if (removed.count(id) || !contains(id) || uses[id] > 0) continue;
    const NodeSpec& n = at(id);
    const OpKind k = kind_of(n.op);
    if (k == OpKind::kInput || k == OpKind::kOutput) continue;
    removed.insert(id);
    for (const auto& in : n.inputs) {
      --uses[in];
      candidates.push_back(in);
    }
  }
  if (removed.empty()) return;
  std::erase_if(nodes_, [&](const NodeSpec& n) { return removed.count(n.id) > 0; });
  index_.clear();
  for (std::size_t i = 0; i < nodes_.size(); ++i) index_.emplace(nodes_[i].id, i);
}

// ---------------------------------------------------------------------------
// Graph

const Node& Graph::node(std::string_view id) const { return nodes_[index_of(id)]; }

std::optional<NodeIndex> Graph::find(std::string_view id) const {
  auto it = index_.find(std::string(id));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

NodeIndex Graph::index_of(std::string_view id) const {
  auto i = find(id);
  if (!i) throw InvalidArgument("graph has no node '" + std::string(id) + "'");
  return *i;
}

std::size_t Graph::edge_count() const noexcept {
  std::size_t e = 0;
  for (const auto& n : nodes_) e += n.inputs.size();
  return e;
}

std::vector<NodeIndex> Graph::inputs() const {
  std::vector<NodeIndex> out;
  for (NodeIndex i = 0; i < nodes_.size(); ++i) {
    if (nodes_[i].kind() == OpKind::kInput) out.push_back(i);
  }
  return out;
}

std::vector<NodeIndex> Graph::outputs() const {
  std::vector<NodeIndex> out;
  for (NodeIndex i = 0; i < nodes_.size(); ++i) {
    if (nodes_[i].kind() == OpKind::kOutput) out.push_back(i);
  }
  return out;
}

GraphSpec Graph::to_spec() const {
  std::vector<NodeSpec> specs;
  specs.reserve(nodes_.size());
  for (const auto& n : nodes_) {
    std::vector<std::string> ins;
    for (auto i : n.inputs) ins.push_back(nodes_[i].id);
    specs.push_back(NodeSpec{n.id, n.op, std::move(ins)});
  }
  return GraphSpec(std::move(specs));
}

namespace {

bool valid_id(std::string_view id) {
  if (id.empty()) return false;
  return std::all_of(id.begin(), id.end(), [](char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '.' || c == '-' ||
           c == ':';
  });
}

std::string edge_name(const NodeSpec& src, const NodeSpec& dst, std::size_t slot) {
  return "edge '" + src.id + "' -> '" + dst.id + "' (input " + std::to_string(slot) + " of " +
         std::string(kind_name(kind_of(dst.op))) + ")";
}

// Shape inference and edge validation for one node whose inputs are already
// resolved.
class ShapeChecker {
 public:
  ShapeChecker(const NodeSpec& node, std::vector<const NodeSpec*> in, std::vector<ValueShape> shapes)
      : node_(node), in_(std::move(in)), shapes_(std::move(shapes)) {}

  ValueShape infer() {
    return std::visit([this](const auto& op) { return infer_op(op); }, node_.op);
  }

 private:
  [[noreturn]] void fail_edge(std::size_t slot, const std::string& why) const {
    throw DimensionError(edge_name(*in_[slot], node_, slot) + ": " + why);
  }
  [[noreturn]] void fail(const std::string& why) const {
    throw DimensionError("node '" + node_.id + "' (" + std::string(kind_name(kind_of(node_.op))) +
                         "): " + why);
  }

  void arity(std::size_t n) const {
    if (in_.size() != n) {
      throw InvalidArgument("node '" + node_.id + "' (" +
                            std::string(kind_name(kind_of(node_.op))) + ") takes " +
                            std::to_string(n) + " inputs, got " + std::to_string(in_.size()));
    }
  }
  void matrix(std::size_t slot) const {
    if (!shapes_[slot].is_matrix()) fail_edge(slot, "expected a matrix, got " + shapes_[slot].to_string());
  }
  void parameter(std::size_t slot) const {
    if (kind_of(in_[slot]->op) != OpKind::kWeight) fail_edge(slot, "operand must be a Weight node");
  }

  ValueShape infer_op(const InputOp& op) const {
    arity(0);
    if (op.width <= 0 || op.seq_len < 0) fail("input width must be positive");
    const std::int64_t rows = op.domain == FeatureDomain::kUser ? 1 : ValueShape::kBatch;
    return {rows, op.seq_len, op.width};
  }
  ValueShape infer_op(const WeightOp& op) const {
    arity(0);
    if (!op.value || op.value->rank() != 2) fail("weight must hold a rank-2 tensor");
    return {op.value->rows(), 0, op.value->cols()};
  }
  ValueShape infer_op(const MatMulOp&) const {
    arity(2);
    matrix(0);
    parameter(1);
    if (shapes_[1].rows != shapes_[0].cols) {
      fail_edge(1, "weight " + shapes_[1].to_string() + " does not match input " +
                       shapes_[0].to_string());
    }
    return {shapes_[0].rows, 0, shapes_[1].cols};
  }
  ValueShape infer_op(const MatMulMaRIOp& op) const {
    const std::int64_t widths[] = {op.user_width, op.item_width, op.cross_width};
    std::size_t parts = 0;
    for (auto w : widths) {
      if (w < 0) fail("negative block width");
      if (w > 0) ++parts;
    }
    if (parts == 0) fail("all blocks are empty");
    arity(2 * parts);
    std::int64_t out_cols = -1;
    bool batched = false;
    std::size_t slot = 0;
    for (int d = 0; d < 3; ++d) {
      if (widths[d] == 0) continue;
      matrix(slot);
      parameter(slot + 1);
      const ValueShape& x = shapes_[slot];
      const ValueShape& w = shapes_[slot + 1];
      if (x.cols != widths[d]) fail_edge(slot, "operand width differs from block width");
      if (w.rows != widths[d]) fail_edge(slot + 1, "weight rows differ from block width");
      if (out_cols >= 0 && w.cols != out_cols) fail_edge(slot + 1, "weight output widths differ");
      out_cols = w.cols;
      if (d == 0 && x.batched()) fail_edge(slot, "user operand must not be batched");
      if (d > 0 && !x.batched()) fail_edge(slot, "item/cross operand must be batched");
      batched = batched || x.batched();
      slot += 2;
    }
    return {batched ? ValueShape::kBatch : 1, 0, out_cols};
  }
  ValueShape infer_op(const ConcatOp& op) const {
    if (in_.empty()) fail("concat needs at least one input");
    std::int64_t total = 0;
    for (std::size_t i = 0; i < in_.size(); ++i) {
      matrix(i);
      if (shapes_[i].rows != shapes_[0].rows) {
        fail_edge(i, "row mismatch " + shapes_[i].to_string() + " vs " + shapes_[0].to_string() +
                         " (tile user tensors before concatenating)");
      }
      total += shapes_[i].cols;
    }
    if (op.layout.empty()) fail("concat requires a feature layout");
    if (op.layout.total_width() != total) {
      fail("layout " + op.layout.to_string() + " covers " + std::to_string(op.layout.total_width()) +
           " columns, inputs provide " + std::to_string(total));
    }
    return {shapes_[0].rows, 0, total};
  }
  ValueShape infer_op(const TileOp&) const {
    arity(1);
    if (!shapes_[0].batched() && shapes_[0].rows != 1) fail_edge(0, "tile expects a single row");
    return {ValueShape::kBatch, shapes_[0].seq, shapes_[0].cols};
  }
  ValueShape infer_op(const AddOp&) const {
    arity(2);
    matrix(0);
    matrix(1);
    const auto& a = shapes_[0];
    const auto& b = shapes_[1];
    if (a.cols != b.cols) fail_edge(1, "column mismatch " + a.to_string() + " + " + b.to_string());
    if (a.rows != b.rows && a.rows != 1 && b.rows != 1) {
      fail_edge(1, "cannot broadcast " + a.to_string() + " + " + b.to_string());
    }
    return {a.rows == 1 ? b.rows : a.rows, 0, a.cols};
  }
  ValueShape unary_matrix() const {
    arity(1);
    matrix(0);
    return shapes_[0];
  }
  ValueShape infer_op(const ReluOp&) const { return unary_matrix(); }
  ValueShape infer_op(const SoftmaxOp&) const { return unary_matrix(); }
  ValueShape infer_op(const CrossAttentionOp& op) const {
    arity(4);
    matrix(0);
    const auto& q = shapes_[0];
    const auto& s = shapes_[1];
    if (q.cols != op.hidden) fail_edge(0, "query width must equal hidden size");
    if (s.is_matrix() || s.cols != op.kv_width) fail_edge(1, "expected a [rows x L x kv] sequence");
    if (s.batched() && !q.batched()) fail_edge(1, "batched sequence with an unbatched query");
    if (!s.batched() && s.rows != 1) fail_edge(1, "sequence must have one row or be batched");
    for (std::size_t slot : {std::size_t{2}, std::size_t{3}}) {
      parameter(slot);
      if (shapes_[slot].rows != op.kv_width || shapes_[slot].cols != op.hidden) {
        fail_edge(slot, "projection must be kv x hidden, got " + shapes_[slot].to_string());
      }
    }
    return {q.rows, 0, op.hidden};
  }
  ValueShape infer_op(const ReshapeOp&) const {
    arity(1);
    const auto& x = shapes_[0];
    if (x.is_matrix()) return x;
    return {x.rows, 0, x.seq * x.cols};
  }
  ValueShape infer_op(const IdentityOp&) const {
    arity(1);
    return shapes_[0];
  }
  ValueShape infer_op(const OutputOp&) const {
    arity(1);
    return shapes_[0];
  }
  ValueShape infer_op(const SliceOp& op) const {
    arity(1);
    matrix(0);
    if (op.start < 0 || op.width <= 0 || op.start + op.width > shapes_[0].cols) {
      fail_edge(0, "slice [" + std::to_string(op.start) + ", " + std::to_string(op.start + op.width) +
                       ") out of range for " + shapes_[0].to_string());
    }
    return {shapes_[0].rows, 0, op.width};
  }
  ValueShape infer_op(const MixtureOp&) const {
    if (in_.size() < 2) fail("mixture needs a gate and at least one expert");
    const std::int64_t experts = static_cast<std::int64_t>(in_.size()) - 1;
    for (std::size_t i = 0; i < in_.size(); ++i) matrix(i);
    if (shapes_[0].cols != experts) fail_edge(0, "gate width must equal the number of experts");
    for (std::size_t i = 1; i < in_.size(); ++i) {
      if (shapes_[i].rows != shapes_[0].rows) fail_edge(i, "row mismatch with gate");
      if (shapes_[i] != shapes_[1]) fail_edge(i, "experts must share one shape");
    }
    return shapes_[1];
  }

  const NodeSpec& node_;
  std::vector<const NodeSpec*> in_;
  std::vector<ValueShape> shapes_;
};

}  // namespace

Graph build_graph(const GraphSpec& spec) {
  const auto& nodes = spec.nodes();
  const std::size_t n = nodes.size();

  std::unordered_map<std::string, std::size_t> pos;
  for (std::size_t i = 0; i < n; ++i) {
    if (!valid_id(nodes[i].id)) throw InvalidArgument("invalid node id '" + nodes[i].id + "'");
    if (!pos.emplace(nodes[i].id, i).second) {
      throw InvalidArgument("duplicate node id '" + nodes[i].id + "'");
    }
  }
  std::vector<std::vector<std::size_t>> succ(n);
  std::vector<std::size_t> indegree(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    for (const auto& in : nodes[i].inputs) {
      auto it = pos.find(in);
      if (it == pos.end()) {
        throw InvalidArgument("node '" + nodes[i].id + "' references undefined node '" + in + "'");
      }
      succ[it->second].push_back(i);
      ++indegree[i];
    }
  }

  // Kahn's algorithm, smallest id first.
  using Entry = std::pair<std::string_view, std::size_t>;
  std::priority_queue<Entry, std::vector<Entry>, std::greater<>> ready;
  for (std::size_t i = 0; i < n; ++i) {
    if (indegree[i] == 0) ready.emplace(nodes[i].id, i);
  }
  std::vector<std::size_t> order;
  order.reserve(n);
  while (!ready.empty()) {
    const std::size_t i = ready.top().second;
    ready.pop();
    order.push_back(i);
    for (auto s : succ[i]) {
      if (--indegree[s] == 0) ready.emplace(nodes[s].id, s);
    }
  }
  if (order.size() != n) {
    // Walk backwards along unresolved inputs until a node repeats.
    std::size_t cur = n;
    for (std::size_t i = 0; i < n; ++i) {
      if (indegree[i] > 0) {
        cur = i;
        break;
      }
    }
    std::vector<int> seen(n, -1);
    for (int step = 0;; ++step) {
      seen[cur] = step;
      std::size_t prev = n;
      for (const auto& in : nodes[cur].inputs) {
        const std::size_t p = pos.at(in);
        if (indegree[p] > 0) {
          prev = p;
          break;
        }
      }
      if (seen[prev] >= 0) {
        throw CycleError("graph has a cycle through edge '" + nodes[prev].id + "' -> '" +
                         nodes[cur].id + "'");
      }
      cur = prev;
    }
  }

  Graph g;
  g.nodes_.reserve(n);
  std::vector<NodeIndex> new_index(n);
  for (std::size_t k = 0; k < n; ++k) new_index[order[k]] = static_cast<NodeIndex>(k);

  for (std::size_t k = 0; k < n; ++k) {
    const NodeSpec& spec_node = nodes[order[k]];
    Node node{spec_node.id, spec_node.op, {}, {}};
    std::vector<const NodeSpec*> in;
    std::vector<ValueShape> shapes;
    for (const auto& id : spec_node.inputs) {
      const std::size_t p = pos.at(id);
      node.inputs.push_back(new_index[p]);
      in.push_back(&nodes[p]);
      shapes.push_back(g.nodes_[new_index[p]].shape);
    }
    node.shape = ShapeChecker(spec_node, std::move(in), std::move(shapes)).infer();
    g.index_.emplace(node.id, static_cast<NodeIndex>(k));
    g.nodes_.push_back(std::move(node));
  }
  g.consumers_.assign(n, {});
  for (NodeIndex i = 0; i < n; ++i) {
    for (auto in : g.nodes_[i].inputs) {
      auto& c = g.consumers_[in];
      if (std::find(c.begin(), c.end(), i) == c.end()) c.push_back(i);
    }
  }
  return g;
}

bool structurally_equal(const Graph& a, const Graph& b) {
  if (a.size() != b.size()) return false;
  for (NodeIndex i = 0; i < a.size(); ++i) {
    const Node& x = a.node(i);
    const Node& y = b.node(i);
    if (x.id != y.id || x.inputs != y.inputs || !(x.op == y.op)) return false;
  }
  return true;
}

Tensor seeded_weight(std::int64_t rows, std::int64_t cols, std::uint64_t seed, double scale) {
  UniformSource src(seed);
  std::vector<double> data(static_cast<std::size_t>(rows * cols));
  for (auto& v : data) v = src.next() * scale;
  return Tensor(Shape{rows, cols}, std::move(data));
}

// ---------------------------------------------------------------------------
// Text format

namespace {

void append_number(std::string& out, double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  out.append(buf, res.ptr);
}

std::string format_args(const Op& op) {
  std::ostringstream os;
  std::visit(
      [&](const auto& o) {
        using T = std::decay_t<decltype(o)>;
        if constexpr (std::is_same_v<T, InputOp>) {
          os << "width=" << o.width;
          if (o.seq_len) os << ",seq=" << o.seq_len;
        } else if constexpr (std::is_same_v<T, WeightOp>) {
          os << "rows=" << o.value->rows() << ",cols=" << o.value->cols();
        } else if constexpr (std::is_same_v<T, MatMulMaRIOp>) {
          os << "user=" << o.user_width << ",item=" << o.item_width << ",cross=" << o.cross_width;
        } else if constexpr (std::is_same_v<T, CrossAttentionOp>) {
          os << "kv=" << o.kv_width << ",hidden=" << o.hidden;
        } else if constexpr (std::is_same_v<T, SliceOp>) {
          os << "start=" << o.start << ",width=" << o.width;
        }
      },
      op);
  return os.str();
}

}  // namespace

std::string serialize(const Graph& g) {
  std::string out = "mari-graph v1\n";
  for (const Node& n : g.nodes()) {
    out += n.id;
    out += " = ";
    out += kind_name(n.kind());
    out += '(' + format_args(n.op) + ") inputs=[";
    for (std::size_t i = 0; i < n.inputs.size(); ++i) {
      if (i) out += ',';
      out += g.node(n.inputs[i]).id;
    }
    out += "] domain=";
    if (const auto* in = std::get_if<InputOp>(&n.op)) {
      out += domain_name(in->domain);
    } else {
      out += "none";
    }
    out += " layout=";
    if (const auto* c = std::get_if<ConcatOp>(&n.op)) {
      out += c->layout.to_string();
    } else {
      out += "[]";
    }
    if (const auto* w = std::get_if<WeightOp>(&n.op)) {
      out += " data=[";
      const auto data = w->value->data();
      for (std::size_t i = 0; i < data.size(); ++i) {
        if (i) out += ',';
        append_number(out, data[i]);
      }
      out += ']';
    }
    out += '\n';
  }
  out += "end\n";
  return out;
}

namespace {

class LineParser {
 public:
  LineParser(std::string_view text, std::size_t line) : s_(text), line_(line) {}

  [[noreturn]] void fail(const std::string& why) const { throw ParseError(line_, why); }

  void skip_ws() {
    while (pos_ < s_.size() && (s_[pos_] == ' ' || s_[pos_] == '\t' || s_[pos_] == '\r')) ++pos_;
  }
  bool done() {
    skip_ws();
    return pos_ >= s_.size();
  }
  bool peek(char c) {
    skip_ws();
    return pos_ < s_.size() && s_[pos_] == c;
  }
  void expect(char c) {
    skip_ws();
    if (pos_ >= s_.size() || s_[pos_] != c) {
      fail(std::string("expected '") + c + "'" + (pos_ >= s_.size() ? " at end of line" : ""));
    }
    ++pos_;
  }
  bool accept(char c) {
    if (!peek(c)) return false;
    ++pos_;
    return true;
  }
  std::string_view word() {
    skip_ws();
    const std::size_t start = pos_;
    while (pos_ < s_.size()) {
      const char c = s_[pos_];
      if (std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '.' || c == '-' ||
          c == ':') {
        ++pos_;
      } else {
        break;
      }
    }
    if (start == pos_) fail("expected an identifier");
    return s_.substr(start, pos_ - start);
  }
  std::int64_t integer() {
    skip_ws();
    std::int64_t v = 0;
    auto res = std::from_chars(s_.data() + pos_, s_.data() + s_.size(), v);
    if (res.ec != std::errc()) fail("expected an integer");
    pos_ = static_cast<std::size_t>(res.ptr - s_.data());
    return v;
  }
  double number() {
    skip_ws();
    double v = 0;
    auto res = std::from_chars(s_.data() + pos_, s_.data() + s_.size(), v);
    if (res.ec != std::errc()) fail("expected a number");
    pos_ = static_cast<std::size_t>(res.ptr - s_.data());
    return v;
  }

 private:
  std::string_view s_;
  std::size_t line_;
  std::size_t pos_ = 0;
};

NodeSpec parse_node_line(std::string_view text, std::size_t line) {
  LineParser p(text, line);
  std::string id(p.word());
  p.expect('=');
  const std::string_view kind_word = p.word();
  const auto kind = parse_kind(kind_word);
  if (!kind) p.fail("unknown node kind '" + std::string(kind_word) + "'");

  std::unordered_map<std::string, std::int64_t> args;
  p.expect('(');
  if (!p.accept(')')) {
    do {
      std::string key(p.word());
      p.expect('=');
      if (!args.emplace(key, p.integer()).second) p.fail("repeated argument '" + key + "'");
    } while (p.accept(','));
    p.expect(')');
  }

  std::optional<std::vector<std::string>> inputs;
  std::optional<std::string> domain;
  std::optional<std::vector<LayoutSegment>> layout;
  std::optional<std::vector<double>> data;
  while (!p.done()) {
    const std::string key(p.word());
    p.expect('=');
    if (key == "inputs") {
      if (inputs) p.fail("repeated field 'inputs'");
      inputs.emplace();
      p.expect('[');
      if (!p.accept(']')) {
        do inputs->emplace_back(p.word());
        while (p.accept(','));
        p.expect(']');
      }
    } else if (key == "domain") {
      if (domain) p.fail("repeated field 'domain'");
      domain = std::string(p.word());
    } else if (key == "layout") {
      if (layout) p.fail("repeated field 'layout'");
      layout.emplace();
      p.expect('[');
      if (!p.accept(']')) {
        do {
          p.expect('(');
          const auto dom_word = p.word();
          const auto dom = parse_domain(dom_word);
          if (!dom) p.fail("unknown domain '" + std::string(dom_word) + "'");
          p.expect(',');
          const std::int64_t w = p.integer();
          if (w <= 0) p.fail("layout widths must be positive");
          p.expect(')');
          layout->push_back({*dom, w});
        } while (p.accept(','));
        p.expect(']');
      }
    } else if (key == "data") {
      if (data) p.fail("repeated field 'data'");
      data.emplace();
      p.expect('[');
      if (!p.accept(']')) {
        do data->push_back(p.number());
        while (p.accept(','));
        p.expect(']');
      }
    } else {
      p.fail("unknown field '" + key + "'");
    }
  }
  if (!inputs) p.fail("missing field 'inputs'");

  auto arg = [&](const char* name, std::optional<std::int64_t> fallback = std::nullopt) {
    auto it = args.find(name);
    if (it != args.end()) {
      const std::int64_t v = it->second;
      args.erase(it);
      return v;
    }
    if (!fallback) p.fail(std::string(kind_name(*kind)) + " requires argument '" + name + "'");
    return *fallback;
  };

  const bool is_input = *kind == OpKind::kInput;
  if (domain && *domain != "none" && !is_input) p.fail("only Input nodes carry a domain");
  if (layout && !layout->empty() && *kind != OpKind::kConcat) p.fail("only Concat nodes carry a layout");
  if (data && *kind != OpKind::kWeight) p.fail("only Weight nodes carry data");

  Op op;
  switch (*kind) {
    case OpKind::kInput: {
      if (!domain || *domain == "none") p.fail("Input requires a domain");
      const auto dom = parse_domain(*domain);
      if (!dom) p.fail("unknown domain '" + *domain + "'");
      op = InputOp{*dom, arg("width"), arg("seq", 0)};
      break;
    }
    case OpKind::kWeight: {
      const std::int64_t rows = arg("rows");
      const std::int64_t cols = arg("cols");
      if (rows <= 0 || cols <= 0) p.fail("weight dimensions must be positive");
      if (data) {
        if (static_cast<std::int64_t>(data->size()) != rows * cols) {
          p.fail("weight data has " + std::to_string(data->size()) + " values, expected " +
                 std::to_string(rows * cols));
        }
        op = WeightOp{std::make_shared<const Tensor>(Shape{rows, cols}, std::move(*data))};
      } else {
        const auto seed = static_cast<std::uint64_t>(arg("seed"));
        op = WeightOp{std::make_shared<const Tensor>(seeded_weight(rows, cols, seed))};
      }
      break;
    }
    case OpKind::kMatMul: op = MatMulOp{}; break;
    case OpKind::kMatMulMaRI: op = MatMulMaRIOp{arg("user"), arg("item"), arg("cross")}; break;
    case OpKind::kConcat:
      if (!layout || layout->empty()) p.fail("Concat requires a non-empty layout");
      op = ConcatOp{FeatureLayout(std::move(*layout))};
      break;
    case OpKind::kTile: op = TileOp{}; break;
    case OpKind::kAdd: op = AddOp{}; break;
    case OpKind::kRelu: op = ReluOp{}; break;
    case OpKind::kSoftmax: op = SoftmaxOp{}; break;
    case OpKind::kCrossAttention: op = CrossAttentionOp{arg("kv"), arg("hidden")}; break;
    case OpKind::kReshape: op = ReshapeOp{}; break;
    case OpKind::kIdentity: op = IdentityOp{}; break;
    case OpKind::kOutput: op = OutputOp{}; break;
    case OpKind::kSlice: op = SliceOp{arg("start"), arg("width")}; break;
    case OpKind::kMixture: op = MixtureOp{}; break;
  }
  if (!args.empty()) p.fail("unexpected argument '" + args.begin()->first + "'");
  return NodeSpec{std::move(id), std::move(op), std::move(*inputs)};
}

}  // namespace

Graph parse_graph(std::string_view text) {
  std::vector<NodeSpec> nodes;
  std::unordered_map<std::string, std::size_t> line_of;
  bool header = false;
  bool ended = false;
  std::size_t line_no = 0;
  std::size_t last_line = 0;
  while (!text.empty()) {
    ++line_no;
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    last_line = line_no;
    if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    while (!line.empty() && std::isspace(static_cast<unsigned char>(line.back()))) line.remove_suffix(1);
    while (!line.empty() && std::isspace(static_cast<unsigned char>(line.front()))) line.remove_prefix(1);
    if (line.empty()) continue;
    if (ended) throw ParseError(line_no, "content after 'end'");
    if (!header) {
      if (line != "mari-graph v1") throw ParseError(line_no, "expected header 'mari-graph v1'");
      header = true;
      continue;
    }
    if (line == "end") {
      ended = true;
      continue;
    }
    NodeSpec node = parse_node_line(line, line_no);
    if (!line_of.emplace(node.id, line_no).second) {
      throw ParseError(line_no, "duplicate node id '" + node.id + "'");
    }
    nodes.push_back(std::move(node));
  }
  if (!header) throw ParseError(std::max<std::size_t>(line_no, 1), "empty graph file");
  if (!ended) throw ParseError(last_line, "unexpected end of input (missing 'end')");
  for (const auto& n : nodes) {
    for (const auto& in : n.inputs) {
      if (!line_of.count(in)) {
        throw ParseError(line_of.at(n.id), "node '" + n.id + "' references undefined node '" + in + "'");
      }
    }
  }
  return build_graph(GraphSpec(std::move(nodes)));
}

Graph load_graph(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open graph file '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_graph(ss.str());
}

void save_graph(const Graph& g, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write graph file '" + path + "'");
  out << serialize(g);
  if (!out) throw IoError("failed writing graph file '" + path + "'");
}

}  // namespace mari
