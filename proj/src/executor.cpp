// Copyright (C) 2026 The mari Authors
// SPDX-License-Identifier: Apache-2.0

#include "mari/executor.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <set>

#include "mari/errors.hpp"
#include "mari/random.hpp"

namespace mari {

std::string_view strategy_name(Strategy s) { return s == Strategy::kVanI ? "vani" : "uoi"; }

std::optional<Strategy> parse_strategy(std::string_view name) {
  if (name == "vani") return Strategy::kVanI;
  if (name == "uoi") return Strategy::kUOI;
  return std::nullopt;
}

namespace {

template <typename T>
using Value = std::shared_ptr<const BasicTensor<T>>;

template <typename T>
Value<T> make_value(BasicTensor<T>&& t) {
  return std::make_shared<const BasicTensor<T>>(std::move(t));
}

std::uint64_t product_flops(std::int64_t n, std::int64_t k, std::int64_t m) {
  return 2 * static_cast<std::uint64_t>(n) * static_cast<std::uint64_t>(k) * static_cast<std::uint64_t>(m);
}

template <typename T>
BasicTensor<T> row_of(const BasicTensor<T>& x, std::int64_t r) {
  const auto c = x.cols();
  const auto src = x.data().subspan(static_cast<std::size_t>(r * c), static_cast<std::size_t>(c));
  return BasicTensor<T>(Shape{1, c}, std::vector<T>(src.begin(), src.end()));
}

}  // namespace

template <typename T>
BasicTensor<T> cross_attention(const BasicTensor<T>& q, const BasicTensor<T>& seq, const BasicTensor<T>& wk,
                               const BasicTensor<T>& wv, std::uint64_t* projection_flops,
                               std::uint64_t* core_flops) {
  if (q.rank() != 2 || seq.rank() != 3 || wk.rank() != 2 || wv.rank() != 2) {
    throw DimensionError("cross_attention: expected matrix query, [S x L x C] sequence and matrix projections");
  }
  const std::int64_t R = q.rows(), S = seq.shape()[0], L = seq.shape()[1], C = seq.shape()[2];
  const std::int64_t H = wk.cols();
  if (wk.shape() != wv.shape() || wk.rows() != C) {
    throw DimensionError("cross_attention: projections " + wk.shape().to_string() + ", " +
                         wv.shape().to_string() + " do not fit sequence " + seq.shape().to_string());
  }
  if (q.cols() != H) {
    throw DimensionError("cross_attention: query " + q.shape().to_string() + " vs hidden width " +
                         std::to_string(H));
  }
  if (S != 1 && S != R) {
    throw DimensionError("cross_attention: sequence " + seq.shape().to_string() + " vs query " +
                         q.shape().to_string());
  }
  const T factor = static_cast<T>(1) / std::sqrt(static_cast<T>(H));

  auto attend = [&](const BasicTensor<T>& qs, const BasicTensor<T>& s) {
    const auto k = matmul(s, wk);
    const auto v = matmul(s, wv);
    return matmul(softmax_rows(scale(matmul_transposed(qs, k), factor)), v);
  };

  if (projection_flops) *projection_flops = 2 * product_flops(S * L, C, H);
  if (core_flops) *core_flops = 2 * product_flops(R, H, L);

  if (S == 1) return attend(q, sequence_at(seq, 0));
  BasicTensor<T> out(Shape{R, H});
  for (std::int64_t r = 0; r < R; ++r) {
    const auto o = attend(row_of(q, r), sequence_at(seq, r));
    std::copy(o.data().begin(), o.data().end(), out.mutable_data().begin() + r * H);
  }
  return out;
}

template <typename T>
Executor<T>::Executor(const Graph& g) : graph_(g), weights_(g.size()), consumer_count_(g.size(), 0) {
  for (NodeIndex i = 0; i < g.size(); ++i) {
    const Node& n = g.node(i);
    if (const auto* w = std::get_if<WeightOp>(&n.op)) {
      if constexpr (std::is_same_v<T, double>) {
        weights_[i] = w->value;
      } else {
        weights_[i] = make_value(tensor_cast<T>(*w->value));
      }
    }
    for (NodeIndex in : n.inputs) ++consumer_count_[in];
  }
}

template <typename T>
ExecReport<T> Executor<T>::run(const InputBundle<T>& bundle, Strategy strategy, const RunOptions& options) const {
  const Graph& g = graph_;
  const std::int64_t B = bundle.batch;
  if (B < 1) throw InvalidArgument("batch size must be at least 1");

  // Validate the bundle before timing.
  for (NodeIndex i : g.inputs()) {
    const Node& n = g.node(i);
    const auto& op = std::get<InputOp>(n.op);
    auto it = bundle.values.find(n.id);
    if (it == bundle.values.end()) throw InputError("missing value for input '" + n.id + "'");
    const auto& t = it->second;
    const std::int64_t rows = op.domain == FeatureDomain::kUser ? 1 : B;
    const Shape expect = op.seq_len ? Shape{rows, op.seq_len, op.width} : Shape{rows, op.width};
    if (t.shape() != expect) {
      throw DimensionError("input '" + n.id + "' has shape " + t.shape().to_string() + ", expected " +
                           expect.to_string() + " for batch " + std::to_string(B));
    }
  }
  for (const auto& [id, t] : bundle.values) {
    const auto idx = g.find(id);
    if (!idx || g.node(*idx).kind() != OpKind::kInput) throw InputError("bundle value '" + id + "' is not a graph input");
  }

  ExecReport<T> report;
  report.node_flops.assign(g.size(), 0);
  std::vector<Value<T>> values(g.size());
  std::vector<int> remaining = consumer_count_;

  const auto start = std::chrono::steady_clock::now();
  for (NodeIndex i = 0; i < g.size(); ++i) {
    const Node& n = g.node(i);
    auto in = [&](std::size_t k) -> const BasicTensor<T>& { return *values[n.inputs[k]]; };
    std::uint64_t& flops = report.node_flops[i];
    Value<T> out;

    switch (n.kind()) {
      case OpKind::kInput: {
        const auto& op = std::get<InputOp>(n.op);
        const auto& t = bundle.values.at(n.id);
        if (strategy == Strategy::kVanI && op.domain == FeatureDomain::kUser) {
          out = make_value(tile_rows(t, B));
        } else {
          out = std::shared_ptr<const BasicTensor<T>>(std::shared_ptr<const BasicTensor<T>>(), &t);
        }
        break;
      }
      case OpKind::kWeight: out = weights_[i]; break;
      case OpKind::kMatMul: {
        const auto& x = in(0);
        const auto& w = in(1);
        flops = product_flops(x.rows(), x.cols(), w.cols());
        out = make_value(matmul(x, w));
        break;
      }
      case OpKind::kMatMulMaRI: {
        const auto& op = std::get<MatMulMaRIOp>(n.op);
        const std::int64_t widths[] = {op.user_width, op.item_width, op.cross_width};
        const char* names[] = {"user", "item", "cross"};
        std::optional<BasicTensor<T>> user;
        std::optional<BasicTensor<T>> batched;
        std::size_t slot = 0;
        for (int d = 0; d < 3; ++d) {
          if (widths[d] == 0) continue;
          const auto& x = in(slot);
          const auto& w = in(slot + 1);
          const std::uint64_t f = product_flops(x.rows(), x.cols(), w.cols());
          report.branch_flops[n.id + "/" + names[d]] = f;
          flops += f;
          if (d == 0) {
            user = matmul(x, w);
          } else if (!batched) {
            batched = matmul(x, w);
          } else {
            matmul_accumulate(*batched, x, w);
          }
          slot += 2;
        }
        out = make_value(batched ? (user ? add_broadcast(*user, *batched) : std::move(*batched)) : std::move(*user));
        break;
      }
      case OpKind::kConcat: {
        std::vector<const BasicTensor<T>*> parts;
        for (std::size_t k = 0; k < n.inputs.size(); ++k) parts.push_back(&in(k));
        out = make_value(concat_cols<T>(std::span<const BasicTensor<T>* const>(parts)));
        break;
      }
      case OpKind::kTile: {
        const auto& x = in(0);
        out = x.shape()[0] == B ? values[n.inputs[0]] : make_value(tile_rows(x, B));
        break;
      }
      case OpKind::kAdd: out = make_value(add_broadcast(in(0), in(1))); break;
      case OpKind::kRelu: out = make_value(relu(in(0))); break;
      case OpKind::kSoftmax: out = make_value(softmax_rows(in(0))); break;
      case OpKind::kCrossAttention: {
        std::uint64_t core = 0;
        out = make_value(cross_attention(in(0), in(1), in(2), in(3), &flops, &core));
        report.flops_attention_core += core;
        break;
      }
      case OpKind::kReshape: {
        const auto& x = in(0);
        if (x.rank() == 2) {
          out = values[n.inputs[0]];
        } else {
          std::vector<T> data(x.data().begin(), x.data().end());
          out = make_value(BasicTensor<T>(Shape{x.shape()[0], x.size() / x.shape()[0]}, std::move(data)));
        }
        break;
      }
      case OpKind::kIdentity:
      case OpKind::kOutput: out = values[n.inputs[0]]; break;
      case OpKind::kSlice: {
        const auto& op = std::get<SliceOp>(n.op);
        out = make_value(slice_cols(in(0), op.start, op.width));
        break;
      }
      case OpKind::kMixture: {
        const auto& gate = in(0);
        const std::int64_t E = gate.cols();
        const auto& first = in(1);
        const std::int64_t R = std::max(gate.rows(), first.rows());
        const std::int64_t C = first.cols();
        BasicTensor<T> acc(Shape{R, C});
        auto o = acc.mutable_data();
        for (std::int64_t e = 0; e < E; ++e) {
          const auto& x = in(static_cast<std::size_t>(e) + 1);
          const auto gd = gate.data();
          const auto xd = x.data();
          for (std::int64_t r = 0; r < R; ++r) {
            const T gv = gd[static_cast<std::size_t>((gate.rows() == 1 ? 0 : r) * E + e)];
            const T* xr = xd.data() + (x.rows() == 1 ? 0 : r) * C;
            for (std::int64_t c = 0; c < C; ++c) o[static_cast<std::size_t>(r * C + c)] += gv * xr[c];
          }
        }
        out = make_value(std::move(acc));
        break;
      }
    }
    values[i] = std::move(out);
    report.flops_total += flops;

    if (!options.keep_values) {
      for (NodeIndex src : n.inputs) {
        if (--remaining[src] == 0 && g.node(src).kind() != OpKind::kOutput) values[src].reset();
      }
    }
  }
  report.wall_time_ns =
      std::chrono::duration_cast<std::chrono::nanoseconds>(std::chrono::steady_clock::now() - start).count();

  for (NodeIndex o : g.outputs()) report.outputs.emplace(g.node(o).id, *values[o]);
  if (options.keep_values) {
    // Inputs borrowed from the bundle are copied so the report owns them.
    for (auto& v : values) {
      if (v && v.use_count() == 0) v = std::make_shared<const BasicTensor<T>>(*v);
    }
    report.values = std::move(values);
  }
  return report;
}

template <typename T>
InputBundle<T> random_bundle(const Graph& g, std::int64_t batch, std::uint64_t seed) {
  if (batch < 1) throw InvalidArgument("batch size must be at least 1");
  UniformSource src(seed);
  InputBundle<T> bundle;
  bundle.batch = batch;
  for (NodeIndex i : g.inputs()) {
    const Node& n = g.node(i);
    const auto& op = std::get<InputOp>(n.op);
    const std::int64_t rows = op.domain == FeatureDomain::kUser ? 1 : batch;
    const Shape shape = op.seq_len ? Shape{rows, op.seq_len, op.width} : Shape{rows, op.width};
    std::vector<T> data(static_cast<std::size_t>(shape.num_elements()));
    for (auto& v : data) v = static_cast<T>(src.next());
    bundle.values.emplace(n.id, BasicTensor<T>(shape, std::move(data)));
  }
  return bundle;
}

template <typename T>
double relative_deviation(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError("cannot compare " + a.shape().to_string() + " with " + b.shape().to_string());
  }
  double diff = 0;
  double scale_ab = 0;
  const auto da = a.data();
  const auto db = b.data();
  for (std::size_t k = 0; k < da.size(); ++k) {
    const double x = da[k];
    const double y = db[k];
    if (std::isnan(x) != std::isnan(y)) return std::numeric_limits<double>::infinity();
    diff = std::max(diff, std::abs(x - y));
    scale_ab = std::max({scale_ab, std::abs(x), std::abs(y)});
  }
  if (diff == 0) return 0;
  return diff / scale_ab;
}

namespace {

std::map<std::string, InputOp> input_signature(const Graph& g) {
  std::map<std::string, InputOp> out;
  for (NodeIndex i : g.inputs()) out.emplace(g.node(i).id, std::get<InputOp>(g.node(i).op));
  return out;
}

std::map<std::string, ValueShape> output_signature(const Graph& g) {
  std::map<std::string, ValueShape> out;
  for (NodeIndex i : g.outputs()) out.emplace(g.node(i).id, g.node(i).shape);
  return out;
}

}  // namespace

template <typename T>
EquivalenceResult check_equivalence(const Graph& a, const Graph& b, const EquivalenceOptions& options) {
  if (input_signature(a) != input_signature(b)) throw ContractError("graphs have different Input nodes");
  if (output_signature(a) != output_signature(b)) throw ContractError("graphs have different Output nodes");
  if (options.trials < 1) throw InvalidArgument("at least one trial is required");

  const Executor<T> ea(a);
  const Executor<T> eb(b);
  EquivalenceResult result;
  for (int t = 0; t < options.trials; ++t) {
    const auto bundle = random_bundle<T>(a, options.batch, options.seed + static_cast<std::uint64_t>(t));
    const auto ra = ea.run(bundle, options.strategy);
    const auto rb = eb.run(bundle, options.strategy);
    for (const auto& [id, value] : ra.outputs) {
      result.max_deviation = std::max(result.max_deviation, relative_deviation(value, rb.outputs.at(id)));
    }
    ++result.trials;
  }
  result.pass = result.max_deviation <= options.tolerance;
  return result;
}

#define MARI_INSTANTIATE(T)                                                                                  \
  template class Executor<T>;                                                                                \
  template BasicTensor<T> cross_attention(const BasicTensor<T>&, const BasicTensor<T>&, const BasicTensor<T>&, \
                                          const BasicTensor<T>&, std::uint64_t*, std::uint64_t*);              \
  template InputBundle<T> random_bundle<T>(const Graph&, std::int64_t, std::uint64_t);                        \
  template double relative_deviation(const BasicTensor<T>&, const BasicTensor<T>&);                           \
  template EquivalenceResult check_equivalence<T>(const Graph&, const Graph&, const EquivalenceOptions&);

MARI_INSTANTIATE(double)
MARI_INSTANTIATE(float)

#undef MARI_INSTANTIATE

}  // namespace mari
