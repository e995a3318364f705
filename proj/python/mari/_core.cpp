// Copyright (C) 2026 The mari Authors
// SPDX-License-Identifier: Apache-2.0

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <algorithm>
#include <stdexcept>
#include <string>
#include <vector>

#include "mari/errors.hpp"
#include "mari/executor.hpp"
#include "mari/fixtures.hpp"
#include "mari/flops.hpp"
#include "mari/gca.hpp"
#include "mari/graph.hpp"
#include "mari/reorg.hpp"
#include "mari/rewrite.hpp"

namespace py = pybind11;
using namespace mari;

namespace {

template <typename T>
py::array_t<T> to_numpy(const BasicTensor<T>& t) {
  const auto& dims = t.shape().dims();
  py::array_t<T> out(std::vector<py::ssize_t>(dims.begin(), dims.end()));
  std::copy(t.data().begin(), t.data().end(), out.mutable_data());
  return out;
}

template <typename T>
BasicTensor<T> from_numpy(const py::array_t<T, py::array::c_style | py::array::forcecast>& a) {
  std::vector<std::int64_t> dims(a.shape(), a.shape() + a.ndim());
  std::vector<T> data(a.data(), a.data() + a.size());
  return BasicTensor<T>(Shape(std::move(dims)), std::move(data));
}

FeatureLayout layout_from(const std::vector<std::pair<std::string, std::int64_t>>& segments) {
  std::vector<LayoutSegment> out;
  for (const auto& [name, width] : segments) {
    const auto d = parse_domain(name);
    if (!d) throw InvalidArgument("unknown domain '" + name + "'");
    out.push_back({*d, width});
  }
  return FeatureLayout(std::move(out));
}

std::vector<std::pair<std::string, std::int64_t>> layout_to(const FeatureLayout& layout) {
  std::vector<std::pair<std::string, std::int64_t>> out;
  for (const auto& s : layout.segments()) out.emplace_back(std::string(domain_name(s.domain)), s.width);
  return out;
}

Strategy strategy_from(const std::string& name) {
  const auto s = parse_strategy(name);
  if (!s) throw InvalidArgument("unknown strategy '" + name + "' (expected vani or uoi)");
  return *s;
}

py::dict site_dict(const SiteRewrite& s) {
  py::dict d;
  d["matmul"] = s.matmul;
  d["concat"] = s.concat;
  d["reorganized"] = s.reorganized;
  d["D_u"] = s.D_u;
  d["D_i"] = s.D_i;
  d["D_c"] = s.D_c;
  d["d"] = s.d;
  return d;
}

py::dict flops_dict(const FlopsReport& r) {
  py::dict d;
  d["flops_baseline"] = r.flops_baseline;
  d["flops_optimized"] = r.flops_optimized;
  d["speedup"] = r.speedup;
  d["saving"] = r.absolute_saving;
  return d;
}

template <typename T>
py::dict run_impl(const Graph& g, const py::dict& inputs, std::int64_t batch, const std::string& strategy) {
  InputBundle<T> bundle;
  bundle.batch = batch;
  for (const auto& [k, v] : inputs) {
    bundle.values.emplace(k.template cast<std::string>(),
                          from_numpy<T>(v.template cast<py::array_t<T, py::array::c_style | py::array::forcecast>>()));
  }
  const Strategy s = strategy_from(strategy);
  ExecReport<T> rep;
  {
    py::gil_scoped_release release;
    rep = execute(g, bundle, s);
  }
  py::dict outputs;
  for (const auto& [id, t] : rep.outputs) outputs[py::str(id)] = to_numpy(t);
  py::dict per_node;
  for (NodeIndex i = 0; i < g.size(); ++i) {
    if (rep.node_flops[i]) per_node[py::str(g.node(i).id)] = rep.node_flops[i];
  }
  py::dict out;
  out["outputs"] = outputs;
  out["flops_total"] = rep.flops_total;
  out["flops_attention_core"] = rep.flops_attention_core;
  out["node_flops"] = per_node;
  out["branch_flops"] = rep.branch_flops;
  out["wall_time_ns"] = rep.wall_time_ns;
  return out;
}

template <typename T>
py::dict random_inputs_impl(const Graph& g, std::int64_t batch, std::uint64_t seed) {
  const auto bundle = random_bundle<T>(g, batch, seed);
  py::dict out;
  for (const auto& [id, t] : bundle.values) out[py::str(id)] = to_numpy(t);
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Graph passes and executor for matrix re-parameterized ranking inference";
  m.attr("__version__") = MARI_VERSION;

  auto base = py::register_exception<Error>(m, "MariError", PyExc_RuntimeError);
  py::register_exception<ParseError>(m, "ParseError", base.ptr());
  py::register_exception<InputError>(m, "InputError", base.ptr());
  py::register_exception<PreconditionError>(m, "PreconditionError", base.ptr());
  py::register_exception<InvalidArgument>(m, "InvalidArgument", base.ptr());
  py::register_exception<IoError>(m, "IoError", base.ptr());

  py::class_<Graph>(m, "Graph")
      .def_static("parse", [](const std::string& text) { return parse_graph(text); }, py::arg("text"))
      .def_static("load", &load_graph, py::arg("path"))
      .def("save", [](const Graph& g, const std::string& path) { save_graph(g, path); }, py::arg("path"))
      .def("serialize", [](const Graph& g) { return serialize(g); })
      .def("__len__", &Graph::size)
      .def_property_readonly("edge_count", &Graph::edge_count)
      .def_property_readonly("node_ids",
                             [](const Graph& g) {
                               std::vector<std::string> ids;
                               for (const auto& n : g.nodes()) ids.push_back(n.id);
                               return ids;
                             })
      .def("kind", [](const Graph& g, const std::string& id) { return std::string(kind_name(g.node(id).kind())); },
           py::arg("id"))
      .def("inputs_of",
           [](const Graph& g, const std::string& id) {
             std::vector<std::string> out;
             for (const NodeIndex i : g.node(id).inputs) out.push_back(g.node(i).id);
             return out;
           },
           py::arg("id"))
      .def("layout",
           [](const Graph& g, const std::string& id) -> py::object {
             const auto& n = g.node(id);
             if (const auto* c = std::get_if<ConcatOp>(&n.op)) return py::cast(layout_to(c->layout));
             return py::none();
           },
           py::arg("id"))
      .def("__eq__", [](const Graph& a, const Graph& b) { return structurally_equal(a, b); })
      .def("__repr__", [](const Graph& g) {
        return "<mari.Graph nodes=" + std::to_string(g.size()) + " edges=" + std::to_string(g.edge_count()) + ">";
      });

  m.def(
      "ranking_fixture",
      [](bool fragmented, std::int64_t experts, std::int64_t tasks, std::uint64_t seed) {
        ModelDims d;
        d.fragmented = fragmented;
        d.num_experts = experts;
        d.num_tasks = tasks;
        d.seed = seed;
        return fixture_ranking_model(d).graph;
      },
      py::arg("fragmented") = false, py::arg("experts") = 2, py::arg("tasks") = 2, py::arg("seed") = 7);
  m.def("attention_fixture", &attention_fixture, py::arg("d"), py::arg("L"), py::arg("seed") = 1);
  m.def(
      "single_site_graph",
      [](std::int64_t D_u, std::int64_t D_i, std::int64_t D_c, std::int64_t d, std::uint64_t seed) {
        return single_site_graph({1, D_u, D_i, D_c, d}, seed);
      },
      py::arg("D_u"), py::arg("D_i"), py::arg("D_c"), py::arg("d"), py::arg("seed") = 1);

  m.def(
      "gca",
      [](const Graph& g) {
        std::map<std::string, std::string> out;
        for (const auto& [mm, site] : run_gca(g)) out[mm] = site.concat;
        return out;
      },
      py::arg("graph"), "MaRI-optimizable MatMul id -> provoking Concat id");
  m.def(
      "colors",
      [](const Graph& g) {
        const Coloring c = propagate(g, initialize_colors(g));
        std::map<std::string, std::string> out;
        for (NodeIndex i = 0; i < g.size(); ++i) out[g.node(i).id] = std::string(color_name(c[i]));
        return out;
      },
      py::arg("graph"));

  m.def(
      "plan_reorg",
      [](const std::vector<std::pair<std::string, std::int64_t>>& layout) {
        const auto p = plan_reorg(layout_from(layout));
        py::dict d;
        d["perm"] = p.perm;
        d["D_user"] = p.D_user;
        d["D_item"] = p.D_item;
        d["D_cross"] = p.D_cross;
        return d;
      },
      py::arg("layout"), "Column permutation taking a layout to user | item | cross order");
  m.def(
      "reorg",
      [](const Graph& g) {
        std::vector<std::string> sites;
        Graph out = reorg_all(g, &sites);
        return py::make_tuple(std::move(out), sites);
      },
      py::arg("graph"));
  m.def(
      "rewrite",
      [](const Graph& g) {
        RewriteResult r = rewrite_all(g);
        py::list sites;
        for (const auto& s : r.sites) sites.append(site_dict(s));
        return py::make_tuple(std::move(r.graph), sites);
      },
      py::arg("graph"));
  m.def("fragment", &fragment_site, py::arg("graph"), py::arg("matmul"), py::arg("chunk"));

  m.def(
      "random_inputs",
      [](const Graph& g, std::int64_t batch, std::uint64_t seed, const std::string& dtype) {
        if (dtype == "f64") return random_inputs_impl<double>(g, batch, seed);
        if (dtype == "f32") return random_inputs_impl<float>(g, batch, seed);
        throw InvalidArgument("unknown dtype '" + dtype + "'");
      },
      py::arg("graph"), py::arg("batch"), py::arg("seed") = 42, py::arg("dtype") = "f64");
  m.def(
      "run",
      [](const Graph& g, const py::dict& inputs, std::int64_t batch, const std::string& strategy,
         const std::string& dtype) {
        if (dtype == "f64") return run_impl<double>(g, inputs, batch, strategy);
        if (dtype == "f32") return run_impl<float>(g, inputs, batch, strategy);
        throw InvalidArgument("unknown dtype '" + dtype + "'");
      },
      py::arg("graph"), py::arg("inputs"), py::arg("batch"), py::arg("strategy") = "uoi",
      py::arg("dtype") = "f64");
  m.def(
      "check_equivalence",
      [](const Graph& a, const Graph& b, int trials, double tolerance, std::int64_t batch, std::uint64_t seed) {
        EquivalenceOptions o;
        o.trials = trials;
        o.tolerance = tolerance;
        o.batch = batch;
        o.seed = seed;
        EquivalenceResult r;
        {
          py::gil_scoped_release release;
          r = check_equivalence<double>(a, b, o);
        }
        return py::make_tuple(r.pass, r.max_deviation);
      },
      py::arg("a"), py::arg("b"), py::arg("trials") = 100, py::arg("tolerance") = 1e-12, py::arg("batch") = 16,
      py::arg("seed") = 1);

  m.def(
      "mari_flops",
      [](std::int64_t B, std::int64_t D_u, std::int64_t D_i, std::int64_t D_c, std::int64_t d) {
        const auto r = mari_flops({B, D_u, D_i, D_c, d});
        py::dict out = flops_dict(r);
        out["asymptotic_save_ratio"] = r.asymptotic_save_ratio;
        return out;
      },
      py::arg("B"), py::arg("D_u"), py::arg("D_i"), py::arg("D_c"), py::arg("d"));
  m.def(
      "attention_flops",
      [](std::int64_t B, std::int64_t L, std::int64_t d) {
        const auto r = uoi_attention_flops({B, L, d});
        py::dict out = flops_dict(r);
        out["ratio"] = r.ratio;
        return out;
      },
      py::arg("B"), py::arg("L"), py::arg("d"));
  m.def("table2", []() {
    py::list rows;
    for (const auto& row : flops_speedup_table(table2_grid())) {
      py::dict d = flops_dict(row.report);
      d["axis"] = row.point.axis;
      d["value"] = row.point.value;
      rows.append(d);
    }
    return rows;
  });
}
