#include <sstream>

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "bleg/cli/cli.hpp"
#include "bleg/error.hpp"
#include "bleg/eval/metrics.hpp"
#include "bleg/eval/theory.hpp"
#include "bleg/graphdata/splits.hpp"
#include "bleg/graphdata/synthetic.hpp"
#include "bleg/promptgen/prompt.hpp"
#include "bleg/training/fidelity.hpp"
#include "bleg/training/losses.hpp"

namespace py = pybind11;
using namespace bleg;
using numerics::Tensor;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Tensor to_tensor(const Array& a) {
  if (a.ndim() != 2) throw DimensionError("expected a 2-D array");
  const auto r = static_cast<std::size_t>(a.shape(0)), c = static_cast<std::size_t>(a.shape(1));
  return Tensor({r, c}, std::vector<double>(a.data(), a.data() + r * c));
}

Array to_array(const Tensor& t) {
  Array out({t.rows(), t.cols()});
  std::copy(t.data().begin(), t.data().end(), out.mutable_data());
  return out;
}

py::object opt(const std::optional<double>& v) { return v ? py::object(py::float_(*v)) : py::none(); }

}  // namespace

PYBIND11_MODULE(_bleg, m) {
  m.doc() = "Native core of the bleg package";

  // Library errors surface as BlegError with the machine-readable kind.
  static py::exception<Error> error(m, "BlegError");
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      py::set_error(error, (e.kind() + ": " + e.what()).c_str());
    }
  });

  m.def("cli_run", [](const std::vector<std::string>& args) {
    std::ostringstream out, err;
    int code;
    {
      py::gil_scoped_release release;
      code = cli::run(args, out, err);
    }
    return py::make_tuple(code, out.str(), err.str());
  });
  m.def("default_config", [] { return cli::default_config().dump(); });

  m.def(
      "synthetic_dataset",
      [](std::size_t n_graphs, std::size_t n_nodes, std::size_t time_points, double signal, std::uint64_t seed) {
        graphdata::SynthConfig sc;
        sc.n_graphs = n_graphs;
        sc.n_nodes = n_nodes;
        sc.time_points = time_points;
        sc.signal_strength = signal;
        sc.seed = seed;
        const auto ds = graphdata::generate_synthetic_dataset(sc);
        py::list graphs;
        for (const auto& g : ds.graphs) {
          py::dict d;
          d["id"] = g.id;
          d["label"] = g.label;
          d["features"] = to_array(g.node_features);
          d["adjacency"] = to_array(g.adjacency);
          d["regions"] = g.regions;
          graphs.append(d);
        }
        return graphs;
      },
      py::arg("n_graphs") = 200, py::arg("n_nodes") = 90, py::arg("time_points") = 100, py::arg("signal") = 0.9,
      py::arg("seed") = 0);

  m.def(
      "serialize_graph",
      [](const Array& features, const Array& adjacency) {
        graphdata::BrainGraph g;
        g.node_features = to_tensor(features);
        g.adjacency = to_tensor(adjacency);
        for (std::size_t i = 0; i < g.adjacency.rows(); ++i) g.regions.push_back("R" + std::to_string(i));
        return promptgen::serialize_graph(g);
      },
      py::arg("features"), py::arg("adjacency"));
  m.def("parse_graph_text", [](const std::string& text) {
    const auto parsed = promptgen::parse_graph_text(text);
    std::vector<std::tuple<std::size_t, std::size_t, double>> edges;
    for (const auto& e : parsed.edges) edges.emplace_back(e.edge.i, e.edge.j, e.weight);
    return py::make_tuple(edges, parsed.mean_features);
  });

  m.def(
      "compute_metrics",
      [](const std::vector<int>& pred, const std::vector<int>& labels, const std::vector<double>& scores) {
        const auto mt = eval::compute_metrics(pred, labels, scores);
        py::dict d;
        for (const auto& name : eval::kMetricNames) d[py::str(name)] = opt(eval::metric(mt, name));
        return d;
      },
      py::arg("pred"), py::arg("labels"), py::arg("scores") = std::vector<double>{});

  m.def(
      "make_split",
      [](const std::vector<int>& labels, const std::string& kind, std::uint64_t seed, std::size_t folds,
         double train_ratio, double val_ratio, std::size_t shots) {
        graphdata::SplitParams p;
        p.folds = folds;
        p.train_ratio = train_ratio;
        p.val_ratio = val_ratio;
        p.shots = shots;
        return graphdata::make_split(labels, graphdata::split_kind_from_string(kind), p, seed).assignment;
      },
      py::arg("labels"), py::arg("kind"), py::arg("seed") = 0, py::arg("folds") = 10, py::arg("train_ratio") = 0.7,
      py::arg("val_ratio") = 0.1, py::arg("shots") = 1);

  m.def("alignment_loss", [](const Array& zg, const Array& zt) {
    numerics::Tape tape;
    return training::alignment_loss(tape.constant(to_tensor(zg)), tape.constant(to_tensor(zt))).value().item();
  });

  m.def(
      "mutual_information",
      [](const std::vector<std::size_t>& sizes, const std::vector<double>& probs, const eval::VarSet& a,
         const eval::VarSet& b, const eval::VarSet& given) {
        const eval::DiscreteJoint j(sizes, probs);
        return given.empty() ? eval::mutual_information(j, a, b) : eval::conditional_mi(j, a, b, given);
      },
      py::arg("sizes"), py::arg("probs"), py::arg("a"), py::arg("b"), py::arg("given") = eval::VarSet{});
  m.def(
      "theorem_check",
      [](const std::vector<std::size_t>& sizes, const std::vector<double>& probs, const std::vector<double>& corruption) {
        return eval::theorem_check(eval::DiscreteJoint(sizes, probs), corruption).to_json().dump();
      },
      py::arg("sizes"), py::arg("probs"), py::arg("corruption") = eval::default_corruption_sweep());

  m.def(
      "gradient_fidelity",
      [](std::uint64_t seed, double step, double tolerance) {
        return training::gradient_fidelity(seed, step, tolerance).to_json().dump();
      },
      py::arg("seed") = 0, py::arg("step") = 1e-5, py::arg("tolerance") = 1e-3);
}
