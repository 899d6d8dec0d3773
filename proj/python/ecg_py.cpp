// Python bindings over the core library. Arrays cross the boundary as copies.

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "ecg/embedding.hpp"
#include "ecg/graph.hpp"
#include "ecg/harness.hpp"
#include "ecg/homophily.hpp"
#include "ecg/log.hpp"
#include "ecg/rewiring.hpp"
#include "ecg/weak.hpp"

namespace py = pybind11;
using namespace ecg;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;

py::array_t<float> to_numpy(const FeatureMatrix& m) {
  py::array_t<float> out({m.rows, m.cols});
  std::copy(m.values.begin(), m.values.end(), out.mutable_data());
  return out;
}

FeatureMatrix from_numpy(const FloatArray& a) {
  if (a.ndim() != 2) throw py::value_error("expected a 2-d array");
  FeatureMatrix m(a.shape(0), a.shape(1));
  std::copy(a.data(), a.data() + a.size(), m.values.begin());
  return m;
}

py::dict report_dict(const HomophilyReport& r) {
  py::dict d;
  d["num_edges"] = r.num_edges;
  d["edge_homophily"] = r.edge_homophily;
  d["adjusted_homophily"] = r.adjusted_homophily;
  d["label_informativeness"] = r.label_informativeness;
  d["class_degree_mass"] = r.class_degree_mass;
  return d;
}

py::dict eval_dict(const EvalResult& e) {
  py::dict d;
  d["values"] = e.values;
  d["mean"] = e.mean;
  d["std"] = e.std;
  return d;
}

}  // namespace

PYBIND11_MODULE(ecg, m) {
  m.doc() = "Embedding-constructed-graph node classification";

  py::register_exception<DataError>(m, "DataError", PyExc_ValueError);

  m.def(
      "set_log_level",
      [](const std::string& level) {
        if (level == "debug") log_level() = LogLevel::debug;
        else if (level == "info") log_level() = LogLevel::info;
        else if (level == "warn") log_level() = LogLevel::warn;
        else if (level == "quiet") log_level() = LogLevel::quiet;
        else throw py::value_error("unknown log level: " + level);
      },
      py::arg("level"));

  py::class_<Graph>(m, "Graph")
      .def_static(
          "from_edges",
          [](std::size_t n, const std::vector<std::pair<NodeId, NodeId>>& edges) {
            return Graph::from_edges(n, edges);
          },
          py::arg("num_nodes"), py::arg("edges"))
      .def_property_readonly("num_nodes", &Graph::num_nodes)
      .def_property_readonly("num_edges", &Graph::num_edges)
      .def("degree", &Graph::degree)
      .def("neighbors",
           [](const Graph& g, NodeId u) {
             if (u >= g.num_nodes()) throw py::index_error("node out of range");
             auto s = g.neighbors(u);
             return std::vector<NodeId>(s.begin(), s.end());
           })
      .def("edge_list", &Graph::edge_list)
      .def("is_valid", &Graph::is_valid);

  py::class_<NodeTable>(m, "NodeTable")
      .def_property_readonly("features", [](const NodeTable& t) { return to_numpy(t.features); })
      .def_readonly("labels", &NodeTable::labels)
      .def_readonly("num_classes", &NodeTable::num_classes);

  py::class_<Split>(m, "Split")
      .def(py::init<>())
      .def_readwrite("train", &Split::train)
      .def_readwrite("val", &Split::val)
      .def_readwrite("test", &Split::test);

  py::class_<Dataset>(m, "Dataset")
      .def_readonly("graph", &Dataset::graph)
      .def_readonly("nodes", &Dataset::nodes)
      .def_readonly("splits", &Dataset::splits)
      .def_readonly("name", &Dataset::name);

  py::class_<SyntheticSpec>(m, "SyntheticSpec")
      .def(py::init<>())
      .def_readwrite("num_nodes", &SyntheticSpec::num_nodes)
      .def_readwrite("num_classes", &SyntheticSpec::num_classes)
      .def_readwrite("avg_degree", &SyntheticSpec::avg_degree)
      .def_readwrite("target_edge_homophily", &SyntheticSpec::target_edge_homophily)
      .def_readwrite("feature_dim", &SyntheticSpec::feature_dim)
      .def_readwrite("class_separation", &SyntheticSpec::class_separation)
      .def_readwrite("seed", &SyntheticSpec::seed);

  m.def("generate_synthetic", &generate_synthetic, py::arg("spec"));
  m.def("make_splits", &make_splits, py::arg("num_nodes"), py::arg("num_splits"),
        py::arg("seed"));
  m.def("load_dataset", &load_dataset, py::arg("dir"), py::arg("default_splits") = 10,
        py::arg("split_seed") = 0);
  m.def(
      "save_dataset",
      [](const std::filesystem::path& dir, const Graph& g, const NodeTable& nodes) {
        save_dataset(dir, g, nodes);
      },
      py::arg("dir"), py::arg("graph"), py::arg("nodes"));

  m.def(
      "homophily_report",
      [](const Graph& g, const std::vector<int>& labels) {
        if (labels.size() != g.num_nodes()) throw py::value_error("label count mismatch");
        return report_dict(homophily_report(g, labels));
      },
      py::arg("graph"), py::arg("labels"));

  py::class_<EcgEdges>(m, "EcgEdges")
      .def_property_readonly("num_nodes", &EcgEdges::num_nodes)
      .def_property_readonly("k", &EcgEdges::k)
      .def_property_readonly("num_edges", &EcgEdges::num_edges)
      .def("neighbors",
           [](const EcgEdges& e, NodeId u) {
             if (u >= e.num_nodes()) throw py::index_error("node out of range");
             auto s = e.neighbors(u);
             return std::vector<NodeId>(s.begin(), s.end());
           })
      .def("scores",
           [](const EcgEdges& e, NodeId u) {
             if (u >= e.num_nodes()) throw py::index_error("node out of range");
             auto s = e.scores(u);
             return std::vector<double>(s.begin(), s.end());
           })
      .def("pairs", &EcgEdges::pairs);

  m.def(
      "cosine_topk",
      [](const FloatArray& emb, std::size_t k, unsigned threads) {
        const auto fm = from_numpy(emb);
        py::gil_scoped_release release;
        return cosine_topk(fm, k, threads);
      },
      py::arg("embedding"), py::arg("k"), py::arg("num_threads") = 0);

  m.def(
      "ecg_homophily",
      [](const EcgEdges& e, const std::vector<int>& labels) {
        if (labels.size() != e.num_nodes()) throw py::value_error("label count mismatch");
        return ecg_homophily(e, labels);
      },
      py::arg("edges"), py::arg("labels"));

  m.def(
      "train_mlp_embedding",
      [](const NodeTable& nodes, const Split& split, std::size_t width, std::size_t max_epochs,
         std::uint64_t seed) {
        MlpConfig cfg;
        cfg.width = width;
        cfg.max_epochs = max_epochs;
        cfg.seed = seed;
        auto r = [&] {
          py::gil_scoped_release release;
          return train_mlp(nodes, split, 0, cfg);
        }();
        return py::make_tuple(to_numpy(r.embedding.values()), r.val_accuracy);
      },
      py::arg("nodes"), py::arg("split"), py::arg("width") = 64, py::arg("max_epochs") = 300,
      py::arg("seed") = 0,
      "Trains the point-wise MLP on split.train; returns (embedding, val_accuracy).");

  m.def(
      "read_embeddings",
      [](const std::filesystem::path& file) {
        const auto e = read_embeddings(file);
        return py::make_tuple(to_numpy(e.values()), std::string(to_string(e.source())),
                              e.split_id());
      },
      py::arg("file"));

  m.def("git_blob_hash", &git_blob_hash, py::arg("content"));

  m.def(
      "default_config", [] { return RunConfig{}.to_kv(); },
      "Every experiment key with its default value.");

  m.def(
      "run_experiment",
      [](const std::map<std::string, std::string>& overrides,
         const std::filesystem::path& out_dir) {
        RunConfig cfg;
        cfg.apply(overrides);
        auto r = [&] {
          py::gil_scoped_release release;
          return run_experiment(cfg, out_dir);
        }();
        py::dict d;
        d["metric"] = std::string(to_string(r.metric));
        d["val"] = eval_dict(r.val);
        d["test"] = eval_dict(r.test);
        d["data_hash"] = r.data_hash;
        py::list ecg_h;
        for (const auto& s : r.splits) ecg_h.append(s.ecg_edge_homophily);
        d["ecg_edge_homophily"] = ecg_h;
        return d;
      },
      py::arg("config"), py::arg("out_dir"),
      "Runs one experiment with `key=value` overrides and writes results into out_dir.");
}
