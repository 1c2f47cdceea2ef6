#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

#include "o3dsg/errors.hpp"
#include "o3dsg/pipeline.hpp"

namespace py = pybind11;
using namespace o3dsg;

namespace {

// Commands log to a string that is handed back to Python.
template <typename F>
std::string logged(F&& f) {
  std::ostringstream log;
  f(log);
  return log.str();
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Open-vocabulary 3D scene graphs at desk scale";

  auto base = py::register_exception<Error>(m, "Error");
  py::register_exception<ParseError>(m, "ParseError", base.ptr());
  py::register_exception<DataError>(m, "DataError", base.ptr());
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
  py::register_exception<DecoderError>(m, "DecoderError", base.ptr());

  py::class_<ScoredLabel>(m, "ScoredLabel")
      .def(py::init<std::string, double>(), py::arg("label"), py::arg("score"))
      .def_readwrite("label", &ScoredLabel::label)
      .def_readwrite("score", &ScoredLabel::score)
      .def("__repr__", [](const ScoredLabel& s) { return "ScoredLabel(" + s.label + ", " + std::to_string(s.score) + ")"; });

  py::class_<EmbeddingTable>(m, "EmbeddingTable")
      .def(py::init([](std::string space, std::vector<std::string> labels, std::vector<std::vector<float>> vectors) {
             EmbeddingTable t{std::move(space), vectors.empty() ? 0u : std::uint32_t(vectors.front().size()),
                              std::move(labels), std::move(vectors)};
             t.validate();
             return t;
           }),
           py::arg("space"), py::arg("labels"), py::arg("vectors"))
      .def_readonly("space", &EmbeddingTable::space)
      .def_readonly("dim", &EmbeddingTable::dim)
      .def_readonly("labels", &EmbeddingTable::labels)
      .def_readonly("vectors", &EmbeddingTable::vectors)
      .def("__len__", &EmbeddingTable::size)
      .def("to_bytes", [](const EmbeddingTable& t) { return py::bytes(encode_table(t)); })
      .def_static("from_bytes", [](const py::bytes& b) { return decode_table(std::string(b)); });
  m.def("read_table", &read_table, py::arg("path"));

  m.def("cosine", [](const std::vector<float>& a, const std::vector<float>& b) { return cosine(a, b); });
  m.def("rank_by_cosine",
        [](const std::vector<float>& f, const EmbeddingTable& t, std::size_t k) { return rank_by_cosine(f, t, k); },
        py::arg("feature"), py::arg("table"), py::arg("top_k") = 0);

  py::class_<RecallItem>(m, "RecallItem")
      .def(py::init<Ranking, std::vector<std::string>>(), py::arg("ranking"), py::arg("truth"));
  py::class_<TripletItem>(m, "TripletItem")
      .def(py::init([](Ranking s, Ranking p, Ranking o, std::string gs, std::string gp, std::string go) {
             return TripletItem{std::move(s), std::move(p), std::move(o), std::move(gs), std::move(gp), std::move(go)};
           }),
           py::arg("subject"), py::arg("predicate"), py::arg("object"), py::arg("gt_subject"), py::arg("gt_predicate"),
           py::arg("gt_object"));
  m.def("recall_at_k", [](const std::vector<RecallItem>& items, std::size_t k) { return recall_at_k(items, k); });
  m.def("per_class_recall",
        [](const std::vector<RecallItem>& items, std::size_t k) { return per_class_recall(items, k); });
  m.def("mean_recall_at_k", &mean_recall_at_k);
  m.def("triplet_recall_at_k",
        [](const std::vector<TripletItem>& items, std::size_t k) { return triplet_recall_at_k(items, k); });

  py::class_<PipelineConfig>(m, "PipelineConfig")
      .def_readonly("work_dir", &PipelineConfig::work_dir)
      .def_readonly("checkpoint", &PipelineConfig::checkpoint)
      .def_readonly("report", &PipelineConfig::report)
      .def_readonly("eval_scenes", &PipelineConfig::eval_scenes);
  m.def("load_config", &load_config, py::arg("path"), py::arg("overrides") = std::vector<std::string>{});

  m.def(
      "generate_fixture",
      [](const std::filesystem::path& out, int train_scenes, int heldout_scenes, std::uint64_t seed) {
        FixtureSpec spec;
        spec.train_scenes = train_scenes;
        spec.heldout_scenes = heldout_scenes;
        spec.seed = seed;
        return generate_fixture(spec, out).config;
      },
      py::arg("out_dir"), py::arg("train_scenes") = 4, py::arg("heldout_scenes") = 4, py::arg("seed") = 7,
      "Writes the synthetic fixture; returns the path of its pipeline config.");

  m.def("select_frames", [](const PipelineConfig& c) { return logged([&](auto& log) { cmd_select_frames(c, log); }); },
        py::call_guard<py::gil_scoped_release>());
  m.def("extract", [](const PipelineConfig& c) { return logged([&](auto& log) { cmd_extract(c, log); }); },
        py::call_guard<py::gil_scoped_release>());
  m.def(
      "train",
      [](const PipelineConfig& c) {
        std::ostringstream log;
        std::vector<double> losses;
        for (const auto& r : cmd_train(c, log)) losses.push_back(r.mean_loss);
        return losses;
      },
      py::call_guard<py::gil_scoped_release>(), "Trains and returns the mean loss of every epoch.");
  m.def("infer", [](const PipelineConfig& c) { return logged([&](auto& log) { cmd_infer(c, log); }); },
        py::call_guard<py::gil_scoped_release>());
  m.def("evaluate", [](const PipelineConfig& c) {
    std::ostringstream log;
    std::string report;
    {
      py::gil_scoped_release release;
      report = cmd_eval(c, log).dump();
    }
    return py::module_::import("json").attr("loads")(report);
  });
}
