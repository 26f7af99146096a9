#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <map>

#include "kcnn/error.hpp"
#include "kcnn/pipeline.hpp"

namespace py = pybind11;
using namespace kcnn;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Image to_image(const Array& a) {
  if (a.ndim() != 2) throw ShapeError("expected a 2-D array");
  const auto h = static_cast<int>(a.shape(0));
  const auto w = static_cast<int>(a.shape(1));
  return Image(h, w, std::vector<double>(a.data(), a.data() + a.size()));
}

Array to_array(const Image& img) {
  Array out({img.height(), img.width()});
  std::copy(img.pixels().begin(), img.pixels().end(), out.mutable_data());
  return out;
}

PipelineConfig to_config(const std::map<std::string, std::string>& settings, int threads) {
  PipelineConfig cfg;
  for (const auto& [k, v] : settings) cfg.set(k, v);
  cfg.threads = threads;
  cfg.validate();
  return cfg;
}

py::list results_to_list(const QueryResult& res) {
  py::list out;
  for (const auto& r : res) out.append(py::make_tuple(r.image_id, r.score));
  return out;
}

}  // namespace

PYBIND11_MODULE(_kcnn, m) {
  m.doc() = "Patch-proposal Fisher-vector image retrieval";

  // Owned for the lifetime of the interpreter.
  static PyObject* error_type =
      PyErr_NewException("kcnn._kcnn.KcnnError", PyExc_RuntimeError, nullptr);
  m.add_object("KcnnError", py::handle(error_type));
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      py::object exc = py::handle(error_type)(py::str(e.stage() + ": " + e.what()));
      py::setattr(exc, "stage", py::str(e.stage()));
      PyErr_SetObject(error_type, exc.ptr());
    }
  });

  m.def("read_pgm", [](const std::string& path) { return to_array(read_pgm(path)); },
        py::arg("path"));
  m.def("write_pgm", [](const Array& a, const std::string& path) { write_pgm(to_image(a), path); },
        py::arg("image"), py::arg("path"));

  m.def(
      "propose",
      [](const Array& a, const std::map<std::string, std::string>& settings) {
        const Image img = to_image(a);
        py::list out;
        for (const auto& p : proposals_for(img, to_config(settings, 1))) {
          out.append(py::make_tuple(p.x, p.y, p.w, p.h, p.objectness));
        }
        return out;
      },
      py::arg("image"), py::arg("settings") = std::map<std::string, std::string>{},
      "Patches as (x, y, w, h, score) tuples.");

  m.def("embed_patch", [](const Array& a) { return embed_patch(to_image(a)).values; },
        py::arg("patch"));
  m.def("embed_image_global", [](const Array& a) { return embed_image_global(to_image(a)).values; },
        py::arg("image"));

  m.def(
      "generate_corpus",
      [](const std::string& out, int n_base, int side, std::uint64_t seed) {
        generate_corpus(out, SynthOptions{n_base, side, seed});
      },
      py::arg("out_dir"), py::arg("n_base") = 20, py::arg("side") = 128, py::arg("seed") = 42);

  py::class_<Index>(m, "Index")
      .def_static("load", &Index::load, py::arg("path"))
      .def_property_readonly("size", &Index::size)
      .def_property_readonly("dim", &Index::dim)
      .def_property_readonly("ids", &Index::ids)
      .def("vector",
           [](const Index& idx, const std::string& id) {
             const auto pos = idx.find(id);
             if (pos == idx.size()) throw ConfigError("unknown image id '" + id + "'");
             const auto v = idx.vector(pos);
             return std::vector<double>(v.begin(), v.end());
           },
           py::arg("image_id"))
      .def("search",
           [](const Index& idx, const std::vector<double>& q, std::size_t k) {
             return results_to_list(idx.search(std::span<const double>(q), k));
           },
           py::arg("query"), py::arg("k") = 10)
      .def("search_id",
           [](const Index& idx, const std::string& id, std::size_t k) {
             const auto pos = idx.find(id);
             if (pos == idx.size()) throw ConfigError("unknown image id '" + id + "'");
             return results_to_list(idx.search(idx.vector(pos), k));
           },
           py::arg("image_id"), py::arg("k") = 10);

  m.def(
      "run_pipeline",
      [](const std::string& corpus, const std::string& out,
         const std::map<std::string, std::string>& settings, int threads) {
        PipelineOutputs res;
        {
          py::gil_scoped_release release;
          res = run_pipeline(to_config(settings, threads), corpus, out);
        }
        return res.index;
      },
      py::arg("corpus_dir"), py::arg("out_dir"),
      py::arg("settings") = std::map<std::string, std::string>{}, py::arg("threads") = 0,
      "Runs the full pipeline and returns the built index.");

  m.def(
      "evaluate",
      [](const Index& idx, const std::string& gt_path, const std::string& mode) {
        const auto report = evaluate(idx, load_ground_truth(gt_path, false),
                                     eval_mode_from_string(mode));
        return py::make_tuple(report.overall, report.per_query);
      },
      py::arg("index"), py::arg("groundtruth"), py::arg("mode") = "map",
      "Returns (overall, [(query_id, value), ...]).");
}
