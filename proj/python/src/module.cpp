#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "taxoria/embeddings.hpp"
#include "taxoria/error.hpp"
#include "taxoria/generation.hpp"
#include "taxoria/merge.hpp"
#include "taxoria/orchestrator.hpp"
#include "taxoria/taxonomy.hpp"

namespace py = pybind11;
using namespace taxoria;

namespace {

py::dict stats_dict(const TaxonomyStats& s) {
  py::dict d;
  d["class_count"] = s.class_count;
  d["max_depth"] = s.max_depth;
  return d;
}

// Runs a replay-backed enrichment; the similarity comes from static vectors.
py::dict enrich(const std::string& taxonomy_json, const std::filesystem::path& replay_dir,
                const std::filesystem::path& vectors, const std::string& model_id, const std::string& strategy,
                double rho) {
  auto seed = parse_taxonomy(taxonomy_json);
  RunConfig cfg;
  cfg.model_id = model_id;
  cfg.filter.rho = rho;
  auto s = parse_strategy(strategy);
  if (!s) throw Error(ErrorCode::InvalidConfig, "unknown strategy: " + strategy);
  cfg.strategy = *s;
  cfg.validate();
  auto provider = std::make_shared<StaticWordVectors>(load_static_vectors(vectors));
  auto similarity = std::make_shared<EmbeddingSimilarity>(provider, nullptr, SimilarityMode::StaticOnly);

  std::string taxonomy, report, decisions;
  {
    py::gil_scoped_release release;
    Enrichment run(seed, cfg, {std::make_shared<ReplayLlmClient>(replay_dir), similarity});
    run.run();
    taxonomy = serialize_taxonomy(run.taxonomy());
    report = report_to_json(run.report()).dump();
    for (const auto& d : run.decisions()) decisions += decision_to_json(d).dump() + "\n";
  }
  py::dict out;
  out["taxonomy"] = taxonomy;
  out["report"] = report;
  out["decisions"] = decisions;
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Taxonomy enrichment core";

  // args are (code, message); never freed, like any module-level type.
  static PyObject* taxoria_error = PyErr_NewException("taxoria._core.TaxoriaError", PyExc_RuntimeError, nullptr);
  m.attr("TaxoriaError") = py::handle(taxoria_error);
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      PyErr_SetObject(taxoria_error, py::make_tuple(std::string(error_code_name(e.code())), e.what()).ptr());
    }
  });

  m.def(
      "validate",
      [](const std::string& doc, bool lenient) {
        return stats_dict(parse_taxonomy(doc, lenient ? ParseMode::Lenient : ParseMode::Strict).stats());
      },
      py::arg("document"), py::arg("lenient") = false, "Parses a taxonomy document and returns its stats.");
  m.def(
      "normalize", [](const std::string& doc) { return serialize_taxonomy(parse_taxonomy(doc)); },
      py::arg("document"), "Round-trips a document through the canonical serializer.");
  m.def(
      "merge",
      [](const std::string& left, const std::string& right) {
        auto r = merge_taxonomies(parse_taxonomy(left), parse_taxonomy(right));
        py::dict d;
        d["taxonomy"] = serialize_taxonomy(r.taxonomy);
        d["report"] = merge_report_to_json(r.report).dump();
        d["added"] = r.outcome.added_count;
        return d;
      },
      py::arg("left"), py::arg("right"));
  m.def(
      "build_prompt",
      [](const std::string& node, const std::vector<std::string>& path) { return build_prompt(node, path); },
      py::arg("node"), py::arg("path"));
  m.def("replay_key", [](const std::string& prompt) { return replay_key(prompt); }, py::arg("prompt"));
  m.def(
      "parse_children", [](const std::string& raw) { return parse_children_json(raw); }, py::arg("raw"),
      "Extracts candidate names from a model response. Raises TaxoriaError when nothing is recoverable.");
  m.def(
      "cosine", [](const std::vector<double>& u, const std::vector<double>& v) { return cosine(u, v); },
      py::arg("u"), py::arg("v"));
  m.def("enrich", &enrich, py::arg("taxonomy"), py::arg("replay_dir"), py::arg("vectors"),
        py::arg("model_id") = "llama3", py::arg("strategy") = "bfs", py::arg("rho") = 0.9);
}
