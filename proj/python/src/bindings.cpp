// JSON crosses the boundary as text; the Python package decodes it.
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "qmtot/cli.hpp"
#include "qmtot/difficulty.hpp"
#include "qmtot/evaluator.hpp"
#include "qmtot/promptkit.hpp"
#include "qmtot/selector.hpp"
#include "qmtot/store.hpp"

namespace py = pybind11;
using namespace qmtot;

namespace {

std::vector<OptionLabel> labels_from(const std::vector<std::string>& letters) {
  std::vector<OptionLabel> out;
  for (const auto& s : letters) {
    auto l = OptionLabel::parse(s);
    if (!l) throw RangeError("not an option label: '" + s + "'");
    out.push_back(*l);
  }
  return out;
}

std::vector<ChainRecord> chains_from(const std::string& text) {
  std::vector<ChainRecord> chains;
  for (const auto& j : Json::parse(text)) chains.push_back(chain_record_from_json(j));
  return chains;
}

}  // namespace

PYBIND11_MODULE(_qmtot, m) {
  m.doc() = "Tree-of-thoughts engine and benchmark harness for multiple-choice medical QA";

  static py::exception<Error> error(m, "Error");
  py::register_exception<RangeError>(m, "RangeError", error.ptr());
  py::register_exception<SchemaError>(m, "SchemaError", error.ptr());
  py::register_exception<ScoreParseError>(m, "ScoreParseError", error.ptr());

  m.def("final_score", &final_score, py::arg("r"), py::arg("c"), py::arg("alpha"));

  m.def(
      "extract_answer",
      [](const std::string& text, const std::vector<std::string>& valid)
          -> std::optional<std::string> {
        auto a = extract_answer(text, labels_from(valid));
        if (!a) return std::nullopt;
        return a->str();
      },
      py::arg("text"), py::arg("valid"));

  m.def(
      "extract_verdict",
      [](const std::string& text) { return std::string(to_string(extract_verdict(text))); },
      py::arg("text"));

  m.def("extract_score", &extract_score, py::arg("text"));

  m.def(
      "classify",
      [](double acc, double k1, double omega) {
        return std::string(to_string(classify(acc, k1, omega).level));
      },
      py::arg("acc"), py::arg("k1"), py::arg("omega"));

  m.def(
      "_aggregate",
      [](const std::string& chains_json) {
        Json out = Json::array();
        for (const auto& a : aggregate(chains_from(chains_json))) out.push_back(to_json(a));
        return out.dump();
      },
      py::arg("chains_json"));

  m.def(
      "_load_records",
      [](const std::string& path) {
        Json out = Json::array();
        for (const auto& r : load_record_file(path)) out.push_back(to_json(r));
        return out.dump();
      },
      py::arg("path"));

  m.def(
      "_build_report",
      [](const std::string& records_json, const std::string& manifest_json) {
        std::vector<RunRecord> records;
        for (const auto& j : Json::parse(records_json)) records.push_back(run_record_from_json(j));
        std::vector<ManifestEntry> manifest;
        for (const auto& j : Json::parse(manifest_json)) {
          manifest.push_back(manifest_entry_from_json(j));
        }
        return to_json(build_report(records, manifest)).dump();
      },
      py::arg("records_json"), py::arg("manifest_json"));

  m.def(
      "run_cli",
      [](const std::vector<std::string>& args) {
        std::ostringstream out;
        std::ostringstream err;
        int code = 0;
        {
          py::gil_scoped_release release;
          code = cli::run(args, out, err);
        }
        return py::make_tuple(code, out.str(), err.str());
      },
      py::arg("args"),
      "Runs one command line (without the program name); returns (exit_code, stdout, stderr).");
}
