#include <optional>
#include <string>
#include <tuple>
#include <vector>

#include <nlohmann/json.hpp>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "relex/config.hpp"
#include "relex/corpus.hpp"
#include "relex/error.hpp"
#include "relex/experiments.hpp"
#include "relex/grammar.hpp"

namespace py = pybind11;
namespace fs = std::filesystem;

using TripleTuple = std::tuple<std::string, std::string, std::string>;

namespace {

relex::Triple to_triple(const TripleTuple& t) { return {std::get<0>(t), std::get<1>(t), std::get<2>(t)}; }
TripleTuple to_tuple(const relex::Triple& t) { return {t.head, t.relation, t.tail}; }

std::vector<relex::Triple> to_triples(const std::vector<TripleTuple>& ts) {
    std::vector<relex::Triple> out;
    for (const auto& t : ts) out.push_back(to_triple(t));
    return out;
}

py::dict metrics_dict(const relex::Metrics& m) {
    py::dict d;
    d["precision"] = m.precision;
    d["recall"] = m.recall;
    d["f1"] = m.f1;
    d["tp"] = m.tp;
    d["fp"] = m.fp;
    d["fn"] = m.fn;
    return d;
}

// nlohmann -> python through the json module; the documents are small.
py::object to_python(const nlohmann::json& doc) { return py::module_::import("json").attr("loads")(doc.dump()); }

relex::RunConfig load(const fs::path& path, std::optional<std::uint64_t> seed, std::optional<fs::path> out,
                      std::optional<std::string> memory) {
    auto c = relex::load_config(path);
    if (seed) c.seed = *seed;
    if (out) c.out = fs::absolute(*out);
    if (memory) c.memory.mode = relex::memory_mode_from_string(*memory);
    return c;
}

}  // namespace

PYBIND11_MODULE(_relex, m) {
    m.doc() = "Relation extraction agent: scoring, triple grammar and experiment commands";

    // translators run most-recent first, so the base goes in first
    auto error = py::register_exception<relex::Error>(m, "Error", PyExc_RuntimeError);
    py::register_exception<relex::ConfigError>(m, "ConfigError", error.ptr());
    py::register_exception<relex::DatasetError>(m, "DatasetError", error.ptr());
    py::register_exception<relex::ParseError>(m, "ParseError", error.ptr());
    py::register_exception<relex::TransportError>(m, "TransportError", error.ptr());
    py::register_exception<relex::ScriptMissError>(m, "ScriptMissError", error.ptr());
    py::register_exception<relex::PreconditionError>(m, "PreconditionError", error.ptr());

    m.def(
        "score",
        [](const std::vector<TripleTuple>& predicted, const std::vector<TripleTuple>& gold, bool case_fold) {
            return metrics_dict(relex::score(to_triples(predicted), to_triples(gold), relex::NormalizationPolicy{case_fold}));
        },
        py::arg("predicted"), py::arg("gold"), py::arg("case_fold") = true,
        "Strict-match precision, recall and F1 of one predicted set against gold.");

    m.def(
        "normalize_triple",
        [](const TripleTuple& t, bool case_fold) {
            return to_tuple(relex::normalize_triple(to_triple(t), relex::NormalizationPolicy{case_fold}));
        },
        py::arg("triple"), py::arg("case_fold") = true);

    m.def(
        "parse_triples",
        [](const std::string& text, const std::vector<std::string>& relations, bool lenient) {
            relex::Schema schema;
            for (const auto& r : relations) schema.add({r});
            auto parsed = relex::parse_triples(text, schema, lenient ? relex::ParseMode::lenient : relex::ParseMode::strict);
            std::vector<TripleTuple> out;
            for (const auto& t : parsed.triples) out.push_back(to_tuple(t));
            py::list issues;
            for (const auto& i : parsed.issues) {
                py::dict d;
                d["kind"] = relex::to_string(i.kind);
                d["message"] = i.message;
                d["kept"] = i.kept;
                issues.append(d);
            }
            return py::make_tuple(out, issues);
        },
        py::arg("text"), py::arg("relations") = std::vector<std::string>{}, py::arg("lenient") = false,
        "Returns (triples, issues); never raises on malformed text.");

    m.def(
        "format_triples", [](const std::vector<TripleTuple>& ts) { return relex::format_triples(to_triples(ts)); },
        py::arg("triples"));

    m.def(
        "load_config",
        [](const fs::path& path) { return to_python(relex::load_config(path).to_json()); }, py::arg("path"),
        "Parsed configuration as a dict (paths resolved against the file's directory).");

    m.def(
        "extract",
        [](const fs::path& config, std::optional<std::uint64_t> seed, std::optional<fs::path> out,
           std::optional<std::string> memory) {
            auto c = load(config, seed, out, memory);
            relex::ExtractReport r;
            {
                py::gil_scoped_release release;
                r = relex::cmd_extract(c);
            }
            py::dict d = metrics_dict(r.run.metrics);
            d["n_sentences"] = r.run.trajectories.size();
            d["directory"] = r.directory;
            return d;
        },
        py::arg("config"), py::arg("seed") = py::none(), py::arg("out") = py::none(), py::arg("memory") = py::none());

    m.def(
        "ablate",
        [](const fs::path& config, std::optional<std::vector<std::string>> variants, std::optional<std::uint64_t> seed,
           std::optional<fs::path> out) {
            auto c = load(config, seed, out, std::nullopt);
            std::vector<relex::VariantRow> rows;
            {
                py::gil_scoped_release release;
                rows = relex::cmd_ablate(c, variants ? *variants : c.eval.variants);
            }
            py::list result;
            for (const auto& r : rows) {
                py::dict d = metrics_dict(r.metrics);
                d["variant"] = r.variant;
                d["status"] = r.status;
                d["n_sentences"] = r.n_sentences;
                d["error"] = r.error;
                result.append(d);
            }
            return result;
        },
        py::arg("config"), py::arg("variants") = py::none(), py::arg("seed") = py::none(), py::arg("out") = py::none());

    m.def(
        "lowres",
        [](const fs::path& config, std::optional<std::vector<std::size_t>> ns, std::optional<std::uint64_t> seed,
           std::optional<fs::path> out) {
            auto c = load(config, seed, out, std::nullopt);
            std::vector<relex::LowresPoint> points;
            {
                py::gil_scoped_release release;
                points = relex::cmd_lowres(c, ns ? *ns : c.eval.ns);
            }
            py::list result;
            for (const auto& p : points) {
                py::dict d = metrics_dict(p.metrics);
                d["n"] = p.n;
                d["index_size"] = p.index_size;
                d["n_sentences"] = p.n_sentences;
                d["errors"] = p.errors;
                result.append(d);
            }
            return result;
        },
        py::arg("config"), py::arg("ns") = py::none(), py::arg("seed") = py::none(), py::arg("out") = py::none());

    m.def(
        "memcurve",
        [](const fs::path& config, std::optional<std::vector<std::size_t>> checkpoints, std::optional<std::uint64_t> seed,
           std::optional<fs::path> out) {
            auto c = load(config, seed, out, std::nullopt);
            std::vector<relex::CurvePoint> points;
            {
                py::gil_scoped_release release;
                points = relex::cmd_memcurve(c, checkpoints ? *checkpoints : c.eval.checkpoints);
            }
            py::list result;
            for (const auto& p : points) {
                py::dict d = metrics_dict(p.metrics);
                d["checkpoint"] = p.checkpoint;
                d["variant"] = p.variant;
                d["correct"] = p.correct;
                d["wrong"] = p.wrong;
                d["deep"] = p.deep;
                d["reflections"] = p.reflections;
                d["errors"] = p.errors;
                result.append(d);
            }
            return result;
        },
        py::arg("config"), py::arg("checkpoints") = py::none(), py::arg("seed") = py::none(), py::arg("out") = py::none());

    m.def(
        "distill",
        [](const fs::path& config, std::optional<fs::path> out) {
            auto c = load(config, std::nullopt, out, std::nullopt);
            relex::DistillReport report;
            {
                py::gil_scoped_release release;
                report = relex::cmd_distill(c);
            }
            return to_python(report.to_json());
        },
        py::arg("config"), py::arg("out") = py::none());
}
