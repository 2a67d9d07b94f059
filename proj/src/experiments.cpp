#include "relex/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <set>

#include <nlohmann/json.hpp>

#include "relex/digest.hpp"
#include "relex/error.hpp"

namespace relex {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

void write_text(const fs::path& path, const std::string& content) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + path.string());
    out << content;
    if (!out) throw Error("failed writing " + path.string());
}

void write_json(const fs::path& path, const json& doc) { write_text(path, doc.dump(2) + "\n"); }

std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out.push_back('"');
        out.push_back(c);
    }
    return out + "\"";
}

std::string fixed(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return buf;
}

void write_csv(const fs::path& path, const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& rows) {
    std::string out;
    auto line = [&](const std::vector<std::string>& cells) {
        for (std::size_t i = 0; i < cells.size(); ++i) out += (i ? "," : "") + csv_field(cells[i]);
        out += "\n";
    };
    line(header);
    for (const auto& r : rows) line(r);
    write_text(path, out);
}

std::vector<std::string> metric_cells(const Metrics& m) {
    return {fixed(m.precision), fixed(m.recall), fixed(m.f1), std::to_string(m.tp), std::to_string(m.fp),
            std::to_string(m.fn)};
}

json report_header(const Workspace& ws, const std::string& command) {
    return {{"command", command},
            {"match", "strict"},
            {"config_digest", ws.config.digest()},
            {"input_digest", ws.input_digest},
            {"config", ws.config.to_json()}};
}

struct Session {
    std::shared_ptr<Journal> journal;
    std::unique_ptr<Gateway> gateway;
};

// Fresh backend per session so scripted sequence positions restart.
Session open_session(const RunConfig& config, const fs::path& journal_path) {
    auto backend = make_backend(config);  // before the journal truncates a replayed file
    Session s;
    s.journal = std::make_shared<Journal>(journal_path);
    s.gateway = std::make_unique<Gateway>(backend, s.journal, make_retry_policy(config));
    return s;
}

std::map<std::string, std::size_t> termination_counts(const std::vector<Trajectory>& ts) {
    std::map<std::string, std::size_t> out;
    for (const auto& t : ts) ++out[to_string(t.terminated)];
    return out;
}

std::size_t error_count(const std::vector<Trajectory>& ts) {
    return static_cast<std::size_t>(std::count_if(ts.begin(), ts.end(), [](const Trajectory& t) {
        return t.terminated == Termination::error;
    }));
}

}  // namespace

json metrics_json(const Metrics& m) {
    return {{"precision", m.precision}, {"recall", m.recall}, {"f1", m.f1}, {"tp", m.tp}, {"fp", m.fp}, {"fn", m.fn}};
}

// ---- workspace ----

Workspace Workspace::load(const RunConfig& config) {
    Workspace ws;
    ws.config = config;
    const auto& c = config;
    LoadOptions lo;
    lo.strict = c.eval.strict;
    if (!c.eval.schema.empty()) lo.schema_path = c.resolve(c.eval.schema);

    std::vector<std::pair<std::string, fs::path>> inputs;
    auto note_input = [&](const std::string& name, const fs::path& p) {
        if (!p.empty()) inputs.emplace_back(name, c.resolve(p));
    };

    if (!c.eval.train.empty()) {
        ws.train = load_dataset(c.resolve(c.eval.train), c.eval.format, lo);
        note_input("train", c.eval.train);
    }
    if (!c.eval.test.empty()) {
        ws.test = load_dataset(c.resolve(c.eval.test), c.eval.format, lo);
        note_input("test", c.eval.test);
    }
    ws.schema = !c.eval.train.empty() ? ws.train.schema : ws.test.schema;
    for (const auto& rt : ws.test.schema.relation_types()) {
        if (!ws.schema.contains(rt.name)) {
            ws.schema.add(rt);
            ws.warnings.push_back("relation '" + rt.name + "' occurs only in the test set");
        }
    }
    for (const auto& w : ws.train.warnings) ws.warnings.push_back("train: " + w);
    for (const auto& w : ws.test.warnings) ws.warnings.push_back("test: " + w);
    note_input("schema", c.eval.schema);

    if (!c.retrieval.guidelines.empty()) {
        ws.guidelines = load_guidelines(c.resolve(c.retrieval.guidelines), &ws.schema);
        note_input("guidelines", c.retrieval.guidelines);
    }
    ws.kg = KGStore(c.policy());
    if (!c.retrieval.kg_aliases.empty()) {
        ws.kg = KGStore::load(c.resolve(c.retrieval.kg_aliases), c.resolve(c.retrieval.kg_triples), c.policy());
        note_input("kg_aliases", c.retrieval.kg_aliases);
        note_input("kg_triples", c.retrieval.kg_triples);
    }
    if (!c.retrieval.vectors.empty()) {
        ws.vectors = VectorFile::load(c.resolve(c.retrieval.vectors));
        note_input("vectors", c.retrieval.vectors);
    } else if (!c.retrieval.embeddings_endpoint.empty()) {
        HttpEndpoint e = HttpEndpoint::from_environment();
        e.base_url = c.retrieval.embeddings_endpoint;
        e.path = "/v1/embeddings";
        if (!c.retrieval.embeddings_model.empty()) e.model = c.retrieval.embeddings_model;
        ws.vectors = std::make_shared<HttpEmbeddingProvider>(e);
    }
    note_input("script", c.backend.kind == "scripted" ? c.backend.script : fs::path{});
    note_input("replay", c.backend.kind == "journal" ? c.backend.replay : fs::path{});

    std::string manifest;
    for (const auto& [name, path] : inputs) manifest += name + " " + sha256_file(path) + "\n";
    ws.input_digest = sha256_hex(manifest);
    return ws;
}

std::shared_ptr<Resources> Workspace::resources(std::vector<Sample> corpus, EncoderKind kind) const {
    IndexOptions io;
    io.language = config.eval.language;
    io.bm25_k1 = config.retrieval.bm25_k1;
    io.bm25_b = config.retrieval.bm25_b;
    io.vectors = vectors;
    return Resources::make(schema, std::move(corpus), kind, io, guidelines, kg);
}

std::shared_ptr<Backend> make_backend(const RunConfig& c) {
    if (c.backend.kind == "scripted") return ScriptedBackend::from_file(c.resolve(c.backend.script));
    if (c.backend.kind == "journal") return JournalBackend::from_file(c.resolve(c.backend.replay));
    if (c.backend.kind == "http") {
        HttpEndpoint e = HttpEndpoint::from_environment();
        if (!c.backend.endpoint.empty()) e.base_url = c.backend.endpoint;
        if (!c.backend.model.empty()) e.model = c.backend.model;
        e.timeout = std::chrono::seconds(c.backend.timeout_s);
        return std::make_shared<HttpBackend>(e);
    }
    throw ConfigError("unknown backend kind '" + c.backend.kind + "'");
}

RetryPolicy make_retry_policy(const RunConfig& c) {
    RetryPolicy p;
    p.backoff.clear();
    for (auto ms : c.backend.backoff_ms) p.backoff.emplace_back(ms);
    return p;
}

RunConfig apply_variant(const RunConfig& config, const std::string& v) {
    RunConfig c = config;
    if (v == "full") return c;
    if (v == "w/oR") {
        c.retrieval.enabled = false;
    } else if (v == "w/oM") {
        c.memory.mode = MemoryMode::off;
    } else if (v == "w/oRM") {
        c.retrieval.enabled = false;
        c.memory.mode = MemoryMode::off;
    } else if (v == "-samples" || v == "-doc" || v == "-KG") {
        if (std::find(c.retrieval.ablate.begin(), c.retrieval.ablate.end(), v) == c.retrieval.ablate.end()) {
            c.retrieval.ablate.push_back(v);
        }
    } else if (v == "random" || v == "tfidf" || v == "bm25" || v == "embedding") {
        c.retrieval.encoder = encoder_kind_from_string(v);
    } else if (v == "wM") {
        c.memory.mode = MemoryMode::shallow;
    } else if (v == "wM+") {
        c.memory.mode = MemoryMode::deep;
    } else {
        throw ConfigError("unknown variant '" + v +
                          "' (expected full, w/oR, w/oM, w/oRM, -samples, -doc, -KG, random, tfidf, bm25, embedding, wM "
                          "or wM+)");
    }
    return c;
}

std::string variant_slug(const std::string& v) {
    std::string out;
    for (char c : v) {
        if (c == '/') continue;
        if (c == '+') {
            out += "_plus";
        } else if (c == '-') {
            out += out.empty() ? "no_" : "-";
        } else {
            out.push_back(c);
        }
    }
    return out.empty() ? "variant" : out;
}

// ---- extract ----

ExtractReport cmd_extract(const RunConfig& config) {
    validate_config(config, Command::extract);
    auto ws = Workspace::load(config);
    ExtractReport report;
    report.directory = config.resolve(config.out);
    fs::create_directories(report.directory);

    auto session = open_session(config, report.directory / "journal.jsonl");
    Agent agent(ws.resources(ws.train.samples), config.agent_options(), *session.gateway);
    report.run = agent.run_corpus(ws.test.samples);

    write_trajectories(report.run.trajectories, report.directory / "trajectories.jsonl");
    json doc = report_header(ws, "extract");
    doc.update(metrics_json(report.run.metrics));
    doc["n_sentences"] = ws.test.samples.size();
    doc["terminations"] = termination_counts(report.run.trajectories);
    doc["errors"] = error_count(report.run.trajectories);
    doc["warnings"] = ws.warnings;
    doc["memory"] = {{"correct", report.run.memory.correct.size()},
                     {"wrong", report.run.memory.wrong.size()},
                     {"deep", report.run.memory.deep.size()},
                     {"reflections", report.run.memory.reflections.size()}};
    write_json(report.directory / "metrics.json", doc);
    if (config.memory.mode != MemoryMode::off) snapshot(report.run.memory, report.directory / "memory.json");
    return report;
}

// ---- ablate ----

std::vector<VariantRow> cmd_ablate(const RunConfig& config, const std::vector<std::string>& variants) {
    if (variants.size() < 2) throw ConfigError("ablate needs at least two variants");
    RunConfig checked = config;
    checked.eval.variants = variants;
    validate_config(checked, Command::ablate);
    std::set<std::string> slugs;
    for (const auto& v : variants) {
        validate_config(apply_variant(config, v), Command::extract);
        if (!slugs.insert(variant_slug(v)).second) throw ConfigError("duplicate variant '" + v + "'");
    }
    auto ws = Workspace::load(checked);
    auto dir = config.resolve(config.out);
    fs::create_directories(dir);

    std::vector<VariantRow> rows;
    json variant_docs = json::array();
    for (const auto& v : variants) {
        VariantRow row;
        row.variant = v;
        row.n_sentences = ws.test.samples.size();
        RunConfig vc = apply_variant(config, v);
        auto vdir = dir / variant_slug(v);
        try {
            fs::create_directories(vdir);
            auto session = open_session(vc, vdir / "journal.jsonl");
            Agent agent(ws.resources(ws.train.samples, vc.retrieval.encoder), vc.agent_options(), *session.gateway);
            auto run = agent.run_corpus(ws.test.samples);
            write_trajectories(run.trajectories, vdir / "trajectories.jsonl");
            row.metrics = run.metrics;
            row.status = "ok";
            if (auto errors = error_count(run.trajectories)) {
                row.error = std::to_string(errors) + " episode(s) aborted; see " + (vdir / "journal.jsonl").string();
            }
        } catch (const Error& e) {
            row.status = "failed";
            row.error = e.what();
        }
        json vd = {{"variant", v}, {"status", row.status}, {"n_sentences", row.n_sentences}, {"config_digest", vc.digest()}};
        vd.update(metrics_json(row.metrics));
        if (!row.error.empty()) vd["error"] = row.error;
        variant_docs.push_back(vd);
        rows.push_back(std::move(row));
    }

    json doc = report_header(ws, "ablate");
    doc["rows"] = variant_docs;
    doc["warnings"] = ws.warnings;
    write_json(dir / "ablate.json", doc);
    std::vector<std::vector<std::string>> csv;
    for (const auto& r : rows) {
        auto cells = std::vector<std::string>{r.variant, r.status};
        for (auto& m : metric_cells(r.metrics)) cells.push_back(m);
        cells.push_back(std::to_string(r.n_sentences));
        cells.push_back(r.error);
        csv.push_back(cells);
    }
    write_csv(dir / "ablate.csv", {"variant", "status", "precision", "recall", "f1", "tp", "fp", "fn", "n_sentences", "error"},
              csv);
    return rows;
}

// ---- lowres ----

std::vector<LowresPoint> cmd_lowres(const RunConfig& config, std::vector<std::size_t> ns) {
    RunConfig checked = config;
    checked.eval.ns = ns;
    validate_config(checked, Command::lowres);
    auto ws = Workspace::load(checked);
    std::vector<std::string> warnings = ws.warnings;
    std::set<std::size_t> seen;
    std::vector<std::size_t> unique_ns;
    for (auto n : ns) {
        if (seen.insert(n).second) unique_ns.push_back(n);
    }
    if (unique_ns.size() != ns.size()) {
        warnings.push_back("duplicate values in ns were dropped");
        std::cerr << "warning: duplicate values in ns were dropped\n";
        ns = std::move(unique_ns);
    }
    for (auto n : ns) {
        if (n > ws.train.samples.size()) {
            throw ConfigError("n = " + std::to_string(n) + " exceeds the training corpus size " +
                              std::to_string(ws.train.samples.size()));
        }
    }
    auto dir = config.resolve(config.out);
    fs::create_directories(dir);

    std::vector<LowresPoint> points;
    json docs = json::array();
    for (auto n : ns) {
        auto subset = sample_subset(ws.train.samples, n, config.seed);
        auto pdir = dir / ("n" + std::to_string(n));
        fs::create_directories(pdir);
        auto session = open_session(config, pdir / "journal.jsonl");
        Agent agent(ws.resources(subset), config.agent_options(), *session.gateway);
        auto run = agent.run_corpus(ws.test.samples);
        write_trajectories(run.trajectories, pdir / "trajectories.jsonl");
        LowresPoint p{n, run.metrics, ws.test.samples.size(), subset.size(), error_count(run.trajectories)};
        json d = {{"n", n}, {"n_sentences", p.n_sentences}, {"index_size", p.index_size}, {"errors", p.errors}};
        d.update(metrics_json(p.metrics));
        docs.push_back(d);
        points.push_back(p);
    }
    json doc = report_header(ws, "lowres");
    doc["points"] = docs;
    doc["warnings"] = warnings;
    write_json(dir / "lowres.json", doc);
    std::vector<std::vector<std::string>> csv;
    for (const auto& p : points) {
        std::vector<std::string> cells{std::to_string(p.n)};
        for (auto& m : metric_cells(p.metrics)) cells.push_back(m);
        cells.push_back(std::to_string(p.n_sentences));
        csv.push_back(cells);
    }
    write_csv(dir / "lowres.csv", {"n", "precision", "recall", "f1", "tp", "fp", "fn", "n_sentences"}, csv);
    return points;
}

// ---- memcurve ----

std::vector<CurvePoint> cmd_memcurve(const RunConfig& config, const std::vector<std::size_t>& checkpoints) {
    RunConfig checked = config;
    checked.eval.checkpoints = checkpoints;
    validate_config(checked, Command::memcurve);
    auto ws = Workspace::load(checked);

    // Probe: explicit file, else a held-out slice of the labelled corpus chosen by seed.
    std::vector<Sample> stream;
    std::vector<Sample> probe;
    if (!config.eval.probe.empty()) {
        LoadOptions lo;
        lo.strict = config.eval.strict;
        if (!config.eval.schema.empty()) lo.schema_path = config.resolve(config.eval.schema);
        probe = load_dataset(config.resolve(config.eval.probe), config.eval.format, lo).samples;
        stream = ws.train.samples;
    } else {
        auto n = ws.train.samples.size();
        std::size_t held = config.eval.probe_size > 0
                               ? config.eval.probe_size
                               : static_cast<std::size_t>(std::ceil(config.eval.probe_fraction * static_cast<double>(n)));
        if (held == 0 || held >= n) {
            throw ConfigError("the labelled corpus (" + std::to_string(n) + " samples) is too small for a held-out probe set");
        }
        auto perm = seeded_permutation(n, config.seed);
        std::vector<bool> is_probe(n, false);
        for (std::size_t i = 0; i < held; ++i) is_probe[perm[i]] = true;
        for (std::size_t i = 0; i < n; ++i) (is_probe[i] ? probe : stream).push_back(ws.train.samples[i]);
    }
    if (checkpoints.back() > stream.size()) {
        throw ConfigError("checkpoint " + std::to_string(checkpoints.back()) + " exceeds the stream size " +
                          std::to_string(stream.size()));
    }
    auto dir = config.resolve(config.out);
    fs::create_directories(dir);
    auto resources = ws.resources(stream);

    const std::vector<std::pair<std::string, MemoryMode>> variants = {
        {"w/oM", MemoryMode::off}, {"wM", MemoryMode::shallow}, {"wM+", MemoryMode::deep}};
    std::map<std::pair<std::size_t, std::string>, CurvePoint> by_key;
    for (const auto& [name, mode] : variants) {
        RunConfig vc = config;
        vc.memory.mode = mode;
        auto session = open_session(vc, dir / variant_slug(name) / "journal.jsonl");
        Agent agent(resources, vc.agent_options(), *session.gateway);
        Memory memory = agent.make_memory();
        std::size_t processed = 0;
        for (auto checkpoint : checkpoints) {
            for (; processed < checkpoint; ++processed) {
                if (mode == MemoryMode::off) continue;
                auto t = agent.extract(stream[processed], &memory);
                agent.remember(stream[processed], t, memory);
            }
            Memory frozen = memory;  // probing never writes
            Metrics total;
            std::size_t errors = 0;
            for (const auto& p : probe) {
                auto t = agent.extract(p, &frozen);
                if (t.terminated == Termination::error) ++errors;
                total = total + score(t.result, p.gold, config.policy());
            }
            const auto& st = memory.state();
            by_key[{checkpoint, name}] = {checkpoint, name, total, st.correct.size(), st.wrong.size(), st.deep.size(),
                                          st.reflections.size(), errors};
        }
    }

    std::vector<CurvePoint> points;
    for (auto checkpoint : checkpoints) {
        for (const auto& [name, mode] : variants) {
            (void)mode;
            points.push_back(by_key.at({checkpoint, name}));
        }
    }
    json rows = json::array();
    std::vector<std::vector<std::string>> csv;
    for (const auto& p : points) {
        json d = {{"checkpoint", p.checkpoint}, {"variant", p.variant},   {"memory_correct", p.correct},
                  {"memory_wrong", p.wrong},    {"memory_deep", p.deep}, {"memory_reflections", p.reflections},
                  {"errors", p.errors}};
        d.update(metrics_json(p.metrics));
        rows.push_back(d);
        std::vector<std::string> cells{std::to_string(p.checkpoint), p.variant};
        for (auto& m : metric_cells(p.metrics)) cells.push_back(m);
        for (auto c : {p.correct, p.wrong, p.deep, p.reflections}) cells.push_back(std::to_string(c));
        csv.push_back(cells);
    }
    json doc = report_header(ws, "memcurve");
    doc["stream_size"] = stream.size();
    doc["probe_size"] = probe.size();
    doc["rows"] = rows;
    doc["warnings"] = ws.warnings;
    write_json(dir / "memcurve.json", doc);
    write_csv(dir / "memcurve.csv",
              {"checkpoint", "variant", "precision", "recall", "f1", "tp", "fp", "fn", "memory_correct", "memory_wrong",
               "memory_deep", "memory_reflections"},
              csv);
    return points;
}

// ---- distill ----

DistillReport cmd_distill(const RunConfig& config) {
    validate_config(config, Command::distill);
    auto dir = config.resolve(config.out);
    fs::path log = config.eval.trajectories.empty() ? dir / "trajectories.jsonl" : config.resolve(config.eval.trajectories);
    if (!fs::is_regular_file(log)) throw ConfigError("trajectory log not found: " + log.string());
    auto ws = Workspace::load(config);
    auto trajectories = read_trajectories(log);
    fs::create_directories(dir);

    auto session = open_session(config, dir / "distill_journal.jsonl");
    DistillOptions options;
    options.validate = config.eval.validate_rationales;
    options.policy = config.policy();
    auto datasets = build_sft_datasets(trajectories, ws.test.samples, *session.gateway, options);
    export_sft(datasets.plain, dir / "sft_plain.jsonl", SftTemplate::plain, ws.schema, options.policy);
    export_sft(datasets.rationale, dir / "sft_rationale.jsonl", SftTemplate::rationale, ws.schema, options.policy);

    json doc = report_header(ws, "distill");
    doc["trajectory_log_digest"] = sha256_file(log);
    doc["report"] = datasets.report.to_json();
    doc["plain_records"] = datasets.plain.size();
    doc["rationale_records"] = datasets.rationale.size();
    write_json(dir / "distill_report.json", doc);
    return datasets.report;
}

}  // namespace relex
