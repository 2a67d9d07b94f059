#pragma once

#include <cstddef>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "relex/agent.hpp"
#include "relex/config.hpp"
#include "relex/distill.hpp"

namespace relex {

// Everything a command loads from the configuration.
struct Workspace {
    RunConfig config;
    Dataset train;
    Dataset test;
    Schema schema;  // train schema extended with relations only seen in test
    std::vector<GuidelineSnippet> guidelines;
    KGStore kg;
    std::shared_ptr<EmbeddingProvider> vectors;
    std::string input_digest;
    std::vector<std::string> warnings;

    static Workspace load(const RunConfig& config);

    std::shared_ptr<Resources> resources(std::vector<Sample> corpus, EncoderKind kind) const;
    std::shared_ptr<Resources> resources(std::vector<Sample> corpus) const {
        return resources(std::move(corpus), config.retrieval.encoder);
    }
};

std::shared_ptr<Backend> make_backend(const RunConfig& config);
RetryPolicy make_retry_policy(const RunConfig& config);

// Applies a named variant: full, w/oR, w/oM, w/oRM, -samples, -doc, -KG,
// random, tfidf, bm25, embedding, wM, wM+. Throws ConfigError for other names.
RunConfig apply_variant(const RunConfig& config, const std::string& variant);
// File-system friendly variant name ("w/oR" -> "wo_R").
std::string variant_slug(const std::string& variant);

nlohmann::json metrics_json(const Metrics& m);

struct ExtractReport {
    CorpusRun run;
    std::filesystem::path directory;
};

// Writes trajectories.jsonl, journal.jsonl and metrics.json into `out`.
ExtractReport cmd_extract(const RunConfig& config);

struct VariantRow {
    std::string variant;
    std::string status;  // ok | failed
    Metrics metrics;
    std::size_t n_sentences = 0;
    std::string error;
};

// One row per variant over the same sentences and seed; ablate.csv + ablate.json.
std::vector<VariantRow> cmd_ablate(const RunConfig& config, const std::vector<std::string>& variants);

struct LowresPoint {
    std::size_t n = 0;
    Metrics metrics;
    std::size_t n_sentences = 0;
    std::size_t index_size = 0;
    std::size_t errors = 0;  // episodes that ended in Termination::error
};

// Duplicate ns are dropped with a warning; lowres.csv + lowres.json.
std::vector<LowresPoint> cmd_lowres(const RunConfig& config, std::vector<std::size_t> ns);

struct CurvePoint {
    std::size_t checkpoint = 0;
    std::string variant;  // w/oM | wM | wM+
    Metrics metrics;
    std::size_t correct = 0;
    std::size_t wrong = 0;
    std::size_t deep = 0;
    std::size_t reflections = 0;
    std::size_t errors = 0;  // probe episodes that ended in Termination::error
};

// Streams the labelled corpus into memory and scores a held-out probe set at
// each checkpoint; memcurve.csv + memcurve.json.
std::vector<CurvePoint> cmd_memcurve(const RunConfig& config, const std::vector<std::size_t>& checkpoints);

// Reads the trajectory log and writes sft_plain.jsonl, sft_rationale.jsonl and
// distill_report.json.
DistillReport cmd_distill(const RunConfig& config);

}  // namespace relex
