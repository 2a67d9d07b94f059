#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "relex/agent.hpp"
#include "relex/corpus.hpp"

namespace relex {

struct BackendConfig {
    std::string kind = "scripted";  // scripted | http | journal
    std::filesystem::path script;   // scripted
    std::filesystem::path replay;   // journal
    std::string endpoint;           // http; empty = RELEX_LLM_ENDPOINT
    std::string model;              // http; empty = RELEX_LLM_MODEL
    std::int64_t timeout_s = 120;
    std::vector<std::int64_t> backoff_ms{1000, 2000, 4000};
};

struct RetrievalConfig {
    EncoderKind encoder = EncoderKind::bm25;
    std::size_t k = 5;
    std::size_t l = 5;
    CandidateMethod candidates = CandidateMethod::prior;
    RecognitionMethod recognition = RecognitionMethod::gazetteer;
    std::size_t kg_cap = 10;
    double bm25_k1 = 1.5;
    double bm25_b = 0.75;
    bool enabled = true;
    std::vector<std::string> ablate;  // subset of -samples, -doc, -KG
    std::filesystem::path vectors;    // JSONL vector file (embedding encoder)
    std::string embeddings_endpoint;  // alternative: OpenAI-compatible /v1/embeddings
    std::string embeddings_model;
    std::filesystem::path guidelines;
    std::filesystem::path kg_aliases;
    std::filesystem::path kg_triples;
};

struct MemoryConfig {
    MemoryMode mode = MemoryMode::off;
    VerifierMode verifier = VerifierMode::oracle;
    std::size_t k_each = 3;
};

struct AgentConfig {
    StrategyMode strategy_mode = StrategyMode::rule;
    StrategyKind fixed_strategy = StrategyKind::react;
    std::size_t max_rounds = 6;
    std::size_t short_length = 30;
    std::size_t min_mentions = 2;
    std::size_t observation_limit = 1500;
    bool prompt_context = true;
    bool tools = true;
    std::size_t workers = 1;
    ParseMode parse_mode = ParseMode::strict;
};

struct EvalConfig {
    std::filesystem::path train;
    std::filesystem::path test;
    DatasetFormat format = DatasetFormat::generic_jsonl;
    std::filesystem::path schema;
    bool strict = false;
    Language language = Language::english;
    std::optional<bool> case_fold;  // default follows language
    std::vector<std::string> variants;
    std::vector<std::size_t> ns;
    std::vector<std::size_t> checkpoints;
    std::filesystem::path probe;
    double probe_fraction = 0.2;
    std::size_t probe_size = 0;  // > 0: fixed-size probe drawn by seed instead of a fraction
    std::filesystem::path trajectories;
    bool validate_rationales = true;
};

struct RunConfig {
    std::uint64_t seed = 0;
    std::filesystem::path out = "out";
    BackendConfig backend;
    RetrievalConfig retrieval;
    MemoryConfig memory;
    AgentConfig agent;
    EvalConfig eval;

    // Directory relative paths are resolved against.
    std::filesystem::path base_dir = ".";

    std::filesystem::path resolve(const std::filesystem::path& p) const;
    NormalizationPolicy policy() const;
    AgentOptions agent_options() const;

    // Paths as written in the file, so digests do not depend on the checkout location.
    nlohmann::json to_json() const;
    std::string digest() const;
};

// Throws ConfigError on syntax errors, unknown keys, wrong types or values.
RunConfig load_config(const std::filesystem::path& path);
RunConfig parse_config(const std::string& toml_text, const std::filesystem::path& base_dir);

enum class Command { extract, ablate, lowres, memcurve, distill };

std::string to_string(Command c);

// Checks the configuration for `command` before any work happens: required
// paths exist, list parameters are well formed, and combinations are legal
// (e.g. sequence-matched scripts with concurrent workers). Throws ConfigError.
void validate_config(const RunConfig& config, Command command);

}  // namespace relex
