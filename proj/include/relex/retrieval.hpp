#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "relex/corpus.hpp"
#include "relex/gateway.hpp"
#include "relex/text.hpp"

namespace relex {

struct Embedding {
    std::vector<double> values;

    std::size_t dim() const { return values.size(); }
    // Throws DatasetError on NaN or infinite components.
    void validate() const;
};

// Source of dense vectors for the embedding retriever. No encoder runs in
// process: vectors come from a precomputed file or an embeddings service.
class EmbeddingProvider {
public:
    virtual ~EmbeddingProvider() = default;
    // nullopt when no vector is available for the sample.
    virtual std::optional<Embedding> sample_vector(const Sample& sample) = 0;
    virtual std::optional<Embedding> query_vector(std::string_view text) = 0;
};

// JSONL records {"id": <sample id>, "vector": [...]} and, for queries,
// {"text": "...", "vector": [...]}.
class VectorFile : public EmbeddingProvider {
public:
    VectorFile() = default;
    static std::shared_ptr<VectorFile> load(const std::filesystem::path& path);

    void add_sample(std::int64_t id, Embedding e);
    void add_text(std::string text, Embedding e);

    std::optional<Embedding> sample_vector(const Sample& sample) override;
    std::optional<Embedding> query_vector(std::string_view text) override;

private:
    std::map<std::int64_t, Embedding> by_id_;
    std::map<std::string, Embedding, std::less<>> by_text_;
};

// OpenAI-compatible /v1/embeddings client.
class HttpEmbeddingProvider : public EmbeddingProvider {
public:
    explicit HttpEmbeddingProvider(HttpEndpoint endpoint);
    std::optional<Embedding> sample_vector(const Sample& sample) override;
    std::optional<Embedding> query_vector(std::string_view text) override;

private:
    HttpEndpoint endpoint_;
};

enum class EncoderKind { random, tfidf, bm25, embedding };

EncoderKind encoder_kind_from_string(std::string_view name);
std::string to_string(EncoderKind kind);

struct IndexOptions {
    Language language = Language::english;
    double bm25_k1 = 1.5;
    double bm25_b = 0.75;
    std::shared_ptr<EmbeddingProvider> vectors;
};

struct RetrievalHit {
    std::int64_t sample_id = 0;
    double score = 0.0;
    std::size_t rank = 0;

    bool operator==(const RetrievalHit&) const = default;
};

struct RetrievalResult {
    std::vector<RetrievalHit> hits;
    // Set when a tfidf/bm25 query has no tokens.
    bool empty_query = false;
};

struct RetrieveOptions {
    std::set<std::int64_t> exclude;
    std::uint64_t seed = 0;
};

// Immutable retrieval structure over a sample corpus. Hits are ordered by
// score descending then sample id ascending, ranks starting at 1.
class SampleIndex {
public:
    // Throws DatasetError when the embedding kind lacks vectors for some
    // samples (all missing ids are listed).
    static SampleIndex build(const std::vector<Sample>& samples, EncoderKind kind, const IndexOptions& options = {});

    RetrievalResult retrieve(std::string_view query, std::size_t k, const RetrieveOptions& options = {}) const;
    RetrievalResult retrieve_vector(const Embedding& query, std::size_t k, const RetrieveOptions& options = {}) const;

    EncoderKind kind() const { return kind_; }
    std::size_t size() const { return sample_ids_.size(); }
    bool empty() const { return sample_ids_.empty(); }
    const std::vector<std::int64_t>& sample_ids() const { return sample_ids_; }
    const IndexOptions& options() const { return options_; }

    // Corpus statistics (tfidf/bm25).
    std::size_t document_frequency(std::string_view term) const;
    double average_document_length() const { return avgdl_; }
    const std::vector<std::size_t>& document_lengths() const { return doc_lengths_; }
    std::size_t vocabulary_size() const { return vocabulary_.size(); }

private:
    struct Posting {
        std::uint32_t doc;
        std::uint32_t tf;
    };

    SampleIndex() = default;
    // Distinct in-vocabulary query term ids in ascending (lexicographic) order
    // with their query frequencies.
    std::vector<std::pair<std::uint32_t, std::uint32_t>> query_terms(std::string_view query, bool& empty) const;
    RetrievalResult rank(const std::vector<double>& scores, std::size_t k, const RetrieveOptions& options) const;

    EncoderKind kind_ = EncoderKind::random;
    IndexOptions options_;
    std::vector<std::int64_t> sample_ids_;

    std::map<std::string, std::uint32_t, std::less<>> vocabulary_;
    std::vector<std::uint32_t> df_;
    std::vector<double> idf_;
    std::vector<std::vector<Posting>> postings_;
    std::vector<std::size_t> doc_lengths_;
    double avgdl_ = 0.0;
    // tfidf: per-document l2-normalized weights, aligned with postings_.
    std::vector<std::vector<double>> tfidf_weights_;
    std::vector<Embedding> embeddings_;
};

SampleIndex build_index(const std::vector<Sample>& samples, EncoderKind kind, const IndexOptions& options = {});
RetrievalResult retrieve_samples(const SampleIndex& index, std::string_view query, std::size_t k,
                                 const RetrieveOptions& options = {});

// Relation frequency prior over a labelled corpus.
class RelationPrior {
public:
    RelationPrior() = default;
    RelationPrior(const Schema& schema, const std::vector<Sample>& samples);

    // The l most frequent relations; ties (including zero counts) in schema order.
    std::vector<std::string> top(std::size_t l) const;
    std::size_t count(std::string_view relation) const;

private:
    std::vector<std::pair<std::string, std::size_t>> ranked_;
};

enum class CandidateMethod { llm, prior };

CandidateMethod candidate_method_from_string(std::string_view name);
std::string to_string(CandidateMethod method);

struct CandidateResult {
    std::vector<std::string> relations;
    bool fell_back = false;
};

// Splits a model answer on commas, semicolons and newlines, strips list
// markers and quotes, and keeps names from `allowed` in answer order.
std::vector<std::string> parse_relation_list(std::string_view response, const std::vector<std::string>& allowed,
                                             std::size_t cap);

// The llm method asks the gateway for a relation list, keeps schema names in
// answer order, and falls back to the prior when none survive (journaled).
CandidateResult retrieve_candidate_relations(std::string_view text, const Schema& schema, CandidateMethod method,
                                             std::size_t l, const RelationPrior& prior, Gateway* gateway);

}  // namespace relex
