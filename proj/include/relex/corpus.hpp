#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "relex/text.hpp"

namespace relex {

struct RelationType {
    std::string name;
    std::string description;
    std::string head_type = "entity";
    std::string tail_type = "entity";
    std::vector<std::string> guideline_refs;

    bool operator==(const RelationType&) const = default;
};

// How a flattened DuIE relation name maps back to the original predicate and
// object slot ("@value" for the primary object).
struct FlattenedSlot {
    std::string predicate;
    std::string slot;

    bool operator==(const FlattenedSlot&) const = default;
};

// Ordered relation vocabulary. Order is the tie-break order used downstream.
class Schema {
public:
    Schema() = default;
    explicit Schema(std::string dataset_id) : dataset_id_(std::move(dataset_id)) {}

    // Throws DatasetError on duplicate or empty names.
    void add(RelationType type);

    bool contains(std::string_view name) const;
    const RelationType* find(std::string_view name) const;
    // Position in declaration order; npos when absent.
    std::size_t position(std::string_view name) const;

    const std::vector<RelationType>& relation_types() const { return types_; }
    std::vector<std::string> names() const;
    std::size_t size() const { return types_.size(); }
    bool empty() const { return types_.empty(); }

    const std::string& dataset_id() const { return dataset_id_; }
    void set_dataset_id(std::string id) { dataset_id_ = std::move(id); }

    std::map<std::string, FlattenedSlot>& flattening() { return flattening_; }
    const std::map<std::string, FlattenedSlot>& flattening() const { return flattening_; }

    bool operator==(const Schema& other) const {
        return dataset_id_ == other.dataset_id_ && types_ == other.types_ && flattening_ == other.flattening_;
    }

private:
    std::string dataset_id_;
    std::vector<RelationType> types_;
    std::map<std::string, std::size_t> index_;
    std::map<std::string, FlattenedSlot> flattening_;
};

struct Triple {
    std::string head;
    std::string relation;
    std::string tail;

    // False when any field is empty, e.g. after normalization stripped it.
    bool valid() const { return !head.empty() && !relation.empty() && !tail.empty(); }

    auto operator<=>(const Triple&) const = default;
    bool operator==(const Triple&) const = default;
};

struct Sample {
    std::int64_t id = 0;
    std::string text;
    std::vector<Triple> gold;

    bool operator==(const Sample&) const = default;
};

struct NormalizationPolicy {
    // Case-fold heads and tails. On for English corpora, off for Chinese.
    bool case_fold = false;

    static NormalizationPolicy english() { return {true}; }
    static NormalizationPolicy chinese() { return {false}; }
};

std::string normalize_surface(std::string_view s, const NormalizationPolicy& policy);

// NFC, trim, whitespace collapse, then optional case fold of head and tail.
// The relation name is never case-folded.
Triple normalize_triple(const Triple& t, const NormalizationPolicy& policy);

struct Metrics {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    std::size_t tp = 0;
    std::size_t fp = 0;
    std::size_t fn = 0;

    static Metrics from_counts(std::size_t tp, std::size_t fp, std::size_t fn);
    // Micro pooling of raw counts.
    Metrics operator+(const Metrics& other) const;
};

Metrics score(const std::vector<Triple>& predicted, const std::vector<Triple>& gold,
              const NormalizationPolicy& policy);

enum class DatasetFormat { duie_jsonl, scierc_json, generic_jsonl };

DatasetFormat dataset_format_from_string(std::string_view name);
std::string to_string(DatasetFormat format);

struct LoadOptions {
    // Strict mode fails on malformed records and unknown relations; lenient
    // mode skips malformed records and keeps unknown relations with a warning.
    bool strict = false;
    std::optional<std::filesystem::path> schema_path;
};

struct Dataset {
    Schema schema;
    std::vector<Sample> samples;
    std::vector<std::string> warnings;
};

Dataset load_dataset(const std::filesystem::path& path, DatasetFormat format, const LoadOptions& options = {});

// Sidecar: JSON array of {name, description, head_type, tail_type}.
Schema load_schema(const std::filesystem::path& path);
void write_schema(const Schema& schema, const std::filesystem::path& path);

void write_generic_jsonl(const std::vector<Sample>& samples, std::ostream& out);
void write_generic_jsonl(const std::vector<Sample>& samples, const std::filesystem::path& path);

// Deterministic subset of size n in original id order. Subsets drawn with the
// same seed are nested: sample_subset(s, a, seed) is a subset of
// sample_subset(s, b, seed) whenever a <= b.
std::vector<Sample> sample_subset(const std::vector<Sample>& samples, std::size_t n, std::uint64_t seed);

// Seeded permutation of [0, n); the shared source of subset draws.
std::vector<std::size_t> seeded_permutation(std::size_t n, std::uint64_t seed);

}  // namespace relex
