#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "relex/corpus.hpp"
#include "relex/gateway.hpp"

namespace relex {

// A span of the input sentence. Offsets are byte offsets into the UTF-8
// string, end exclusive; surface == sentence.substr(begin, end - begin).
struct Mention {
    std::string surface;
    std::size_t begin = 0;
    std::size_t end = 0;

    bool operator==(const Mention&) const = default;
};

struct KGTriple {
    std::string subject;
    std::string predicate;
    std::string object;

    bool operator==(const KGTriple&) const = default;
};

// Local knowledge graph: alias table plus per-entity property triples.
class KGStore {
public:
    KGStore() = default;
    explicit KGStore(NormalizationPolicy policy) : policy_(policy) {}

    // aliases TSV: alias \t entity_id
    // triples TSV: entity_id \t subject \t predicate \t object
    // A triple for an entity without any alias is an error; duplicate triples
    // are dropped.
    static KGStore load(const std::filesystem::path& aliases, const std::filesystem::path& triples,
                        NormalizationPolicy policy = {});

    void add_alias(const std::string& alias, const std::string& entity_id);
    // Returns false when the triple was already stored.
    bool add_triple(const std::string& entity_id, KGTriple triple);

    std::optional<std::string> link(std::string_view surface) const;
    bool has_entity(std::string_view entity_id) const;
    const std::vector<KGTriple>& triples(std::string_view entity_id) const;

    // Raw aliases in insertion order.
    const std::vector<std::pair<std::string, std::string>>& aliases() const { return aliases_; }
    std::size_t entity_count() const { return entities_.size(); }
    std::size_t triple_count() const;
    bool empty() const { return aliases_.empty(); }
    const NormalizationPolicy& policy() const { return policy_; }

private:
    NormalizationPolicy policy_;
    std::vector<std::pair<std::string, std::string>> aliases_;
    std::map<std::string, std::string, std::less<>> by_alias_;
    std::map<std::string, std::vector<KGTriple>, std::less<>> entities_;
};

enum class RecognitionMethod { gazetteer, llm };

RecognitionMethod recognition_method_from_string(std::string_view name);
std::string to_string(RecognitionMethod method);

struct Recognition {
    std::vector<Mention> mentions;
    // Model mentions that could not be aligned to the sentence.
    std::vector<std::string> issues;
};

// Longest alias first, left to right, non-overlapping. Aliases that begin or
// end with a letter/digit only match at word boundaries.
std::vector<Mention> gazetteer_mentions(std::string_view text, const KGStore& kg);

Recognition recognize_entities(std::string_view text, RecognitionMethod method, const KGStore& kg,
                               Gateway* gateway = nullptr);

std::optional<std::string> link_entity(const Mention& mention, const KGStore& kg);

// First `cap` stored triples. Throws PreconditionError for an unknown id.
std::vector<KGTriple> retrieve_entity_triples(std::string_view entity_id, const KGStore& kg, std::size_t cap);

std::string format_kg_triple(const KGTriple& t);

struct GuidelineSnippet {
    std::string id;
    std::string relation_name;
    std::string text;

    bool operator==(const GuidelineSnippet&) const = default;
};

inline constexpr std::string_view kGeneralGuideline = "general";

// JSONL {id, relation_name, text}. With a nonempty schema, relation_name must
// be a schema relation or "general".
std::vector<GuidelineSnippet> load_guidelines(const std::filesystem::path& path, const Schema* schema = nullptr);

// Snippets for the named relations plus all "general" ones, in store order.
std::vector<GuidelineSnippet> retrieve_guidelines(const std::vector<std::string>& relation_names,
                                                  const std::vector<GuidelineSnippet>& store);

}  // namespace relex
