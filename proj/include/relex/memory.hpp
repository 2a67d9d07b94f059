#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "relex/corpus.hpp"
#include "relex/gateway.hpp"
#include "relex/knowledge.hpp"

namespace relex {

enum class Verdict { correct, wrong };

std::string to_string(Verdict v);

struct ShallowRecord {
    Triple triple;
    std::string source_sentence;
    Verdict verdict = Verdict::correct;
    std::uint64_t step = 0;

    bool operator==(const ShallowRecord&) const = default;
};

struct DeepMemoryEntry {
    std::string key;
    std::string text;
    std::uint64_t last_updated = 0;
    // Serialized triples that contributed to the text, oldest first.
    std::vector<std::string> provenance;

    bool operator==(const DeepMemoryEntry&) const = default;
};

struct ReflectionEntry {
    std::string text;
    Triple trigger_triple;
    std::uint64_t last_updated = 0;

    bool operator==(const ReflectionEntry&) const = default;
};

struct MemoryState {
    std::vector<ShallowRecord> correct;
    std::vector<ShallowRecord> wrong;
    std::map<std::string, DeepMemoryEntry> deep;
    std::vector<ReflectionEntry> reflections;
    std::uint64_t step_counter = 0;

    bool operator==(const MemoryState&) const = default;
    bool empty() const { return correct.empty() && wrong.empty() && deep.empty() && reflections.empty(); }
};

struct MemoryBundle {
    std::vector<DeepMemoryEntry> deep;
    std::vector<ReflectionEntry> reflections;
    std::vector<ShallowRecord> correct;

    bool empty() const { return deep.empty() && reflections.empty() && correct.empty(); }
};

// Prompt/observation rendering; empty string for an empty bundle.
std::string render_memory_bundle(const MemoryBundle& bundle);

enum class MemoryMode { off, shallow, deep };
enum class VerifierMode { oracle, blind };

MemoryMode memory_mode_from_string(std::string_view name);
std::string to_string(MemoryMode mode);
VerifierMode verifier_mode_from_string(std::string_view name);
std::string to_string(VerifierMode mode);

// oracle: membership of the normalized triple in the normalized gold set.
// blind: everything is provisionally correct.
std::vector<std::pair<Triple, Verdict>> verify_triples(const std::vector<Triple>& predicted,
                                                       const std::vector<Triple>& gold,
                                                       const NormalizationPolicy& policy, VerifierMode mode);

// Owner of a MemoryState. Single writer; const members may be called
// concurrently while no writer is active.
class Memory {
public:
    Memory() = default;
    Memory(NormalizationPolicy policy, Language language, const KGStore* kg = nullptr)
        : policy_(policy), language_(language), kg_(kg) {}

    // Appends unseen (sentence, triple) pairs; returns how many were new.
    std::size_t record_shallow(const std::string& sentence, const std::vector<std::pair<Triple, Verdict>>& verified);

    // Retrieve by key, merge through the gateway, replace. Returns false when
    // the gateway failed (journaled) and nothing changed.
    bool update_deep(const Triple& triple, const std::string& sentence, Gateway& gateway);

    // Generates a lesson for a wrong triple. Duplicate lessons only refresh
    // last_updated. Returns false on gateway failure.
    bool reflect(const Triple& triple, const std::string& sentence, const std::vector<Triple>& gold,
                 const std::vector<GuidelineSnippet>& context, Gateway& gateway);

    MemoryBundle query(std::string_view sentence, const std::vector<Mention>& mentions, std::size_t k_each) const;

    // Key for a triple: linked head id, else linked tail id, else normalized head.
    std::string deep_key(const Triple& triple) const;

    const MemoryState& state() const { return state_; }
    void set_state(MemoryState state) { state_ = std::move(state); }
    const NormalizationPolicy& policy() const { return policy_; }

private:
    std::string key_for_surface(std::string_view surface) const;
    std::uint64_t next_step() { return ++state_.step_counter; }

    MemoryState state_;
    NormalizationPolicy policy_;
    Language language_ = Language::english;
    const KGStore* kg_ = nullptr;
};

inline constexpr int kSnapshotVersion = 1;

// Versioned JSON, written atomically (temp file + rename).
void snapshot(const MemoryState& state, const std::filesystem::path& path);
// Throws DatasetError on a corrupt file or version mismatch.
MemoryState restore(const std::filesystem::path& path);

nlohmann::json memory_state_to_json(const MemoryState& state);
MemoryState memory_state_from_json(const nlohmann::json& doc);

}  // namespace relex
