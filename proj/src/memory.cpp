#include "relex/memory.hpp"

#include <algorithm>
#include <fstream>
#include <set>

#include <nlohmann/json.hpp>

#include "relex/error.hpp"
#include "relex/grammar.hpp"
#include "relex/prompt.hpp"
#include "relex/text.hpp"

namespace relex {

using nlohmann::json;

namespace {

const std::set<std::string, std::less<>> kStopwords = {
    "a",    "an",   "and",  "are",  "as",   "at",   "be",   "by",   "for",  "from", "has",  "have", "he",
    "her",  "his",  "in",   "is",   "it",   "its",  "of",   "on",   "or",   "she",  "such", "that", "the",
    "their", "them", "they", "this", "to",   "was",  "were", "which", "who", "will", "with",
};

std::set<std::string> content_tokens(std::string_view s, Language language) {
    std::set<std::string> out;
    for (auto& t : text::tokenize(s, language)) {
        if (kStopwords.count(t) == 0) out.insert(std::move(t));
    }
    return out;
}

// Occurrence of `needle` in `haystack` at word boundaries.
bool contains_term(std::string_view haystack, std::string_view needle) {
    if (needle.empty()) return false;
    for (auto pos = haystack.find(needle); pos != std::string_view::npos; pos = haystack.find(needle, pos + 1)) {
        auto end = pos + needle.size();
        if (text::starts_with_word_char(needle) && text::ends_with_word_char(haystack.substr(0, pos))) continue;
        if (text::ends_with_word_char(needle) && text::starts_with_word_char(haystack.substr(end))) continue;
        return true;
    }
    return false;
}

bool is_gateway_failure(const Error& e) { return dynamic_cast<const ScriptMissError*>(&e) == nullptr; }

json triple_json(const Triple& t) { return {{"h", t.head}, {"r", t.relation}, {"t", t.tail}}; }

Triple triple_from(const json& j) { return {j.at("h").get<std::string>(), j.at("r").get<std::string>(), j.at("t").get<std::string>()}; }

json record_json(const ShallowRecord& r) {
    return {{"triple", triple_json(r.triple)}, {"sentence", r.source_sentence}, {"verdict", to_string(r.verdict)},
            {"step", r.step}};
}

ShallowRecord record_from(const json& j) {
    ShallowRecord r;
    r.triple = triple_from(j.at("triple"));
    r.source_sentence = j.at("sentence").get<std::string>();
    auto v = j.at("verdict").get<std::string>();
    if (v != "correct" && v != "wrong") throw DatasetError("bad verdict '" + v + "'");
    r.verdict = v == "correct" ? Verdict::correct : Verdict::wrong;
    r.step = j.at("step").get<std::uint64_t>();
    return r;
}

}  // namespace

std::string to_string(Verdict v) { return v == Verdict::correct ? "correct" : "wrong"; }

MemoryMode memory_mode_from_string(std::string_view name) {
    if (name == "off") return MemoryMode::off;
    if (name == "shallow") return MemoryMode::shallow;
    if (name == "deep") return MemoryMode::deep;
    throw ConfigError("unknown memory mode '" + std::string(name) + "' (expected off, shallow or deep)");
}

std::string to_string(MemoryMode mode) {
    switch (mode) {
        case MemoryMode::off: return "off";
        case MemoryMode::shallow: return "shallow";
        case MemoryMode::deep: return "deep";
    }
    return "off";
}

VerifierMode verifier_mode_from_string(std::string_view name) {
    if (name == "oracle") return VerifierMode::oracle;
    if (name == "blind") return VerifierMode::blind;
    throw ConfigError("unknown verifier mode '" + std::string(name) + "' (expected oracle or blind)");
}

std::string to_string(VerifierMode mode) { return mode == VerifierMode::oracle ? "oracle" : "blind"; }

std::vector<std::pair<Triple, Verdict>> verify_triples(const std::vector<Triple>& predicted,
                                                       const std::vector<Triple>& gold,
                                                       const NormalizationPolicy& policy, VerifierMode mode) {
    std::set<Triple> gold_set;
    for (const auto& g : gold) gold_set.insert(normalize_triple(g, policy));
    std::vector<std::pair<Triple, Verdict>> out;
    std::set<Triple> seen;
    for (const auto& p : predicted) {
        auto n = normalize_triple(p, policy);
        if (!n.valid() || !seen.insert(n).second) continue;
        Verdict v = mode == VerifierMode::blind || gold_set.count(n) ? Verdict::correct : Verdict::wrong;
        out.emplace_back(p, v);
    }
    return out;
}

std::string render_memory_bundle(const MemoryBundle& bundle) {
    std::string out;
    auto line = [&out](const std::string& s) {
        if (!out.empty()) out.push_back('\n');
        out += s;
    };
    for (const auto& e : bundle.deep) line("- " + e.text);
    for (const auto& r : bundle.reflections) line("- Lesson: " + r.text);
    for (const auto& r : bundle.correct) line("- Verified: " + format_triple(r.triple));
    return out;
}

std::size_t Memory::record_shallow(const std::string& sentence,
                                   const std::vector<std::pair<Triple, Verdict>>& verified) {
    std::size_t added = 0;
    for (const auto& [triple, verdict] : verified) {
        auto n = normalize_triple(triple, policy_);
        auto same = [&](const ShallowRecord& r) {
            return r.source_sentence == sentence && normalize_triple(r.triple, policy_) == n;
        };
        // a pair keeps the verdict it was first written with
        if (std::any_of(state_.correct.begin(), state_.correct.end(), same) ||
            std::any_of(state_.wrong.begin(), state_.wrong.end(), same)) {
            continue;
        }
        auto& store = verdict == Verdict::correct ? state_.correct : state_.wrong;
        store.push_back({triple, sentence, verdict, next_step()});
        ++added;
    }
    return added;
}

std::string Memory::key_for_surface(std::string_view surface) const {
    if (kg_ != nullptr) {
        if (auto id = kg_->link(surface)) return *id;
    }
    return normalize_surface(surface, policy_);
}

std::string Memory::deep_key(const Triple& triple) const {
    if (kg_ != nullptr) {
        if (auto id = kg_->link(triple.head)) return *id;
        if (auto id = kg_->link(triple.tail)) return *id;
    }
    return normalize_surface(triple.head, policy_);
}

bool Memory::update_deep(const Triple& triple, const std::string& sentence, Gateway& gateway) {
    std::string key = deep_key(triple);
    auto it = state_.deep.find(key);
    std::string response;
    try {
        if (it != state_.deep.end()) {
            std::string prompt = render_prompt(templates::memory_update(), {{"memory", it->second.text},
                                                                            {"triple", format_triple(triple)},
                                                                            {"sentence", sentence}});
            response = gateway.complete({prompt, 0.0, 256, {}, "memory_update"});
        } else {
            std::string prompt = render_prompt(templates::memory_summarize(),
                                               {{"triple", format_triple(triple)}, {"sentence", sentence}});
            response = gateway.complete({prompt, 0.0, 256, {}, "memory_summarize"});
        }
    } catch (const Error& e) {
        if (!is_gateway_failure(e)) throw;
        gateway.note("memory_update_failed", "key '" + key + "': " + e.what());
        return false;
    }
    response = text::trim(response);
    if (response.empty()) {
        gateway.note("memory_update_failed", "key '" + key + "': empty model response");
        return false;
    }

    DeepMemoryEntry updated;
    if (it != state_.deep.end()) {
        updated = it->second;
        state_.deep.erase(it);  // replace: drop the old entry, insert the merged one
    }
    updated.key = key;
    updated.text = std::move(response);
    updated.last_updated = next_step();
    updated.provenance.push_back(format_triple(triple));
    state_.deep.emplace(key, std::move(updated));
    return true;
}

bool Memory::reflect(const Triple& triple, const std::string& sentence, const std::vector<Triple>& gold,
                     const std::vector<GuidelineSnippet>& context, Gateway& gateway) {
    std::string guidelines;
    for (const auto& g : context) guidelines += (guidelines.empty() ? "" : "\n") + g.text;
    std::string response;
    try {
        std::string prompt = render_prompt(templates::reflection(), {{"sentence", sentence},
                                                                     {"triple", format_triple(triple)},
                                                                     {"gold", format_triples(gold)},
                                                                     {"guidelines", guidelines}});
        response = gateway.complete({prompt, 0.0, 256, {}, "reflection"});
    } catch (const Error& e) {
        if (!is_gateway_failure(e)) throw;
        gateway.note("reflection_failed", e.what());
        return false;
    }
    response = text::trim(response);
    if (response.empty()) {
        gateway.note("reflection_failed", "empty model response");
        return false;
    }
    auto norm = normalize_surface(response, NormalizationPolicy::english());
    for (auto& r : state_.reflections) {
        if (normalize_surface(r.text, NormalizationPolicy::english()) == norm) {
            r.last_updated = next_step();
            return true;
        }
    }
    state_.reflections.push_back({std::move(response), triple, next_step()});
    return true;
}

MemoryBundle Memory::query(std::string_view sentence, const std::vector<Mention>& mentions, std::size_t k_each) const {
    MemoryBundle bundle;
    if (k_each == 0 || state_.empty()) return bundle;

    std::string norm_sentence = normalize_surface(sentence, policy_);
    std::set<std::string> mention_keys;
    std::set<std::string> mention_surfaces;
    for (const auto& m : mentions) {
        mention_keys.insert(key_for_surface(m.surface));
        mention_surfaces.insert(normalize_surface(m.surface, policy_));
    }
    auto mentioned = [&](const std::string& surface) {
        auto n = normalize_surface(surface, policy_);
        return mention_surfaces.count(n) > 0 || contains_term(norm_sentence, n);
    };

    for (const auto& [key, entry] : state_.deep) {
        if (mention_keys.count(key) || contains_term(norm_sentence, key)) bundle.deep.push_back(entry);
    }
    std::sort(bundle.deep.begin(), bundle.deep.end(), [](const auto& a, const auto& b) {
        return a.last_updated != b.last_updated ? a.last_updated > b.last_updated : a.key < b.key;
    });
    if (bundle.deep.size() > k_each) bundle.deep.resize(k_each);

    auto sentence_tokens = content_tokens(sentence, language_);
    std::vector<std::pair<std::size_t, const ReflectionEntry*>> ranked;
    for (const auto& r : state_.reflections) {
        std::size_t overlap = 0;
        for (const auto& t : content_tokens(r.text, language_)) overlap += sentence_tokens.count(t);
        if (overlap > 0) ranked.emplace_back(overlap, &r);
    }
    std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        if (a.second->last_updated != b.second->last_updated) return a.second->last_updated > b.second->last_updated;
        return a.second->text < b.second->text;
    });
    for (std::size_t i = 0; i < std::min(k_each, ranked.size()); ++i) bundle.reflections.push_back(*ranked[i].second);

    for (auto it = state_.correct.rbegin(); it != state_.correct.rend() && bundle.correct.size() < k_each; ++it) {
        if (mentioned(it->triple.head) || mentioned(it->triple.tail)) bundle.correct.push_back(*it);
    }
    return bundle;
}

json memory_state_to_json(const MemoryState& state) {
    json doc;
    doc["version"] = kSnapshotVersion;
    doc["step_counter"] = state.step_counter;
    doc["correct"] = json::array();
    for (const auto& r : state.correct) doc["correct"].push_back(record_json(r));
    doc["wrong"] = json::array();
    for (const auto& r : state.wrong) doc["wrong"].push_back(record_json(r));
    doc["deep"] = json::array();
    for (const auto& [key, e] : state.deep) {
        doc["deep"].push_back({{"key", e.key}, {"text", e.text}, {"last_updated", e.last_updated},
                               {"provenance", e.provenance}});
    }
    doc["reflections"] = json::array();
    for (const auto& r : state.reflections) {
        doc["reflections"].push_back(
            {{"text", r.text}, {"trigger_triple", triple_json(r.trigger_triple)}, {"last_updated", r.last_updated}});
    }
    return doc;
}

MemoryState memory_state_from_json(const json& doc) {
    try {
        int version = doc.at("version").get<int>();
        if (version != kSnapshotVersion) {
            throw DatasetError("memory snapshot version " + std::to_string(version) + " is not supported (expected " +
                               std::to_string(kSnapshotVersion) + ")");
        }
        MemoryState state;
        state.step_counter = doc.at("step_counter").get<std::uint64_t>();
        for (const auto& r : doc.at("correct")) state.correct.push_back(record_from(r));
        for (const auto& r : doc.at("wrong")) state.wrong.push_back(record_from(r));
        for (const auto& e : doc.at("deep")) {
            DeepMemoryEntry entry{e.at("key").get<std::string>(), e.at("text").get<std::string>(),
                                  e.at("last_updated").get<std::uint64_t>(),
                                  e.at("provenance").get<std::vector<std::string>>()};
            if (!state.deep.emplace(entry.key, entry).second) throw DatasetError("duplicate deep memory key '" + entry.key + "'");
        }
        for (const auto& r : doc.at("reflections")) {
            state.reflections.push_back({r.at("text").get<std::string>(), triple_from(r.at("trigger_triple")),
                                         r.at("last_updated").get<std::uint64_t>()});
        }
        return state;
    } catch (const json::exception& e) {
        throw DatasetError(std::string("corrupt memory snapshot: ") + e.what());
    }
}

void snapshot(const MemoryState& state, const std::filesystem::path& path) {
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error("cannot write " + tmp.string());
        out << memory_state_to_json(state).dump(2) << '\n';
        if (!out) throw Error("failed writing " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

MemoryState restore(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DatasetError("cannot open memory snapshot " + path.string());
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::exception& e) {
        throw DatasetError("corrupt memory snapshot " + path.string() + ": " + e.what());
    }
    return memory_state_from_json(doc);
}

}  // namespace relex
