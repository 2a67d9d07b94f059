#include "relex/knowledge.hpp"

#include <algorithm>
#include <fstream>

#include <nlohmann/json.hpp>

#include "relex/error.hpp"
#include "relex/prompt.hpp"
#include "relex/text.hpp"

namespace relex {

namespace {

std::vector<std::string> split_tsv(const std::string& line) {
    std::string s = line;
    if (!s.empty() && s.back() == '\r') s.pop_back();
    return text::split(s, '\t');
}

}  // namespace

KGStore KGStore::load(const std::filesystem::path& aliases, const std::filesystem::path& triples,
                      NormalizationPolicy policy) {
    KGStore kg(policy);
    std::ifstream in(aliases);
    if (!in) throw DatasetError("cannot open alias file " + aliases.string());
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
        ++n;
        if (text::trim(line).empty()) continue;
        auto cols = split_tsv(line);
        if (cols.size() != 2 || text::trim(cols[0]).empty() || text::trim(cols[1]).empty()) {
            throw DatasetError(aliases.filename().string() + " line " + std::to_string(n) +
                               ": expected 'alias<TAB>entity_id'");
        }
        kg.add_alias(text::trim(cols[0]), text::trim(cols[1]));
    }

    std::ifstream tin(triples);
    if (!tin) throw DatasetError("cannot open KG triple file " + triples.string());
    n = 0;
    while (std::getline(tin, line)) {
        ++n;
        if (text::trim(line).empty()) continue;
        auto cols = split_tsv(line);
        std::string where = triples.filename().string() + " line " + std::to_string(n);
        if (cols.size() != 4) throw DatasetError(where + ": expected 4 tab-separated columns");
        std::string id = text::trim(cols[0]);
        if (!kg.has_entity(id)) throw DatasetError(where + ": entity '" + id + "' has no alias");
        kg.add_triple(id, {text::trim(cols[1]), text::trim(cols[2]), text::trim(cols[3])});
    }
    return kg;
}

void KGStore::add_alias(const std::string& alias, const std::string& entity_id) {
    if (alias.empty() || entity_id.empty()) throw PreconditionError("alias and entity id must be nonempty");
    aliases_.emplace_back(alias, entity_id);
    by_alias_.emplace(normalize_surface(alias, policy_), entity_id);  // first mapping wins
    entities_.try_emplace(entity_id);
}

bool KGStore::add_triple(const std::string& entity_id, KGTriple triple) {
    auto it = entities_.find(entity_id);
    if (it == entities_.end()) throw PreconditionError("unknown entity id '" + entity_id + "'");
    auto& list = it->second;
    if (std::find(list.begin(), list.end(), triple) != list.end()) return false;
    list.push_back(std::move(triple));
    return true;
}

std::optional<std::string> KGStore::link(std::string_view surface) const {
    auto it = by_alias_.find(normalize_surface(surface, policy_));
    if (it == by_alias_.end()) return std::nullopt;
    return it->second;
}

bool KGStore::has_entity(std::string_view entity_id) const { return entities_.find(entity_id) != entities_.end(); }

const std::vector<KGTriple>& KGStore::triples(std::string_view entity_id) const {
    auto it = entities_.find(entity_id);
    if (it == entities_.end()) throw PreconditionError("unknown entity id '" + std::string(entity_id) + "'");
    return it->second;
}

std::size_t KGStore::triple_count() const {
    std::size_t n = 0;
    for (const auto& [id, list] : entities_) n += list.size();
    return n;
}

RecognitionMethod recognition_method_from_string(std::string_view name) {
    if (name == "gazetteer") return RecognitionMethod::gazetteer;
    if (name == "llm") return RecognitionMethod::llm;
    throw ConfigError("unknown entity recognition method '" + std::string(name) + "' (expected gazetteer or llm)");
}

std::string to_string(RecognitionMethod method) {
    return method == RecognitionMethod::gazetteer ? "gazetteer" : "llm";
}

std::vector<Mention> gazetteer_mentions(std::string_view s, const KGStore& kg) {
    // Distinct aliases, longest first; ties by byte order for stability.
    std::vector<std::string_view> aliases;
    for (const auto& [alias, id] : kg.aliases()) aliases.push_back(alias);
    std::sort(aliases.begin(), aliases.end(), [](std::string_view a, std::string_view b) {
        return a.size() != b.size() ? a.size() > b.size() : a < b;
    });
    aliases.erase(std::unique(aliases.begin(), aliases.end()), aliases.end());

    std::vector<Mention> out;
    std::size_t i = 0;
    while (i < s.size()) {
        bool matched = false;
        for (auto alias : aliases) {
            if (s.compare(i, alias.size(), alias) != 0) continue;
            std::size_t j = i + alias.size();
            if (text::starts_with_word_char(alias) && text::ends_with_word_char(s.substr(0, i))) continue;
            if (text::ends_with_word_char(alias) && text::starts_with_word_char(s.substr(j))) continue;
            out.push_back({std::string(alias), i, j});
            i = j;
            matched = true;
            break;
        }
        if (matched) continue;
        // advance one code point
        ++i;
        while (i < s.size() && (static_cast<unsigned char>(s[i]) & 0xC0) == 0x80) ++i;
    }
    return out;
}

Recognition recognize_entities(std::string_view s, RecognitionMethod method, const KGStore& kg, Gateway* gateway) {
    Recognition result;
    if (method == RecognitionMethod::gazetteer) {
        result.mentions = gazetteer_mentions(s, kg);
        return result;
    }
    if (gateway == nullptr) throw ConfigError("llm entity recognition needs a gateway");
    std::string prompt = render_prompt(templates::entity_recognition(), {{"input_sentence", std::string(s)}});
    std::string response = gateway->complete({prompt, 0.0, 256, {}, "entity_recognition"});
    for (const auto& raw : text::split(response, '\n')) {
        std::string m = text::trim(raw);
        while (!m.empty() && (m.front() == '-' || m.front() == '*')) m = text::trim(std::string_view(m).substr(1));
        if (m.empty()) continue;
        bool seen = std::any_of(result.mentions.begin(), result.mentions.end(),
                                [&](const Mention& x) { return x.surface == m; });
        if (seen) continue;
        auto pos = s.find(m);
        if (pos == std::string_view::npos) {
            result.issues.push_back("mention not found in sentence: " + m);
            continue;
        }
        result.mentions.push_back({m, pos, pos + m.size()});
    }
    return result;
}

std::optional<std::string> link_entity(const Mention& mention, const KGStore& kg) { return kg.link(mention.surface); }

std::vector<KGTriple> retrieve_entity_triples(std::string_view entity_id, const KGStore& kg, std::size_t cap) {
    const auto& all = kg.triples(entity_id);
    return {all.begin(), all.begin() + static_cast<std::ptrdiff_t>(std::min(cap, all.size()))};
}

std::string format_kg_triple(const KGTriple& t) { return "(" + t.subject + ", " + t.predicate + ", " + t.object + ")"; }

std::vector<GuidelineSnippet> load_guidelines(const std::filesystem::path& path, const Schema* schema) {
    std::ifstream in(path);
    if (!in) throw DatasetError("cannot open guideline file " + path.string());
    std::vector<GuidelineSnippet> out;
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
        ++n;
        if (text::trim(line).empty()) continue;
        std::string where = path.filename().string() + " line " + std::to_string(n);
        GuidelineSnippet g;
        try {
            auto doc = nlohmann::json::parse(line);
            g.id = doc.at("id").is_string() ? doc["id"].get<std::string>() : doc["id"].dump();
            g.relation_name = doc.at("relation_name").get<std::string>();
            g.text = doc.at("text").get<std::string>();
        } catch (const nlohmann::json::exception& e) {
            throw DatasetError(where + ": " + e.what());
        }
        if (g.text.empty()) throw DatasetError(where + ": field 'text' is empty");
        if (schema != nullptr && !schema->empty() && g.relation_name != kGeneralGuideline &&
            !schema->contains(g.relation_name)) {
            throw DatasetError(where + ": field 'relation_name' names unknown relation '" + g.relation_name + "'");
        }
        out.push_back(std::move(g));
    }
    return out;
}

std::vector<GuidelineSnippet> retrieve_guidelines(const std::vector<std::string>& relation_names,
                                                  const std::vector<GuidelineSnippet>& store) {
    std::vector<GuidelineSnippet> out;
    for (const auto& g : store) {
        if (g.relation_name == kGeneralGuideline ||
            std::find(relation_names.begin(), relation_names.end(), g.relation_name) != relation_names.end()) {
            out.push_back(g);
        }
    }
    return out;
}

}  // namespace relex
