#include "relex/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "relex/error.hpp"

namespace relex {

using nlohmann::json;

void Schema::add(RelationType type) {
    if (type.name.empty()) throw DatasetError("relation type with empty name");
    if (type.head_type.empty() || type.tail_type.empty()) {
        throw DatasetError("relation type '" + type.name + "' has an empty head or tail type");
    }
    if (index_.count(type.name) != 0) throw DatasetError("duplicate relation type '" + type.name + "'");
    index_.emplace(type.name, types_.size());
    types_.push_back(std::move(type));
}

bool Schema::contains(std::string_view name) const { return index_.find(std::string(name)) != index_.end(); }

const RelationType* Schema::find(std::string_view name) const {
    auto it = index_.find(std::string(name));
    return it == index_.end() ? nullptr : &types_[it->second];
}

std::size_t Schema::position(std::string_view name) const {
    auto it = index_.find(std::string(name));
    return it == index_.end() ? std::string::npos : it->second;
}

std::vector<std::string> Schema::names() const {
    std::vector<std::string> out;
    out.reserve(types_.size());
    for (const auto& t : types_) out.push_back(t.name);
    return out;
}

std::string normalize_surface(std::string_view s, const NormalizationPolicy& policy) {
    std::string out = text::squeeze_whitespace(text::nfc(s));
    if (policy.case_fold) out = text::case_fold(out);
    return out;
}

Triple normalize_triple(const Triple& t, const NormalizationPolicy& policy) {
    return Triple{normalize_surface(t.head, policy), normalize_surface(t.relation, NormalizationPolicy{false}),
                  normalize_surface(t.tail, policy)};
}

Metrics Metrics::from_counts(std::size_t tp, std::size_t fp, std::size_t fn) {
    Metrics m;
    m.tp = tp;
    m.fp = fp;
    m.fn = fn;
    m.precision = tp + fp > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
    m.recall = tp + fn > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
    m.f1 = m.precision + m.recall > 0 ? 2.0 * m.precision * m.recall / (m.precision + m.recall) : 0.0;
    return m;
}

Metrics Metrics::operator+(const Metrics& other) const {
    return from_counts(tp + other.tp, fp + other.fp, fn + other.fn);
}

Metrics score(const std::vector<Triple>& predicted, const std::vector<Triple>& gold,
              const NormalizationPolicy& policy) {
    std::set<Triple> pred_set;
    std::set<Triple> gold_set;
    for (const auto& t : predicted) pred_set.insert(normalize_triple(t, policy));
    for (const auto& t : gold) gold_set.insert(normalize_triple(t, policy));
    std::size_t tp = 0;
    for (const auto& t : pred_set) tp += gold_set.count(t);
    return Metrics::from_counts(tp, pred_set.size() - tp, gold_set.size() - tp);
}

DatasetFormat dataset_format_from_string(std::string_view name) {
    if (name == "duie-jsonl") return DatasetFormat::duie_jsonl;
    if (name == "scierc-json") return DatasetFormat::scierc_json;
    if (name == "generic-jsonl") return DatasetFormat::generic_jsonl;
    throw ConfigError("unknown dataset format '" + std::string(name) +
                      "' (expected duie-jsonl, scierc-json or generic-jsonl)");
}

std::string to_string(DatasetFormat format) {
    switch (format) {
        case DatasetFormat::duie_jsonl: return "duie-jsonl";
        case DatasetFormat::scierc_json: return "scierc-json";
        case DatasetFormat::generic_jsonl: return "generic-jsonl";
    }
    return "generic-jsonl";
}

namespace {

// Error carrying the offending field; converted to a line-qualified message.
struct RecordError {
    std::string field;
    std::string message;
};

const json& require(const json& obj, const char* field, json::value_t type) {
    if (!obj.is_object()) throw RecordError{"<record>", "record is not a JSON object"};
    auto it = obj.find(field);
    if (it == obj.end()) throw RecordError{field, "missing"};
    if (it->type() != type) {
        bool ok = type == json::value_t::number_integer && it->is_number_integer();
        if (!ok) throw RecordError{field, std::string("expected ") + json(type).type_name() + ", got " + it->type_name()};
    }
    return *it;
}

std::string require_string(const json& obj, const char* field, bool nonempty = true) {
    const json& v = require(obj, field, json::value_t::string);
    auto s = v.get<std::string>();
    if (nonempty && text::trim(s).empty()) throw RecordError{field, "empty string"};
    return s;
}

// One parsed record before ids and schema are settled.
struct PendingSample {
    std::string text;
    std::vector<Triple> gold;
    std::vector<RelationType> relation_hints;
    std::vector<std::pair<std::string, FlattenedSlot>> flattening;
};

class SchemaCollector {
public:
    SchemaCollector(std::optional<Schema> declared, const LoadOptions& options, std::vector<std::string>& warnings)
        : declared_(declared.has_value()), options_(options), warnings_(warnings) {
        if (declared) schema_ = std::move(*declared);
    }

    void observe(const RelationType& hint, std::size_t line) {
        if (schema_.contains(hint.name)) return;
        if (declared_) {
            std::string msg = "line " + std::to_string(line) + ": unknown relation '" + hint.name + "'";
            if (options_.strict) throw DatasetError(msg);
            warnings_.push_back(msg + " kept in lenient mode");
        }
        schema_.add(hint);
    }

    Schema take() { return std::move(schema_); }
    Schema& schema() { return schema_; }

private:
    bool declared_;
    Schema schema_;
    const LoadOptions& options_;
    std::vector<std::string>& warnings_;
};

PendingSample parse_generic(const json& record) {
    PendingSample out;
    out.text = require_string(record, "text");
    const json& triples = require(record, "triples", json::value_t::array);
    for (std::size_t i = 0; i < triples.size(); ++i) {
        const json& t = triples[i];
        std::string prefix = "triples[" + std::to_string(i) + "].";
        try {
            Triple triple{require_string(t, "h"), require_string(t, "r"), require_string(t, "t")};
            out.relation_hints.push_back(RelationType{triple.relation, "", "entity", "entity", {}});
            out.gold.push_back(std::move(triple));
        } catch (RecordError& e) {
            e.field = prefix + e.field;
            throw;
        }
    }
    return out;
}

std::string value_string(const json& v) {
    if (v.is_string()) return v.get<std::string>();
    if (v.is_number() || v.is_boolean()) return v.dump();
    return {};
}

PendingSample parse_duie(const json& record) {
    PendingSample out;
    out.text = require_string(record, "text");
    auto it = record.find("spo_list");
    if (it == record.end()) return out;  // unlabelled DuIE test records
    if (!it->is_array()) throw RecordError{"spo_list", "expected array"};
    for (std::size_t i = 0; i < it->size(); ++i) {
        const json& spo = (*it)[i];
        std::string prefix = "spo_list[" + std::to_string(i) + "].";
        try {
            std::string predicate = require_string(spo, "predicate");
            std::string subject = require_string(spo, "subject");
            std::string subject_type = spo.contains("subject_type") ? value_string(spo["subject_type"]) : "";
            if (!spo.contains("object")) throw RecordError{"object", "missing"};
            const json& object = spo["object"];
            const json object_type = spo.value("object_type", json::object());

            std::vector<std::pair<std::string, std::string>> slots;
            if (object.is_object()) {
                if (!object.contains("@value")) throw RecordError{"object.@value", "missing"};
                slots.emplace_back("@value", value_string(object["@value"]));
                for (const auto& [key, v] : object.items()) {
                    if (key != "@value") slots.emplace_back(key, value_string(v));
                }
            } else {
                slots.emplace_back("@value", value_string(object));
            }
            for (const auto& [slot, value] : slots) {
                if (text::trim(value).empty()) throw RecordError{"object." + slot, "empty value"};
                std::string relation = slot == "@value" ? predicate : predicate + "_" + slot;
                std::string tail_type;
                if (object_type.is_object() && object_type.contains(slot)) {
                    tail_type = value_string(object_type[slot]);
                } else if (object_type.is_string() && slot == "@value") {
                    tail_type = object_type.get<std::string>();
                }
                RelationType hint{relation, "", subject_type.empty() ? "entity" : subject_type,
                                  tail_type.empty() ? "entity" : tail_type, {}};
                if (slot != "@value") {
                    hint.description = "object slot '" + slot + "' of complex relation '" + predicate + "'";
                    out.flattening.emplace_back(relation, FlattenedSlot{predicate, slot});
                }
                out.relation_hints.push_back(std::move(hint));
                out.gold.push_back(Triple{subject, relation, value});
            }
        } catch (RecordError& e) {
            e.field = prefix + e.field;
            throw;
        }
    }
    return out;
}

std::string join_tokens(const json& tokens, std::int64_t begin, std::int64_t end) {
    std::string out;
    for (std::int64_t i = begin; i <= end; ++i) {
        if (!out.empty()) out.push_back(' ');
        out += tokens[static_cast<std::size_t>(i)].get<std::string>();
    }
    return out;
}

// A SciERC document expands to one sample per sentence; token offsets in
// "ner" and "relations" are document-global and end-inclusive.
std::vector<PendingSample> parse_scierc(const json& record) {
    const json& sentences = require(record, "sentences", json::value_t::array);
    const json relations = record.value("relations", json::array());
    const json ner = record.value("ner", json::array());
    std::vector<PendingSample> out;
    std::int64_t offset = 0;
    for (std::size_t si = 0; si < sentences.size(); ++si) {
        const json& tokens = sentences[si];
        if (!tokens.is_array() || tokens.empty()) throw RecordError{"sentences[" + std::to_string(si) + "]", "expected nonempty token array"};
        for (const auto& tok : tokens) {
            if (!tok.is_string()) throw RecordError{"sentences[" + std::to_string(si) + "]", "non-string token"};
        }
        auto n = static_cast<std::int64_t>(tokens.size());
        PendingSample sample;
        sample.text = join_tokens(tokens, 0, n - 1);

        auto entity_type = [&](std::int64_t b, std::int64_t e) -> std::string {
            if (si >= ner.size() || !ner[si].is_array()) return "entity";
            for (const auto& span : ner[si]) {
                if (span.is_array() && span.size() >= 3 && span[0] == b && span[1] == e && span[2].is_string()) {
                    return span[2].get<std::string>();
                }
            }
            return "entity";
        };

        if (si < relations.size()) {
            const json& rels = relations[si];
            if (!rels.is_array()) throw RecordError{"relations[" + std::to_string(si) + "]", "expected array"};
            for (std::size_t ri = 0; ri < rels.size(); ++ri) {
                const json& r = rels[ri];
                std::string field = "relations[" + std::to_string(si) + "][" + std::to_string(ri) + "]";
                if (!r.is_array() || r.size() != 5 || !r[4].is_string()) throw RecordError{field, "expected [s1, e1, s2, e2, label]"};
                std::int64_t v[4];
                for (int k = 0; k < 4; ++k) {
                    if (!r[k].is_number_integer()) throw RecordError{field, "non-integer offset"};
                    v[k] = r[k].get<std::int64_t>() - offset;
                }
                if (v[0] < 0 || v[1] >= n || v[0] > v[1] || v[2] < 0 || v[3] >= n || v[2] > v[3]) {
                    throw RecordError{field, "span outside sentence"};
                }
                std::string label = r[4].get<std::string>();
                sample.relation_hints.push_back(RelationType{label, "", entity_type(v[0] + offset, v[1] + offset),
                                                             entity_type(v[2] + offset, v[3] + offset), {}});
                sample.gold.push_back(Triple{join_tokens(tokens, v[0], v[1]), label, join_tokens(tokens, v[2], v[3])});
            }
        }
        out.push_back(std::move(sample));
        offset += n;
    }
    return out;
}

}  // namespace

Schema load_schema(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DatasetError("cannot open schema file " + path.string());
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::parse_error& e) {
        throw DatasetError("schema file " + path.string() + ": " + e.what());
    }
    if (!doc.is_array()) throw DatasetError("schema file " + path.string() + ": expected a JSON array");
    Schema schema(path.stem().string());
    for (std::size_t i = 0; i < doc.size(); ++i) {
        const json& e = doc[i];
        try {
            RelationType t;
            t.name = require_string(e, "name");
            t.description = e.value("description", "");
            t.head_type = e.value("head_type", "entity");
            t.tail_type = e.value("tail_type", "entity");
            if (e.contains("guideline_refs")) t.guideline_refs = e["guideline_refs"].get<std::vector<std::string>>();
            if (e.contains("flattened_from")) {
                const json& f = e["flattened_from"];
                schema.flattening().emplace(t.name, FlattenedSlot{f.value("predicate", ""), f.value("slot", "")});
            }
            schema.add(std::move(t));
        } catch (const RecordError& err) {
            throw DatasetError("schema file " + path.string() + " entry " + std::to_string(i) + ": field '" + err.field +
                               "' " + err.message);
        }
    }
    return schema;
}

void write_schema(const Schema& schema, const std::filesystem::path& path) {
    json doc = json::array();
    for (const auto& t : schema.relation_types()) {
        json e = {{"name", t.name}, {"description", t.description}, {"head_type", t.head_type}, {"tail_type", t.tail_type}};
        if (!t.guideline_refs.empty()) e["guideline_refs"] = t.guideline_refs;
        auto f = schema.flattening().find(t.name);
        if (f != schema.flattening().end()) e["flattened_from"] = {{"predicate", f->second.predicate}, {"slot", f->second.slot}};
        doc.push_back(std::move(e));
    }
    std::ofstream out(path);
    if (!out) throw DatasetError("cannot write schema file " + path.string());
    out << doc.dump(2) << '\n';
}

Dataset load_dataset(const std::filesystem::path& path, DatasetFormat format, const LoadOptions& options) {
    std::ifstream in(path);
    if (!in) throw DatasetError("cannot open dataset " + path.string());

    Dataset result;
    std::optional<Schema> declared;
    if (options.schema_path) declared = load_schema(*options.schema_path);
    SchemaCollector collector(std::move(declared), options, result.warnings);
    if (collector.schema().dataset_id().empty()) collector.schema().set_dataset_id(path.stem().string());

    std::string line;
    std::size_t line_no = 0;
    std::int64_t record_pos = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (text::trim(line).empty()) continue;

        std::vector<PendingSample> parsed;
        try {
            json record;
            try {
                record = json::parse(line);
            } catch (const json::parse_error& e) {
                throw RecordError{"<json>", e.what()};
            }
            switch (format) {
                case DatasetFormat::generic_jsonl: parsed.push_back(parse_generic(record)); break;
                case DatasetFormat::duie_jsonl: parsed.push_back(parse_duie(record)); break;
                case DatasetFormat::scierc_json: parsed = parse_scierc(record); break;
            }
        } catch (const RecordError& e) {
            std::string msg = path.filename().string() + " line " + std::to_string(line_no) + ": field '" + e.field + "' " + e.message;
            if (options.strict) throw DatasetError(msg);
            result.warnings.push_back(msg + "; record skipped");
            ++record_pos;
            continue;
        }

        for (auto& p : parsed) {
            for (const auto& hint : p.relation_hints) collector.observe(hint, line_no);
            for (const auto& [name, slot] : p.flattening) collector.schema().flattening().emplace(name, slot);
            result.samples.push_back(Sample{record_pos++, std::move(p.text), std::move(p.gold)});
        }
    }
    result.schema = collector.take();
    return result;
}

void write_generic_jsonl(const std::vector<Sample>& samples, std::ostream& out) {
    for (const auto& s : samples) {
        json triples = json::array();
        for (const auto& t : s.gold) triples.push_back({{"h", t.head}, {"r", t.relation}, {"t", t.tail}});
        out << json{{"text", s.text}, {"triples", triples}}.dump() << '\n';
    }
}

void write_generic_jsonl(const std::vector<Sample>& samples, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw DatasetError("cannot write " + path.string());
    write_generic_jsonl(samples, out);
}

namespace {

// Unbiased draw in [0, bound) independent of the standard library's
// distribution implementations, so seeds reproduce across toolchains.
std::uint64_t bounded(std::mt19937_64& rng, std::uint64_t bound) {
    std::uint64_t threshold = (0 - bound) % bound;
    while (true) {
        std::uint64_t r = rng();
        if (r >= threshold) return r % bound;
    }
}

}  // namespace

std::vector<std::size_t> seeded_permutation(std::size_t n, std::uint64_t seed) {
    std::vector<std::size_t> perm(n);
    for (std::size_t i = 0; i < n; ++i) perm[i] = i;
    std::mt19937_64 rng(seed);
    for (std::size_t i = 0; i + 1 < n; ++i) {
        std::size_t j = i + static_cast<std::size_t>(bounded(rng, n - i));
        std::swap(perm[i], perm[j]);
    }
    return perm;
}

std::vector<Sample> sample_subset(const std::vector<Sample>& samples, std::size_t n, std::uint64_t seed) {
    if (n > samples.size()) {
        throw PreconditionError("cannot draw " + std::to_string(n) + " samples from a corpus of " +
                                std::to_string(samples.size()));
    }
    auto perm = seeded_permutation(samples.size(), seed);
    std::vector<std::size_t> chosen(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n));
    std::sort(chosen.begin(), chosen.end());
    std::vector<Sample> out;
    out.reserve(n);
    for (auto i : chosen) out.push_back(samples[i]);
    return out;
}

}  // namespace relex
