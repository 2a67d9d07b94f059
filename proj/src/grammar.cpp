#include "relex/grammar.hpp"

#include <nlohmann/json.hpp>

#include "relex/error.hpp"
#include "relex/text.hpp"

namespace relex {

using nlohmann::json;

namespace {

bool needs_quoting(std::string_view field) {
    if (field.empty()) return true;
    if (text::trim(field) != field) return true;
    for (unsigned char c : field) {
        if (c < 0x20 || c == 0x7F || c == '(' || c == ')' || c == ',' || c == '"' || c == '\\') return true;
    }
    return false;
}

std::string format_field(const std::string& field) {
    if (!needs_quoting(field)) return field;
    return json(field).dump(-1, ' ', false, json::error_handler_t::replace);
}

void skip_spaces(std::string_view s, std::size_t& i) {
    while (i < s.size() && (s[i] == ' ' || s[i] == '\t' || s[i] == '\r' || s[i] == '\n')) ++i;
}

// Reads one tuple field starting at `i`; leaves `i` on the delimiter.
std::optional<std::string> read_field(std::string_view s, std::size_t& i) {
    skip_spaces(s, i);
    if (i < s.size() && s[i] == '"') {
        std::size_t j = i + 1;
        while (j < s.size() && s[j] != '"') {
            if (s[j] == '\\') ++j;
            ++j;
        }
        if (j >= s.size()) return std::nullopt;
        try {
            auto value = json::parse(s.substr(i, j - i + 1)).get<std::string>();
            i = j + 1;
            skip_spaces(s, i);
            return value;
        } catch (const json::exception&) {
            return std::nullopt;
        }
    }
    std::size_t start = i;
    while (i < s.size() && s[i] != ',' && s[i] != ')' && s[i] != '(' && s[i] != '\n') ++i;
    return text::trim(s.substr(start, i - start));
}

// Attempts to read "(a, b, c)" at position `open`. Returns the fields and the
// position after ')' on success.
std::optional<std::pair<std::vector<std::string>, std::size_t>> read_tuple(std::string_view s, std::size_t open) {
    std::size_t i = open + 1;
    std::vector<std::string> fields;
    while (true) {
        auto field = read_field(s, i);
        if (!field || i >= s.size()) return std::nullopt;
        fields.push_back(std::move(*field));
        if (s[i] == ')') return std::make_pair(std::move(fields), i + 1);
        if (s[i] != ',') return std::nullopt;
        ++i;
    }
}

void accept(Triple t, const Schema& schema, ParseMode mode, TripleParse& out) {
    if (!Triple{text::trim(t.head), text::trim(t.relation), text::trim(t.tail)}.valid()) {
        out.issues.push_back({ParseIssue::Kind::empty_field, "triple " + format_triple(t) + " has an empty field"});
        return;
    }
    if (!schema.empty() && !schema.contains(t.relation)) {
        bool keep = mode == ParseMode::lenient;
        out.issues.push_back({ParseIssue::Kind::unknown_relation,
                              "relation '" + t.relation + "' is not in the schema", keep});
        if (!keep) return;
    }
    out.triples.push_back(std::move(t));
}

bool parse_json_array(std::string_view trimmed, const Schema& schema, ParseMode mode, TripleParse& out) {
    std::size_t first = trimmed.find('[');
    std::size_t last = trimmed.rfind(']');
    if (first == std::string_view::npos || last == std::string_view::npos || last < first) return false;
    json doc;
    try {
        doc = json::parse(trimmed.substr(first, last - first + 1));
    } catch (const json::exception&) {
        return false;
    }
    if (!doc.is_array()) return false;
    for (const auto& item : doc) {
        if (!item.is_object()) return false;
    }
    for (const auto& item : doc) {
        auto get = [&](const char* a, const char* b) -> std::string {
            if (item.contains(a) && item[a].is_string()) return item[a].get<std::string>();
            if (item.contains(b) && item[b].is_string()) return item[b].get<std::string>();
            return {};
        };
        accept(Triple{get("h", "head"), get("r", "relation"), get("t", "tail")}, schema, mode, out);
    }
    return true;
}

}  // namespace

std::string format_triple(const Triple& t) {
    return "(" + format_field(t.head) + ", " + format_field(t.relation) + ", " + format_field(t.tail) + ")";
}

std::string format_triples(const std::vector<Triple>& triples) {
    std::string out;
    for (const auto& t : triples) {
        if (!out.empty()) out.push_back('\n');
        out += format_triple(t);
    }
    return out;
}

std::string extract_triple_block(std::string_view text) {
    std::size_t found = std::string_view::npos;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        std::size_t end = text.find('\n', pos);
        if (end == std::string_view::npos) end = text.size();
        std::string line = text::trim(text.substr(pos, end - pos));
        if (line.rfind(kTripleBlockMarker, 0) == 0) {
            found = text.find(kTripleBlockMarker, pos) + kTripleBlockMarker.size();
        }
        pos = end + 1;
    }
    if (found == std::string_view::npos) return std::string(text);
    return text::trim(text.substr(found));
}

std::string to_string(ParseIssue::Kind kind) {
    switch (kind) {
        case ParseIssue::Kind::empty_output: return "empty_output";
        case ParseIssue::Kind::malformed_tuple: return "malformed_tuple";
        case ParseIssue::Kind::empty_field: return "empty_field";
        case ParseIssue::Kind::unknown_relation: return "unknown_relation";
        case ParseIssue::Kind::no_triples: return "no_triples";
    }
    return "unknown";
}

TripleParse parse_triples(std::string_view input, const Schema& schema, ParseMode mode) {
    TripleParse out;
    std::string trimmed = text::trim(input);
    if (trimmed.empty()) {
        out.issues.push_back({ParseIssue::Kind::empty_output, "empty output"});
        return out;
    }
    if ((trimmed.front() == '[' || trimmed.rfind("```", 0) == 0) && parse_json_array(trimmed, schema, mode, out)) {
        return out;
    }

    std::string_view s = trimmed;
    std::size_t i = 0;
    bool any_tuple = false;
    while ((i = s.find('(', i)) != std::string_view::npos) {
        auto tuple = read_tuple(s, i);
        if (!tuple) {
            ++i;
            continue;
        }
        auto& [fields, next] = *tuple;
        if (fields.size() == 3) {
            any_tuple = true;
            accept(Triple{fields[0], fields[1], fields[2]}, schema, mode, out);
        } else if (fields.size() > 1) {
            out.issues.push_back({ParseIssue::Kind::malformed_tuple,
                                  "tuple with " + std::to_string(fields.size()) + " fields: " +
                                      std::string(s.substr(i, next - i))});
        }
        i = next;
    }
    if (!any_tuple && out.issues.empty() && trimmed != "[]") {
        out.issues.push_back({ParseIssue::Kind::no_triples, "no triples found in output"});
    }
    return out;
}

std::string_view tool_name(Tool tool) {
    switch (tool) {
        case Tool::search_samples: return "SearchSamples";
        case Tool::search_annotation: return "SearchAnnotation";
        case Tool::search_kg: return "SearchKG";
        case Tool::search_memory: return "SearchMemory";
        case Tool::finish: return "Finish";
    }
    return "Finish";
}

std::optional<Tool> tool_from_name(std::string_view name) {
    for (Tool t : kAllTools) {
        if (tool_name(t) == name) return t;
    }
    return std::nullopt;
}

std::string format_action(const AgentAction& action) {
    return std::string(tool_name(action.tool)) + "[" + action.argument + "]";
}

std::string format_step(std::string_view thought, const AgentAction& action) {
    return "Thought: " + std::string(thought) + "\nAction: " + format_action(action);
}

namespace {

constexpr std::string_view kActionPrefix = "Action:";
constexpr std::string_view kThoughtPrefix = "Thought:";

// Byte offset of the first line starting with "Action:", after leading spaces.
std::size_t find_action_line(std::string_view text) {
    std::size_t pos = 0;
    while (pos <= text.size()) {
        std::size_t end = text.find('\n', pos);
        if (end == std::string_view::npos) end = text.size();
        std::size_t k = pos;
        while (k < end && (text[k] == ' ' || text[k] == '\t')) ++k;
        if (text.substr(k, kActionPrefix.size()) == kActionPrefix) return k;
        pos = end + 1;
    }
    return std::string_view::npos;
}

}  // namespace

AgentAction parse_action(std::string_view text) {
    std::size_t start = find_action_line(text);
    if (start == std::string_view::npos) {
        throw ParseError("missing Action line", std::string(text::truncate(text::trim(text), 200)));
    }
    std::string_view rest = text.substr(start + kActionPrefix.size());
    if (auto obs = rest.find("\nObservation:"); obs != std::string_view::npos) rest = rest.substr(0, obs);

    std::size_t line_end = rest.find('\n');
    std::string line = "Action:" + std::string(rest.substr(0, line_end));

    std::size_t open = rest.find('[');
    std::string name = text::trim(rest.substr(0, open == std::string_view::npos ? line_end : open));
    auto tool = tool_from_name(name);
    if (!tool) throw ParseError("unknown tool \"" + name + "\"", line);
    std::size_t close = rest.rfind(']');
    if (open == std::string_view::npos || close == std::string_view::npos || close < open) {
        throw ParseError("action must have the form Tool[argument]", line);
    }
    if (!text::trim(rest.substr(close + 1)).empty()) {
        throw ParseError("unexpected text after action argument", line);
    }

    AgentAction action{*tool, std::string(rest.substr(open + 1, close - open - 1))};
    if (action.tool == Tool::finish) {
        std::string arg = text::trim(action.argument);
        if (!arg.empty() && arg != "[]" && parse_triples(arg, Schema{}, ParseMode::lenient).triples.empty()) {
            throw ParseError("Finish argument is not a triple list", line);
        }
    }
    return action;
}

std::string parse_thought(std::string_view text) {
    std::size_t start = find_action_line(text);
    std::string_view before = text.substr(0, start == std::string_view::npos ? text.size() : start);
    std::string trimmed = text::trim(before);
    if (trimmed.rfind(kThoughtPrefix, 0) == 0) trimmed = text::trim(std::string_view(trimmed).substr(kThoughtPrefix.size()));
    return trimmed;
}

}  // namespace relex
