#pragma once

#include <array>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "relex/corpus.hpp"

namespace relex {

// Output grammar shared by every extraction prompt:
//
//   (head, relation, tail)
//
// one tuple per line, or a JSON array of {"h", "r", "t"} objects. A field that
// contains one of `(),"\` or control characters, has surrounding whitespace,
// or is empty is written as a JSON string literal.

std::string format_triple(const Triple& t);
// Tuples joined by newlines.
std::string format_triples(const std::vector<Triple>& triples);

inline constexpr std::string_view kTripleBlockMarker = "Triples:";

// Text after the last line that starts with "Triples:", or the whole text when
// no such line exists.
std::string extract_triple_block(std::string_view text);

enum class ParseMode { strict, lenient };

struct ParseIssue {
    enum class Kind { empty_output, malformed_tuple, empty_field, unknown_relation, no_triples };
    Kind kind;
    std::string message;
    // Set for unknown_relation issues; true when lenient mode kept the triple.
    bool kept = false;
};

std::string to_string(ParseIssue::Kind kind);

struct TripleParse {
    std::vector<Triple> triples;
    std::vector<ParseIssue> issues;
};

// Never throws. An empty schema disables the relation check.
TripleParse parse_triples(std::string_view text, const Schema& schema, ParseMode mode);

enum class Tool { search_samples, search_annotation, search_kg, search_memory, finish };

inline constexpr std::array<Tool, 5> kAllTools = {Tool::search_samples, Tool::search_annotation, Tool::search_kg,
                                                  Tool::search_memory, Tool::finish};

// Registry names: SearchSamples, SearchAnnotation, SearchKG, SearchMemory, Finish.
std::string_view tool_name(Tool tool);
std::optional<Tool> tool_from_name(std::string_view name);

struct AgentAction {
    Tool tool = Tool::finish;
    std::string argument;

    bool operator==(const AgentAction&) const = default;
};

// "Tool[argument]"
std::string format_action(const AgentAction& action);
// "Thought: ...\nAction: Tool[argument]"
std::string format_step(std::string_view thought, const AgentAction& action);

// Grammar: optional "Thought: ..." text followed by a line
// "Action: <Tool>[<argument>]". Anything from "\nObservation:" on is ignored.
// Throws ParseError on a missing Action line, unknown tool, missing brackets,
// or a Finish argument that is not a triple list.
AgentAction parse_action(std::string_view text);

// Thought text preceding the Action line, without the "Thought:" prefix.
std::string parse_thought(std::string_view text);

}  // namespace relex
