#include "relex/prompt.hpp"

#include <algorithm>

#include "relex/error.hpp"

namespace relex {
namespace {

// Splits a body into literal text and slot references.
struct Piece {
    bool is_slot;
    std::string value;
};

std::vector<Piece> tokenize_body(const std::string& body) {
    std::vector<Piece> pieces;
    std::string literal;
    for (std::size_t i = 0; i < body.size(); ++i) {
        char c = body[i];
        if ((c == '{' || c == '}') && i + 1 < body.size() && body[i + 1] == c) {
            literal.push_back(c);
            ++i;
            continue;
        }
        if (c == '{') {
            std::size_t close = body.find('}', i);
            if (close == std::string::npos) throw PreconditionError("unterminated slot in template body: " + body);
            if (!literal.empty()) pieces.push_back({false, std::move(literal)});
            literal.clear();
            pieces.push_back({true, body.substr(i + 1, close - i - 1)});
            i = close;
            continue;
        }
        literal.push_back(c);
    }
    if (!literal.empty()) pieces.push_back({false, std::move(literal)});
    return pieces;
}

}  // namespace

std::vector<std::string> PromptTemplate::slots() const {
    std::vector<std::string> out;
    for (const auto& section : sections) {
        for (const auto& piece : tokenize_body(section.body)) {
            if (piece.is_slot && std::find(out.begin(), out.end(), piece.value) == out.end()) out.push_back(piece.value);
        }
    }
    return out;
}

std::string render_prompt(const PromptTemplate& tmpl, const PromptSlots& slots) {
    std::string out;
    auto emit = [&out](const std::string& line) {
        if (!out.empty()) out.push_back('\n');
        out += line;
    };
    for (const auto& section : tmpl.sections) {
        auto pieces = tokenize_body(section.body);
        std::string body;
        bool complete = true;
        for (const auto& piece : pieces) {
            if (!piece.is_slot) {
                body += piece.value;
                continue;
            }
            auto it = slots.find(piece.value);
            if (it == slots.end() || it->second.empty()) {
                if (section.required) {
                    throw PreconditionError("prompt template '" + tmpl.id + "' requires slot '" + piece.value + "'");
                }
                complete = false;
                break;
            }
            body += it->second;
        }
        if (!complete) continue;
        if (!section.header.empty()) emit(section.header);
        if (!body.empty()) emit(body);
    }
    return out;
}

namespace templates {
namespace {

constexpr const char* kFormatLine = "Write one triple per line as (head, relation, tail).";

std::vector<PromptSection> extraction_sections(const char* instruction) {
    return {
        {kTaskLine, instruction, false},
        {kInputHeader, "{input_sentence}", true},
        {kExamplesHeader, "{examples}", false},
        {kRelationsHeader, "{relation_candidates}", false},
        {kRelevantInfoHeader, "{relevant_info}", false},
        {kMemoryHeader, "{memory}", false},
    };
}

}  // namespace

const PromptTemplate& extraction() {
    static const PromptTemplate t = [] {
        PromptTemplate p{"extraction", extraction_sections(kFormatLine)};
        p.sections.push_back({kOutputCue, "", false});
        return p;
    }();
    return t;
}

const PromptTemplate& chain_of_thought() {
    static const PromptTemplate t = [] {
        PromptTemplate p{"chain_of_thought",
                         extraction_sections("Reason step by step about the entities and relation types in the input. "
                                             "Then write a line \"Triples:\" followed by one (head, relation, tail) "
                                             "per line.")};
        p.sections.push_back({kOutputCue, "", false});
        return p;
    }();
    return t;
}

const PromptTemplate& relation_selection() {
    static const PromptTemplate t{
        "relation_selection",
        {
            {"Task: Select the relation types expressed in the input text.", "", false},
            {kInputHeader, "{input_sentence}", true},
            {"Candidate relation types:", "{relation_candidates}", true},
            {"", "Answer with a comma-separated list of relation types taken from the candidates.", false},
            {kOutputCue, "", false},
        }};
    return t;
}

const PromptTemplate& react() {
    static const PromptTemplate t = [] {
        PromptTemplate p{"react", extraction_sections(kFormatLine)};
        p.sections.push_back({"Tools:", "{tools}", true});
        p.sections.push_back({"",
                              "Answer with \"Thought: <reasoning>\" and then \"Action: <Tool>[<argument>]\". "
                              "Call Finish[(head, relation, tail) ...] once the triples are known.",
                              false});
        p.sections.push_back({"", "{history}", false});
        return p;
    }();
    return t;
}

const PromptTemplate& candidate_relations() {
    static const PromptTemplate t{
        "candidate_relations",
        {
            {"Task: List the relation types that may hold between entities in the input text.", "", false},
            {kInputHeader, "{input_sentence}", true},
            {"Relation types:", "{relation_list}", true},
            {"", "Answer with a comma-separated list of relation types, most likely first.", false},
            {kOutputCue, "", false},
        }};
    return t;
}

const PromptTemplate& entity_recognition() {
    static const PromptTemplate t{
        "entity_recognition",
        {
            {"Task: List the entity mentions in the input text, one per line, copied exactly.", "", false},
            {kInputHeader, "{input_sentence}", true},
            {kOutputCue, "", false},
        }};
    return t;
}

const PromptTemplate& strategy_choice() {
    static const PromptTemplate t{
        "strategy_choice",
        {
            {"Task: Choose how to extract relation triples from the input text.", "", false},
            {kInputHeader, "{input_sentence}", true},
            {kRelationsHeader, "{relation_candidates}", false},
            {"",
             "Options: direct (single answer), staged (select relation types first), "
             "cot (step-by-step reasoning), react (use tools). Answer with one option name.",
             false},
            {kOutputCue, "", false},
        }};
    return t;
}

const PromptTemplate& memory_update() {
    static const PromptTemplate t{
        "memory_update",
        {
            {"Task: Update the memory about an entity with a newly verified fact.", "", false},
            {"Current memory:", "{memory}", true},
            {"New fact:", "{triple}", true},
            {"Source sentence:", "{sentence}", false},
            {"", "Rewrite the memory as a short paragraph that keeps the old content and includes the new fact.", false},
            {kOutputCue, "", false},
        }};
    return t;
}

const PromptTemplate& memory_summarize() {
    static const PromptTemplate t{
        "memory_summarize",
        {
            {"Task: Summarize a newly verified fact as a memory about its entity.", "", false},
            {"New fact:", "{triple}", true},
            {"Source sentence:", "{sentence}", false},
            {"", "Write one short sentence.", false},
            {kOutputCue, "", false},
        }};
    return t;
}

const PromptTemplate& reflection() {
    static const PromptTemplate t{
        "reflection",
        {
            {"Task: An extracted triple was judged incorrect. State the lesson to avoid this error.", "", false},
            {"Sentence:", "{sentence}", true},
            {"Incorrect triple:", "{triple}", true},
            {"Correct triples:", "{gold}", false},
            {"Annotation guidelines:", "{guidelines}", false},
            {"", "Write the lesson as one sentence.", false},
            {kOutputCue, "", false},
        }};
    return t;
}

const PromptTemplate& rationale() {
    static const PromptTemplate t{
        "rationale",
        {
            {"Task: Summarize the reasoning below into a short rationale that leads to the correct triples.", "", false},
            {kInputHeader, "{input_sentence}", true},
            {"Reasoning trajectory:", "{trajectory}", true},
            {"Correct triples:", "{gold}", true},
            {"", "Mention every relation type of the correct triples. Do not list the triples again.", false},
            {"Rationale:", "", false},
        }};
    return t;
}

}  // namespace templates
}  // namespace relex
