#pragma once

#include <map>
#include <string>
#include <vector>

namespace relex {

using PromptSlots = std::map<std::string, std::string>;

// A section renders as its header line followed by its body, with `{slot}`
// references substituted. Sections whose referenced slots are absent or empty
// are omitted entirely (header included); a required section with a missing
// slot is an error. `{{` and `}}` render literal braces.
struct PromptSection {
    std::string header;
    std::string body;
    bool required = false;
};

struct PromptTemplate {
    std::string id;
    std::vector<PromptSection> sections;

    // Slot names referenced anywhere in the template, in first-use order.
    std::vector<std::string> slots() const;
};

// Throws PreconditionError when a required section's slot is missing.
std::string render_prompt(const PromptTemplate& tmpl, const PromptSlots& slots);

namespace templates {

// Section headers of the extraction prompt.
inline constexpr const char* kTaskLine = "Task: Extract relation triples from the input text.";
inline constexpr const char* kInputHeader = "Input:";
inline constexpr const char* kExamplesHeader = "Some relevant examples:";
inline constexpr const char* kRelationsHeader = "Possible relation types:";
inline constexpr const char* kRelevantInfoHeader = "Relevant information:";
inline constexpr const char* kMemoryHeader = "Memory:";
inline constexpr const char* kOutputCue = "Output:";

// Task line, input, examples, relation candidates, relevant information,
// memory, output cue. Slots: input_sentence (required), examples,
// relation_candidates, relevant_info, memory.
const PromptTemplate& extraction();
// Extraction prompt with a step-by-step instruction ending in a triple block.
const PromptTemplate& chain_of_thought();
// First call of staged extraction: choose relation types among candidates.
const PromptTemplate& relation_selection();
// Open-loop tool use. Extra slots: tools, history.
const PromptTemplate& react();
// Candidate relation retrieval by the model. Slots: input_sentence, relation_list.
const PromptTemplate& candidate_relations();
// Mention detection by the model. Slot: input_sentence.
const PromptTemplate& entity_recognition();
// Strategy choice by the model. Slots: input_sentence, relation_candidates.
const PromptTemplate& strategy_choice();
// Deep memory merge. Slots: memory, triple, sentence.
const PromptTemplate& memory_update();
// Deep memory creation when no entry exists. Slots: triple, sentence.
const PromptTemplate& memory_summarize();
// Lesson from a wrong extraction. Slots: sentence, triple, guidelines, gold.
const PromptTemplate& reflection();
// Rationale from a successful trajectory. Slots: input_sentence, trajectory, gold.
const PromptTemplate& rationale();

}  // namespace templates
}  // namespace relex
