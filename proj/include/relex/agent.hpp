#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "relex/corpus.hpp"
#include "relex/gateway.hpp"
#include "relex/grammar.hpp"
#include "relex/knowledge.hpp"
#include "relex/memory.hpp"
#include "relex/prompt.hpp"
#include "relex/retrieval.hpp"

namespace relex {

enum class StrategyKind { direct, staged, cot, react };
enum class StrategyMode { rule, llm, fixed };

StrategyKind strategy_kind_from_string(std::string_view name);
std::string to_string(StrategyKind kind);
StrategyMode strategy_mode_from_string(std::string_view name);
std::string to_string(StrategyMode mode);

// `error` marks an episode aborted by an exception (the run continues).
enum class Termination { finish, budget_exhausted, parse_failure, error };

std::string to_string(Termination t);
Termination termination_from_string(std::string_view name);

struct Step {
    std::string thought;
    AgentAction action;
    std::string observation;

    bool operator==(const Step&) const = default;
};

struct Trajectory {
    std::int64_t sentence_id = 0;
    std::string sentence;
    StrategyKind strategy = StrategyKind::direct;
    std::vector<Step> steps;
    std::vector<Triple> result;
    Termination terminated = Termination::finish;
    std::string error;

    bool operator==(const Trajectory&) const = default;
};

nlohmann::json trajectory_to_json(const Trajectory& t);
Trajectory trajectory_from_json(const nlohmann::json& doc);
// One compact JSON object per line.
void write_trajectories(const std::vector<Trajectory>& trajectories, const std::filesystem::path& path);
std::vector<Trajectory> read_trajectories(const std::filesystem::path& path);

inline constexpr std::string_view kFinishObservation = "Episode finished.";
inline constexpr std::string_view kToolUnavailable = "tool unavailable";
inline constexpr std::string_view kNoResults = "no results";

struct AgentOptions {
    StrategyMode strategy_mode = StrategyMode::rule;
    StrategyKind fixed_strategy = StrategyKind::react;

    std::size_t max_rounds = 6;
    std::size_t k = 5;           // retrieved samples
    std::size_t l = 5;           // candidate relations
    std::size_t k_each = 3;      // memory bundle cap per store
    std::size_t kg_cap = 10;     // triples per linked entity
    std::size_t short_length = 30;
    std::size_t min_mentions = 2;
    std::size_t observation_limit = 1500;  // code points

    CandidateMethod candidate_method = CandidateMethod::prior;
    RecognitionMethod recognition = RecognitionMethod::gazetteer;

    // Ablations. `retrieval` off is w/oR; the content flags are -samples,
    // -doc and -KG.
    bool retrieval = true;
    bool use_samples = true;
    bool use_guidelines = true;
    bool use_kg = true;

    // Retrieved context can reach the model as prompt sections, as tools, or both.
    bool prompt_context = true;
    bool tools = true;

    MemoryMode memory_mode = MemoryMode::off;
    VerifierMode verifier = VerifierMode::oracle;

    Language language = Language::english;
    NormalizationPolicy policy = NormalizationPolicy::english();
    ParseMode parse_mode = ParseMode::strict;

    std::uint64_t seed = 0;
    // Sentences processed concurrently when memory is off and the backend allows it.
    std::size_t workers = 1;
};

// Everything an episode may consult; immutable during a run.
struct Resources {
    Schema schema;
    std::vector<Sample> corpus;  // labelled retrieval corpus
    std::shared_ptr<const SampleIndex> index;
    RelationPrior prior;
    std::vector<GuidelineSnippet> guidelines;
    KGStore kg;

    // Builds the index and the relation prior over `corpus`.
    static std::shared_ptr<Resources> make(Schema schema, std::vector<Sample> corpus, EncoderKind kind,
                                           const IndexOptions& index_options, std::vector<GuidelineSnippet> guidelines,
                                           KGStore kg);
};

struct Toolset {
    std::set<Tool> enabled{Tool::finish};
    const Resources* resources = nullptr;
    const Memory* memory = nullptr;
    const AgentOptions* options = nullptr;

    bool is_enabled(Tool tool) const { return tool == Tool::finish || enabled.count(tool) > 0; }
    // True when the tool is enabled and its backing store is nonempty.
    bool has_data(Tool tool) const;
    // "Name[argument]: description" lines for the enabled tools.
    std::string describe() const;
};

Toolset make_toolset(const Resources& resources, const Memory* memory, const AgentOptions& options);

// Per-sentence state shared by dispatch and prompt building.
struct EpisodeContext {
    std::string sentence;
    std::set<std::int64_t> exclude;
    std::vector<Mention> mentions;
    std::vector<std::string> candidates;
    PromptSlots slots;
};

std::string dispatch(const AgentAction& action, const Toolset& toolset, const EpisodeContext& context);

struct StrategySignals {
    std::size_t sentence_length = 0;
    std::size_t candidate_count = 0;
    std::size_t mention_count = 0;
    bool tool_data = false;  // some enabled tool besides Finish has data
};

// Rule table, in order: react (>= min_mentions mentions and tool data),
// direct (<= 2 candidates and short), staged (> 2 candidates), cot.
StrategyKind select_strategy_rule(const StrategySignals& signals, const AgentOptions& options);

StrategyKind select_strategy(std::string_view sentence, const std::vector<std::string>& candidates, StrategyMode mode,
                             const StrategySignals& signals, const AgentOptions& options, Gateway* gateway);

// Renders examples as "Input: ...\nOutput: ..." blocks separated by blank lines.
std::string render_examples(const std::vector<const Sample*>& samples);

Trajectory run_episode(const EpisodeContext& context, const Toolset& toolset, StrategyKind strategy, Gateway& gateway,
                       const Schema& schema, const AgentOptions& options);

struct CorpusRun {
    std::vector<Trajectory> trajectories;
    Metrics metrics;
    MemoryState memory;
};

class Agent {
public:
    Agent(std::shared_ptr<const Resources> resources, AgentOptions options, Gateway& gateway);

    // Builds the episode context (retrieval, candidates, memory bundle).
    EpisodeContext prepare(const Sample& sample, const Memory* memory) const;

    Trajectory extract(const Sample& sample, const Memory* memory) const;

    // Writes verdicts (and deep updates / reflections) for one processed sentence.
    void remember(const Sample& sample, const Trajectory& trajectory, Memory& memory) const;

    // Sequential when memory is on. `memory` may carry state from earlier runs.
    CorpusRun run_corpus(const std::vector<Sample>& samples, Memory memory) const;
    CorpusRun run_corpus(const std::vector<Sample>& samples) const;

    Memory make_memory() const;
    const AgentOptions& options() const { return options_; }
    const Resources& resources() const { return *resources_; }

private:
    std::shared_ptr<const Resources> resources_;
    AgentOptions options_;
    Gateway& gateway_;
    std::map<std::string, std::set<std::int64_t>> ids_by_text_;
    std::map<std::int64_t, const Sample*> corpus_by_id_;
};

}  // namespace relex
