#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "relex/agent.hpp"
#include "relex/corpus.hpp"
#include "relex/gateway.hpp"

namespace relex {

// One training example. Plain records (D) have no rationale or strategy.
struct SftRecord {
    std::int64_t id = 0;
    std::string sentence;
    std::vector<Triple> gold;
    std::string rationale;
    std::optional<StrategyKind> strategy;
    std::optional<std::int64_t> source_trajectory_id;

    bool operator==(const SftRecord&) const = default;
};

struct DistillOptions {
    // Require the rationale to name every gold relation.
    bool validate = true;
    NormalizationPolicy policy = NormalizationPolicy::english();
};

// Steps rendered as Thought/Action/Observation blocks.
std::string serialize_steps(const Trajectory& trajectory);

// True when the trajectory finished and its result equals gold (F1 = 1, gold nonempty).
bool qualifies(const Trajectory& trajectory, const std::vector<Triple>& gold, const NormalizationPolicy& policy);

// Empty string when the rationale names every gold relation and every triple
// it spells out is a gold triple; otherwise the reason it was rejected.
std::string rationale_problem(const std::string& rationale, const std::vector<Triple>& gold,
                              const NormalizationPolicy& policy);

// Throws PreconditionError when the trajectory does not qualify. Returns
// nullopt when validation failed twice (the reason is journaled).
std::optional<std::string> summarize_rationale(const Trajectory& trajectory, const std::string& sentence,
                                               const std::vector<Triple>& gold, Gateway& gateway,
                                               const DistillOptions& options = {});

struct DistillSkip {
    std::int64_t sentence_id = 0;
    std::string reason;
};

struct DistillReport {
    std::size_t samples = 0;
    std::size_t trajectories = 0;
    std::size_t qualifying = 0;
    std::size_t distilled = 0;
    std::map<std::string, std::size_t> trajectories_by_strategy;
    std::map<std::string, std::size_t> distilled_by_strategy;
    std::vector<DistillSkip> skips;

    nlohmann::json to_json() const;
};

struct SftDatasets {
    std::vector<SftRecord> plain;      // D
    std::vector<SftRecord> rationale;  // D'
    DistillReport report;
};

// Throws PreconditionError when a trajectory references an unknown sample id.
SftDatasets build_sft_datasets(const std::vector<Trajectory>& trajectories, const std::vector<Sample>& samples,
                               Gateway& gateway, const DistillOptions& options = {});

enum class SftTemplate { plain, rationale };

// JSONL {id, instruction, output, strategy_tag}, written atomically. Each
// output's triple block is parsed back and must equal gold, otherwise the
// export aborts (DatasetError naming the record) and no file is left behind.
void export_sft(const std::vector<SftRecord>& records, const std::filesystem::path& path, SftTemplate tmpl,
                const Schema& schema, const NormalizationPolicy& policy);

std::string sft_instruction(const SftRecord& record, const Schema& schema);
std::string sft_output(const SftRecord& record, SftTemplate tmpl);

}  // namespace relex
