#include "relex/distill.hpp"

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

std::set<Triple> normalized_set(const std::vector<Triple>& triples, const NormalizationPolicy& policy) {
    std::set<Triple> out;
    for (const auto& t : triples) out.insert(normalize_triple(t, policy));
    return out;
}

}  // namespace

std::string serialize_steps(const Trajectory& trajectory) {
    std::string out;
    for (const auto& s : trajectory.steps) {
        if (!out.empty()) out.push_back('\n');
        out += format_step(s.thought, s.action) + "\nObservation: " + s.observation;
    }
    return out;
}

bool qualifies(const Trajectory& trajectory, const std::vector<Triple>& gold, const NormalizationPolicy& policy) {
    return trajectory.terminated == Termination::finish && !gold.empty() &&
           score(trajectory.result, gold, policy).f1 == 1.0;
}

std::string rationale_problem(const std::string& rationale, const std::vector<Triple>& gold,
                              const NormalizationPolicy& policy) {
    if (text::trim(rationale).empty()) return "rationale is empty";
    for (const auto& g : gold) {
        if (rationale.find(g.relation) == std::string::npos) return "rationale does not mention relation '" + g.relation + "'";
    }
    auto gold_set = normalized_set(gold, policy);
    for (const auto& t : parse_triples(rationale, Schema{}, ParseMode::lenient).triples) {
        if (!gold_set.count(normalize_triple(t, policy))) return "rationale states non-gold triple " + format_triple(t);
    }
    return {};
}

std::optional<std::string> summarize_rationale(const Trajectory& trajectory, const std::string& sentence,
                                               const std::vector<Triple>& gold, Gateway& gateway,
                                               const DistillOptions& options) {
    if (!qualifies(trajectory, gold, options.policy)) {
        throw PreconditionError("trajectory for sentence " + std::to_string(trajectory.sentence_id) +
                                " is not a fully correct finished episode");
    }
    auto prompt = render_prompt(templates::rationale(), {{"input_sentence", sentence},
                                                         {"trajectory", serialize_steps(trajectory)},
                                                         {"gold", format_triples(gold)}});
    std::string problem;
    for (int attempt = 0; attempt < 2; ++attempt) {
        auto rationale = text::trim(gateway.complete({prompt, 0.0, 512, {}, attempt == 0 ? "rationale" : "rationale_retry"}));
        problem = options.validate ? rationale_problem(rationale, gold, options.policy)
                                   : (rationale.empty() ? "rationale is empty" : "");
        if (problem.empty()) return rationale;
    }
    gateway.note("rationale_rejected", "sentence " + std::to_string(trajectory.sentence_id) + ": " + problem);
    return std::nullopt;
}

json DistillReport::to_json() const {
    json skipped = json::array();
    for (const auto& s : skips) skipped.push_back({{"sentence_id", s.sentence_id}, {"reason", s.reason}});
    return {{"samples", samples},
            {"trajectories", trajectories},
            {"qualifying", qualifying},
            {"distilled", distilled},
            {"trajectories_by_strategy", trajectories_by_strategy},
            {"distilled_by_strategy", distilled_by_strategy},
            {"skipped", skips.size()},
            {"skips", skipped}};
}

SftDatasets build_sft_datasets(const std::vector<Trajectory>& trajectories, const std::vector<Sample>& samples,
                               Gateway& gateway, const DistillOptions& options) {
    std::map<std::int64_t, const Sample*> by_id;
    for (const auto& s : samples) by_id[s.id] = &s;

    SftDatasets out;
    for (const auto& s : samples) out.plain.push_back({s.id, s.text, s.gold, "", std::nullopt, std::nullopt});
    auto& report = out.report;
    report.samples = samples.size();
    report.trajectories = trajectories.size();

    for (const auto& t : trajectories) {
        auto it = by_id.find(t.sentence_id);
        if (it == by_id.end()) {
            throw PreconditionError("trajectory references unknown sample id " + std::to_string(t.sentence_id));
        }
        const Sample& sample = *it->second;
        ++report.trajectories_by_strategy[to_string(t.strategy)];
        auto skip = [&](std::string reason) { report.skips.push_back({t.sentence_id, std::move(reason)}); };

        if (t.terminated != Termination::finish) {
            skip("terminated=" + to_string(t.terminated));
            continue;
        }
        if (sample.gold.empty()) {
            skip("sample has no gold triples");
            continue;
        }
        if (!qualifies(t, sample.gold, options.policy)) {
            auto m = score(t.result, sample.gold, options.policy);
            skip("result does not match gold (tp=" + std::to_string(m.tp) + ", fp=" + std::to_string(m.fp) +
                 ", fn=" + std::to_string(m.fn) + ")");
            continue;
        }
        ++report.qualifying;
        std::optional<std::string> rationale;
        try {
            rationale = summarize_rationale(t, sample.text, sample.gold, gateway, options);
        } catch (const TransportError& e) {
            skip(std::string("gateway failure: ") + e.what());
            continue;
        }
        if (!rationale) {
            skip("rationale failed validation twice");
            continue;
        }
        out.rationale.push_back({sample.id, sample.text, sample.gold, *rationale, t.strategy, t.sentence_id});
        ++report.distilled;
        ++report.distilled_by_strategy[to_string(t.strategy)];
    }
    return out;
}

std::string sft_instruction(const SftRecord& record, const Schema& schema) {
    std::string relations;
    for (const auto& n : schema.names()) relations += (relations.empty() ? "" : ", ") + n;
    return render_prompt(templates::extraction(), {{"input_sentence", record.sentence}, {"relation_candidates", relations}});
}

std::string sft_output(const SftRecord& record, SftTemplate tmpl) {
    if (tmpl == SftTemplate::plain) return format_triples(record.gold);
    return record.rationale + "\n" + std::string(kTripleBlockMarker) + "\n" + format_triples(record.gold);
}

void export_sft(const std::vector<SftRecord>& records, const std::filesystem::path& path, SftTemplate tmpl,
                const Schema& schema, const NormalizationPolicy& policy) {
    std::vector<std::string> lines;
    for (const auto& r : records) {
        if (r.gold.empty()) throw DatasetError("record " + std::to_string(r.id) + " has no gold triples");
        if (tmpl == SftTemplate::rationale && text::trim(r.rationale).empty()) {
            throw DatasetError("record " + std::to_string(r.id) + " has an empty rationale");
        }
        std::string output = sft_output(r, tmpl);
        auto block = tmpl == SftTemplate::plain ? output : extract_triple_block(output);
        auto reparsed = parse_triples(block, schema, ParseMode::strict).triples;
        if (normalized_set(reparsed, policy) != normalized_set(r.gold, policy)) {
            throw DatasetError("record " + std::to_string(r.id) + ": output does not parse back to its gold triples");
        }
        json line = {{"id", r.id}, {"instruction", sft_instruction(r, schema)}, {"output", output}};
        line["strategy_tag"] = r.strategy ? json(to_string(*r.strategy)) : json(nullptr);
        lines.push_back(line.dump());
    }
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error("cannot write " + tmp.string());
        for (const auto& l : lines) out << l << '\n';
        if (!out) throw Error("failed writing " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

}  // namespace relex
