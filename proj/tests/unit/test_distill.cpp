#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "fixtures.hpp"
#include "relex/distill.hpp"
#include "relex/error.hpp"
#include "relex/experiments.hpp"

using namespace relex;
using namespace relex::testing;
using nlohmann::json;

namespace {

ScriptedRule rule(std::vector<std::string> all, std::string response, std::optional<std::string> tag = {}) {
    ScriptedRule r;
    r.substrings = std::move(all);
    r.response = std::move(response);
    r.tag = std::move(tag);
    return r;
}

Trajectory finished(std::int64_t id, const std::string& sentence, std::vector<Triple> result,
                    StrategyKind kind = StrategyKind::direct) {
    Trajectory t;
    t.sentence_id = id;
    t.sentence = sentence;
    t.strategy = kind;
    t.result = result;
    t.steps.push_back({"", {Tool::finish, format_triples(result)}, std::string(kFinishObservation)});
    return t;
}

const Triple kGold{"Mo Yan", "award", "Nobel Prize"};

}  // namespace

TEST(Rationale, AcceptsValidSummary) {
    Gateway gw(std::make_shared<ScriptedBackend>(
        std::vector<ScriptedRule>{rule({}, "Winning a prize is the award relation.", "rationale")}));
    auto r = summarize_rationale(finished(0, kMoYanSentence, {kGold}), kMoYanSentence, {kGold}, gw);
    ASSERT_TRUE(r.has_value());
    EXPECT_EQ(*r, "Winning a prize is the award relation.");
}

TEST(Rationale, PreconditionOnNonQualifying) {
    Gateway gw(std::make_shared<ScriptedBackend>(std::vector<ScriptedRule>{}));
    auto wrong = finished(0, kMoYanSentence, {{"Mo Yan", "award", "Booker"}});
    EXPECT_THROW(summarize_rationale(wrong, kMoYanSentence, {kGold}, gw), PreconditionError);
    auto unfinished = finished(0, kMoYanSentence, {kGold});
    unfinished.terminated = Termination::budget_exhausted;
    EXPECT_THROW(summarize_rationale(unfinished, kMoYanSentence, {kGold}, gw), PreconditionError);
    EXPECT_THROW(summarize_rationale(finished(0, "s", {}), "s", {}, gw), PreconditionError);
}

TEST(Rationale, RetryThenGiveUp) {
    auto journal = std::make_shared<Journal>();
    Gateway gw(std::make_shared<ScriptedBackend>(std::vector<ScriptedRule>{
                   rule({}, "It is obvious.", "rationale"), rule({}, "Also (Mo Yan, award, Booker).", "rationale_retry")}),
               journal);
    EXPECT_FALSE(summarize_rationale(finished(0, kMoYanSentence, {kGold}), kMoYanSentence, {kGold}, gw).has_value());
    auto entries = journal->entries();
    EXPECT_EQ(std::count_if(entries.begin(), entries.end(), [](const JournalEntry& e) { return e.kind == "completion"; }), 2);
}

TEST(Rationale, ProblemDetection) {
    auto p = NormalizationPolicy::english();
    EXPECT_EQ(rationale_problem("award fits.", {kGold}, p), "");
    EXPECT_NE(rationale_problem("", {kGold}, p), "");
    EXPECT_NE(rationale_problem("no relation named", {kGold}, p), "");
    EXPECT_NE(rationale_problem("award, see (Mo Yan, award, Booker)", {kGold}, p), "");
    EXPECT_EQ(rationale_problem("award: (mo yan, award, nobel prize)", {kGold}, p), "");
}

TEST(Build, FixtureCounts) {
    TempDir dir;
    auto p = distill_fixture(dir.path());
    auto config = load_config(p.config);
    auto ws = Workspace::load(config);
    auto report = cmd_extract(ws.config);
    auto trajectories = read_trajectories(report.directory / "trajectories.jsonl");
    ASSERT_EQ(trajectories.size(), 20u);

    Gateway gw(make_backend(ws.config));
    auto sets = build_sft_datasets(trajectories, ws.test.samples, gw);
    EXPECT_EQ(sets.plain.size(), 20u);
    EXPECT_EQ(sets.report.qualifying, 10u);
    EXPECT_EQ(sets.report.distilled, 9u);
    EXPECT_EQ(sets.rationale.size(), 9u);
    ASSERT_EQ(sets.report.skips.size(), 11u);
    std::size_t by_strategy = 0;
    for (const auto& [k, n] : sets.report.distilled_by_strategy) by_strategy += n;
    EXPECT_EQ(by_strategy, sets.report.distilled);
    for (const auto& r : sets.rationale) {
        EXPECT_TRUE(r.strategy.has_value());
        EXPECT_EQ(r.source_trajectory_id, r.id);
        EXPECT_NE(r.id, 8);
    }
}

TEST(Build, UnknownSampleIdIsPrecondition) {
    Gateway gw(std::make_shared<ScriptedBackend>(std::vector<ScriptedRule>{}));
    EXPECT_THROW(build_sft_datasets({finished(99, "s", {kGold})}, {make_sample(0, "s", {kGold})}, gw), PreconditionError);
}

TEST(Export, RoundTripParsesBackToGold) {
    TempDir dir;
    Schema schema;
    schema.add({"award"});
    std::vector<SftRecord> records = {{0, kMoYanSentence, {kGold}, "award fits.", StrategyKind::react, 0},
                                      {1, "Mo Yan got it.", {kGold}, "award again", StrategyKind::direct, 1}};
    export_sft(records, dir / "r.jsonl", SftTemplate::rationale, schema, NormalizationPolicy::english());
    auto lines = read_lines(dir / "r.jsonl");
    ASSERT_EQ(lines.size(), 2u);
    auto first = json::parse(lines[0]);
    EXPECT_EQ(first["strategy_tag"], "react");
    EXPECT_NE(first["instruction"].get<std::string>().find(kMoYanSentence), std::string::npos);
    auto block = extract_triple_block(first["output"].get<std::string>());
    EXPECT_EQ(parse_triples(block, schema, ParseMode::strict).triples, records[0].gold);

    export_sft(records, dir / "p.jsonl", SftTemplate::plain, schema, NormalizationPolicy::english());
    auto plain = json::parse(read_lines(dir / "p.jsonl")[0]);
    EXPECT_EQ(plain["output"], format_triples({kGold}));
}

TEST(Export, EmptyInputGivesEmptyFile) {
    TempDir dir;
    export_sft({}, dir / "e.jsonl", SftTemplate::plain, Schema{}, NormalizationPolicy::english());
    ASSERT_TRUE(fs::exists(dir / "e.jsonl"));
    EXPECT_EQ(read_file(dir / "e.jsonl"), "");
}

TEST(Export, MismatchAbortsWithoutFile) {
    TempDir dir;
    Schema schema;
    schema.add({"award"});
    // the second record uses a relation outside the schema, so it cannot parse back to gold
    std::vector<SftRecord> records = {{3, "s", {{"Mo Yan", "award", "Nobel Prize"}}, "award", std::nullopt, std::nullopt},
                                      {4, "s", {{"Mo Yan", "unknown_rel", "x"}}, "unknown_rel", std::nullopt, std::nullopt}};
    try {
        export_sft(records, dir / "bad.jsonl", SftTemplate::plain, schema, NormalizationPolicy::english());
        FAIL() << "expected DatasetError";
    } catch (const DatasetError& e) {
        EXPECT_NE(std::string(e.what()).find("4"), std::string::npos);
    }
    EXPECT_FALSE(fs::exists(dir / "bad.jsonl"));
}
