#include <random>

#include <gtest/gtest.h>

#include "fixtures.hpp"
#include "relex/error.hpp"
#include "relex/memory.hpp"

using namespace relex;
using namespace relex::testing;

namespace {

ScriptedRule rule(std::vector<std::string> all, std::string response, std::optional<std::string> tag = {}) {
    ScriptedRule r;
    r.substrings = std::move(all);
    r.response = std::move(response);
    r.tag = std::move(tag);
    return r;
}

Gateway scripted(std::vector<ScriptedRule> rules, std::shared_ptr<Journal> journal = nullptr) {
    return Gateway(std::make_shared<ScriptedBackend>(std::move(rules)), std::move(journal));
}

const std::string kBirth = "Mo Yan was born in Northeast Gaomi Township, Shandong.";
const std::string kAward = "Mo Yan won the Nobel Prize in Literature in 2012.";

}  // namespace

TEST(ShallowMemory, CorrectAndWrongStores) {
    Memory m(NormalizationPolicy::english(), Language::english);
    auto added = m.record_shallow(kBirth, {{{"Mo Yan", "place_of_birth", "Northeast Gaomi Township"}, Verdict::correct},
                                           {{"Mo Yan", "place_of_birth", "Shandong"}, Verdict::wrong}});
    EXPECT_EQ(added, 2u);
    EXPECT_EQ(m.state().correct.size(), 1u);
    EXPECT_EQ(m.state().wrong.size(), 1u);
    EXPECT_EQ(m.state().step_counter, 2u);
}

TEST(ShallowMemory, EmptyIsNoOpAndRepeatIsIdempotent) {
    Memory m(NormalizationPolicy::english(), Language::english);
    EXPECT_EQ(m.record_shallow(kBirth, {}), 0u);
    EXPECT_TRUE(m.state().empty());
    std::vector<std::pair<Triple, Verdict>> v = {{{"Mo Yan", "place_of_birth", "Northeast Gaomi Township"}, Verdict::correct}};
    m.record_shallow(kBirth, v);
    auto before = m.state();
    EXPECT_EQ(m.record_shallow(kBirth, v), 0u);
    // the normalized form is the same pair too
    EXPECT_EQ(m.record_shallow(kBirth, {{{" mo yan", "place_of_birth", "northeast gaomi township"}, Verdict::wrong}}), 0u);
    EXPECT_EQ(m.state(), before);
}

TEST(Verify, OracleAndBlind) {
    std::vector<Triple> pred = {{"Mo Yan", "award", "Nobel Prize"}, {"Mo Yan", "award", "Booker"}, {"mo yan", "award", "nobel prize"}};
    std::vector<Triple> gold = {{"Mo Yan", "award", "Nobel Prize"}};
    auto oracle = verify_triples(pred, gold, NormalizationPolicy::english(), VerifierMode::oracle);
    ASSERT_EQ(oracle.size(), 2u);
    EXPECT_EQ(oracle[0].second, Verdict::correct);
    EXPECT_EQ(oracle[1].second, Verdict::wrong);
    for (const auto& [t, v] : verify_triples(pred, gold, NormalizationPolicy::english(), VerifierMode::blind)) {
        EXPECT_EQ(v, Verdict::correct);
    }
}

TEST(DeepMemory, SummarizeThenMerge) {
    KGStore kg(NormalizationPolicy::english());
    kg.add_alias("Mo Yan", "Q1");
    Memory m(NormalizationPolicy::english(), Language::english, &kg);
    auto gw = scripted({
        rule({"Current memory:\nMo Yan won the Nobel Prize in Literature.", "New fact:\n(Mo Yan, place_of_birth, Northeast Gaomi Township)"},
             "Mo Yan won the Nobel Prize in Literature and was born in Northeast Gaomi Township.", "memory_update"),
        rule({"New fact:\n(Mo Yan, award, Nobel Prize in Literature)"}, "Mo Yan won the Nobel Prize in Literature.",
             "memory_summarize"),
    });
    ASSERT_TRUE(m.update_deep({"Mo Yan", "award", "Nobel Prize in Literature"}, kAward, gw));
    ASSERT_EQ(m.state().deep.size(), 1u);
    EXPECT_EQ(m.state().deep.begin()->first, "Q1");

    ASSERT_TRUE(m.update_deep({"Mo Yan", "place_of_birth", "Northeast Gaomi Township"}, kBirth, gw));
    ASSERT_EQ(m.state().deep.size(), 1u);
    const auto& e = m.state().deep.at("Q1");
    EXPECT_NE(e.text.find("Northeast Gaomi Township"), std::string::npos);
    EXPECT_EQ(e.provenance.size(), 2u);
    EXPECT_EQ(e.last_updated, 2u);
}

TEST(DeepMemory, NewKeyAddsOneEntry) {
    Memory m(NormalizationPolicy::english(), Language::english);
    auto gw = scripted({rule({}, "summary", "memory_summarize")});
    m.update_deep({"Mo Yan", "award", "Nobel Prize"}, kAward, gw);
    m.update_deep({"Lu Xun", "occupation", "writer"}, "Lu Xun was a writer.", gw);
    EXPECT_EQ(m.state().deep.size(), 2u);
    EXPECT_EQ(m.deep_key({"Lu Xun", "occupation", "writer"}), "lu xun");
}

TEST(DeepMemory, KeyFallsBackToTail) {
    KGStore kg(NormalizationPolicy::english());
    kg.add_alias("Nobel Prize", "Q2");
    Memory m(NormalizationPolicy::english(), Language::english, &kg);
    EXPECT_EQ(m.deep_key({"Somebody", "award", "Nobel Prize"}), "Q2");
}

TEST(DeepMemory, GatewayFailureLeavesStateAndJournals) {
    struct Down : Backend {
        std::string complete(const CompletionRequest&) override { throw TransportError("down"); }
        std::string name() const override { return "down"; }
    };
    RetryPolicy policy;
    policy.sleep = [](std::chrono::milliseconds) {};
    auto journal = std::make_shared<Journal>();
    Gateway gw(std::make_shared<Down>(), journal, policy);
    Memory m(NormalizationPolicy::english(), Language::english);
    EXPECT_FALSE(m.update_deep({"Mo Yan", "award", "Nobel Prize"}, kAward, gw));
    EXPECT_TRUE(m.state().empty());
    auto entries = journal->entries();
    EXPECT_TRUE(std::any_of(entries.begin(), entries.end(), [](const JournalEntry& e) { return e.kind == "event"; }));

    // a script miss is a fixture bug, not a model failure
    auto miss = scripted({});
    EXPECT_THROW(m.update_deep({"Mo Yan", "award", "Nobel Prize"}, kAward, miss), ScriptMissError);
}

TEST(Reflection, LessonStoredDedupedAndRetrieved) {
    const std::string lesson = "A museum is not a person; check that the head of founded_by is an organization.";
    Memory m(NormalizationPolicy::english(), Language::english);
    auto gw = scripted({rule({"Incorrect triple:"}, lesson, "reflection")});
    Triple wrong{"Musesum", "founded_by", "Palace"};
    std::string sentence = "The Palace Museum was founded in 1925.";
    ASSERT_TRUE(m.reflect(wrong, sentence, {{"Palace Museum", "inception", "1925"}}, {}, gw));
    ASSERT_EQ(m.state().reflections.size(), 1u);
    ASSERT_TRUE(m.reflect(wrong, sentence, {}, {}, gw));
    ASSERT_EQ(m.state().reflections.size(), 1u);
    EXPECT_EQ(m.state().reflections[0].last_updated, 2u);

    auto bundle = m.query("Which museum was founded by the city?", {}, 3);
    ASSERT_EQ(bundle.reflections.size(), 1u);
    EXPECT_EQ(render_memory_bundle(bundle), "- Lesson: " + lesson);
}

TEST(Query, EmptyStateAndZeroK) {
    Memory m(NormalizationPolicy::english(), Language::english);
    EXPECT_TRUE(m.query(kAward, {{"Mo Yan", 0, 6}}, 3).empty());
    m.record_shallow(kBirth, {{{"Mo Yan", "place_of_birth", "Northeast Gaomi Township"}, Verdict::correct}});
    EXPECT_TRUE(m.query(kAward, {{"Mo Yan", 0, 6}}, 0).empty());
}

TEST(Query, DeepEntryForMentionedEntity) {
    KGStore kg(NormalizationPolicy::english());
    kg.add_alias("Mo Yan", "Q1");
    kg.add_alias("Guan Moye", "Q1");
    Memory m(NormalizationPolicy::english(), Language::english, &kg);
    auto gw = scripted({rule({}, "Mo Yan was born in Northeast Gaomi Township.", "memory_summarize")});
    m.update_deep({"Mo Yan", "place_of_birth", "Northeast Gaomi Township"}, kBirth, gw);
    m.record_shallow(kBirth, {{{"Mo Yan", "place_of_birth", "Northeast Gaomi Township"}, Verdict::correct}});

    // linked through an alias mention
    auto bundle = m.query("Guan Moye published a novel.", {{"Guan Moye", 0, 9}}, 3);
    ASSERT_EQ(bundle.deep.size(), 1u);
    EXPECT_EQ(bundle.deep[0].key, "Q1");

    auto direct = m.query(kAward, {{"Mo Yan", 0, 6}}, 3);
    ASSERT_EQ(direct.deep.size(), 1u);
    ASSERT_EQ(direct.correct.size(), 1u);
    EXPECT_EQ(render_memory_bundle(direct),
              "- Mo Yan was born in Northeast Gaomi Township.\n"
              "- Verified: (Mo Yan, place_of_birth, Northeast Gaomi Township)");

    EXPECT_TRUE(m.query("Lu Xun wrote stories.", {{"Lu Xun", 0, 6}}, 3).empty());
}

TEST(Snapshot, EmptyRoundTrip) {
    TempDir dir;
    snapshot(MemoryState{}, dir / "m.json");
    EXPECT_EQ(restore(dir / "m.json"), MemoryState{});
}

TEST(Snapshot, RandomWritesRoundTrip) {
    TempDir dir;
    Memory m(NormalizationPolicy::english(), Language::english);
    auto gw = scripted({rule({"New fact:"}, "summary text", "memory_summarize"), rule({"Current memory:"}, "merged text", "memory_update"),
                        rule({"Incorrect triple:"}, "lesson", "reflection")});
    std::mt19937_64 rng(3);
    std::uniform_int_distribution<int> op(0, 3);
    std::uniform_int_distribution<int> ent(0, 9);
    for (int i = 0; i < 100; ++i) {
        Triple t{"E" + std::to_string(ent(rng)), "r", "F" + std::to_string(ent(rng))};
        std::string s = "sentence " + std::to_string(i);
        switch (op(rng)) {
            case 0: m.record_shallow(s, {{t, Verdict::correct}}); break;
            case 1: m.record_shallow(s, {{t, Verdict::wrong}}); break;
            case 2: m.update_deep(t, s, gw); break;
            default: m.reflect(t, s, {}, {}, gw); break;
        }
    }
    EXPECT_EQ(m.state().step_counter, 100u);
    snapshot(m.state(), dir / "m.json");
    auto back = restore(dir / "m.json");
    EXPECT_EQ(back, m.state());
    EXPECT_FALSE(fs::exists(dir / "m.json.tmp"));
}

TEST(Snapshot, CorruptOrWrongVersion) {
    TempDir dir;
    write_file(dir / "bad.json", "{\"version\": 1, \"correct\": ");
    EXPECT_THROW(restore(dir / "bad.json"), DatasetError);
    write_file(dir / "v2.json", R"({"version":2,"step_counter":0,"correct":[],"wrong":[],"deep":[],"reflections":[]})");
    EXPECT_THROW(restore(dir / "v2.json"), DatasetError);
    write_file(dir / "verdict.json",
               R"({"version":1,"step_counter":1,"correct":[{"triple":{"h":"a","r":"r","t":"b"},"sentence":"s","verdict":"maybe","step":1}],"wrong":[],"deep":[],"reflections":[]})");
    EXPECT_THROW(restore(dir / "verdict.json"), DatasetError);
    EXPECT_THROW(restore(dir / "missing.json"), DatasetError);
}

TEST(Memory, StoresOnlyGrow) {
    Memory m(NormalizationPolicy::english(), Language::english);
    auto gw = scripted({rule({}, "text")});
    std::mt19937_64 rng(8);
    std::uniform_int_distribution<int> ent(0, 4);
    std::size_t prev_total = 0;
    std::uint64_t prev_step = 0;
    for (int i = 0; i < 60; ++i) {
        Triple t{"E" + std::to_string(ent(rng)), "r", "x"};
        if (i % 3 == 0) m.update_deep(t, "s", gw);
        else m.record_shallow("s" + std::to_string(ent(rng)), {{t, i % 2 ? Verdict::correct : Verdict::wrong}});
        const auto& s = m.state();
        std::size_t total = s.correct.size() + s.wrong.size() + s.deep.size() + s.reflections.size();
        ASSERT_GE(total, prev_total);
        ASSERT_GE(s.step_counter, prev_step);
        prev_total = total;
        prev_step = s.step_counter;
    }
}
