#include <gtest/gtest.h>

#include "fixtures.hpp"
#include "relex/error.hpp"
#include "relex/knowledge.hpp"

using namespace relex;
using namespace relex::testing;

namespace {

KGStore store(std::initializer_list<std::pair<const char*, const char*>> aliases,
              NormalizationPolicy policy = NormalizationPolicy::english()) {
    KGStore kg(policy);
    for (const auto& [a, id] : aliases) kg.add_alias(a, id);
    return kg;
}

}  // namespace

TEST(Recognize, GazetteerSpans) {
    auto kg = store({{"Mo Yan", "Q1"}, {"Beijing", "Q2"}});
    std::string text = "Mo Yan spoke in Beijing";
    auto m = recognize_entities(text, RecognitionMethod::gazetteer, kg).mentions;
    ASSERT_EQ(m.size(), 2u);
    EXPECT_EQ(m[0], (Mention{"Mo Yan", 0, 6}));
    EXPECT_EQ(m[1], (Mention{"Beijing", 16, 23}));
    for (const auto& x : m) EXPECT_EQ(text.substr(x.begin, x.end - x.begin), x.surface);
}

TEST(Recognize, EmptyGazetteer) {
    EXPECT_TRUE(gazetteer_mentions("Mo Yan spoke", KGStore{}).empty());
}

TEST(Recognize, LongestMatchWins) {
    auto kg = store({{"Nobel", "Q1"}, {"Nobel Prize", "Q2"}});
    auto m = gazetteer_mentions("He won the Nobel Prize twice", kg);
    ASSERT_EQ(m.size(), 1u);
    EXPECT_EQ(m[0].surface, "Nobel Prize");
}

TEST(Recognize, WordBoundaries) {
    auto kg = store({{"Yan", "Q1"}});
    EXPECT_TRUE(gazetteer_mentions("Yanking the rope", kg).empty());
    EXPECT_EQ(gazetteer_mentions("Mr. Yan, hello", kg).size(), 1u);
}

TEST(Recognize, SurfaceMatchIsExact) {
    // casing differences are resolved by linking, not by the gazetteer scan
    auto kg = store({{"Mo Yan", "Q1"}});
    EXPECT_TRUE(gazetteer_mentions("MO YAN arrived", kg).empty());
}

TEST(Recognize, LlmMentionsAlignedToText) {
    ScriptedRule rule;
    rule.response = "Mo Yan\nNowhere Land\nBeijing";
    auto journal = std::make_shared<Journal>();
    Gateway gw(std::make_shared<ScriptedBackend>(std::vector<ScriptedRule>{rule}), journal);
    auto r = recognize_entities("Mo Yan spoke in Beijing", RecognitionMethod::llm, KGStore{}, &gw);
    ASSERT_EQ(r.mentions.size(), 2u);
    EXPECT_EQ(r.mentions[1], (Mention{"Beijing", 16, 23}));
    ASSERT_EQ(r.issues.size(), 1u);
    EXPECT_NE(r.issues[0].find("Nowhere Land"), std::string::npos);
}

TEST(Link, KnownUnknownAndCasing) {
    auto kg = store({{"Mo Yan", "Q1"}});
    EXPECT_EQ(link_entity({"Mo Yan", 0, 6}, kg), std::optional<std::string>("Q1"));
    EXPECT_EQ(link_entity({"Lu Xun", 0, 6}, kg), std::nullopt);
    EXPECT_EQ(link_entity({"mo yan", 0, 6}, kg), std::optional<std::string>("Q1"));

    auto exact = store({{"Mo Yan", "Q1"}}, NormalizationPolicy::chinese());
    EXPECT_EQ(link_entity({"mo yan", 0, 6}, exact), std::nullopt);
}

TEST(EntityTriples, CapAndDedup) {
    TempDir dir;
    write_file(dir / "aliases.tsv", "Mo Yan\tQ1\n");
    write_file(dir / "triples.tsv",
               "Q1\tMo Yan\toccupation\twriter\n"
               "Q1\tMo Yan\taward received\tNobel Prize in Literature\n"
               "Q1\tMo Yan\toccupation\twriter\n"
               "Q1\tMo Yan\tplace of birth\tGaomi\n");
    auto kg = KGStore::load(dir / "aliases.tsv", dir / "triples.tsv");
    auto all = retrieve_entity_triples("Q1", kg, 10);
    ASSERT_EQ(all.size(), 3u);
    EXPECT_EQ(all[0].object, "writer");
    EXPECT_EQ(retrieve_entity_triples("Q1", kg, 1).size(), 1u);
    EXPECT_EQ(retrieve_entity_triples("Q1", kg, 1)[0], all[0]);
    EXPECT_THROW(retrieve_entity_triples("Q9", kg, 1), PreconditionError);
    EXPECT_EQ(format_kg_triple(all[0]), "(Mo Yan, occupation, writer)");
}

TEST(EntityTriples, OrphanTripleRejected) {
    TempDir dir;
    write_file(dir / "aliases.tsv", "Mo Yan\tQ1\n");
    write_file(dir / "triples.tsv", "Q2\tLu Xun\toccupation\twriter\n");
    EXPECT_THROW(KGStore::load(dir / "aliases.tsv", dir / "triples.tsv"), DatasetError);
}

TEST(Guidelines, Retrieval) {
    std::vector<GuidelineSnippet> store = {{"g0", "general", "Entities must be complete names."},
                                           {"g1", "award", "The tail is a prize."},
                                           {"g2", "place_of_birth", "The tail is a place."}};
    auto award = retrieve_guidelines({"award"}, store);
    ASSERT_EQ(award.size(), 2u);
    EXPECT_EQ(award[1].id, "g1");
    EXPECT_EQ(retrieve_guidelines({}, store).size(), 1u);
    EXPECT_EQ(retrieve_guidelines({"unknown"}, store)[0].id, "g0");
}

TEST(Guidelines, LoadValidatesRelations) {
    TempDir dir;
    write_file(dir / "g.jsonl", "{\"id\":\"g1\",\"relation_name\":\"award\",\"text\":\"t\"}\n"
                                "{\"id\":\"g2\",\"relation_name\":\"general\",\"text\":\"t\"}\n");
    Schema schema;
    schema.add({"award"});
    EXPECT_EQ(load_guidelines(dir / "g.jsonl", &schema).size(), 2u);
    Schema other;
    other.add({"place_of_birth"});
    EXPECT_THROW(load_guidelines(dir / "g.jsonl", &other), DatasetError);
}
