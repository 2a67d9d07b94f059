#include "fixtures.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "relex/grammar.hpp"
#include "relex/text.hpp"

namespace relex::testing {

using nlohmann::json;

TempDir::TempDir() {
    std::string tmpl = (fs::temp_directory_path() / "relex-test-XXXXXX").string();
    if (mkdtemp(tmpl.data()) == nullptr) throw std::runtime_error("mkdtemp failed");
    path_ = tmpl;
}

TempDir::~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
}

void write_file(const fs::path& path, const std::string& content) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out << content;
    if (!out) throw std::runtime_error("cannot write " + path.string());
}

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::vector<std::string> read_lines(const fs::path& path) {
    std::vector<std::string> out;
    std::ifstream in(path);
    for (std::string line; std::getline(in, line);) {
        if (!line.empty()) out.push_back(line);
    }
    return out;
}

std::string substring_rule(const std::vector<std::string>& all, const std::string& response,
                           const std::optional<std::string>& tag) {
    json j = {{"match", "substring"}, {"all", all}, {"response", response}};
    if (tag) j["tag"] = *tag;
    return j.dump();
}

std::string sequence_rule(std::size_t position, const std::string& response) {
    return json{{"match", "sequence"}, {"position", position}, {"response", response}}.dump();
}

void write_script(const fs::path& path, const std::vector<std::string>& rules) {
    std::string content;
    for (const auto& r : rules) content += r + "\n";
    write_file(path, content);
}

Sample make_sample(std::int64_t id, std::string text, std::vector<Triple> gold) {
    return Sample{id, std::move(text), std::move(gold)};
}

void write_samples(const fs::path& path, const std::vector<Sample>& samples) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    write_generic_jsonl(samples, path);
}

std::string input_anchor(const std::string& sentence) { return "Input:\n" + sentence + "\n"; }

namespace {

void write_schema_file(const fs::path& path, const std::vector<std::string>& names) {
    json doc = json::array();
    for (const auto& n : names) doc.push_back({{"name", n}, {"description", ""}});
    write_file(path, doc.dump(2));
}

std::string toml_list(const std::vector<std::string>& items) {
    std::string out = "[";
    for (std::size_t i = 0; i < items.size(); ++i) out += (i ? ", " : "") + json(items[i]).dump();
    return out + "]";
}

const Sample kKey = {0, "Alpha established Beta Corp in 1990.", {{"Alpha", "founder_of", "Beta Corp"}}};
const char* kX1 = "Alpha set up Beta Corp.";
const char* kX2 = "Gamma was born in Delta City.";
const char* kX3 = "Gamma returned to Delta City last year.";

std::vector<std::string> separation_rules() {
    const std::string founder = "(Alpha, founder_of, Beta Corp)";
    const std::string born = "(Gamma, born_in, Delta City)";
    return {
        substring_rule({input_anchor(kX1), "Input: " + kKey.text}, founder, "direct"),
        substring_rule({input_anchor(kX1)}, "(Alpha, employee_of, Beta Corp)", "direct"),
        substring_rule({input_anchor(kX2)}, born, "direct"),
        substring_rule({input_anchor(kX3), "Memory:\n", "- Gamma was born in Delta City."}, born, "direct"),
        substring_rule({input_anchor(kX3)}, "(Gamma, lives_in, Delta City)", "direct"),
        substring_rule({input_anchor(kKey.text)}, founder, "direct"),
        substring_rule({"New fact:\n" + born}, "Gamma was born in Delta City.", "memory_summarize"),
        substring_rule({"New fact:\n" + founder}, "Alpha founded Beta Corp.", "memory_summarize"),
        substring_rule({}, "Gamma was born in Delta City and lives there again.", "memory_update"),
        substring_rule({}, "Prefer the relation the verb states.", "reflection"),
    };
}

const std::vector<std::string> kSeparationRelations = {"founder_of", "employee_of", "born_in", "lives_in"};

std::string separation_toml(const std::string& eval_section, const std::string& memory_mode) {
    return "seed = 11\n"
           "out = \"out\"\n\n"
           "[backend]\nkind = \"scripted\"\nscript = \"script.jsonl\"\nbackoff_ms = []\n\n"
           "[retrieval]\nencoder = \"bm25\"\nk = 5\nl = 4\n\n"
           "[memory]\nmode = \"" +
           memory_mode +
           "\"\nverifier = \"oracle\"\nk_each = 3\n\n"
           "[agent]\nstrategy = \"direct\"\n\n"
           "[eval]\nschema = \"schema.json\"\nstrict = true\n" +
           eval_section;
}

}  // namespace

FixturePaths separation_fixture(const fs::path& dir) {
    FixturePaths p{dir, dir / "separation.toml", dir / "train.jsonl", dir / "test.jsonl", dir / "script.jsonl"};
    write_samples(p.train, {kKey,
                            {1, "Omega works for Sigma Labs.", {{"Omega", "employee_of", "Sigma Labs"}}},
                            {2, "Kappa lives in Zeta Town.", {{"Kappa", "lives_in", "Zeta Town"}}}});
    write_samples(p.test, {{0, kX1, {{"Alpha", "founder_of", "Beta Corp"}}},
                           {1, kX2, {{"Gamma", "born_in", "Delta City"}}},
                           {2, kX3, {{"Gamma", "born_in", "Delta City"}}}});
    write_schema_file(dir / "schema.json", kSeparationRelations);
    write_script(p.script, separation_rules());
    write_file(p.config,
               separation_toml("train = \"train.jsonl\"\ntest = \"test.jsonl\"\nvariants = " +
                                   toml_list({"full", "w/oR", "w/oM", "w/oRM"}) + "\n",
                               "deep"));
    return p;
}

FixturePaths separation_memcurve_fixture(const fs::path& dir) {
    FixturePaths p{dir, dir / "memcurve.toml", dir / "stream.jsonl", dir / "probe.jsonl", dir / "script.jsonl"};
    write_samples(p.train, {kKey, {1, kX2, {{"Gamma", "born_in", "Delta City"}}}});
    write_samples(p.test, {{0, kX3, {{"Gamma", "born_in", "Delta City"}}}});
    write_schema_file(dir / "schema.json", kSeparationRelations);
    write_script(p.script, separation_rules());
    write_file(p.config, separation_toml("train = \"stream.jsonl\"\nprobe = \"probe.jsonl\"\ncheckpoints = [0, 1, 2]\n",
                                         "deep"));
    return p;
}

FixturePaths monotone_fixture(const fs::path& dir) {
    FixturePaths p{dir, dir / "lowres.toml", dir / "train.jsonl", dir / "test.jsonl", dir / "script.jsonl"};
    std::vector<Sample> train;
    std::vector<Sample> test;
    std::vector<std::string> rules;
    std::vector<std::string> fallbacks;
    for (int i = 0; i < 20; ++i) {
        std::string person = "Person" + std::to_string(i);
        std::string company = "Company" + std::to_string(i);
        Sample key{static_cast<std::int64_t>(train.size()), person + " is employed by " + company + ".",
                   {{person, "employee_of", company}}};
        Sample t{i, person + " joined " + company + " recently.", {{person, "employee_of", company}}};
        rules.push_back(substring_rule({input_anchor(t.text), "Input: " + key.text}, format_triple(key.gold[0]), "direct"));
        fallbacks.push_back(substring_rule({input_anchor(t.text)}, "(" + person + ", visited, " + company + ")", "direct"));
        train.push_back(key);
        test.push_back(t);
    }
    for (int j = 0; j < 80; ++j) {
        std::string who = "Filler" + std::to_string(j);
        std::string where = "Place" + std::to_string(j);
        train.push_back({static_cast<std::int64_t>(train.size()), who + " visited " + where + ".", {{who, "visited", where}}});
    }
    rules.insert(rules.end(), fallbacks.begin(), fallbacks.end());
    write_samples(p.train, train);
    write_samples(p.test, test);
    write_schema_file(dir / "schema.json", {"employee_of", "visited"});
    write_script(p.script, rules);
    write_file(p.config,
               "seed = 5\nout = \"out\"\n\n"
               "[backend]\nkind = \"scripted\"\nscript = \"script.jsonl\"\nbackoff_ms = []\n\n"
               "[retrieval]\nencoder = \"bm25\"\nk = 3\n\n"
               "[agent]\nstrategy = \"direct\"\n\n"
               "[eval]\ntrain = \"train.jsonl\"\ntest = \"test.jsonl\"\nschema = \"schema.json\"\nstrict = true\n"
               "ns = [0, 10, 100]\n");
    return p;
}

FixturePaths award_fixture(const fs::path& dir) {
    FixturePaths p{dir, dir / "award.toml", dir / "train.jsonl", dir / "test.jsonl", dir / "script.jsonl"};
    write_samples(p.train, {{0, "Alice Munro received the Nobel Prize in 2013.", {{"Alice Munro", "award", "Nobel Prize"}}},
                            {1, "Mo Yan is a writer from Gaomi.", {{"Mo Yan", "birthplace", "Gaomi"}}}});
    write_samples(p.test, {{0, kMoYanSentence, {{"Mo Yan", "award", "Nobel Prize"}}}});
    write_schema_file(dir / "schema.json", {"award", "birthplace"});
    write_file(dir / "guidelines.jsonl",
               json{{"id", "g1"}, {"relation_name", "award"},
                    {"text", "The head is a person or organisation and the tail is the prize it received; "
                             "keep the prize name without the category."}}
                       .dump() +
                   "\n" +
                   json{{"id", "g2"}, {"relation_name", "birthplace"}, {"text", "The tail is the place of birth."}}.dump() +
                   "\n");
    write_file(dir / "aliases.tsv", "Mo Yan\tQ1\nGuan Moye\tQ1\nNobel Prize in Literature\tQ2\nNobel Prize\tQ2\n");
    write_file(dir / "kg.tsv",
               "Q1\tMo Yan\taward received\tNobel Prize in Literature\n"
               "Q1\tMo Yan\toccupation\twriter\n"
               "Q2\tNobel Prize in Literature\tpart of\tNobel Prize\n");
    write_script(p.script,
                 {sequence_rule(0, "Thought: The sentence mentions a prize, so check what the award relation covers.\n"
                                   "Action: SearchAnnotation[award]"),
                  sequence_rule(1, "Thought: Confirm in the knowledge graph that Mo Yan received the prize.\n"
                                   "Action: SearchKG[Mo Yan]"),
                  sequence_rule(2, "Thought: The guideline and the knowledge graph agree.\n"
                                   "Action: Finish[(Mo Yan, award, Nobel Prize)]")});
    write_file(p.config,
               "seed = 3\nout = \"out\"\n\n"
               "[backend]\nkind = \"scripted\"\nscript = \"script.jsonl\"\nbackoff_ms = []\n\n"
               "[retrieval]\nguidelines = \"guidelines.jsonl\"\nkg_aliases = \"aliases.tsv\"\nkg_triples = \"kg.tsv\"\n\n"
               "[agent]\nstrategy = \"rule\"\nmax_rounds = 6\n\n"
               "[eval]\ntrain = \"train.jsonl\"\ntest = \"test.jsonl\"\nschema = \"schema.json\"\nstrict = true\n");
    return p;
}

FixturePaths distill_fixture(const fs::path& dir) {
    FixturePaths p{dir, dir / "distill.toml", dir / "train.jsonl", dir / "test.jsonl", dir / "script.jsonl"};
    std::vector<Sample> test;
    std::vector<std::string> rules;
    const char* kinds[] = {"direct", "cot", "staged"};
    for (int i = 0; i < 20; ++i) {
        std::string who = "Founder" + std::to_string(i);
        std::string org = "Org" + std::to_string(i);
        Sample s{i, who + " created " + org + " in the spring.", {{who, "founder_of", org}}};
        const std::string anchor = input_anchor(s.text);
        std::string answer = i % 2 == 0 ? format_triple(s.gold[0]) : "(" + who + ", member_of, " + org + ")";
        std::string kind = kinds[i % 3];
        rules.push_back(substring_rule({anchor}, kind, "strategy"));
        rules.push_back(substring_rule({anchor}, answer, "direct"));
        rules.push_back(substring_rule({anchor}, who + " is the one who created " + org + ".\nTriples:\n" + answer, "cot"));
        rules.push_back(substring_rule({anchor}, "founder_of, member_of", "staged_select"));
        rules.push_back(substring_rule({anchor}, answer, "staged_extract"));
        std::string good = "Creating an organisation makes the person its founder, so the relation is founder_of.";
        if (i == 4) {
            rules.push_back(substring_rule({anchor}, "The answer is obvious.", "rationale"));
            rules.push_back(substring_rule({anchor}, good, "rationale_retry"));
        } else if (i == 8) {
            rules.push_back(substring_rule({anchor}, "The answer is obvious.", "rationale"));
            rules.push_back(substring_rule({anchor}, "Also " + format_triple({who, "member_of", org}) + ".", "rationale_retry"));
        } else {
            rules.push_back(substring_rule({anchor}, good, "rationale"));
        }
        test.push_back(s);
    }
    write_samples(p.train, {{0, "Ada created Widgets Ltd in 1901.", {{"Ada", "founder_of", "Widgets Ltd"}}},
                            {1, "Bo is a member of the Chess Club.", {{"Bo", "member_of", "Chess Club"}}}});
    write_samples(p.test, test);
    write_schema_file(dir / "schema.json", {"founder_of", "member_of"});
    write_script(p.script, rules);
    write_file(p.config,
               "seed = 9\nout = \"out\"\n\n"
               "[backend]\nkind = \"scripted\"\nscript = \"script.jsonl\"\nbackoff_ms = []\n\n"
               "[agent]\nstrategy = \"llm\"\n\n"
               "[eval]\ntrain = \"train.jsonl\"\ntest = \"test.jsonl\"\nschema = \"schema.json\"\nstrict = true\n");
    return p;
}

// ---- oracles ----

OracleCounts oracle_metrics(const std::vector<std::vector<Triple>>& predicted,
                            const std::vector<std::vector<Triple>>& gold, const NormalizationPolicy& policy) {
    OracleCounts c;
    for (std::size_t s = 0; s < gold.size(); ++s) {
        std::vector<Triple> p;
        std::vector<Triple> g;
        // distinct normalized triples, by linear scan
        for (const auto& t : predicted[s]) {
            auto n = normalize_triple(t, policy);
            if (std::find(p.begin(), p.end(), n) == p.end()) p.push_back(n);
        }
        for (const auto& t : gold[s]) {
            auto n = normalize_triple(t, policy);
            if (std::find(g.begin(), g.end(), n) == g.end()) g.push_back(n);
        }
        for (const auto& t : p) {
            bool hit = false;
            for (const auto& u : g) hit = hit || (t.head == u.head && t.relation == u.relation && t.tail == u.tail);
            hit ? ++c.tp : ++c.fp;
        }
        for (const auto& u : g) {
            bool hit = false;
            for (const auto& t : p) hit = hit || (t.head == u.head && t.relation == u.relation && t.tail == u.tail);
            if (!hit) ++c.fn;
        }
    }
    c.precision = c.tp + c.fp == 0 ? 0.0 : double(c.tp) / double(c.tp + c.fp);
    c.recall = c.tp + c.fn == 0 ? 0.0 : double(c.tp) / double(c.tp + c.fn);
    c.f1 = c.precision + c.recall == 0.0 ? 0.0 : 2.0 * c.precision * c.recall / (c.precision + c.recall);
    return c;
}

namespace {

std::vector<OracleHit> top_k(std::vector<OracleHit> all, std::size_t k) {
    std::sort(all.begin(), all.end(), [](const OracleHit& a, const OracleHit& b) {
        return a.score != b.score ? a.score > b.score : a.id < b.id;
    });
    if (all.size() > k) all.resize(k);
    return all;
}

std::vector<std::string> distinct_sorted(const std::vector<std::string>& tokens) {
    std::set<std::string> s(tokens.begin(), tokens.end());
    return {s.begin(), s.end()};
}

std::size_t count_of(const std::vector<std::string>& tokens, const std::string& term) {
    return static_cast<std::size_t>(std::count(tokens.begin(), tokens.end(), term));
}

}  // namespace

std::vector<OracleHit> oracle_bm25(const std::vector<Sample>& docs, const std::string& query, std::size_t k, double k1,
                                   double b, Language language) {
    std::vector<std::vector<std::string>> toks;
    double total = 0.0;
    for (const auto& d : docs) {
        toks.push_back(text::tokenize(d.text, language));
        total += static_cast<double>(toks.back().size());
    }
    const double n = static_cast<double>(docs.size());
    const double avgdl = docs.empty() ? 0.0 : total / n;
    auto terms = distinct_sorted(text::tokenize(query, language));
    std::vector<OracleHit> all;
    for (std::size_t i = 0; i < docs.size(); ++i) {
        double score = 0.0;
        for (const auto& term : terms) {
            std::size_t df = 0;
            for (const auto& t : toks) df += count_of(t, term) > 0 ? 1 : 0;
            if (df == 0) continue;
            double tf = static_cast<double>(count_of(toks[i], term));
            if (tf == 0.0) continue;
            double idf = std::log(1.0 + (n - double(df) + 0.5) / (double(df) + 0.5));
            double len = avgdl > 0.0 ? static_cast<double>(toks[i].size()) / avgdl : 1.0;
            score += idf * (tf * (k1 + 1.0)) / (tf + k1 * (1.0 - b + b * len));
        }
        all.push_back({docs[i].id, score});
    }
    return top_k(std::move(all), k);
}

std::vector<OracleHit> oracle_tfidf(const std::vector<Sample>& docs, const std::string& query, std::size_t k,
                                    Language language) {
    std::vector<std::vector<std::string>> toks;
    std::set<std::string> vocab;
    for (const auto& d : docs) {
        toks.push_back(text::tokenize(d.text, language));
        vocab.insert(toks.back().begin(), toks.back().end());
    }
    const double n = static_cast<double>(docs.size());
    std::map<std::string, double> idf;
    for (const auto& term : vocab) {
        std::size_t df = 0;
        for (const auto& t : toks) df += count_of(t, term) > 0 ? 1 : 0;
        idf[term] = std::log((1.0 + n) / (1.0 + double(df))) + 1.0;
    }
    auto qtoks = text::tokenize(query, language);
    std::vector<std::string> qterms;
    for (const auto& t : distinct_sorted(qtoks)) {
        if (vocab.count(t)) qterms.push_back(t);
    }
    double qs = 0.0;
    for (const auto& t : qterms) {
        double w = double(count_of(qtoks, t)) * idf[t];
        qs += w * w;
    }
    double qnorm = std::sqrt(qs);
    std::vector<OracleHit> all;
    for (std::size_t i = 0; i < docs.size(); ++i) {
        double ds = 0.0;
        for (const auto& t : distinct_sorted(toks[i])) {
            double w = double(count_of(toks[i], t)) * idf[t];
            ds += w * w;
        }
        double dnorm = std::sqrt(ds);
        double score = 0.0;
        if (qnorm > 0.0 && dnorm > 0.0) {
            for (const auto& t : qterms) {
                double tf = double(count_of(toks[i], t));
                if (tf == 0.0) continue;
                score += (double(count_of(qtoks, t)) * idf[t] / qnorm) * (tf * idf[t] / dnorm);
            }
        }
        all.push_back({docs[i].id, score});
    }
    return top_k(std::move(all), k);
}

std::vector<OracleHit> oracle_cosine(const std::vector<std::vector<double>>& docs, const std::vector<std::int64_t>& ids,
                                     const std::vector<double>& query, std::size_t k) {
    std::vector<OracleHit> all;
    for (std::size_t i = 0; i < docs.size(); ++i) {
        double dot = 0.0, a = 0.0, b = 0.0;
        for (std::size_t j = 0; j < query.size(); ++j) {
            dot += docs[i][j] * query[j];
            a += query[j] * query[j];
            b += docs[i][j] * docs[i][j];
        }
        double s = (a == 0.0 || b == 0.0) ? 0.0 : dot / (std::sqrt(a) * std::sqrt(b));
        all.push_back({ids[i], s});
    }
    return top_k(std::move(all), k);
}

namespace {
const std::vector<std::string> kVocab = {"river", "bank",  "stone", "city",   "north", "music", "prize", "writer",
                                         "born",  "found", "lake",  "bridge", "green", "tower", "song",  "field"};
}

std::vector<Sample> synthetic_corpus(std::size_t n, std::mt19937_64& rng) {
    std::uniform_int_distribution<std::size_t> len(1, 8);
    std::uniform_int_distribution<std::size_t> word(0, kVocab.size() - 1);
    std::vector<Sample> out;
    for (std::size_t i = 0; i < n; ++i) {
        std::string s;
        for (std::size_t j = 0, m = len(rng); j < m; ++j) s += (j ? " " : "") + kVocab[word(rng)];
        // some exact duplicates so that ties are common
        if (i > 0 && i % 17 == 0) s = out[i - 1].text;
        out.push_back({static_cast<std::int64_t>(i), s, {}});
    }
    return out;
}

std::string synthetic_query(std::mt19937_64& rng) {
    std::uniform_int_distribution<std::size_t> len(1, 4);
    std::uniform_int_distribution<std::size_t> word(0, kVocab.size() - 1);
    std::string s;
    for (std::size_t j = 0, m = len(rng); j < m; ++j) s += (j ? " " : "") + kVocab[word(rng)];
    return s;
}

}  // namespace relex::testing
