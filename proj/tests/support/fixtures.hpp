#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "relex/config.hpp"
#include "relex/corpus.hpp"
#include "relex/retrieval.hpp"

namespace relex::testing {

namespace fs = std::filesystem;

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    TempDir();
    ~TempDir();
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const fs::path& path() const { return path_; }
    fs::path operator/(const std::string& name) const { return path_ / name; }

private:
    fs::path path_;
};

void write_file(const fs::path& path, const std::string& content);
std::string read_file(const fs::path& path);
std::vector<std::string> read_lines(const fs::path& path);

// Scripted-backend rule lines.
std::string substring_rule(const std::vector<std::string>& all, const std::string& response,
                           const std::optional<std::string>& tag = std::nullopt);
std::string sequence_rule(std::size_t position, const std::string& response);
void write_script(const fs::path& path, const std::vector<std::string>& rules);

Sample make_sample(std::int64_t id, std::string text, std::vector<Triple> gold);
void write_samples(const fs::path& path, const std::vector<Sample>& samples);

// Anchor that only matches the input section of an extraction prompt (the
// examples section renders "Input: <text>" on one line).
std::string input_anchor(const std::string& sentence);

// ---- constructed fixtures ----

struct FixturePaths {
    fs::path dir;
    fs::path config;  // main TOML
    fs::path train;
    fs::path test;
    fs::path script;
};

// Three test sentences, each needing one component:
//   X1 is answered correctly only when its key example is retrieved,
//   X2 is always answered correctly and leaves a deep memory entry,
//   X3 is answered correctly only when that entry is in the prompt.
// Config: fixed direct strategy, deep memory, oracle verifier.
FixturePaths separation_fixture(const fs::path& dir);
// Streams [K1, X2] into memory and probes with X3; checkpoints [0, 1, 2].
FixturePaths separation_memcurve_fixture(const fs::path& dir);

// 20 test sentences, each answered correctly only when its own key example
// is in the retrieval corpus; 100 training samples (20 keys + 80 fillers).
FixturePaths monotone_fixture(const fs::path& dir);

// The award example: rule strategy picks react from two gazetteer mentions;
// the scripted model calls SearchAnnotation[award], SearchKG[Mo Yan], Finish.
inline constexpr const char* kMoYanSentence = "Mo Yan won the Nobel Prize in Literature in 2012.";
FixturePaths award_fixture(const fs::path& dir);

// 20 sentences: 10 answered with gold (mixed strategies), 10 wrong; rationale
// rules for the correct ones. Config for extract followed by distill.
FixturePaths distill_fixture(const fs::path& dir);

// ---- oracles ----

// Brute-force micro P/R/F1 by explicit set membership loops.
struct OracleCounts {
    std::size_t tp = 0;
    std::size_t fp = 0;
    std::size_t fn = 0;
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};
OracleCounts oracle_metrics(const std::vector<std::vector<Triple>>& predicted,
                            const std::vector<std::vector<Triple>>& gold, const NormalizationPolicy& policy);

struct OracleHit {
    std::int64_t id;
    double score;
};

// Naive re-scoring of every document from its raw token list. The per-term
// sums run over distinct query terms in lexicographic order, the same order
// the index accumulates in, so exact ties stay exact ties on both sides.
std::vector<OracleHit> oracle_bm25(const std::vector<Sample>& docs, const std::string& query, std::size_t k, double k1,
                                   double b, Language language = Language::english);
std::vector<OracleHit> oracle_tfidf(const std::vector<Sample>& docs, const std::string& query, std::size_t k,
                                    Language language = Language::english);
std::vector<OracleHit> oracle_cosine(const std::vector<std::vector<double>>& docs, const std::vector<std::int64_t>& ids,
                                     const std::vector<double>& query, std::size_t k);

// Synthetic corpus over a small vocabulary so that ties occur.
std::vector<Sample> synthetic_corpus(std::size_t n, std::mt19937_64& rng);
std::string synthetic_query(std::mt19937_64& rng);

}  // namespace relex::testing
