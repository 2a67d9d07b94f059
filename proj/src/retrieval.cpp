#include "relex/retrieval.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "relex/digest.hpp"
#include "relex/error.hpp"
#include "relex/prompt.hpp"

namespace relex {

using nlohmann::json;

void Embedding::validate() const {
    for (double v : values) {
        if (!std::isfinite(v)) throw DatasetError("embedding has a NaN or infinite component");
    }
}

std::shared_ptr<VectorFile> VectorFile::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DatasetError("cannot open vector file " + path.string());
    auto file = std::make_shared<VectorFile>();
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (text::trim(line).empty()) continue;
        std::string where = path.filename().string() + " line " + std::to_string(line_no);
        try {
            json doc = json::parse(line);
            Embedding e{doc.at("vector").get<std::vector<double>>()};
            e.validate();
            if (doc.contains("id")) {
                file->add_sample(doc["id"].get<std::int64_t>(), e);
            } else if (doc.contains("text")) {
                file->add_text(doc["text"].get<std::string>(), e);
            } else {
                throw DatasetError(where + ": record needs 'id' or 'text'");
            }
        } catch (const json::exception& e) {
            throw DatasetError(where + ": " + e.what());
        } catch (const DatasetError& e) {
            throw DatasetError(where + ": " + e.what());
        }
    }
    return file;
}

void VectorFile::add_sample(std::int64_t id, Embedding e) { by_id_[id] = std::move(e); }
void VectorFile::add_text(std::string text, Embedding e) { by_text_[std::move(text)] = std::move(e); }

std::optional<Embedding> VectorFile::sample_vector(const Sample& sample) {
    auto it = by_id_.find(sample.id);
    if (it == by_id_.end()) return std::nullopt;
    return it->second;
}

std::optional<Embedding> VectorFile::query_vector(std::string_view text) {
    auto it = by_text_.find(text);
    if (it == by_text_.end()) return std::nullopt;
    return it->second;
}

HttpEmbeddingProvider::HttpEmbeddingProvider(HttpEndpoint endpoint) : endpoint_(std::move(endpoint)) {
    if (endpoint_.base_url.empty()) throw ConfigError("embedding provider needs an endpoint URL");
}

std::optional<Embedding> HttpEmbeddingProvider::sample_vector(const Sample& sample) { return query_vector(sample.text); }

std::optional<Embedding> HttpEmbeddingProvider::query_vector(std::string_view text) {
    httplib::Client client(endpoint_.base_url);
    client.set_connection_timeout(endpoint_.timeout);
    client.set_read_timeout(endpoint_.timeout);
    httplib::Headers headers;
    if (!endpoint_.api_key.empty()) headers.emplace("Authorization", "Bearer " + endpoint_.api_key);
    json body = {{"model", endpoint_.model}, {"input", std::string(text)}};
    auto res = client.Post(endpoint_.path, headers, body.dump(), "application/json");
    if (!res) throw TransportError("embedding request failed: " + httplib::to_string(res.error()));
    if (res->status != 200) throw TransportError("embedding service returned HTTP " + std::to_string(res->status));
    try {
        Embedding e{json::parse(res->body).at("data").at(0).at("embedding").get<std::vector<double>>()};
        e.validate();
        return e;
    } catch (const json::exception& e) {
        throw Error(std::string("malformed embeddings response: ") + e.what());
    }
}

EncoderKind encoder_kind_from_string(std::string_view name) {
    if (name == "random") return EncoderKind::random;
    if (name == "tfidf") return EncoderKind::tfidf;
    if (name == "bm25") return EncoderKind::bm25;
    if (name == "embedding") return EncoderKind::embedding;
    throw ConfigError("unknown encoder kind '" + std::string(name) + "' (expected random, tfidf, bm25 or embedding)");
}

std::string to_string(EncoderKind kind) {
    switch (kind) {
        case EncoderKind::random: return "random";
        case EncoderKind::tfidf: return "tfidf";
        case EncoderKind::bm25: return "bm25";
        case EncoderKind::embedding: return "embedding";
    }
    return "random";
}

namespace {

double norm(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
}

double cosine(const Embedding& a, const Embedding& b) {
    double na = norm(a.values);
    double nb = norm(b.values);
    if (na == 0.0 || nb == 0.0) return 0.0;
    double dot = 0.0;
    for (std::size_t i = 0; i < a.values.size(); ++i) dot += a.values[i] * b.values[i];
    return dot / (na * nb);
}

}  // namespace

SampleIndex SampleIndex::build(const std::vector<Sample>& samples, EncoderKind kind, const IndexOptions& options) {
    SampleIndex index;
    index.kind_ = kind;
    index.options_ = options;
    index.sample_ids_.reserve(samples.size());
    for (const auto& s : samples) index.sample_ids_.push_back(s.id);

    if (kind == EncoderKind::embedding) {
        if (!options.vectors) throw ConfigError("embedding encoder needs a vector source");
        std::vector<std::int64_t> missing;
        for (const auto& s : samples) {
            auto v = options.vectors->sample_vector(s);
            if (!v) {
                missing.push_back(s.id);
                continue;
            }
            v->validate();
            if (!index.embeddings_.empty() && v->dim() != index.embeddings_.front().dim()) {
                throw DatasetError("sample " + std::to_string(s.id) + " has vector dimension " +
                                   std::to_string(v->dim()) + ", expected " +
                                   std::to_string(index.embeddings_.front().dim()));
            }
            index.embeddings_.push_back(std::move(*v));
        }
        if (!missing.empty()) {
            std::string ids;
            for (auto id : missing) ids += (ids.empty() ? "" : ", ") + std::to_string(id);
            throw DatasetError("missing vectors for sample ids: " + ids);
        }
        return index;
    }
    if (kind == EncoderKind::random) return index;

    // Term statistics shared by tfidf and bm25.
    std::vector<std::map<std::string, std::uint32_t>> doc_terms(samples.size());
    std::map<std::string, std::uint32_t> vocabulary;
    std::size_t total_length = 0;
    for (std::size_t d = 0; d < samples.size(); ++d) {
        auto tokens = text::tokenize(samples[d].text, options.language);
        index.doc_lengths_.push_back(tokens.size());
        total_length += tokens.size();
        for (auto& t : tokens) ++doc_terms[d][t];
        for (const auto& entry : doc_terms[d]) vocabulary.emplace(entry.first, 0);
    }
    std::uint32_t next_id = 0;
    for (auto& [term, id] : vocabulary) id = next_id++;
    index.vocabulary_ = {vocabulary.begin(), vocabulary.end()};

    auto n_terms = vocabulary.size();
    index.postings_.resize(n_terms);
    index.df_.assign(n_terms, 0);
    for (std::size_t d = 0; d < samples.size(); ++d) {
        for (const auto& [term, tf] : doc_terms[d]) {
            auto id = vocabulary.at(term);
            index.postings_[id].push_back({static_cast<std::uint32_t>(d), tf});
            ++index.df_[id];
        }
    }
    auto n_docs = static_cast<double>(samples.size());
    index.avgdl_ = samples.empty() ? 0.0 : static_cast<double>(total_length) / n_docs;
    index.idf_.resize(n_terms);
    for (std::size_t t = 0; t < n_terms; ++t) {
        auto df = static_cast<double>(index.df_[t]);
        index.idf_[t] = kind == EncoderKind::bm25 ? std::log(1.0 + (n_docs - df + 0.5) / (df + 0.5))
                                                  : std::log((1.0 + n_docs) / (1.0 + df)) + 1.0;
    }

    if (kind == EncoderKind::tfidf) {
        std::vector<double> doc_norm(samples.size(), 0.0);
        for (std::size_t d = 0; d < samples.size(); ++d) {
            double s = 0.0;
            for (const auto& [term, tf] : doc_terms[d]) {
                double w = static_cast<double>(tf) * index.idf_[vocabulary.at(term)];
                s += w * w;
            }
            doc_norm[d] = std::sqrt(s);
        }
        index.tfidf_weights_.resize(n_terms);
        for (std::size_t t = 0; t < n_terms; ++t) {
            for (const auto& p : index.postings_[t]) {
                double w = static_cast<double>(p.tf) * index.idf_[t];
                index.tfidf_weights_[t].push_back(doc_norm[p.doc] > 0.0 ? w / doc_norm[p.doc] : 0.0);
            }
        }
    }
    return index;
}

std::size_t SampleIndex::document_frequency(std::string_view term) const {
    auto it = vocabulary_.find(term);
    return it == vocabulary_.end() ? 0 : df_[it->second];
}

std::vector<std::pair<std::uint32_t, std::uint32_t>> SampleIndex::query_terms(std::string_view query, bool& empty) const {
    auto tokens = text::tokenize(query, options_.language);
    empty = tokens.empty();
    std::map<std::uint32_t, std::uint32_t> counts;
    for (const auto& t : tokens) {
        auto it = vocabulary_.find(t);
        if (it != vocabulary_.end()) ++counts[it->second];
    }
    return {counts.begin(), counts.end()};
}

RetrievalResult SampleIndex::rank(const std::vector<double>& scores, std::size_t k, const RetrieveOptions& options) const {
    std::vector<std::size_t> candidates;
    for (std::size_t d = 0; d < sample_ids_.size(); ++d) {
        if (options.exclude.count(sample_ids_[d]) == 0) candidates.push_back(d);
    }
    std::size_t n = std::min(k, candidates.size());
    auto better = [&](std::size_t a, std::size_t b) {
        if (scores[a] != scores[b]) return scores[a] > scores[b];
        return sample_ids_[a] < sample_ids_[b];
    };
    std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(n), candidates.end(), better);
    RetrievalResult result;
    for (std::size_t i = 0; i < n; ++i) {
        result.hits.push_back({sample_ids_[candidates[i]], scores[candidates[i]], i + 1});
    }
    return result;
}

RetrievalResult SampleIndex::retrieve(std::string_view query, std::size_t k, const RetrieveOptions& options) const {
    if (sample_ids_.empty() || k == 0) return {};
    std::vector<double> scores(sample_ids_.size(), 0.0);
    switch (kind_) {
        case EncoderKind::random: {
            std::vector<std::size_t> candidates;
            for (std::size_t d = 0; d < sample_ids_.size(); ++d) {
                if (options.exclude.count(sample_ids_[d]) == 0) candidates.push_back(d);
            }
            auto perm = seeded_permutation(candidates.size(), options.seed ^ fnv1a64(query));
            std::vector<std::int64_t> chosen;
            for (std::size_t i = 0; i < std::min(k, perm.size()); ++i) chosen.push_back(sample_ids_[candidates[perm[i]]]);
            std::sort(chosen.begin(), chosen.end());
            RetrievalResult result;
            for (std::size_t i = 0; i < chosen.size(); ++i) result.hits.push_back({chosen[i], 0.0, i + 1});
            return result;
        }
        case EncoderKind::embedding: {
            if (!options_.vectors) throw ConfigError("embedding index has no vector source for queries");
            auto v = options_.vectors->query_vector(query);
            if (!v) throw DatasetError("no query vector for text: " + text::truncate(query, 80));
            return retrieve_vector(*v, k, options);
        }
        case EncoderKind::bm25: {
            bool empty = false;
            auto terms = query_terms(query, empty);
            if (empty) return RetrievalResult{{}, true};
            const double k1 = options_.bm25_k1;
            const double b = options_.bm25_b;
            for (const auto& [term, qtf] : terms) {
                (void)qtf;
                for (const auto& p : postings_[term]) {
                    double tf = p.tf;
                    double len_norm = avgdl_ > 0.0 ? static_cast<double>(doc_lengths_[p.doc]) / avgdl_ : 1.0;
                    scores[p.doc] += idf_[term] * (tf * (k1 + 1.0)) / (tf + k1 * (1.0 - b + b * len_norm));
                }
            }
            break;
        }
        case EncoderKind::tfidf: {
            bool empty = false;
            auto terms = query_terms(query, empty);
            if (empty) return RetrievalResult{{}, true};
            double s = 0.0;
            for (const auto& [term, qtf] : terms) {
                double w = static_cast<double>(qtf) * idf_[term];
                s += w * w;
            }
            double qnorm = std::sqrt(s);
            if (qnorm > 0.0) {
                for (const auto& [term, qtf] : terms) {
                    double qw = static_cast<double>(qtf) * idf_[term] / qnorm;
                    const auto& plist = postings_[term];
                    for (std::size_t i = 0; i < plist.size(); ++i) scores[plist[i].doc] += qw * tfidf_weights_[term][i];
                }
            }
            break;
        }
    }
    return rank(scores, k, options);
}

RetrievalResult SampleIndex::retrieve_vector(const Embedding& query, std::size_t k, const RetrieveOptions& options) const {
    if (kind_ != EncoderKind::embedding) throw PreconditionError("retrieve_vector needs an embedding index");
    if (sample_ids_.empty() || k == 0) return {};
    query.validate();
    if (query.dim() != embeddings_.front().dim()) {
        throw PreconditionError("query vector dimension " + std::to_string(query.dim()) + " does not match index dimension " +
                                std::to_string(embeddings_.front().dim()));
    }
    std::vector<double> scores(sample_ids_.size());
    for (std::size_t d = 0; d < embeddings_.size(); ++d) scores[d] = cosine(query, embeddings_[d]);
    return rank(scores, k, options);
}

SampleIndex build_index(const std::vector<Sample>& samples, EncoderKind kind, const IndexOptions& options) {
    return SampleIndex::build(samples, kind, options);
}

RetrievalResult retrieve_samples(const SampleIndex& index, std::string_view query, std::size_t k,
                                 const RetrieveOptions& options) {
    return index.retrieve(query, k, options);
}

RelationPrior::RelationPrior(const Schema& schema, const std::vector<Sample>& samples) {
    std::map<std::string, std::size_t> counts;
    for (const auto& s : samples) {
        for (const auto& t : s.gold) ++counts[t.relation];
    }
    for (const auto& name : schema.names()) {
        auto it = counts.find(name);
        ranked_.emplace_back(name, it == counts.end() ? 0 : it->second);
    }
    std::stable_sort(ranked_.begin(), ranked_.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
}

std::vector<std::string> RelationPrior::top(std::size_t l) const {
    std::vector<std::string> out;
    for (std::size_t i = 0; i < std::min(l, ranked_.size()); ++i) out.push_back(ranked_[i].first);
    return out;
}

std::size_t RelationPrior::count(std::string_view relation) const {
    for (const auto& [name, c] : ranked_) {
        if (name == relation) return c;
    }
    return 0;
}

CandidateMethod candidate_method_from_string(std::string_view name) {
    if (name == "llm") return CandidateMethod::llm;
    if (name == "prior") return CandidateMethod::prior;
    throw ConfigError("unknown candidate method '" + std::string(name) + "' (expected llm or prior)");
}

std::string to_string(CandidateMethod method) { return method == CandidateMethod::llm ? "llm" : "prior"; }

std::vector<std::string> parse_relation_list(std::string_view response, const std::vector<std::string>& allowed,
                                             std::size_t cap) {
    std::vector<std::string> out;
    std::string item;
    auto flush = [&] {
        std::string name = text::trim(item);
        item.clear();
        while (!name.empty() && (name.front() == '-' || name.front() == '*' || name.front() == '"' || name.front() == '\'' ||
                                 std::isdigit(static_cast<unsigned char>(name.front())) || name.front() == '.')) {
            name = text::trim(std::string_view(name).substr(1));
        }
        while (!name.empty() && (name.back() == '"' || name.back() == '\'' || name.back() == '.')) name.pop_back();
        if (out.size() < cap && std::find(allowed.begin(), allowed.end(), name) != allowed.end() &&
            std::find(out.begin(), out.end(), name) == out.end()) {
            out.push_back(name);
        }
    };
    for (char c : response) {
        if (c == ',' || c == '\n' || c == ';') {
            flush();
        } else {
            item.push_back(c);
        }
    }
    flush();
    return out;
}

CandidateResult retrieve_candidate_relations(std::string_view text, const Schema& schema, CandidateMethod method,
                                             std::size_t l, const RelationPrior& prior, Gateway* gateway) {
    if (l == 0) throw PreconditionError("candidate relation count l must be at least 1");
    if (method == CandidateMethod::prior) return {prior.top(l), false};
    if (gateway == nullptr) throw ConfigError("llm candidate retrieval needs a gateway");

    std::string relation_list;
    for (const auto& n : schema.names()) relation_list += (relation_list.empty() ? "" : ", ") + n;
    std::string prompt = render_prompt(templates::candidate_relations(),
                                       {{"input_sentence", std::string(text)}, {"relation_list", relation_list}});
    std::string response = gateway->complete({prompt, 0.0, 256, {}, "relation_candidates"});

    CandidateResult result{parse_relation_list(response, schema.names(), l), false};
    if (result.relations.empty()) {
        gateway->note("relation_candidates_fallback",
                      "no schema relation in model answer; using frequency prior: " + text::truncate(response, 200));
        return {prior.top(l), true};
    }
    return result;
}

}  // namespace relex
