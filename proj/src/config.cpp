#include "relex/config.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>
#include <toml++/toml.hpp>

#include "relex/digest.hpp"
#include "relex/error.hpp"
#include "relex/gateway.hpp"

namespace relex {

using nlohmann::json;

namespace {

// Typed access to one TOML table; remembers which keys were consumed so the
// leftovers can be reported as unknown.
class Section {
public:
    Section(const toml::table* table, std::string name) : table_(table), name_(std::move(name)) {}

    template <typename T>
    void read(const char* key, T& out) {
        const toml::node* node = lookup(key);
        if (node == nullptr) return;
        if constexpr (std::is_same_v<T, bool>) {
            if (!node->is_boolean()) fail(key, "a boolean");
            out = *node->value<bool>();
        } else if constexpr (std::is_same_v<T, std::string>) {
            if (!node->is_string()) fail(key, "a string");
            out = *node->value<std::string>();
        } else if constexpr (std::is_same_v<T, double>) {
            if (!node->is_number()) fail(key, "a number");
            out = *node->value<double>();
        } else if constexpr (std::is_same_v<T, std::filesystem::path>) {
            if (!node->is_string()) fail(key, "a path string");
            out = *node->value<std::string>();
        } else {
            static_assert(std::is_integral_v<T>);
            if (!node->is_integer()) fail(key, "an integer");
            auto v = *node->value<std::int64_t>();
            if constexpr (std::is_unsigned_v<T>) {
                if (v < 0) fail(key, "a nonnegative integer");
            }
            out = static_cast<T>(v);
        }
    }

    template <typename T>
    void read_list(const char* key, std::vector<T>& out) {
        const toml::node* node = lookup(key);
        if (node == nullptr) return;
        const auto* arr = node->as_array();
        if (arr == nullptr) fail(key, "an array");
        out.clear();
        for (const auto& item : *arr) {
            if constexpr (std::is_same_v<T, std::string>) {
                if (!item.is_string()) fail(key, "an array of strings");
                out.push_back(*item.value<std::string>());
            } else {
                if (!item.is_integer()) fail(key, "an array of integers");
                auto v = *item.value<std::int64_t>();
                if constexpr (std::is_unsigned_v<T>) {
                    if (v < 0) fail(key, "an array of nonnegative integers");
                }
                out.push_back(static_cast<T>(v));
            }
        }
    }

    template <typename Enum, typename Parse>
    void read_enum(const char* key, Enum& out, Parse parse) {
        std::string s;
        bool present = lookup(key) != nullptr;
        read(key, s);
        if (!present) return;
        try {
            out = parse(s);
        } catch (const ConfigError& e) {
            throw ConfigError(where(key) + ": " + e.what());
        }
    }

    void check_unknown() const {
        if (table_ == nullptr) return;
        for (const auto& [k, v] : *table_) {
            std::string key(k.str());
            if (!used_.count(key)) throw ConfigError("unknown configuration key '" + where(key.c_str()) + "'");
        }
    }

private:
    const toml::node* lookup(const char* key) {
        used_.insert(key);
        if (table_ == nullptr) return nullptr;
        return table_->get(key);
    }
    std::string where(const char* key) const { return name_.empty() ? key : name_ + "." + key; }
    [[noreturn]] void fail(const char* key, const char* expected) const {
        throw ConfigError("configuration key '" + where(key) + "' must be " + expected);
    }

    const toml::table* table_;
    std::string name_;
    std::set<std::string> used_;
};

const toml::table* sub_table(const toml::table& root, const char* name) {
    const toml::node* node = root.get(name);
    if (node == nullptr) return nullptr;
    if (!node->is_table()) throw ConfigError(std::string("configuration entry '") + name + "' must be a table");
    return node->as_table();
}

std::string path_string(const std::filesystem::path& p) { return p.generic_string(); }

}  // namespace

std::filesystem::path RunConfig::resolve(const std::filesystem::path& p) const {
    if (p.empty() || p.is_absolute()) return p;
    return (base_dir / p).lexically_normal();
}

NormalizationPolicy RunConfig::policy() const {
    bool fold = eval.case_fold.value_or(eval.language == Language::english);
    return NormalizationPolicy{fold};
}

AgentOptions RunConfig::agent_options() const {
    AgentOptions o;
    o.strategy_mode = agent.strategy_mode;
    o.fixed_strategy = agent.fixed_strategy;
    o.max_rounds = agent.max_rounds;
    o.k = retrieval.k;
    o.l = retrieval.l;
    o.k_each = memory.k_each;
    o.kg_cap = retrieval.kg_cap;
    o.short_length = agent.short_length;
    o.min_mentions = agent.min_mentions;
    o.observation_limit = agent.observation_limit;
    o.candidate_method = retrieval.candidates;
    o.recognition = retrieval.recognition;
    o.retrieval = retrieval.enabled;
    auto has = [&](const char* flag) {
        return std::find(retrieval.ablate.begin(), retrieval.ablate.end(), flag) != retrieval.ablate.end();
    };
    o.use_samples = !has("-samples");
    o.use_guidelines = !has("-doc");
    o.use_kg = !has("-KG");
    o.prompt_context = agent.prompt_context;
    o.tools = agent.tools;
    o.memory_mode = memory.mode;
    o.verifier = memory.verifier;
    o.language = eval.language;
    o.policy = policy();
    o.parse_mode = agent.parse_mode;
    o.seed = seed;
    o.workers = agent.workers;
    return o;
}

json RunConfig::to_json() const {
    std::string strategy = agent.strategy_mode == StrategyMode::fixed ? to_string(agent.fixed_strategy)
                                                                      : to_string(agent.strategy_mode);
    json j;
    j["seed"] = seed;
    j["out"] = path_string(out);
    j["backend"] = {{"kind", backend.kind},         {"script", path_string(backend.script)},
                    {"replay", path_string(backend.replay)}, {"endpoint", backend.endpoint},
                    {"model", backend.model},       {"timeout_s", backend.timeout_s},
                    {"backoff_ms", backend.backoff_ms}};
    j["retrieval"] = {{"encoder", to_string(retrieval.encoder)},
                      {"k", retrieval.k},
                      {"l", retrieval.l},
                      {"candidates", to_string(retrieval.candidates)},
                      {"recognition", to_string(retrieval.recognition)},
                      {"kg_cap", retrieval.kg_cap},
                      {"bm25_k1", retrieval.bm25_k1},
                      {"bm25_b", retrieval.bm25_b},
                      {"enabled", retrieval.enabled},
                      {"ablate", retrieval.ablate},
                      {"vectors", path_string(retrieval.vectors)},
                      {"embeddings_endpoint", retrieval.embeddings_endpoint},
                      {"embeddings_model", retrieval.embeddings_model},
                      {"guidelines", path_string(retrieval.guidelines)},
                      {"kg_aliases", path_string(retrieval.kg_aliases)},
                      {"kg_triples", path_string(retrieval.kg_triples)}};
    j["memory"] = {{"mode", to_string(memory.mode)}, {"verifier", to_string(memory.verifier)}, {"k_each", memory.k_each}};
    j["agent"] = {{"strategy", strategy},
                  {"max_rounds", agent.max_rounds},
                  {"short_length", agent.short_length},
                  {"min_mentions", agent.min_mentions},
                  {"observation_limit", agent.observation_limit},
                  {"prompt_context", agent.prompt_context},
                  {"tools", agent.tools},
                  {"workers", agent.workers},
                  {"parse_mode", agent.parse_mode == ParseMode::strict ? "strict" : "lenient"}};
    j["eval"] = {{"train", path_string(eval.train)},
                 {"test", path_string(eval.test)},
                 {"format", to_string(eval.format)},
                 {"schema", path_string(eval.schema)},
                 {"strict", eval.strict},
                 {"language", to_string(eval.language)},
                 {"case_fold", policy().case_fold},
                 {"variants", eval.variants},
                 {"ns", eval.ns},
                 {"checkpoints", eval.checkpoints},
                 {"probe", path_string(eval.probe)},
                 {"probe_fraction", eval.probe_fraction},
                 {"probe_size", eval.probe_size},
                 {"trajectories", path_string(eval.trajectories)},
                 {"validate_rationales", eval.validate_rationales}};
    return j;
}

std::string RunConfig::digest() const { return sha256_hex(to_json().dump()); }

RunConfig parse_config(const std::string& toml_text, const std::filesystem::path& base_dir) {
    toml::table root;
    try {
        root = toml::parse(toml_text);
    } catch (const toml::parse_error& e) {
        std::ostringstream msg;
        msg << "configuration syntax error at line " << e.source().begin.line << ": " << e.description();
        throw ConfigError(msg.str());
    }
    RunConfig c;
    c.base_dir = base_dir;

    Section top(&root, "");
    top.read("seed", c.seed);
    top.read("out", c.out);
    for (const auto& [k, v] : root) {
        static const std::set<std::string, std::less<>> known = {"seed", "out", "backend", "retrieval", "memory", "agent", "eval"};
        if (!known.count(k.str())) throw ConfigError("unknown configuration key '" + std::string(k.str()) + "'");
    }

    Section backend(sub_table(root, "backend"), "backend");
    backend.read("kind", c.backend.kind);
    backend.read("script", c.backend.script);
    backend.read("replay", c.backend.replay);
    backend.read("endpoint", c.backend.endpoint);
    backend.read("model", c.backend.model);
    backend.read("timeout_s", c.backend.timeout_s);
    backend.read_list("backoff_ms", c.backend.backoff_ms);
    backend.check_unknown();

    Section retrieval(sub_table(root, "retrieval"), "retrieval");
    retrieval.read_enum("encoder", c.retrieval.encoder, encoder_kind_from_string);
    retrieval.read("k", c.retrieval.k);
    retrieval.read("l", c.retrieval.l);
    retrieval.read_enum("candidates", c.retrieval.candidates, candidate_method_from_string);
    retrieval.read_enum("recognition", c.retrieval.recognition, recognition_method_from_string);
    retrieval.read("kg_cap", c.retrieval.kg_cap);
    retrieval.read("bm25_k1", c.retrieval.bm25_k1);
    retrieval.read("bm25_b", c.retrieval.bm25_b);
    retrieval.read("enabled", c.retrieval.enabled);
    retrieval.read_list("ablate", c.retrieval.ablate);
    retrieval.read("vectors", c.retrieval.vectors);
    retrieval.read("embeddings_endpoint", c.retrieval.embeddings_endpoint);
    retrieval.read("embeddings_model", c.retrieval.embeddings_model);
    retrieval.read("guidelines", c.retrieval.guidelines);
    retrieval.read("kg_aliases", c.retrieval.kg_aliases);
    retrieval.read("kg_triples", c.retrieval.kg_triples);
    retrieval.check_unknown();

    Section memory(sub_table(root, "memory"), "memory");
    memory.read_enum("mode", c.memory.mode, memory_mode_from_string);
    memory.read_enum("verifier", c.memory.verifier, verifier_mode_from_string);
    memory.read("k_each", c.memory.k_each);
    memory.check_unknown();

    Section agent(sub_table(root, "agent"), "agent");
    std::string strategy;
    agent.read("strategy", strategy);
    if (!strategy.empty()) {
        if (strategy == "rule" || strategy == "llm") {
            c.agent.strategy_mode = strategy_mode_from_string(strategy);
        } else {
            try {
                c.agent.fixed_strategy = strategy_kind_from_string(strategy);
            } catch (const ConfigError&) {
                throw ConfigError("agent.strategy must be rule, llm, direct, staged, cot or react (got '" + strategy + "')");
            }
            c.agent.strategy_mode = StrategyMode::fixed;
        }
    }
    agent.read("max_rounds", c.agent.max_rounds);
    agent.read("short_length", c.agent.short_length);
    agent.read("min_mentions", c.agent.min_mentions);
    agent.read("observation_limit", c.agent.observation_limit);
    agent.read("prompt_context", c.agent.prompt_context);
    agent.read("tools", c.agent.tools);
    agent.read("workers", c.agent.workers);
    agent.read_enum("parse_mode", c.agent.parse_mode, [](const std::string& s) {
        if (s == "strict") return ParseMode::strict;
        if (s == "lenient") return ParseMode::lenient;
        throw ConfigError("expected strict or lenient");
    });
    agent.check_unknown();

    Section eval(sub_table(root, "eval"), "eval");
    eval.read("train", c.eval.train);
    eval.read("test", c.eval.test);
    eval.read_enum("format", c.eval.format, dataset_format_from_string);
    eval.read("schema", c.eval.schema);
    eval.read("strict", c.eval.strict);
    eval.read_enum("language", c.eval.language, [](const std::string& s) {
        try {
            return language_from_string(s);
        } catch (const Error& e) {
            throw ConfigError(e.what());
        }
    });
    bool fold = false;
    bool has_fold = sub_table(root, "eval") && sub_table(root, "eval")->get("case_fold");
    eval.read("case_fold", fold);
    if (has_fold) c.eval.case_fold = fold;
    eval.read_list("variants", c.eval.variants);
    eval.read_list("ns", c.eval.ns);
    eval.read_list("checkpoints", c.eval.checkpoints);
    eval.read("probe", c.eval.probe);
    eval.read("probe_fraction", c.eval.probe_fraction);
    eval.read("probe_size", c.eval.probe_size);
    eval.read("trajectories", c.eval.trajectories);
    eval.read("validate_rationales", c.eval.validate_rationales);
    eval.check_unknown();

    return c;
}

RunConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot read configuration file " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    auto base = path.has_parent_path() ? path.parent_path() : std::filesystem::path(".");
    return parse_config(ss.str(), base);
}

std::string to_string(Command c) {
    switch (c) {
        case Command::extract: return "extract";
        case Command::ablate: return "ablate";
        case Command::lowres: return "lowres";
        case Command::memcurve: return "memcurve";
        case Command::distill: return "distill";
    }
    return "extract";
}

void validate_config(const RunConfig& c, Command command) {
    auto need_file = [&](const std::filesystem::path& p, const std::string& key) {
        if (p.empty()) throw ConfigError("missing required setting " + key);
        if (!std::filesystem::is_regular_file(c.resolve(p))) {
            throw ConfigError(key + " does not name a readable file: " + c.resolve(p).string());
        }
    };
    auto optional_file = [&](const std::filesystem::path& p, const std::string& key) {
        if (!p.empty()) need_file(p, key);
    };

    if (c.out.empty()) throw ConfigError("output directory must not be empty");
    if (command == Command::memcurve) {
        optional_file(c.eval.test, "eval.test");
    } else {
        need_file(c.eval.test, "eval.test");
    }
    optional_file(c.eval.train, "eval.train");
    optional_file(c.eval.schema, "eval.schema");
    optional_file(c.retrieval.guidelines, "retrieval.guidelines");
    optional_file(c.retrieval.vectors, "retrieval.vectors");
    if (c.retrieval.kg_aliases.empty() != c.retrieval.kg_triples.empty()) {
        throw ConfigError("retrieval.kg_aliases and retrieval.kg_triples must be given together");
    }
    optional_file(c.retrieval.kg_aliases, "retrieval.kg_aliases");
    optional_file(c.retrieval.kg_triples, "retrieval.kg_triples");

    if (c.retrieval.l < 1) throw ConfigError("retrieval.l must be at least 1");
    if (c.agent.max_rounds < 1) throw ConfigError("agent.max_rounds must be at least 1");
    if (c.agent.workers < 1) throw ConfigError("agent.workers must be at least 1");
    if (c.retrieval.bm25_k1 < 0 || c.retrieval.bm25_b < 0 || c.retrieval.bm25_b > 1) {
        throw ConfigError("retrieval.bm25_k1 must be >= 0 and retrieval.bm25_b within [0, 1]");
    }
    for (const auto& flag : c.retrieval.ablate) {
        if (flag != "-samples" && flag != "-doc" && flag != "-KG") {
            throw ConfigError("retrieval.ablate entries must be -samples, -doc or -KG (got '" + flag + "')");
        }
    }
    if (c.retrieval.encoder == EncoderKind::embedding && c.retrieval.vectors.empty() &&
        c.retrieval.embeddings_endpoint.empty()) {
        throw ConfigError("the embedding encoder needs retrieval.vectors or retrieval.embeddings_endpoint");
    }

    if (c.backend.kind == "scripted") {
        need_file(c.backend.script, "backend.script");
        if (c.agent.workers > 1) {
            auto script = ScriptedBackend::from_file(c.resolve(c.backend.script));
            if (script->requires_sequential()) {
                throw ConfigError("scripts with sequence-position rules need agent.workers = 1");
            }
        }
    } else if (c.backend.kind == "journal") {
        need_file(c.backend.replay, "backend.replay");
        if (c.agent.workers > 1) throw ConfigError("journal replay needs agent.workers = 1");
    } else if (c.backend.kind == "http") {
        if (c.backend.timeout_s <= 0) throw ConfigError("backend.timeout_s must be positive");
    } else {
        throw ConfigError("backend.kind must be scripted, http or journal (got '" + c.backend.kind + "')");
    }
    for (auto ms : c.backend.backoff_ms) {
        if (ms < 0) throw ConfigError("backend.backoff_ms entries must be nonnegative");
    }

    switch (command) {
        case Command::extract: break;
        case Command::ablate:
            if (c.eval.variants.size() < 2) throw ConfigError("ablate needs at least two variants (eval.variants)");
            break;
        case Command::lowres:
            if (c.eval.ns.empty()) throw ConfigError("lowres needs eval.ns");
            if (!std::is_sorted(c.eval.ns.begin(), c.eval.ns.end())) throw ConfigError("eval.ns must be nondecreasing");
            need_file(c.eval.train, "eval.train");
            break;
        case Command::memcurve:
            if (c.memory.verifier != VerifierMode::oracle) {
                throw ConfigError("memcurve needs memory.verifier = \"oracle\"; the curve is undefined without verification");
            }
            if (c.eval.checkpoints.empty()) throw ConfigError("memcurve needs eval.checkpoints");
            if (!std::is_sorted(c.eval.checkpoints.begin(), c.eval.checkpoints.end())) {
                throw ConfigError("eval.checkpoints must be nondecreasing");
            }
            if (c.eval.probe_fraction <= 0.0 || c.eval.probe_fraction >= 1.0) {
                throw ConfigError("eval.probe_fraction must be within (0, 1)");
            }
            need_file(c.eval.train, "eval.train");
            optional_file(c.eval.probe, "eval.probe");
            break;
        case Command::distill: break;
    }
}

}  // namespace relex
