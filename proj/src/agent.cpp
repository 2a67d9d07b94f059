#include "relex/agent.hpp"

#include <algorithm>
#include <atomic>
#include <fstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "relex/error.hpp"
#include "relex/prompt.hpp"
#include "relex/text.hpp"

namespace relex {

using nlohmann::json;

StrategyKind strategy_kind_from_string(std::string_view name) {
    if (name == "direct") return StrategyKind::direct;
    if (name == "staged") return StrategyKind::staged;
    if (name == "cot") return StrategyKind::cot;
    if (name == "react") return StrategyKind::react;
    throw ConfigError("unknown strategy '" + std::string(name) + "' (expected direct, staged, cot or react)");
}

std::string to_string(StrategyKind kind) {
    switch (kind) {
        case StrategyKind::direct: return "direct";
        case StrategyKind::staged: return "staged";
        case StrategyKind::cot: return "cot";
        case StrategyKind::react: return "react";
    }
    return "direct";
}

StrategyMode strategy_mode_from_string(std::string_view name) {
    if (name == "rule") return StrategyMode::rule;
    if (name == "llm") return StrategyMode::llm;
    if (name == "fixed") return StrategyMode::fixed;
    throw ConfigError("unknown strategy mode '" + std::string(name) + "' (expected rule, llm or fixed)");
}

std::string to_string(StrategyMode mode) {
    switch (mode) {
        case StrategyMode::rule: return "rule";
        case StrategyMode::llm: return "llm";
        case StrategyMode::fixed: return "fixed";
    }
    return "rule";
}

std::string to_string(Termination t) {
    switch (t) {
        case Termination::finish: return "finish";
        case Termination::budget_exhausted: return "budget_exhausted";
        case Termination::parse_failure: return "parse_failure";
        case Termination::error: return "error";
    }
    return "error";
}

Termination termination_from_string(std::string_view name) {
    if (name == "finish") return Termination::finish;
    if (name == "budget_exhausted") return Termination::budget_exhausted;
    if (name == "parse_failure") return Termination::parse_failure;
    if (name == "error") return Termination::error;
    throw DatasetError("unknown termination '" + std::string(name) + "'");
}

// ---- trajectory log ----

json trajectory_to_json(const Trajectory& t) {
    json steps = json::array();
    for (const auto& s : t.steps) {
        steps.push_back({{"thought", s.thought}, {"action", format_action(s.action)}, {"observation", s.observation}});
    }
    json result = json::array();
    for (const auto& r : t.result) result.push_back({{"h", r.head}, {"r", r.relation}, {"t", r.tail}});
    json doc = {{"sentence_id", t.sentence_id}, {"sentence", t.sentence}, {"strategy", to_string(t.strategy)},
                {"steps", steps},           {"result", result},       {"terminated", to_string(t.terminated)}};
    if (!t.error.empty()) doc["error"] = t.error;
    return doc;
}

Trajectory trajectory_from_json(const json& doc) {
    Trajectory t;
    try {
        t.sentence_id = doc.at("sentence_id").get<std::int64_t>();
        t.sentence = doc.at("sentence").get<std::string>();
        t.strategy = strategy_kind_from_string(doc.at("strategy").get<std::string>());
        for (const auto& s : doc.at("steps")) {
            std::string action = s.at("action").get<std::string>();
            t.steps.push_back({s.at("thought").get<std::string>(), parse_action("Action: " + action),
                               s.at("observation").get<std::string>()});
        }
        for (const auto& r : doc.at("result")) {
            t.result.push_back({r.at("h").get<std::string>(), r.at("r").get<std::string>(), r.at("t").get<std::string>()});
        }
        t.terminated = termination_from_string(doc.at("terminated").get<std::string>());
        if (doc.contains("error")) t.error = doc["error"].get<std::string>();
    } catch (const json::exception& e) {
        throw DatasetError(std::string("malformed trajectory record: ") + e.what());
    } catch (const ParseError& e) {
        throw DatasetError(std::string("malformed trajectory action: ") + e.what());
    } catch (const ConfigError& e) {
        throw DatasetError(std::string("malformed trajectory record: ") + e.what());
    }
    return t;
}

void write_trajectories(const std::vector<Trajectory>& trajectories, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + path.string());
    for (const auto& t : trajectories) out << trajectory_to_json(t).dump() << '\n';
    if (!out) throw Error("failed writing " + path.string());
}

std::vector<Trajectory> read_trajectories(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DatasetError("cannot open trajectory log " + path.string());
    std::vector<Trajectory> out;
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
        ++n;
        if (text::trim(line).empty()) continue;
        try {
            out.push_back(trajectory_from_json(json::parse(line)));
        } catch (const json::exception& e) {
            throw DatasetError(path.filename().string() + " line " + std::to_string(n) + ": " + e.what());
        } catch (const DatasetError& e) {
            throw DatasetError(path.filename().string() + " line " + std::to_string(n) + ": " + e.what());
        }
    }
    return out;
}

// ---- resources and tools ----

std::shared_ptr<Resources> Resources::make(Schema schema, std::vector<Sample> corpus, EncoderKind kind,
                                           const IndexOptions& index_options,
                                           std::vector<GuidelineSnippet> guidelines, KGStore kg) {
    auto r = std::make_shared<Resources>();
    r->schema = std::move(schema);
    r->corpus = std::move(corpus);
    r->index = std::make_shared<const SampleIndex>(build_index(r->corpus, kind, index_options));
    r->prior = RelationPrior(r->schema, r->corpus);
    r->guidelines = std::move(guidelines);
    r->kg = std::move(kg);
    return r;
}

bool Toolset::has_data(Tool tool) const {
    if (!is_enabled(tool) || resources == nullptr) return false;
    switch (tool) {
        case Tool::search_samples: return resources->index && !resources->index->empty();
        case Tool::search_annotation: return !resources->guidelines.empty();
        case Tool::search_kg: return !resources->kg.empty();
        case Tool::search_memory: return memory != nullptr && !memory->state().empty();
        case Tool::finish: return true;
    }
    return false;
}

std::string Toolset::describe() const {
    std::string out;
    auto line = [&](Tool t, const char* arg, const char* what) {
        if (!is_enabled(t)) return;
        if (!out.empty()) out.push_back('\n');
        out += std::string(tool_name(t)) + "[" + arg + "]: " + what;
    };
    line(Tool::search_samples, "query", "labelled example sentences similar to the query");
    line(Tool::search_annotation, "relation", "annotation guidelines for the relation types (comma separated)");
    line(Tool::search_kg, "entity", "knowledge graph facts about the entity");
    line(Tool::search_memory, "query", "remembered facts and lessons related to the query");
    line(Tool::finish, "triples", "return the final triples, one (head, relation, tail) per line");
    return out;
}

Toolset make_toolset(const Resources& resources, const Memory* memory, const AgentOptions& options) {
    Toolset ts;
    ts.resources = &resources;
    ts.memory = memory;
    ts.options = &options;
    if (options.tools) {
        if (options.retrieval && options.use_samples) ts.enabled.insert(Tool::search_samples);
        if (options.retrieval && options.use_guidelines) ts.enabled.insert(Tool::search_annotation);
        if (options.retrieval && options.use_kg) ts.enabled.insert(Tool::search_kg);
        if (options.memory_mode != MemoryMode::off && memory != nullptr) ts.enabled.insert(Tool::search_memory);
    }
    return ts;
}

std::string render_examples(const std::vector<const Sample*>& samples) {
    std::string out;
    for (const auto* s : samples) {
        if (!out.empty()) out += "\n\n";
        out += "Input: " + s->text + "\nOutput: " + format_triples(s->gold);
    }
    return out;
}

namespace {

std::vector<const Sample*> lookup_samples(const Resources& r, const RetrievalResult& result) {
    std::vector<const Sample*> out;
    for (const auto& hit : result.hits) {
        auto it = std::find_if(r.corpus.begin(), r.corpus.end(), [&](const Sample& s) { return s.id == hit.sample_id; });
        if (it != r.corpus.end()) out.push_back(&*it);
    }
    return out;
}

std::string render_guidelines(const std::vector<GuidelineSnippet>& snippets) {
    std::string out;
    for (const auto& g : snippets) {
        if (!out.empty()) out.push_back('\n');
        out += g.relation_name + ": " + g.text;
    }
    return out;
}

std::string render_entity_facts(const KGStore& kg, const std::vector<std::string>& ids, std::size_t cap) {
    std::string out;
    for (const auto& id : ids) {
        for (const auto& t : retrieve_entity_triples(id, kg, cap)) {
            if (!out.empty()) out.push_back('\n');
            out += format_kg_triple(t);
        }
    }
    return out;
}

std::vector<std::string> linked_ids(const std::vector<Mention>& mentions, const KGStore& kg) {
    std::vector<std::string> ids;
    for (const auto& m : mentions) {
        auto id = link_entity(m, kg);
        if (id && std::find(ids.begin(), ids.end(), *id) == ids.end()) ids.push_back(*id);
    }
    return ids;
}

std::string or_no_results(std::string s) { return s.empty() ? std::string(kNoResults) : s; }

}  // namespace

std::string dispatch(const AgentAction& action, const Toolset& toolset, const EpisodeContext& context) {
    if (!toolset.is_enabled(action.tool)) return std::string(kToolUnavailable) + ": " + std::string(tool_name(action.tool));
    const auto& r = *toolset.resources;
    const auto& opt = *toolset.options;
    std::string arg = text::trim(action.argument);
    switch (action.tool) {
        case Tool::finish: return std::string(kFinishObservation);
        case Tool::search_samples: {
            if (!r.index || r.index->empty()) return std::string(kNoResults);
            RetrieveOptions ro{context.exclude, opt.seed};
            auto hits = r.index->retrieve(arg.empty() ? context.sentence : arg, opt.k, ro);
            return or_no_results(render_examples(lookup_samples(r, hits)));
        }
        case Tool::search_annotation: {
            std::vector<std::string> names;
            for (const auto& n : text::split(arg, ',')) {
                auto t = text::trim(n);
                if (!t.empty()) names.push_back(t);
            }
            std::vector<GuidelineSnippet> hits;
            for (const auto& g : retrieve_guidelines(names, r.guidelines)) {
                if (g.relation_name != kGeneralGuideline) hits.push_back(g);
            }
            return or_no_results(render_guidelines(hits));
        }
        case Tool::search_kg: {
            std::vector<std::string> ids;
            if (auto id = r.kg.link(arg)) {
                ids.push_back(*id);
            } else {
                ids = linked_ids(gazetteer_mentions(arg, r.kg), r.kg);
            }
            return or_no_results(render_entity_facts(r.kg, ids, opt.kg_cap));
        }
        case Tool::search_memory: {
            if (toolset.memory == nullptr) return std::string(kNoResults);
            std::string query = arg.empty() ? context.sentence : arg;
            auto bundle = toolset.memory->query(query, gazetteer_mentions(query, r.kg), opt.k_each);
            return or_no_results(render_memory_bundle(bundle));
        }
    }
    return std::string(kToolUnavailable);
}

// ---- strategy ----

StrategyKind select_strategy_rule(const StrategySignals& s, const AgentOptions& options) {
    if (s.mention_count >= options.min_mentions && s.tool_data) return StrategyKind::react;
    if (s.candidate_count <= 2 && s.sentence_length <= options.short_length) return StrategyKind::direct;
    if (s.candidate_count > 2) return StrategyKind::staged;
    return StrategyKind::cot;
}

StrategyKind select_strategy(std::string_view sentence, const std::vector<std::string>& candidates, StrategyMode mode,
                             const StrategySignals& signals, const AgentOptions& options, Gateway* gateway) {
    switch (mode) {
        case StrategyMode::fixed: return options.fixed_strategy;
        case StrategyMode::rule: return select_strategy_rule(signals, options);
        case StrategyMode::llm: {
            if (gateway == nullptr) throw ConfigError("llm strategy selection needs a gateway");
            std::string list;
            for (const auto& c : candidates) list += (list.empty() ? "" : ", ") + c;
            auto prompt = render_prompt(templates::strategy_choice(),
                                        {{"input_sentence", std::string(sentence)}, {"relation_candidates", list}});
            auto answer = text::case_fold(text::trim(gateway->complete({prompt, 0.0, 16, {}, "strategy"})));
            auto word = answer.substr(0, answer.find_first_of(" \n.,"));
            try {
                return strategy_kind_from_string(word);
            } catch (const ConfigError&) {
                gateway->note("strategy_fallback", "unrecognized strategy answer: " + text::truncate(answer, 80));
                return select_strategy_rule(signals, options);
            }
        }
    }
    return StrategyKind::direct;
}

// ---- episodes ----

namespace {

std::vector<Triple> parse_result(std::string_view text, const Schema& schema, const AgentOptions& options) {
    return parse_triples(text, schema, options.parse_mode).triples;
}

Trajectory finish_single(const EpisodeContext& ctx, StrategyKind kind, std::string thought, std::vector<Triple> result) {
    Trajectory t;
    t.sentence = ctx.sentence;
    t.strategy = kind;
    t.steps.push_back({std::move(thought), {Tool::finish, format_triples(result)}, std::string(kFinishObservation)});
    t.result = std::move(result);
    t.terminated = Termination::finish;
    return t;
}

Trajectory run_direct(const EpisodeContext& ctx, Gateway& gateway, const Schema& schema, const AgentOptions& options) {
    auto prompt = render_prompt(templates::extraction(), ctx.slots);
    auto response = gateway.complete({prompt, 0.0, 512, {}, "direct"});
    return finish_single(ctx, StrategyKind::direct, "Extract the triples directly.", parse_result(response, schema, options));
}

Trajectory run_staged(const EpisodeContext& ctx, Gateway& gateway, const Schema& schema, const AgentOptions& options) {
    std::vector<std::string> selected = ctx.candidates;
    if (!ctx.candidates.empty()) {
        std::string list;
        for (const auto& c : ctx.candidates) list += (list.empty() ? "" : ", ") + c;
        auto prompt = render_prompt(templates::relation_selection(),
                                    {{"input_sentence", ctx.sentence}, {"relation_candidates", list}});
        auto answer = gateway.complete({prompt, 0.0, 128, {}, "staged_select"});
        auto parsed = parse_relation_list(answer, ctx.candidates, ctx.candidates.size());
        if (!parsed.empty()) selected = std::move(parsed);
    }
    std::string list;
    for (const auto& c : selected) list += (list.empty() ? "" : ", ") + c;
    PromptSlots slots = ctx.slots;
    slots["relation_candidates"] = list;
    auto response = gateway.complete({render_prompt(templates::extraction(), slots), 0.0, 512, {}, "staged_extract"});
    std::string thought = list.empty() ? "No relation types selected." : "Selected relation types: " + list + ".";
    return finish_single(ctx, StrategyKind::staged, thought, parse_result(response, schema, options));
}

Trajectory run_cot(const EpisodeContext& ctx, Gateway& gateway, const Schema& schema, const AgentOptions& options) {
    auto response = gateway.complete({render_prompt(templates::chain_of_thought(), ctx.slots), 0.0, 1024, {}, "cot"});
    std::string block = extract_triple_block(response);
    std::string reasoning;
    if (block.size() < response.size()) {
        auto marker = response.rfind(kTripleBlockMarker);
        reasoning = text::trim(std::string_view(response).substr(0, marker));
    }
    return finish_single(ctx, StrategyKind::cot, reasoning, parse_result(block, schema, options));
}

std::string render_history(const std::vector<Step>& steps, const std::string& feedback) {
    std::string out;
    for (const auto& s : steps) {
        if (!out.empty()) out.push_back('\n');
        out += format_step(s.thought, s.action) + "\nObservation: " + s.observation;
    }
    if (!feedback.empty()) {
        if (!out.empty()) out.push_back('\n');
        out += feedback;
    }
    return out;
}

Trajectory run_react(const EpisodeContext& ctx, const Toolset& toolset, Gateway& gateway, const Schema& schema,
                     const AgentOptions& options) {
    Trajectory t;
    t.sentence = ctx.sentence;
    t.strategy = StrategyKind::react;
    t.terminated = Termination::budget_exhausted;

    PromptSlots slots = ctx.slots;
    slots["tools"] = toolset.describe();
    std::string feedback;
    std::size_t consecutive_failures = 0;
    for (std::size_t round = 0; round < options.max_rounds; ++round) {
        slots["history"] = render_history(t.steps, feedback);
        auto response = gateway.complete({render_prompt(templates::react(), slots), 0.0, 512, {"\nObservation:"}, "react"});
        AgentAction action;
        try {
            action = parse_action(response);
        } catch (const ParseError& e) {
            if (++consecutive_failures >= 3) {
                t.terminated = Termination::parse_failure;
                return t;
            }
            feedback = "Observation: invalid action (" + std::string(e.what()) +
                       "). Answer with Action: <Tool>[<argument>].";
            continue;
        }
        consecutive_failures = 0;
        feedback.clear();
        std::string thought = parse_thought(response);
        if (action.tool == Tool::finish) {
            t.result = parse_result(action.argument, schema, options);
            t.steps.push_back({std::move(thought), std::move(action), std::string(kFinishObservation)});
            t.terminated = Termination::finish;
            return t;
        }
        std::string observation;
        try {
            observation = dispatch(action, toolset, ctx);
        } catch (const Error& e) {
            observation = std::string("error: ") + e.what();
        }
        t.steps.push_back({std::move(thought), std::move(action), text::truncate(observation, options.observation_limit)});
    }
    t.result.clear();
    return t;
}

}  // namespace

Trajectory run_episode(const EpisodeContext& context, const Toolset& toolset, StrategyKind strategy, Gateway& gateway,
                       const Schema& schema, const AgentOptions& options) {
    if (options.max_rounds < 1) throw PreconditionError("max_rounds must be at least 1");
    switch (strategy) {
        case StrategyKind::direct: return run_direct(context, gateway, schema, options);
        case StrategyKind::staged: return run_staged(context, gateway, schema, options);
        case StrategyKind::cot: return run_cot(context, gateway, schema, options);
        case StrategyKind::react: return run_react(context, toolset, gateway, schema, options);
    }
    return {};
}

// ---- agent ----

Agent::Agent(std::shared_ptr<const Resources> resources, AgentOptions options, Gateway& gateway)
    : resources_(std::move(resources)), options_(std::move(options)), gateway_(gateway) {
    if (!resources_) throw PreconditionError("agent needs resources");
    for (const auto& s : resources_->corpus) {
        ids_by_text_[s.text].insert(s.id);
        corpus_by_id_[s.id] = &s;
    }
}

Memory Agent::make_memory() const { return Memory(options_.policy, options_.language, &resources_->kg); }

EpisodeContext Agent::prepare(const Sample& sample, const Memory* memory) const {
    const auto& r = *resources_;
    EpisodeContext ctx;
    ctx.sentence = sample.text;
    if (auto it = ids_by_text_.find(sample.text); it != ids_by_text_.end()) ctx.exclude = it->second;

    auto rec = recognize_entities(sample.text, options_.recognition, r.kg, &gateway_);
    for (const auto& issue : rec.issues) gateway_.note("entity_recognition", issue);
    ctx.mentions = std::move(rec.mentions);
    ctx.candidates =
        retrieve_candidate_relations(sample.text, r.schema, options_.candidate_method, options_.l, r.prior, &gateway_)
            .relations;

    ctx.slots["input_sentence"] = sample.text;
    std::string candidates;
    for (const auto& c : ctx.candidates) candidates += (candidates.empty() ? "" : ", ") + c;
    ctx.slots["relation_candidates"] = candidates;

    if (options_.prompt_context && options_.retrieval) {
        if (options_.use_samples && r.index && !r.index->empty()) {
            RetrieveOptions ro{ctx.exclude, options_.seed};
            ctx.slots["examples"] = render_examples(lookup_samples(r, r.index->retrieve(sample.text, options_.k, ro)));
        }
        std::string info;
        if (options_.use_guidelines) info = render_guidelines(retrieve_guidelines(ctx.candidates, r.guidelines));
        if (options_.use_kg) {
            auto facts = render_entity_facts(r.kg, linked_ids(ctx.mentions, r.kg), options_.kg_cap);
            if (!facts.empty()) info += (info.empty() ? "" : "\n") + facts;
        }
        ctx.slots["relevant_info"] = info;
    }
    if (options_.prompt_context && options_.memory_mode != MemoryMode::off && memory != nullptr) {
        ctx.slots["memory"] = render_memory_bundle(memory->query(sample.text, ctx.mentions, options_.k_each));
    }
    return ctx;
}

Trajectory Agent::extract(const Sample& sample, const Memory* memory) const {
    const Memory* active = options_.memory_mode == MemoryMode::off ? nullptr : memory;
    Trajectory t;
    try {
        auto ctx = prepare(sample, active);
        auto toolset = make_toolset(*resources_, active, options_);
        StrategySignals signals;
        signals.sentence_length = text::sentence_length(sample.text, options_.language);
        signals.candidate_count = ctx.candidates.size();
        signals.mention_count = ctx.mentions.size();
        for (Tool tool : kAllTools) {
            if (tool != Tool::finish && toolset.has_data(tool)) signals.tool_data = true;
        }
        auto kind = select_strategy(sample.text, ctx.candidates, options_.strategy_mode, signals, options_, &gateway_);
        t = run_episode(ctx, toolset, kind, gateway_, resources_->schema, options_);
    } catch (const Error& e) {
        t = Trajectory{};
        t.sentence = sample.text;
        t.terminated = Termination::error;
        t.error = e.what();
        gateway_.note("episode_error", "sentence " + std::to_string(sample.id) + ": " + e.what());
    }
    t.sentence_id = sample.id;
    return t;
}

void Agent::remember(const Sample& sample, const Trajectory& trajectory, Memory& memory) const {
    if (options_.memory_mode == MemoryMode::off) return;
    auto verified = verify_triples(trajectory.result, sample.gold, options_.policy, options_.verifier);
    memory.record_shallow(sample.text, verified);
    if (options_.memory_mode != MemoryMode::deep) return;
    for (const auto& [triple, verdict] : verified) {
        if (verdict == Verdict::correct) {
            memory.update_deep(triple, sample.text, gateway_);
        } else {
            std::vector<GuidelineSnippet> context;
            if (options_.use_guidelines) context = retrieve_guidelines({triple.relation}, resources_->guidelines);
            memory.reflect(triple, sample.text, sample.gold, context, gateway_);
        }
    }
}

CorpusRun Agent::run_corpus(const std::vector<Sample>& samples) const { return run_corpus(samples, make_memory()); }

CorpusRun Agent::run_corpus(const std::vector<Sample>& samples, Memory memory) const {
    CorpusRun run;
    run.trajectories.resize(samples.size());
    bool parallel = options_.memory_mode == MemoryMode::off && options_.workers > 1 &&
                    !gateway_.backend().requires_sequential() && samples.size() > 1;
    if (parallel) {
        std::atomic<std::size_t> next{0};
        auto work = [&] {
            for (std::size_t i = next++; i < samples.size(); i = next++) run.trajectories[i] = extract(samples[i], nullptr);
        };
        std::vector<std::thread> pool;
        for (std::size_t w = 0; w < std::min(options_.workers, samples.size()); ++w) pool.emplace_back(work);
        for (auto& th : pool) th.join();
    } else {
        for (std::size_t i = 0; i < samples.size(); ++i) {
            run.trajectories[i] = extract(samples[i], &memory);
            remember(samples[i], run.trajectories[i], memory);
        }
    }
    Metrics total;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        total = total + score(run.trajectories[i].result, samples[i].gold, options_.policy);
    }
    run.metrics = total;
    run.memory = memory.state();
    return run;
}

}  // namespace relex
