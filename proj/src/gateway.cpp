#include "relex/gateway.hpp"

#include <cstdlib>
#include <fstream>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "relex/digest.hpp"
#include "relex/error.hpp"
#include "relex/text.hpp"

namespace relex {

using nlohmann::json;

namespace {

std::string excerpt(std::string_view prompt) {
    std::string flat = text::squeeze_whitespace(text::truncate(prompt, 240));
    return flat.size() < prompt.size() ? flat + " ..." : flat;
}

bool rule_matches(const ScriptedRule& rule, const CompletionRequest& request, std::string_view matcher_kind_hash) {
    if (rule.tag && *rule.tag != request.tag) return false;
    switch (rule.matcher) {
        case ScriptedRule::Matcher::prompt_hash: return rule.hash == matcher_kind_hash;
        case ScriptedRule::Matcher::substring:
            for (const auto& s : rule.substrings) {
                if (request.prompt.find(s) == std::string::npos) return false;
            }
            return true;
        case ScriptedRule::Matcher::sequence: return false;
    }
    return false;
}

std::int64_t epoch_ms(std::chrono::system_clock::time_point t) {
    return std::chrono::duration_cast<std::chrono::milliseconds>(t.time_since_epoch()).count();
}

}  // namespace

ScriptedRule parse_scripted_rule(std::string_view line) {
    json doc;
    try {
        doc = json::parse(line);
    } catch (const json::parse_error& e) {
        throw DatasetError(std::string("scripted rule is not valid JSON: ") + e.what());
    }
    if (!doc.is_object() || !doc.contains("response") || !doc["response"].is_string()) {
        throw DatasetError("scripted rule needs a string 'response'");
    }
    ScriptedRule rule;
    rule.response = doc["response"].get<std::string>();
    if (doc.contains("tag")) rule.tag = doc["tag"].get<std::string>();
    std::string kind = doc.value("match", "substring");
    if (kind == "substring") {
        rule.matcher = ScriptedRule::Matcher::substring;
        if (doc.contains("pattern")) rule.substrings.push_back(doc["pattern"].get<std::string>());
        if (doc.contains("all")) {
            for (const auto& s : doc["all"]) rule.substrings.push_back(s.get<std::string>());
        }
    } else if (kind == "hash") {
        rule.matcher = ScriptedRule::Matcher::prompt_hash;
        rule.hash = doc.value("hash", "");
        if (rule.hash.empty()) throw DatasetError("hash rule needs 'hash'");
    } else if (kind == "sequence") {
        rule.matcher = ScriptedRule::Matcher::sequence;
        if (!doc.contains("position") || !doc["position"].is_number_unsigned()) {
            throw DatasetError("sequence rule needs a nonnegative integer 'position'");
        }
        rule.position = doc["position"].get<std::size_t>();
    } else {
        throw DatasetError("unknown scripted matcher '" + kind + "'");
    }
    return rule;
}

std::string serialize_scripted_rule(const ScriptedRule& rule) {
    json doc;
    switch (rule.matcher) {
        case ScriptedRule::Matcher::prompt_hash:
            doc["match"] = "hash";
            doc["hash"] = rule.hash;
            break;
        case ScriptedRule::Matcher::substring:
            doc["match"] = "substring";
            doc["all"] = rule.substrings;
            break;
        case ScriptedRule::Matcher::sequence:
            doc["match"] = "sequence";
            doc["position"] = rule.position;
            break;
    }
    if (rule.tag) doc["tag"] = *rule.tag;
    doc["response"] = rule.response;
    return doc.dump();
}

ScriptedBackend::ScriptedBackend(std::vector<ScriptedRule> rules) : rules_(std::move(rules)) {
    for (const auto& r : rules_) {
        if (r.matcher == ScriptedRule::Matcher::sequence) has_sequence_rules_ = true;
    }
}

std::shared_ptr<ScriptedBackend> ScriptedBackend::from_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DatasetError("cannot open script " + path.string());
    std::vector<ScriptedRule> rules;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (text::trim(line).empty()) continue;
        try {
            rules.push_back(parse_scripted_rule(line));
        } catch (const DatasetError& e) {
            throw DatasetError(path.filename().string() + " line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    return std::make_shared<ScriptedBackend>(std::move(rules));
}

std::string ScriptedBackend::complete(const CompletionRequest& request) {
    std::size_t call;
    {
        std::lock_guard lock(mutex_);
        call = calls_++;
    }
    for (const auto& r : rules_) {
        if (r.matcher == ScriptedRule::Matcher::sequence && r.position == call && (!r.tag || *r.tag == request.tag)) {
            return r.response;
        }
    }
    std::string hash;
    for (const auto& r : rules_) {
        if (r.matcher != ScriptedRule::Matcher::prompt_hash) continue;
        if (hash.empty()) hash = sha256_hex(request.prompt);
        if (rule_matches(r, request, hash)) return r.response;
    }
    for (const auto& r : rules_) {
        if (r.matcher == ScriptedRule::Matcher::substring && rule_matches(r, request, {})) return r.response;
    }
    throw ScriptMissError("no scripted rule matches call " + std::to_string(call) + " (tag '" + request.tag +
                          "'): " + excerpt(request.prompt));
}

void ScriptedBackend::reset() {
    std::lock_guard lock(mutex_);
    calls_ = 0;
}

std::size_t ScriptedBackend::calls() const {
    std::lock_guard lock(mutex_);
    return calls_;
}

HttpEndpoint HttpEndpoint::from_environment() {
    HttpEndpoint e;
    if (const char* v = std::getenv("RELEX_LLM_ENDPOINT")) e.base_url = v;
    if (const char* v = std::getenv("RELEX_LLM_MODEL")) e.model = v;
    if (const char* v = std::getenv("RELEX_LLM_API_KEY")) e.api_key = v;
    return e;
}

HttpBackend::HttpBackend(HttpEndpoint endpoint) : endpoint_(std::move(endpoint)) {
    if (endpoint_.base_url.empty()) throw ConfigError("HTTP backend needs an endpoint URL (RELEX_LLM_ENDPOINT)");
    if (endpoint_.model.empty()) throw ConfigError("HTTP backend needs a model name (RELEX_LLM_MODEL)");
}

std::string HttpBackend::complete(const CompletionRequest& request) {
    json body = {{"model", endpoint_.model},
                 {"messages", json::array({{{"role", "user"}, {"content", request.prompt}}})},
                 {"temperature", request.temperature},
                 {"max_tokens", request.max_tokens}};
    if (!request.stop_sequences.empty()) body["stop"] = request.stop_sequences;

    httplib::Client client(endpoint_.base_url);
    client.set_connection_timeout(endpoint_.timeout);
    client.set_read_timeout(endpoint_.timeout);
    httplib::Headers headers;
    if (!endpoint_.api_key.empty()) headers.emplace("Authorization", "Bearer " + endpoint_.api_key);

    auto res = client.Post(endpoint_.path, headers, body.dump(), "application/json");
    if (!res) throw TransportError("request to " + endpoint_.base_url + " failed: " + httplib::to_string(res.error()));
    if (res->status == 429 || res->status >= 500) {
        throw TransportError("completion service returned HTTP " + std::to_string(res->status));
    }
    if (res->status != 200) {
        throw Error("completion service returned HTTP " + std::to_string(res->status) + ": " + excerpt(res->body));
    }
    try {
        json reply = json::parse(res->body);
        const json& content = reply.at("choices").at(0).at("message").at("content");
        return content.is_null() ? std::string() : content.get<std::string>();
    } catch (const json::exception& e) {
        throw Error(std::string("malformed chat-completions response: ") + e.what());
    }
}

Journal::Journal(const std::filesystem::path& path) : path_(path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream truncate(path, std::ios::trunc);
    if (!truncate) throw Error("cannot write journal " + path.string());
}

void Journal::record_completion(const std::string& tag, const std::string& prompt, const std::string& response,
                                std::chrono::system_clock::time_point started,
                                std::chrono::system_clock::time_point finished) {
    append(JournalEntry{"completion", tag, prompt, response, epoch_ms(started), epoch_ms(finished),
                        epoch_ms(finished) - epoch_ms(started)});
}

void Journal::record_event(const std::string& tag, const std::string& message) {
    auto now = epoch_ms(std::chrono::system_clock::now());
    append(JournalEntry{"event", tag, "", message, now, now, 0});
}

void Journal::append(JournalEntry entry) {
    std::lock_guard lock(mutex_);
    if (path_) {
        json line = {{"kind", entry.kind}, {"tag", entry.tag}};
        if (entry.kind == "event") {
            line["message"] = entry.response;
            line["timestamp_ms"] = entry.started_ms;
        } else {
            line["prompt"] = entry.prompt;
            line["response"] = entry.response;
            line["timestamps"] = {{"started_ms", entry.started_ms}, {"finished_ms", entry.finished_ms}};
            line["latency_ms"] = entry.latency_ms;
        }
        std::ofstream out(*path_, std::ios::app);
        out << line.dump(-1, ' ', false, json::error_handler_t::replace) << '\n';
    }
    entries_.push_back(std::move(entry));
}

std::vector<JournalEntry> Journal::entries() const {
    std::lock_guard lock(mutex_);
    return entries_;
}

std::vector<JournalEntry> Journal::read(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DatasetError("cannot open journal " + path.string());
    std::vector<JournalEntry> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (text::trim(line).empty()) continue;
        try {
            json doc = json::parse(line);
            JournalEntry e;
            e.kind = doc.value("kind", "completion");
            e.tag = doc.value("tag", "");
            if (e.kind == "event") {
                e.response = doc.value("message", "");
                e.started_ms = e.finished_ms = doc.value("timestamp_ms", std::int64_t{0});
            } else {
                e.prompt = doc.at("prompt").get<std::string>();
                e.response = doc.at("response").get<std::string>();
                if (doc.contains("timestamps")) {
                    e.started_ms = doc["timestamps"].value("started_ms", std::int64_t{0});
                    e.finished_ms = doc["timestamps"].value("finished_ms", std::int64_t{0});
                }
                e.latency_ms = doc.value("latency_ms", std::int64_t{0});
            }
            out.push_back(std::move(e));
        } catch (const json::exception& e) {
            throw DatasetError(path.filename().string() + " line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    return out;
}

JournalBackend::JournalBackend(std::vector<JournalEntry> entries) {
    for (auto& e : entries) {
        if (e.kind == "completion") completions_.push_back(std::move(e));
    }
}

std::shared_ptr<JournalBackend> JournalBackend::from_file(const std::filesystem::path& path) {
    return std::make_shared<JournalBackend>(Journal::read(path));
}

std::string JournalBackend::complete(const CompletionRequest& request) {
    std::lock_guard lock(mutex_);
    if (next_ >= completions_.size()) {
        throw ScriptMissError("journal exhausted after " + std::to_string(next_) + " completions: " +
                              excerpt(request.prompt));
    }
    const auto& entry = completions_[next_];
    if (entry.prompt != request.prompt) {
        throw ScriptMissError("journal entry " + std::to_string(next_) + " recorded a different prompt: " +
                              excerpt(request.prompt));
    }
    ++next_;
    return entry.response;
}

Gateway::Gateway(std::shared_ptr<Backend> backend, std::shared_ptr<Journal> journal, RetryPolicy retry)
    : backend_(std::move(backend)), journal_(std::move(journal)), retry_(std::move(retry)) {
    if (!backend_) throw ConfigError("gateway needs a backend");
    if (!retry_.sleep) retry_.sleep = [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
}

std::string Gateway::complete(const CompletionRequest& request) {
    if (request.prompt.empty()) throw PreconditionError("completion request with empty prompt");
    if (request.max_tokens <= 0) throw PreconditionError("completion request needs max_tokens > 0");
    std::size_t attempt = 0;
    while (true) {
        auto started = std::chrono::system_clock::now();
        try {
            std::string response = backend_->complete(request);
            if (journal_) journal_->record_completion(request.tag, request.prompt, response, started, std::chrono::system_clock::now());
            return response;
        } catch (const TransportError& e) {
            if (journal_) journal_->record_event("transport_failure", e.what());
            if (attempt >= retry_.backoff.size()) {
                throw TransportError(std::string(e.what()) + " (gave up after " + std::to_string(attempt + 1) + " attempts)");
            }
            retry_.sleep(retry_.backoff[attempt]);
            ++attempt;
        }
    }
}

void Gateway::note(const std::string& tag, const std::string& message) {
    if (journal_) journal_->record_event(tag, message);
}

std::string complete(Backend& backend, const CompletionRequest& request) {
    std::shared_ptr<Backend> borrowed(&backend, [](Backend*) {});
    return Gateway(borrowed).complete(request);
}

}  // namespace relex
