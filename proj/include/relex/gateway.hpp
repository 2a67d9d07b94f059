#pragma once

#include <chrono>
#include <cstddef>
#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace relex {

struct CompletionRequest {
    std::string prompt;
    double temperature = 0.0;
    int max_tokens = 512;
    std::vector<std::string> stop_sequences;
    // Free-form label identifying the call site ("extract", "react", ...).
    std::string tag;
};

// Pluggable completion service. Implementations are safe for concurrent calls
// unless `requires_sequential()` reports otherwise.
class Backend {
public:
    virtual ~Backend() = default;
    virtual std::string complete(const CompletionRequest& request) = 0;
    virtual std::string name() const = 0;
    virtual bool requires_sequential() const { return false; }
};

// One rule of a scripted backend. Exactly one matcher kind is active.
struct ScriptedRule {
    enum class Matcher { prompt_hash, substring, sequence };

    Matcher matcher = Matcher::substring;
    // SHA-256 hex of the full prompt (prompt_hash).
    std::string hash;
    // All listed substrings must occur in the prompt (substring).
    std::vector<std::string> substrings;
    // Zero-based index of the call within the run (sequence).
    std::size_t position = 0;
    // Optional restriction to requests carrying this tag.
    std::optional<std::string> tag;
    std::string response;
};

// Deterministic backend driven by rules. Matching precedence: sequence
// position, then prompt hash, then substring rules in file order. A request no
// rule matches raises ScriptMissError.
class ScriptedBackend : public Backend {
public:
    explicit ScriptedBackend(std::vector<ScriptedRule> rules);

    // JSONL, one rule per line:
    //   {"match": "substring", "pattern": "Mo Yan", "response": "..."}
    //   {"match": "substring", "all": ["a", "b"], "tag": "extract", "response": "..."}
    //   {"match": "hash", "hash": "<sha256 of prompt>", "response": "..."}
    //   {"match": "sequence", "position": 3, "response": "..."}
    static std::shared_ptr<ScriptedBackend> from_file(const std::filesystem::path& path);

    std::string complete(const CompletionRequest& request) override;
    std::string name() const override { return "scripted"; }
    bool requires_sequential() const override { return has_sequence_rules_; }

    void reset();
    std::size_t calls() const;
    const std::vector<ScriptedRule>& rules() const { return rules_; }

private:
    std::vector<ScriptedRule> rules_;
    bool has_sequence_rules_ = false;
    mutable std::mutex mutex_;
    std::size_t calls_ = 0;
};

ScriptedRule parse_scripted_rule(std::string_view json_line);
std::string serialize_scripted_rule(const ScriptedRule& rule);

struct HttpEndpoint {
    // Base URL such as "https://api.example.com" or "http://127.0.0.1:8080".
    std::string base_url;
    // Path of the chat-completions route.
    std::string path = "/v1/chat/completions";
    std::string model;
    std::string api_key;
    std::chrono::seconds timeout{120};

    // Reads RELEX_LLM_ENDPOINT, RELEX_LLM_MODEL and RELEX_LLM_API_KEY.
    static HttpEndpoint from_environment();
};

// OpenAI-compatible chat-completions client. Transport failures and 5xx/429
// responses raise TransportError; other HTTP errors raise Error.
class HttpBackend : public Backend {
public:
    explicit HttpBackend(HttpEndpoint endpoint);
    std::string complete(const CompletionRequest& request) override;
    std::string name() const override { return "http"; }

private:
    HttpEndpoint endpoint_;
};

struct JournalEntry {
    std::string kind;  // "completion" or "event"
    std::string tag;
    std::string prompt;
    std::string response;
    std::int64_t started_ms = 0;
    std::int64_t finished_ms = 0;
    std::int64_t latency_ms = 0;
};

// Append-only JSONL log of completions and notable events. Appends are
// serialized; entries are also kept in memory.
class Journal {
public:
    Journal() = default;
    explicit Journal(const std::filesystem::path& path);

    void record_completion(const std::string& tag, const std::string& prompt, const std::string& response,
                           std::chrono::system_clock::time_point started,
                           std::chrono::system_clock::time_point finished);
    void record_event(const std::string& tag, const std::string& message);

    std::vector<JournalEntry> entries() const;
    static std::vector<JournalEntry> read(const std::filesystem::path& path);

private:
    void append(JournalEntry entry);

    mutable std::mutex mutex_;
    std::optional<std::filesystem::path> path_;
    std::vector<JournalEntry> entries_;
};

// Replays the completions recorded in a journal, in order. A request whose
// prompt differs from the recorded one raises ScriptMissError.
class JournalBackend : public Backend {
public:
    explicit JournalBackend(std::vector<JournalEntry> entries);
    static std::shared_ptr<JournalBackend> from_file(const std::filesystem::path& path);

    std::string complete(const CompletionRequest& request) override;
    std::string name() const override { return "journal"; }
    bool requires_sequential() const override { return true; }

private:
    std::vector<JournalEntry> completions_;
    std::mutex mutex_;
    std::size_t next_ = 0;
};

struct RetryPolicy {
    // Waits before each retry; the number of retries equals the list length.
    std::vector<std::chrono::milliseconds> backoff{std::chrono::seconds(1), std::chrono::seconds(2),
                                                   std::chrono::seconds(4)};
    std::function<void(std::chrono::milliseconds)> sleep;
};

// Entry point for every model call: retries transport failures per policy and
// journals each completion.
class Gateway {
public:
    Gateway(std::shared_ptr<Backend> backend, std::shared_ptr<Journal> journal = nullptr, RetryPolicy retry = {});

    std::string complete(const CompletionRequest& request);
    void note(const std::string& tag, const std::string& message);

    Backend& backend() { return *backend_; }
    const std::shared_ptr<Journal>& journal() const { return journal_; }

private:
    std::shared_ptr<Backend> backend_;
    std::shared_ptr<Journal> journal_;
    RetryPolicy retry_;
};

// complete(backend, request) through a one-off gateway without journaling.
std::string complete(Backend& backend, const CompletionRequest& request);

}  // namespace relex
