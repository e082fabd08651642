#pragma once

#include <deque>
#include <map>
#include <memory>
#include <mutex>
#include <stdexcept>
#include <string>
#include <vector>

namespace mlzero {

struct ChatTurn {
    std::string speaker;  // "user" or "assistant"
    std::string text;
};

struct LlmRequest {
    std::string role_name;  // coder, planner, file_reader, ...
    std::string system_text;
    std::vector<ChatTurn> turns;
    double temperature = 0.0;
    int max_tokens = 65536;
    bool multi_turn = false;
};

struct LlmResponse {
    std::string text;
    long input_token_count = 0;
    long output_token_count = 0;
};

// Retryable transport problem (connection refused, 5xx, ...).
struct TransportError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Non-retryable response-shape problem (missing label, no fenced block, ...).
struct ParseError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

class LlmBackend {
public:
    virtual ~LlmBackend() = default;
    virtual LlmResponse complete(const LlmRequest& request) = 0;
};

// Deterministic canned backend for offline runs and tests. Responses are
// served in order, optionally from a per-role queue first. Consuming past
// the end throws; it never fabricates an empty response. Every request is
// kept so tests can inspect the exact prompts that were sent.
class ScriptedBackend : public LlmBackend {
public:
    ScriptedBackend() = default;
    explicit ScriptedBackend(std::vector<std::string> responses);

    void push(const std::string& text);
    void push_for_role(const std::string& role_name, const std::string& text);

    LlmResponse complete(const LlmRequest& request) override;

    const std::vector<LlmRequest>& transcript() const { return transcript_; }
    size_t calls() const { return transcript_.size(); }
    size_t remaining() const;

private:
    std::deque<std::string> queue_;
    std::map<std::string, std::deque<std::string>> role_queues_;
    std::vector<LlmRequest> transcript_;
};

// Chat-completion HTTP backend. Request body:
//   {model, messages:[{role, content}], temperature, max_tokens}
// The API credential is read from MLZERO_API_KEY and sent as a bearer token.
class HttpBackend : public LlmBackend {
public:
    HttpBackend(std::string base_url, std::string model,
                std::string path = "/v1/chat/completions");

    LlmResponse complete(const LlmRequest& request) override;

private:
    std::string base_url_;
    std::string model_;
    std::string path_;
};

// Uniform entry point: retries transient transport failures with exponential
// backoff and accumulates token totals across the run. Usable itself as a
// backend so agents can be composed over it.
class LlmClient : public LlmBackend {
public:
    explicit LlmClient(LlmBackend& backend, int max_attempts = 3,
                       int initial_backoff_ms = 1000);

    LlmResponse complete(const LlmRequest& request) override;

    long total_input_tokens() const { return total_input_; }
    long total_output_tokens() const { return total_output_; }

private:
    LlmBackend& backend_;
    int max_attempts_;
    int initial_backoff_ms_;
    long total_input_ = 0;
    long total_output_ = 0;
    std::mutex mutex_;
};

// Returns the body of the LAST fenced block tagged `tag` (```tag ... ```),
// with surrounding newlines trimmed. Throws ParseError when absent.
std::string extract_fenced_block(const std::string& text, const std::string& tag);

// Captures "Label: value" fields. Matching is case-insensitive, tolerant of
// leading bullets/bold markers, and a value runs until the next label or end
// of input. Values are trimmed and one layer of wrapping brackets removed.
// Throws ParseError listing any missing label.
std::map<std::string, std::string> parse_labeled_fields(
    const std::string& text, const std::vector<std::string>& labels);

// Same capture rule but absent labels are simply omitted from the result.
std::map<std::string, std::string> parse_labeled_fields_lenient(
    const std::string& text, const std::vector<std::string>& labels);

}  // namespace mlzero
