#include "mlzero/llm.hpp"

#include <chrono>
#include <cstdlib>
#include <thread>

#include "httplib.h"
#include "json.hpp"
#include "mlzero/strings.hpp"

namespace mlzero {

ScriptedBackend::ScriptedBackend(std::vector<std::string> responses) {
    for (auto& r : responses) queue_.push_back(std::move(r));
}

void ScriptedBackend::push(const std::string& text) { queue_.push_back(text); }

void ScriptedBackend::push_for_role(const std::string& role_name, const std::string& text) {
    role_queues_[role_name].push_back(text);
}

size_t ScriptedBackend::remaining() const {
    size_t n = queue_.size();
    for (const auto& [role, q] : role_queues_) n += q.size();
    return n;
}

LlmResponse ScriptedBackend::complete(const LlmRequest& request) {
    transcript_.push_back(request);
    std::deque<std::string>* source = &queue_;
    auto it = role_queues_.find(request.role_name);
    if (it != role_queues_.end() && !it->second.empty()) source = &it->second;
    if (source->empty()) {
        throw std::runtime_error("scripted backend exhausted (role: " +
                                 (request.role_name.empty() ? "<none>" : request.role_name) + ")");
    }
    LlmResponse response;
    response.text = source->front();
    source->pop_front();
    // Rough token proxy so pipelines exercise the accounting paths.
    long prompt_chars = 0;
    for (const auto& t : request.turns) prompt_chars += static_cast<long>(t.text.size());
    response.input_token_count = prompt_chars / 4;
    response.output_token_count = static_cast<long>(response.text.size()) / 4;
    return response;
}

HttpBackend::HttpBackend(std::string base_url, std::string model, std::string path)
    : base_url_(std::move(base_url)), model_(std::move(model)), path_(std::move(path)) {}

LlmResponse HttpBackend::complete(const LlmRequest& request) {
    nlohmann::json body;
    body["model"] = model_;
    nlohmann::json messages = nlohmann::json::array();
    if (!request.system_text.empty()) {
        messages.push_back({{"role", "system"}, {"content", request.system_text}});
    }
    for (const auto& turn : request.turns) {
        messages.push_back({{"role", turn.speaker}, {"content", turn.text}});
    }
    body["messages"] = messages;
    body["temperature"] = request.temperature;
    body["max_tokens"] = request.max_tokens;

    httplib::Client client(base_url_);
    client.set_read_timeout(600, 0);
    httplib::Headers headers;
    if (const char* key = std::getenv("MLZERO_API_KEY")) {
        headers.emplace("Authorization", std::string("Bearer ") + key);
    }
    auto result = client.Post(path_, headers, body.dump(), "application/json");
    if (!result) {
        throw TransportError("http request to " + base_url_ + path_ + " failed: " +
                             httplib::to_string(result.error()));
    }
    if (result->status >= 500) {
        throw TransportError("server error " + std::to_string(result->status));
    }
    if (result->status != 200) {
        throw std::runtime_error("chat completion rejected with status " +
                                 std::to_string(result->status) + ": " + result->body);
    }
    nlohmann::json parsed;
    try {
        parsed = nlohmann::json::parse(result->body);
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error(std::string("malformed completion payload: ") + e.what());
    }
    LlmResponse response;
    if (parsed.contains("choices") && !parsed["choices"].empty()) {
        response.text = parsed["choices"][0].value("message", nlohmann::json::object())
                            .value("content", "");
    } else {
        throw std::runtime_error("completion payload has no choices");
    }
    if (parsed.contains("usage")) {
        response.input_token_count = parsed["usage"].value("prompt_tokens", 0);
        response.output_token_count = parsed["usage"].value("completion_tokens", 0);
    }
    return response;
}

LlmClient::LlmClient(LlmBackend& backend, int max_attempts, int initial_backoff_ms)
    : backend_(backend), max_attempts_(max_attempts), initial_backoff_ms_(initial_backoff_ms) {}

LlmResponse LlmClient::complete(const LlmRequest& request) {
    if (request.temperature < 0.0 || request.temperature > 1.0) {
        throw std::invalid_argument("temperature must be within [0,1]");
    }
    if (request.max_tokens <= 0) {
        throw std::invalid_argument("max_tokens must be positive");
    }
    if (!request.multi_turn) {
        size_t user_turns = 0;
        for (const auto& t : request.turns) {
            if (t.speaker == "user") ++user_turns;
        }
        if (user_turns != 1) {
            throw std::invalid_argument("single-turn request must contain exactly one user message");
        }
    }
    int backoff_ms = initial_backoff_ms_;
    for (int attempt = 1;; ++attempt) {
        try {
            LlmResponse response = backend_.complete(request);
            std::lock_guard<std::mutex> lock(mutex_);
            total_input_ += response.input_token_count;
            total_output_ += response.output_token_count;
            return response;
        } catch (const TransportError&) {
            if (attempt >= max_attempts_) throw;
            std::this_thread::sleep_for(std::chrono::milliseconds(backoff_ms));
            backoff_ms *= 2;
        }
    }
}

std::string extract_fenced_block(const std::string& text, const std::string& tag) {
    std::vector<std::string> lines = split_lines(text);
    std::string best;
    bool found = false;
    size_t i = 0;
    while (i < lines.size()) {
        std::string stripped = trim(lines[i]);
        if (starts_with(stripped, "```") && stripped.size() > 3) {
            std::string info = to_lower(trim(stripped.substr(3)));
            if (info == to_lower(tag)) {
                std::vector<std::string> body;
                size_t j = i + 1;
                for (; j < lines.size(); ++j) {
                    if (trim(lines[j]) == "```") break;
                    body.push_back(lines[j]);
                }
                if (j < lines.size()) {
                    best = join(body, "\n");
                    found = true;
                    i = j + 1;
                    continue;
                }
            }
        }
        ++i;
    }
    if (!found) {
        throw ParseError("no fenced block tagged \"" + tag + "\" in response");
    }
    while (!best.empty() && best.front() == '\n') best.erase(best.begin());
    while (!best.empty() && best.back() == '\n') best.pop_back();
    return best;
}

namespace {

// Strips markdown noise a model may put before a label: list bullets,
// heading hashes, bold/emphasis markers.
std::string strip_line_decoration(const std::string& line, size_t* offset) {
    size_t pos = 0;
    while (pos < line.size() && (line[pos] == ' ' || line[pos] == '\t')) ++pos;
    while (pos < line.size() && (line[pos] == '#')) ++pos;
    if (pos < line.size() && (line[pos] == '-' || line[pos] == '*' || line[pos] == '+') &&
        pos + 1 < line.size() && line[pos + 1] == ' ') {
        pos += 2;
    }
    while (pos < line.size() && (line[pos] == '*' || line[pos] == '_')) ++pos;
    while (pos < line.size() && line[pos] == ' ') ++pos;
    *offset = pos;
    return line.substr(pos);
}

std::string clean_value(std::string value) {
    value = trim(value);
    // "**" left over from a bold label ("**DECISION:** ...").
    while (starts_with(value, "*") || starts_with(value, "_")) value.erase(value.begin());
    value = trim(value);
    if (value.size() >= 2 && value.front() == '[' && value.back() == ']') {
        value = trim(value.substr(1, value.size() - 2));
    }
    return value;
}

// A label line is "<label>:" with optional bold markers and spaces before
// the colon. Returns the position right after the colon.
bool label_match(const std::string& bare, const std::string& label, size_t* value_at) {
    if (!istarts_with(bare, label)) return false;
    size_t pos = label.size();
    while (pos < bare.size() &&
           (bare[pos] == '*' || bare[pos] == '_' || bare[pos] == ' ' || bare[pos] == '\t')) {
        ++pos;
    }
    if (pos >= bare.size() || bare[pos] != ':') return false;
    *value_at = pos + 1;
    return true;
}

struct LabelHit {
    size_t line_index;
    std::string first_line_value;
    std::string label;
};

std::map<std::string, std::string> parse_fields(const std::string& text,
                                                const std::vector<std::string>& labels,
                                                bool require_all) {
    std::vector<std::string> lines = split_lines(text);
    std::vector<LabelHit> hits;
    for (size_t i = 0; i < lines.size(); ++i) {
        size_t deco = 0;
        std::string bare = strip_line_decoration(lines[i], &deco);
        for (const auto& label : labels) {
            size_t value_at = 0;
            if (label_match(bare, label, &value_at)) {
                hits.push_back({i, bare.substr(value_at), label});
                break;
            }
        }
    }
    std::map<std::string, std::string> fields;
    for (size_t h = 0; h < hits.size(); ++h) {
        size_t end_line = (h + 1 < hits.size()) ? hits[h + 1].line_index : lines.size();
        std::string value = hits[h].first_line_value;
        for (size_t i = hits[h].line_index + 1; i < end_line; ++i) {
            value += "\n" + lines[i];
        }
        // First occurrence of a label wins.
        if (!fields.count(hits[h].label)) fields[hits[h].label] = clean_value(value);
    }
    if (require_all) {
        std::vector<std::string> missing;
        for (const auto& label : labels) {
            if (!fields.count(label)) missing.push_back(label);
        }
        if (!missing.empty()) {
            throw ParseError("response is missing required label(s): " + join(missing, ", "));
        }
    }
    return fields;
}

}  // namespace

std::map<std::string, std::string> parse_labeled_fields(
    const std::string& text, const std::vector<std::string>& labels) {
    return parse_fields(text, labels, true);
}

std::map<std::string, std::string> parse_labeled_fields_lenient(
    const std::string& text, const std::vector<std::string>& labels) {
    return parse_fields(text, labels, false);
}

}  // namespace mlzero
