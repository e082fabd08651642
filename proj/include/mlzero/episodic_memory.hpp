#pragma once

#include <optional>
#include <string>
#include <vector>

#include "mlzero/config.hpp"
#include "mlzero/llm.hpp"

namespace mlzero {

// R_t: what the analyzer distilled from a failed iteration.
struct ErrorContext {
    std::string error_summary;
    std::string suggested_fix;

    bool operator==(const ErrorContext&) const = default;
};

// One iteration's worth of history: code, script, logs, retrieval, analysis.
struct IterationRecord {
    int t = 0;
    std::string solution_code;
    std::string shell_script;
    std::string stdout_text;
    std::string stderr_text;
    int return_code = 0;
    double wall_seconds = 0.0;
    std::vector<std::string> retrieved_titles;
    std::optional<ErrorContext> error_context;
    std::string executer_analysis;
    // Disk locations of the raw artifacts (set when persisted).
    std::string code_path;
    std::string script_path;
    std::string stdout_path;
    std::string stderr_path;
};

std::string build_error_analysis_prompt(const std::string& task_prompt,
                                        const std::string& data_prompt,
                                        const std::string& user_prompt,
                                        const std::string& python_code,
                                        const std::string& bash_script,
                                        const std::string& retrieved_tutorials,
                                        const std::string& error_message);

// Sends the analysis template and parses ERROR SUMMARY / SUGGESTED FIX (one
// repair retry on a malformed response). In without_fix mode the fix is
// dropped from the result.
ErrorContext analyze_error(const std::string& task_prompt, const std::string& data_prompt,
                           const std::string& user_prompt, const std::string& python_code,
                           const std::string& bash_script,
                           const std::string& retrieved_tutorials,
                           const std::string& error_message, LlmBackend& backend,
                           EpisodicMode mode = EpisodicMode::Default);

// Append-only chronological store, optionally mirrored to a JSON-lines file.
class EpisodicStore {
public:
    EpisodicStore() = default;
    explicit EpisodicStore(std::string jsonl_path);

    // record.t must equal the current size; records are immutable afterwards.
    void record_iteration(const IterationRecord& record);

    const std::vector<IterationRecord>& records() const { return records_; }
    size_t size() const { return records_.size(); }
    const std::string& path() const { return path_; }

    // Renders R_{t-1} as the labeled block the coder prompt injects; empty at
    // t=0 or when iteration t-1 recorded no error context.
    std::string error_context_for(size_t t) const;

    static EpisodicStore load(const std::string& jsonl_path);

private:
    std::string path_;
    std::vector<IterationRecord> records_;
};

}  // namespace mlzero
