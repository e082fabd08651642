#pragma once

#include <optional>
#include <stdexcept>
#include <string>

namespace mlzero {

// Per-role LLM block. Roles inherit the default block, then override.
struct LlmRoleConfig {
    std::string provider = "bedrock";
    std::string model = "us.anthropic.claude-3-7-sonnet-20250219-v1:0";
    int max_tokens = 65536;
    std::string proxy_url;  // empty means null
    double temperature = 0.0;
    bool verbose = true;
    bool multi_turn = false;
    // Role-specific extras (inert for roles that do not use them).
    double top_p = 1.0;
    int max_stdout_length = 8192;
    int max_stderr_length = 2048;
    bool details = false;

    bool operator==(const LlmRoleConfig&) const = default;
};

enum class EpisodicMode { Default, WithoutFix, WithoutBoth, MultiTurn };
enum class RetrievalIndexing { BySummary, ByTitleOnly };

struct KernelConfig {
    bool stream_output = true;
    int per_execution_timeout = 10800;

    int max_chars_per_file = 1024;
    int max_num_tutorials = 5;
    int max_user_input_length = 2048;
    int max_error_message_length = 2048;
    int max_tutorial_length = 8192;
    bool create_venv = false;
    bool condense_tutorials = true;

    LlmRoleConfig llm;
    LlmRoleConfig coder;        // temperature 0.5 by default
    LlmRoleConfig planner;
    LlmRoleConfig file_reader;

    // Pipeline knobs not in the published block.
    int max_iterations = 5;
    int max_group_size = 5;
    bool install_packages = false;
    bool always_generate_readers = false;
    bool semantic_memory_enabled = true;
    EpisodicMode episodic_mode = EpisodicMode::Default;
    RetrievalIndexing retrieval_indexing = RetrievalIndexing::BySummary;

    bool operator==(const KernelConfig&) const = default;
};

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Defaults with the role overrides applied (coder temperature 0.5, ...).
KernelConfig default_config();

// Parses a config document layered over the defaults. The format mirrors the
// shipped configuration: top-level "key: value" pairs, "#" comments, role
// blocks with two-space indentation, an anchor on the default llm block and
// "<<: *anchor" merges inside role blocks. Unknown keys are rejected by name.
KernelConfig load_config(const std::string& path);
KernelConfig parse_config_text(const std::string& text);

// Emits a document that parse_config_text reads back to an equal config.
std::string serialize_config(const KernelConfig& cfg);

}  // namespace mlzero
