#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "mlzero/config.hpp"
#include "mlzero/episodic_memory.hpp"
#include "mlzero/llm.hpp"
#include "mlzero/perception.hpp"
#include "mlzero/registry.hpp"
#include "mlzero/sandbox.hpp"
#include "mlzero/semantic_memory.hpp"

namespace mlzero {

enum class Verdict { Finish, Fix };

// The judge's call on one execution. analysis is never empty; a clean run
// carries the literal "None".
struct Decision {
    Verdict verdict = Verdict::Fix;
    std::string analysis = "None";
};

// The knobs the loop and the shell-prompt builder read, projected out of the
// full config so the builders stay testable in isolation.
struct LoopConfig {
    int max_iterations = 5;
    int per_execution_timeout_seconds = 10800;
    int max_error_message_length = 2048;
    int max_stdout_length = 8192;
    int max_stderr_length = 2048;
    int max_user_input_length = 2048;
    bool create_venv = false;
    bool install_packages = false;
    bool multi_turn_coder = false;
};

LoopConfig make_loop_config(const KernelConfig& cfg);

// Middle truncation that never exceeds max_len: the marker is paid for out
// of the budget instead of being added on top (used for user input, whose
// cap is a hard bound).
std::string cap_within(const std::string& text, size_t max_len);

// "Tutorial: <title>\n<body>" sections joined by blank lines; empty for no docs.
std::string format_retrieved_documents(const std::vector<KnowledgeDocument>& docs);

std::string build_solution_prompt(const PerceptionContext& ctx, const std::string& output_folder,
                                  const std::string& user_input, const std::string& error_block,
                                  const std::vector<KnowledgeDocument>& retrieved_docs,
                                  const ToolSpec& tool);

std::string build_shell_prompt(const std::string& python_code, const std::string& python_path,
                               const std::string& output_folder, const LoopConfig& cfg,
                               const std::string& previous_shell, const std::string& previous_code,
                               const std::string& error_message);

std::string build_judge_prompt(const std::string& task_prompt, const std::string& data_prompt,
                               const std::string& python_code, const std::string& stdout_text,
                               const std::string& stderr_text);

// Sends the judge prompt and maps the DECISION label to a verdict
// (case-insensitive). A response without a recognizable verdict is retried
// once; a second failure is treated as Fix("unparseable judgment").
Decision judge_execution(const std::string& task_prompt, const std::string& data_prompt,
                         const std::string& python_code, const std::string& stdout_text,
                         const std::string& stderr_text, LlmBackend& backend);

// First regular file in output_folder (non-recursive) whose stem is
// "results", lexicographically smallest when several exist.
std::optional<std::string> find_results_file(const std::string& output_folder);

struct RunOutcome {
    bool success = false;
    int iterations_used = 0;
    std::optional<std::string> results_path;
    EpisodicStore episodic_store;
};

// Per-run inputs that arrive from the command line rather than the config.
struct RunOptions {
    std::string user_input;
    std::optional<double> wall_limit_seconds;  // overall budget across iterations
    // When set, asked before each iteration; a nonempty answer replaces
    // user_input for that round (interactive steering, off by default).
    std::function<std::string(int)> iteration_input;
};

// The refinement loop: retrieve, generate code and a launcher script, execute,
// judge, and either finish or distill the failure for the next round. Success
// requires a zero return code, a FINISH verdict, and a results file on disk.
RunOutcome run_iterative_loop(const PerceptionContext& ctx,
                              const std::vector<KnowledgeDocument>& kb,
                              const std::vector<ToolSpec>& registry, const KernelConfig& cfg,
                              LlmBackend& backend, Sandbox& sandbox,
                              const std::string& output_folder, const RunOptions& options = {});

}  // namespace mlzero
