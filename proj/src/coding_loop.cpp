#include "mlzero/coding_loop.hpp"

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <system_error>

#include "mlzero/strings.hpp"

namespace fs = std::filesystem;

namespace mlzero {

namespace {

const char* const kSolutionHead = R"PROMPT(
As an AutoML Agent, you will be given a folder containing data and description files. Please generate Python code using {tool_name} to train a predictor and make predictions on test data. Follow these specifications:

ONLY save files to the working directory: {output_folder}.

1. Data preprocessing:
   - Remove training data samples without valid labels (unless told not to do so).
   - Remove the unneccesary index column (if applicable)

2. Model training:
   - Use {tool_name} with appropriate parameters for the task
   - If a model is trained, save it in a folder with random timestamp within {output_folder}

3. Prediction:
   - Make predictions on the test data
   - Save the predicted results to {output_folder}, result file name should be "results", the format and extension should be same as the test data file
   - Output column names must exactly match those in the training or sample submission files without adding "predicted_" prefixes or creating any new columns.

4. Documentation:
   - Add a brief docstring at the beginning of the script explaining its purpose and usage
   - Also include additional installation steps with comments at the beginning of the script
   - Include comments explaining any complex operations or design decisions

5. Others:
   - To avoid DDP errors, wrap the code in: if __name__ == "__main__":
   - Ensure errors are propagated up and not silently caught - do not use try/except blocks unless you explicitly reraise the exception.

)PROMPT";

// dedent(f"""...""").strip() over an interpolated code block: multi-line code
// zeroes the common margin, so the surrounding template lines keep their
// indentation exactly as the interpolation would leave it.
std::string code_context_block(const std::string& heading, const std::string& tag,
                               const std::string& code) {
    std::string raw = "\n            " + heading + "\n            ```" + tag +
                      "\n            " + code + "\n            ```\n        ";
    return trim(dedent(raw));
}

std::string extract_code(const std::string& response, const std::string& tag) {
    try {
        return extract_fenced_block(response, tag);
    } catch (const ParseError&) {
        return trim(response);
    }
}

// Moves a sandbox artifact up into the run folder under its public name.
std::string move_artifact(const std::string& from, const std::string& folder,
                          const std::string& name) {
    if (from.empty()) return from;
    fs::path target = fs::path(folder) / name;
    std::error_code ec;
    fs::rename(from, target, ec);
    if (ec) {
        fs::copy_file(from, target, fs::copy_options::overwrite_existing, ec);
        if (ec) return from;
        fs::remove(from, ec);
    }
    return target.string();
}

std::string feedback_turn(const std::string& error_message) {
    return "Previous error:\n" + error_message +
           "\n\nPlease fix the Python code and provide the complete corrected script.";
}

std::vector<std::string> document_titles(const std::vector<KnowledgeDocument>& docs) {
    std::vector<std::string> titles;
    titles.reserve(docs.size());
    for (const auto& doc : docs) titles.push_back(doc.title);
    return titles;
}

}  // namespace

LoopConfig make_loop_config(const KernelConfig& cfg) {
    LoopConfig loop;
    loop.max_iterations = cfg.max_iterations;
    loop.per_execution_timeout_seconds = cfg.per_execution_timeout;
    loop.max_error_message_length = cfg.max_error_message_length;
    loop.max_stdout_length = cfg.planner.max_stdout_length;
    loop.max_stderr_length = cfg.planner.max_stderr_length;
    loop.max_user_input_length = cfg.max_user_input_length;
    loop.create_venv = cfg.create_venv;
    loop.install_packages = cfg.install_packages;
    loop.multi_turn_coder = cfg.episodic_mode == EpisodicMode::MultiTurn;
    return loop;
}

std::string cap_within(const std::string& text, size_t max_len) {
    if (text.size() <= max_len) return text;
    static const std::string marker = "\n...(truncated)\n";
    if (max_len <= marker.size()) return text.substr(0, max_len);
    size_t budget = max_len - marker.size();
    size_t head = budget / 2;
    size_t tail = budget - head;
    return text.substr(0, head) + marker + text.substr(text.size() - tail);
}

std::string format_retrieved_documents(const std::vector<KnowledgeDocument>& docs) {
    std::vector<std::string> parts;
    parts.reserve(docs.size());
    for (const auto& doc : docs) {
        parts.push_back("Tutorial: " + doc.title + "\n" + doc.condensed_body);
    }
    return join(parts, "\n\n");
}

std::string build_solution_prompt(const PerceptionContext& ctx, const std::string& output_folder,
                                  const std::string& user_input, const std::string& error_block,
                                  const std::vector<KnowledgeDocument>& retrieved_docs,
                                  const ToolSpec& tool) {
    std::string prompt = kSolutionHead;
    prompt += tool_prompt(tool);
    prompt +=
        "\n\nPlease provide the complete Python script that accomplishes these tasks, "
        "ensuring it's ready to run given the appropriate data inputs.\n\nTask Description: ";
    prompt += ctx.task_description;
    prompt += "\n\n" + ctx.data_prompt;
    prompt += "\n\n" + user_input;
    prompt += "\n\n" + error_block;
    prompt += "\n\n" + format_retrieved_documents(retrieved_docs);
    prompt += "\n";
    prompt = replace_all(std::move(prompt), "{tool_name}", tool.name);
    prompt = replace_all(std::move(prompt), "{output_folder}", output_folder);
    return prompt;
}

std::string build_shell_prompt(const std::string& python_code, const std::string& python_path,
                               const std::string& output_folder, const LoopConfig& cfg,
                               const std::string& previous_shell, const std::string& previous_code,
                               const std::string& error_message) {
    std::string error = truncate_middle(error_message, static_cast<size_t>(cfg.max_error_message_length));

    std::vector<std::string> instructions;
    if (cfg.create_venv) {
        instructions.push_back("Create and configure a conda environment in " + output_folder + ":");
        instructions.push_back("- Python version: 3.11");
        instructions.push_back("- Activate the environment");
        instructions.push_back("- Install required packages");
    } else if (cfg.install_packages) {
        instructions.push_back(
            "The environment may not be fully configured. Install any packages required in the "
            "python code.");
    } else {
        instructions.push_back(
            "The environment is already configured. Do not install or update any package.");
    }
    instructions.push_back("Execute the Python script: " + python_path);

    std::vector<std::string> numbered;
    numbered.reserve(instructions.size());
    for (size_t i = 0; i < instructions.size(); ++i) {
        numbered.push_back(std::to_string(i + 1) + ". " + instructions[i]);
    }

    std::vector<std::string> parts;
    parts.push_back("Generate a minimal bash script that will:");
    parts.push_back(join(numbered, "\n"));

    if (!python_code.empty()) {
        parts.push_back(code_context_block("Current Python code:", "python", python_code));
    }
    if (!error.empty()) {
        parts.push_back("Previous error:\n" + error);
    }
    if (!previous_shell.empty() && !error.empty()) {
        parts.push_back(code_context_block("Previous failed bash script:", "bash", previous_shell));
    }
    if (!previous_code.empty() && !error.empty()) {
        parts.push_back(code_context_block("Previous Python code:", "python", previous_code));
    }

    parts.push_back(
        "Notes:\n- Generate a minimal, executable bash script\n- Focus on essential commands "
        "only\n- Handle common environment and package only if there were errors");

    return join(parts, "\n\n");
}

std::string build_judge_prompt(const std::string& task_prompt, const std::string& data_prompt,
                               const std::string& python_code, const std::string& stdout_text,
                               const std::string& stderr_text) {
    const std::string out = stdout_text.empty() ? "No standard output" : stdout_text;
    const std::string err = stderr_text.empty() ? "No standard error" : stderr_text;

    std::string prompt =
        "You are an expert code evaluator. Analyze the execution results of the following "
        "Python code and determine if the execution was successful or if issues need to be "
        "fixed.\n\n";
    prompt += task_prompt + data_prompt;
    prompt += "\n\n## Python Code\n```python\n" + python_code + "\n```\n\n";
    prompt += "## Execution Results\n### Standard Output (stdout)\n```\n" + out + "\n```\n\n";
    prompt += "### Standard Error (stderr)\n```\n" + err + "\n```\n\n";
    prompt +=
        "Evaluate the execution results and decide on one of the following actions:\n"
        "1. FINISH - If the execution was completely successful and met all requirements.\n"
        "2. FIX - If there were errors, issues, or performance problems that need to be "
        "addressed.\n\n"
        "Provide your decision in the following format:\n"
        "DECISION: [FINISH or FIX]\n"
        "ANALYSIS: [Brief analysis of errors if any, or \"None\" if no errors]\n\n"
        "The error analysis should be brief but informative enough for another agent to "
        "understand what needs to be fixed.\n\n"
        "Even if the code executed without throwing errors, it might still have issues with "
        "logic or not meet all requirements.";
    return prompt;
}

Decision judge_execution(const std::string& task_prompt, const std::string& data_prompt,
                         const std::string& python_code, const std::string& stdout_text,
                         const std::string& stderr_text, LlmBackend& backend) {
    LlmRequest request;
    request.role_name = "planner";
    request.turns = {{"user", build_judge_prompt(task_prompt, data_prompt, python_code,
                                                 stdout_text, stderr_text)}};

    for (int attempt = 0; attempt < 2; ++attempt) {
        const std::string text = backend.complete(request).text;
        auto fields = parse_labeled_fields_lenient(text, {"DECISION", "ANALYSIS"});
        auto decision_it = fields.find("DECISION");
        if (decision_it == fields.end()) continue;
        const std::string verdict = to_lower(decision_it->second);

        Decision decision;
        if (contains(verdict, "finish")) {
            decision.verdict = Verdict::Finish;
        } else if (contains(verdict, "fix")) {
            decision.verdict = Verdict::Fix;
        } else {
            continue;
        }
        auto analysis_it = fields.find("ANALYSIS");
        if (analysis_it != fields.end() && !analysis_it->second.empty()) {
            decision.analysis = analysis_it->second;
        } else {
            decision.analysis = "None";
        }
        return decision;
    }
    return Decision{Verdict::Fix, "unparseable judgment"};
}

std::optional<std::string> find_results_file(const std::string& output_folder) {
    std::vector<std::string> hits;
    std::error_code ec;
    for (fs::directory_iterator it(output_folder, ec), end; !ec && it != end; it.increment(ec)) {
        if (!it->is_regular_file(ec)) continue;
        if (it->path().stem().string() == "results") hits.push_back(it->path().string());
    }
    if (hits.empty()) return std::nullopt;
    std::sort(hits.begin(), hits.end());
    return hits.front();
}

RunOutcome run_iterative_loop(const PerceptionContext& ctx,
                              const std::vector<KnowledgeDocument>& kb,
                              const std::vector<ToolSpec>& registry, const KernelConfig& cfg,
                              LlmBackend& backend, Sandbox& sandbox,
                              const std::string& output_folder, const RunOptions& options) {
    const LoopConfig loop = make_loop_config(cfg);

    sandbox.options().timeout_seconds = loop.per_execution_timeout_seconds;
    sandbox.options().max_stdout_length = static_cast<size_t>(loop.max_stdout_length);
    sandbox.options().max_stderr_length = static_cast<size_t>(loop.max_stderr_length);
    sandbox.options().stream_output = cfg.stream_output;

    const ToolSpec tool = !ctx.selected_tool.name.empty() || registry.empty()
                              ? ctx.selected_tool
                              : resolve_tool(registry, ctx.selected_tool.name);
    const std::string user_input =
        cap_within(options.user_input, static_cast<size_t>(loop.max_user_input_length));
    const size_t error_cap = static_cast<size_t>(loop.max_error_message_length);

    RunOutcome outcome;
    outcome.episodic_store = EpisodicStore((fs::path(output_folder) / "episodic.jsonl").string());

    std::string error_block;    // R_t as injected into prompts
    std::string raw_error;      // untruncated error text from the last failure
    std::string previous_code;
    std::string previous_shell;
    std::vector<ChatTurn> coder_turns;

    const auto started = std::chrono::steady_clock::now();

    for (int t = 0; t < loop.max_iterations; ++t) {
        if (options.wall_limit_seconds) {
            const double elapsed =
                std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
            if (elapsed >= *options.wall_limit_seconds) break;
        }

        std::string iteration_user = user_input;
        if (options.iteration_input) {
            const std::string extra =
                cap_within(options.iteration_input(t), static_cast<size_t>(loop.max_user_input_length));
            if (!extra.empty()) iteration_user = extra;
        }

        RetrievalQuery query;
        query.task_prompt = ctx.task_description;
        query.data_prompt = ctx.data_prompt;
        query.user_prompt = iteration_user;
        query.error_prompt = error_block;
        query.max_num_tutorials = cfg.max_num_tutorials;

        std::vector<KnowledgeDocument> docs;
        if (cfg.semantic_memory_enabled) {
            docs = retrieve_documents(query, kb, backend, cfg.retrieval_indexing);
        }
        const std::string docs_text = format_retrieved_documents(docs);

        // Solution code.
        LlmRequest coder_request;
        coder_request.role_name = "coder";
        coder_request.temperature = cfg.coder.temperature;
        coder_request.max_tokens = cfg.coder.max_tokens;
        if (loop.multi_turn_coder) {
            if (coder_turns.empty()) {
                coder_turns.push_back(
                    {"user", build_solution_prompt(ctx, output_folder, iteration_user, "", docs, tool)});
            } else {
                coder_turns.push_back({"user", feedback_turn(truncate_middle(raw_error, error_cap))});
            }
            coder_request.turns = coder_turns;
            coder_request.multi_turn = true;
        } else {
            coder_request.turns = {{"user", build_solution_prompt(ctx, output_folder, iteration_user,
                                                                  error_block, docs, tool)}};
        }
        const std::string coder_text = backend.complete(coder_request).text;
        if (loop.multi_turn_coder) coder_turns.push_back({"assistant", coder_text});
        const std::string python_code = extract_code(coder_text, "python");

        const std::string code_path =
            (fs::path(output_folder) / ("generated_code_" + std::to_string(t) + ".py")).string();
        {
            std::ofstream out(code_path, std::ios::binary | std::ios::trunc);
            if (!out) throw std::runtime_error("cannot write " + code_path);
            out << python_code;
        }

        // Launcher script.
        LlmRequest shell_request;
        shell_request.role_name = "coder";
        shell_request.temperature = cfg.coder.temperature;
        shell_request.max_tokens = cfg.coder.max_tokens;
        shell_request.turns = {{"user", build_shell_prompt(python_code, code_path, output_folder,
                                                           loop, previous_shell, previous_code,
                                                           raw_error)}};
        const std::string shell_script = extract_code(backend.complete(shell_request).text, "bash");

        ExecutionResult result =
            sandbox.execute_shell_script(shell_script, "run_" + std::to_string(t));

        const std::string script_path =
            move_artifact(result.script_path, output_folder, "run_" + std::to_string(t) + ".sh");
        const std::string stdout_path =
            move_artifact(result.stdout_path, output_folder, "stdout_" + std::to_string(t) + ".log");
        const std::string stderr_path =
            move_artifact(result.stderr_path, output_folder, "stderr_" + std::to_string(t) + ".log");

        // The judge only sees executions that returned zero; a nonzero code is
        // a Fix without consultation.
        std::optional<Decision> decision;
        std::optional<std::string> results_path;
        if (result.return_code == 0) {
            decision = judge_execution(ctx.task_description, ctx.data_prompt, python_code,
                                       result.stdout_text, result.stderr_text, backend);
            if (decision->verdict == Verdict::Finish) {
                results_path = find_results_file(output_folder);
                if (!results_path) decision = Decision{Verdict::Fix, "no results file produced"};
            }
        }
        const bool success =
            result.return_code == 0 && decision->verdict == Verdict::Finish && results_path;
        const std::string executer_analysis = decision ? decision->analysis : "";

        IterationRecord record;
        record.t = t;
        record.solution_code = python_code;
        record.shell_script = shell_script;
        record.stdout_text = result.stdout_text;
        record.stderr_text = result.stderr_text;
        record.return_code = result.return_code;
        record.wall_seconds = result.wall_seconds;
        record.retrieved_titles = document_titles(docs);
        record.executer_analysis = executer_analysis;
        record.code_path = code_path;
        record.script_path = script_path;
        record.stdout_path = stdout_path;
        record.stderr_path = stderr_path;

        if (success) {
            outcome.episodic_store.record_iteration(record);
            outcome.iterations_used = t + 1;
            outcome.success = true;
            outcome.results_path = results_path;
            return outcome;
        }

        // Failure: distill the error for the next round.
        raw_error = !result.stderr_text.empty() ? result.stderr_text
                    : !executer_analysis.empty()
                        ? executer_analysis
                        : "process exited with code " + std::to_string(result.return_code);

        std::optional<ErrorContext> error_context;
        if (cfg.episodic_mode == EpisodicMode::Default ||
            cfg.episodic_mode == EpisodicMode::WithoutFix) {
            error_context = analyze_error(ctx.task_description, ctx.data_prompt, iteration_user,
                                          python_code, shell_script, docs_text,
                                          truncate_middle(raw_error, error_cap), backend,
                                          cfg.episodic_mode);
        }
        record.error_context = error_context;

        outcome.episodic_store.record_iteration(record);
        outcome.iterations_used = t + 1;

        switch (cfg.episodic_mode) {
            case EpisodicMode::Default:
            case EpisodicMode::WithoutFix:
                error_block = outcome.episodic_store.error_context_for(static_cast<size_t>(t) + 1);
                break;
            case EpisodicMode::WithoutBoth: {
                std::string block = "Previous error:\n" + truncate_middle(raw_error, error_cap);
                if (!executer_analysis.empty()) {
                    block += "\n\nExecution analysis:\n" + executer_analysis;
                }
                error_block = block;
                break;
            }
            case EpisodicMode::MultiTurn:
                error_block = truncate_middle(raw_error, error_cap);
                break;
        }
        previous_code = python_code;
        previous_shell = shell_script;
    }

    return outcome;
}

}  // namespace mlzero
