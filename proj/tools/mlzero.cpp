#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "mlzero/coding_loop.hpp"
#include "mlzero/config.hpp"
#include "mlzero/evaluation.hpp"
#include "mlzero/llm.hpp"
#include "mlzero/perception.hpp"
#include "mlzero/registry.hpp"
#include "mlzero/sandbox.hpp"
#include "mlzero/semantic_memory.hpp"

namespace fs = std::filesystem;
using namespace mlzero;

namespace {

constexpr int kExitSuccess = 0;
constexpr int kExitGeneric = 1;
constexpr int kExitLoopExhausted = 2;
constexpr int kExitConfigError = 3;
constexpr int kExitEvaluationFormat = 4;

KernelConfig load_effective_config(const std::string& config_path) {
    std::string path = config_path;
    if (path.empty()) {
        if (const char* env = std::getenv("MLZERO_CONFIG")) path = env;
    }
    if (path.empty()) return default_config();
    return load_config(path);
}

std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return buffer.str();
}

// Scripted responses for offline runs: a JSON array of response strings.
std::unique_ptr<LlmBackend> make_backend(const KernelConfig& cfg,
                                         const std::string& scripted_path) {
    if (!scripted_path.empty()) {
        nlohmann::json doc = nlohmann::json::parse(read_text_file(scripted_path));
        if (!doc.is_array()) {
            throw std::runtime_error("scripted response file must hold a JSON array of strings");
        }
        std::vector<std::string> responses;
        for (const auto& entry : doc) responses.push_back(entry.get<std::string>());
        return std::make_unique<ScriptedBackend>(std::move(responses));
    }
    if (cfg.llm.proxy_url.empty()) {
        throw ConfigError(
            "no LLM endpoint configured: set llm.proxy_url in the config or pass --scripted");
    }
    return std::make_unique<HttpBackend>(cfg.llm.proxy_url, cfg.llm.model);
}

Sandbox make_sandbox(const KernelConfig& cfg, const std::string& output_folder) {
    Workspace workspace = prepare_workspace(output_folder);
    SandboxOptions options;
    options.timeout_seconds = cfg.per_execution_timeout;
    options.max_stdout_length = static_cast<size_t>(cfg.planner.max_stdout_length);
    options.max_stderr_length = static_cast<size_t>(cfg.planner.max_stderr_length);
    options.stream_output = cfg.stream_output;
    return Sandbox(std::move(workspace), options);
}

void print_perception(const PerceptionContext& ctx) {
    std::cout << "== Data prompt ==\n" << ctx.data_prompt << "\n\n";
    std::cout << "== Description files ==\n";
    if (ctx.description_files.empty()) {
        std::cout << "(none)\n";
    } else {
        for (const auto& file : ctx.description_files) std::cout << file << "\n";
    }
    std::cout << "\n== Task description ==\n" << ctx.task_description << "\n\n";
    std::cout << "== Selected library ==\n"
              << ctx.selected_tool.name << " (version " << ctx.selected_tool.version << ")\n";
    if (!ctx.selection_explanation.empty()) {
        std::cout << ctx.selection_explanation << "\n";
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"mlzero: autonomous ML engineering kernel"};
    app.require_subcommand(1);

    std::string config_path;
    app.add_option("--config", config_path, "Config file (default: $MLZERO_CONFIG or built-ins)");

    // run
    auto* run_cmd = app.add_subcommand("run", "Perceive a data folder and iterate to a solution");
    std::string run_input, run_output, run_registry = "registry/tools.json";
    std::string run_kb, run_user_input_file, run_scripted;
    int run_max_iter = 0;
    double run_wall_limit = 0.0;
    bool run_interactive = false;
    run_cmd->add_option("--input", run_input, "Data folder")->required();
    run_cmd->add_option("--output", run_output, "Output folder")->required();
    run_cmd->add_option("--registry", run_registry, "Tool registry JSON");
    run_cmd->add_option("--kb", run_kb, "Knowledge base directory");
    run_cmd->add_option("--user-input", run_user_input_file, "File with extra user instructions");
    run_cmd->add_option("--max-iter", run_max_iter, "Override max refinement iterations");
    run_cmd->add_option("--wall-limit", run_wall_limit, "Overall wall-clock budget in seconds");
    run_cmd->add_option("--scripted", run_scripted, "JSON array of canned LLM responses");
    run_cmd->add_flag("--interactive", run_interactive,
                      "Prompt for steering input before each iteration");

    // perceive
    auto* perceive_cmd = app.add_subcommand("perceive", "Run perception only and print the context");
    std::string perceive_input, perceive_output, perceive_registry = "registry/tools.json";
    std::string perceive_scripted;
    perceive_cmd->add_option("--input", perceive_input, "Data folder")->required();
    perceive_cmd->add_option("--output", perceive_output, "Working folder for file readers")
        ->required();
    perceive_cmd->add_option("--registry", perceive_registry, "Tool registry JSON");
    perceive_cmd->add_option("--scripted", perceive_scripted, "JSON array of canned LLM responses");

    // build-kb
    auto* kb_cmd = app.add_subcommand("build-kb", "Condense tutorials into the knowledge base");
    std::string kb_tool, kb_dir, kb_scripted;
    std::vector<std::string> kb_inputs;
    kb_cmd->add_option("--tool", kb_tool, "Library name the tutorials document")->required();
    kb_cmd->add_option("--kb", kb_dir, "Knowledge base directory")->required();
    kb_cmd->add_option("--scripted", kb_scripted, "JSON array of canned LLM responses");
    kb_cmd->add_option("tutorials", kb_inputs, "Tutorial markdown files")->required();

    // evaluate
    auto* eval_cmd = app.add_subcommand("evaluate", "Aggregate benchmark fixtures into a report");
    std::string eval_fixtures, eval_datasets, eval_report;
    std::string eval_reference = "mlzero_def";
    std::string eval_invalid_rank = "tie";
    eval_cmd->add_option("--fixtures", eval_fixtures, "Run records CSV")->required();
    eval_cmd->add_option("--datasets", eval_datasets,
                         "Dataset direction CSV (default: benchmark_datasets.csv beside fixtures)");
    eval_cmd->add_option("--report", eval_report, "Write the report here instead of stdout");
    eval_cmd->add_option("--reference", eval_reference, "Reference agent for relative time");
    eval_cmd->add_option("--invalid-rank", eval_invalid_rank,
                         "Rank policy for invalid results: tie | worst");

    // score
    auto* score_cmd = app.add_subcommand("score", "Score a predictions file against ground truth");
    std::string score_results, score_truth, score_meta;
    score_cmd->add_option("--results", score_results, "Predictions file")->required();
    score_cmd->add_option("--truth", score_truth, "Ground truth file")->required();
    score_cmd->add_option("--meta", score_meta, "Dataset metadata JSON")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (*run_cmd) {
            KernelConfig cfg = load_effective_config(config_path);
            if (run_max_iter > 0) cfg.max_iterations = run_max_iter;

            auto registry = load_tool_registry(run_registry);
            auto backend_impl = make_backend(cfg, run_scripted);
            LlmClient client(*backend_impl);

            Sandbox sandbox = make_sandbox(cfg, run_output);
            PerceptionAgent perception(cfg, registry, client);
            PerceptionContext ctx = perception.perceive(run_input, sandbox);
            std::cout << "Selected library: " << ctx.selected_tool.name << "\n";

            std::vector<KnowledgeDocument> kb;
            if (!run_kb.empty() && cfg.semantic_memory_enabled) {
                kb = load_knowledge_base(run_kb, ctx.selected_tool.name);
                std::cout << "Knowledge base: " << kb.size() << " documents\n";
            }

            RunOptions options;
            if (!run_user_input_file.empty()) {
                options.user_input = read_text_file(run_user_input_file);
            }
            if (run_wall_limit > 0.0) options.wall_limit_seconds = run_wall_limit;
            if (run_interactive) {
                options.iteration_input = [](int t) {
                    std::cout << "[iteration " << t << "] extra instructions (empty to skip): "
                              << std::flush;
                    std::string line;
                    std::getline(std::cin, line);
                    return line;
                };
            }

            RunOutcome outcome = run_iterative_loop(ctx, kb, registry, cfg, client, sandbox,
                                                    sandbox.workspace().root, options);
            std::cout << "Iterations used: " << outcome.iterations_used << "\n";
            if (outcome.success) {
                std::cout << "Success: results at " << *outcome.results_path << "\n";
                return kExitSuccess;
            }
            std::cout << "No successful solution within the iteration budget\n";
            return kExitLoopExhausted;
        }

        if (*perceive_cmd) {
            KernelConfig cfg = load_effective_config(config_path);
            auto registry = load_tool_registry(perceive_registry);
            auto backend_impl = make_backend(cfg, perceive_scripted);
            LlmClient client(*backend_impl);

            Sandbox sandbox = make_sandbox(cfg, perceive_output);
            PerceptionAgent perception(cfg, registry, client);
            print_perception(perception.perceive(perceive_input, sandbox));
            return kExitSuccess;
        }

        if (*kb_cmd) {
            KernelConfig cfg = load_effective_config(config_path);
            auto backend_impl = make_backend(cfg, kb_scripted);
            LlmClient client(*backend_impl);

            for (const auto& input : kb_inputs) {
                const std::string raw = read_text_file(input);
                const std::string title = extract_title(raw, fs::path(input).stem().string());
                KnowledgeDocument doc = build_knowledge_document(raw, title, kb_tool, client, cfg);
                doc.source_path = input;
                std::cout << save_knowledge_document(kb_dir, doc) << "\n";
            }
            return kExitSuccess;
        }

        if (*eval_cmd) {
            auto records = load_run_records(eval_fixtures);
            std::string datasets_path = eval_datasets;
            if (datasets_path.empty()) {
                datasets_path =
                    (fs::path(eval_fixtures).parent_path() / "benchmark_datasets.csv").string();
            }
            auto datasets = load_benchmark_datasets(datasets_path);
            InvalidRankPolicy policy = InvalidRankPolicy::TieAveragedBottom;
            if (eval_invalid_rank == "worst") {
                policy = InvalidRankPolicy::WorstPosition;
            } else if (eval_invalid_rank != "tie") {
                throw EvaluationError("unknown --invalid-rank value: " + eval_invalid_rank);
            }
            const std::string report =
                render_benchmark_report(evaluate_benchmark(records, datasets, eval_reference, policy));
            if (eval_report.empty()) {
                std::cout << report;
            } else {
                std::ofstream out(eval_report, std::ios::binary | std::ios::trunc);
                if (!out) throw EvaluationError("cannot write " + eval_report);
                out << report;
            }
            return kExitSuccess;
        }

        if (*score_cmd) {
            DatasetMetadata meta = load_dataset_metadata(score_meta);
            const double value = score_predictions(score_results, score_truth, meta);
            std::cout << meta.metric_name << ": " << value << "\n";
            return kExitSuccess;
        }
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfigError;
    } catch (const RegistryError& e) {
        std::cerr << "registry error: " << e.what() << "\n";
        return kExitConfigError;
    } catch (const FormatError& e) {
        std::cerr << "format failure: " << e.what() << "\n";
        return kExitEvaluationFormat;
    } catch (const UnsupportedMetricError& e) {
        std::cerr << "unsupported metric: " << e.what() << "\n";
        return kExitEvaluationFormat;
    } catch (const EvaluationError& e) {
        std::cerr << "evaluation error: " << e.what() << "\n";
        return kExitEvaluationFormat;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitGeneric;
    }
    return kExitGeneric;
}
