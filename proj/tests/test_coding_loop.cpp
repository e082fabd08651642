#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "mlzero/coding_loop.hpp"
#include "mlzero/strings.hpp"

using namespace mlzero;
namespace fs = std::filesystem;

namespace {

std::string make_temp_dir() {
    std::string tmpl = (fs::temp_directory_path() / "mlzero_loop_XXXXXX").string();
    char* made = mkdtemp(tmpl.data());
    REQUIRE(made != nullptr);
    return tmpl;
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    return std::string(std::istreambuf_iterator<char>(in), {});
}

size_t count_lines(const std::string& path) {
    std::ifstream in(path);
    REQUIRE(in.good());
    size_t n = 0;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty()) ++n;
    }
    return n;
}

ToolSpec test_tool() {
    ToolSpec tool;
    tool.name = "AutoGluon.Tabular";
    tool.version = "1.2.0";
    tool.description = "tabular learner";
    tool.prompt_template = {"Use the medium quality presets."};
    return tool;
}

PerceptionContext test_context() {
    PerceptionContext ctx;
    ctx.task_description = "Train a classifier on the tabular data.";
    ctx.data_prompt = "File: train.csv\ncolumns a,b,label\n----------";
    ctx.selected_tool = test_tool();
    return ctx;
}

std::vector<KnowledgeDocument> test_kb() {
    KnowledgeDocument doc;
    doc.tool_name = "autogluon.tabular";
    doc.title = "Quick Start";
    doc.summary = "Summary: fitting tabular predictors";
    doc.condensed_body = "Call TabularPredictor.fit on the training frame.";
    return {doc};
}

std::string fenced(const std::string& tag, const std::string& body) {
    return "```" + tag + "\n" + body + "\n```";
}

bool has(const std::string& text, const std::string& needle) {
    return text.find(needle) != std::string::npos;
}

// A loop fixture with a scripted backend and a real sandbox rooted in a
// fresh temp directory.
struct LoopFixture {
    std::string out = make_temp_dir();
    PerceptionContext ctx = test_context();
    std::vector<KnowledgeDocument> kb = test_kb();
    std::vector<ToolSpec> registry = {test_tool()};
    KernelConfig cfg = default_config();
    ScriptedBackend backend;
    Workspace workspace;
    Sandbox sandbox;

    LoopFixture()
        : workspace(prepare_workspace(out)), sandbox(workspace, SandboxOptions{}) {
        cfg.per_execution_timeout = 20;
        cfg.stream_output = false;
    }

    RunOutcome run(const RunOptions& options = {}) {
        return run_iterative_loop(ctx, kb, registry, cfg, backend, sandbox, out, options);
    }
};

const char* const kPassingScript = "printf 'id,label\\n1,x\\n' > results.csv\necho trained\n";

}  // namespace

TEST_CASE("cap_within keeps short text and never exceeds the cap") {
    CHECK(cap_within("hello", 2048) == "hello");
    std::string exact(64, 'a');
    CHECK(cap_within(exact, 64) == exact);

    std::string big(5000, 'u');
    std::string capped = cap_within(big, 2048);
    CHECK(capped.size() == 2048);
    CHECK(capped == std::string(1016, 'u') + "\n...(truncated)\n" + std::string(1016, 'u'));

    // Caps at or below the marker length degrade to a plain prefix.
    CHECK(cap_within("abcdefghijklmnopqrstuvwxyz", 10) == "abcdefghij");
    CHECK(cap_within("abcdefghijklmnopqrstuvwxyz", 16) == "abcdefghijklmnop");

    for (size_t cap : {17u, 20u, 33u, 100u, 2047u, 2048u}) {
        std::string text(3 * cap, 'z');
        std::string out = cap_within(text, cap);
        CHECK(out.size() <= cap);
        CHECK(has(out, "...(truncated)"));
    }
}

TEST_CASE("retrieved documents render as blank-line separated tutorial sections") {
    CHECK(format_retrieved_documents({}) == "");

    KnowledgeDocument a;
    a.title = "First";
    a.condensed_body = "alpha body";
    KnowledgeDocument b;
    b.title = "Second";
    b.condensed_body = "beta body";
    CHECK(format_retrieved_documents({a, b}) ==
          "Tutorial: First\nalpha body\n\nTutorial: Second\nbeta body");
}

TEST_CASE("the solution prompt substitutes the tool and folder everywhere") {
    PerceptionContext ctx = test_context();
    std::string prompt = build_solution_prompt(ctx, "/out/run1", "Use accuracy.",
                                               "ERROR SUMMARY: it broke", test_kb(), test_tool());

    CHECK(has(prompt, "As an AutoML Agent"));
    CHECK(has(prompt, "ONLY save files to the working directory: /out/run1."));
    CHECK(has(prompt, "Python code using AutoGluon.Tabular to train a predictor"));
    CHECK(has(prompt, "Use AutoGluon.Tabular with appropriate parameters"));
    CHECK(has(prompt, "random timestamp within /out/run1"));
    CHECK(has(prompt, "Use the medium quality presets."));
    CHECK(has(prompt, "Task Description: Train a classifier on the tabular data."));
    CHECK(has(prompt, "File: train.csv"));
    CHECK(has(prompt, "Use accuracy."));
    CHECK(has(prompt, "ERROR SUMMARY: it broke"));
    CHECK(has(prompt, "Tutorial: Quick Start\nCall TabularPredictor.fit"));
    CHECK(has(prompt, "result file name should be \"results\""));
    CHECK(has(prompt, "without adding \"predicted_\" prefixes"));
    CHECK(!has(prompt, "{tool_name}"));
    CHECK(!has(prompt, "{output_folder}"));
}

TEST_CASE("the shell prompt switches environment instructions by config") {
    LoopConfig cfg;

    SUBCASE("already configured environment") {
        std::string prompt = build_shell_prompt("print(1)", "/out/code.py", "/out", cfg, "", "", "");
        CHECK(has(prompt, "Generate a minimal bash script that will:"));
        CHECK(has(prompt, "1. The environment is already configured. Do not install or update "
                          "any package."));
        CHECK(has(prompt, "2. Execute the Python script: /out/code.py"));
        CHECK(has(prompt, "Notes:\n- Generate a minimal, executable bash script\n- Focus on "
                          "essential commands only\n- Handle common environment and package "
                          "only if there were errors"));
        CHECK(!has(prompt, "conda"));
        CHECK(!has(prompt, "Previous error:"));
    }

    SUBCASE("package installation allowed") {
        cfg.install_packages = true;
        std::string prompt = build_shell_prompt("print(1)", "/out/code.py", "/out", cfg, "", "", "");
        CHECK(has(prompt, "1. The environment may not be fully configured. Install any packages "
                          "required in the python code."));
        CHECK(has(prompt, "2. Execute the Python script: /out/code.py"));
    }

    SUBCASE("dedicated environment requested") {
        cfg.create_venv = true;
        std::string prompt = build_shell_prompt("print(1)", "/out/code.py", "/out", cfg, "", "", "");
        CHECK(has(prompt, "1. Create and configure a conda environment in /out:"));
        CHECK(has(prompt, "2. - Python version: 3.11"));
        CHECK(has(prompt, "3. - Activate the environment"));
        CHECK(has(prompt, "4. - Install required packages"));
        CHECK(has(prompt, "5. Execute the Python script: /out/code.py"));
    }
}

TEST_CASE("shell prompt code blocks dedent like template interpolation") {
    LoopConfig cfg;

    SUBCASE("single-line code dedents fully") {
        std::string prompt = build_shell_prompt("print(1)", "/out/c.py", "/out", cfg, "", "", "");
        CHECK(has(prompt, "Current Python code:\n```python\nprint(1)\n```"));
    }

    SUBCASE("a flush-left line pins the template indentation") {
        std::string prompt =
            build_shell_prompt("import x\nprint(1)", "/out/c.py", "/out", cfg, "", "", "");
        CHECK(has(prompt,
                  "Current Python code:\n            ```python\n            import "
                  "x\nprint(1)\n            ```"));
    }
}

TEST_CASE("previous code and script appear only alongside an error") {
    LoopConfig cfg;

    std::string quiet = build_shell_prompt("print(2)", "/out/c.py", "/out", cfg,
                                           "bash old.sh", "print(old)", "");
    CHECK(!has(quiet, "Previous error:"));
    CHECK(!has(quiet, "Previous failed bash script:"));
    CHECK(!has(quiet, "Previous Python code:"));

    std::string noisy = build_shell_prompt("print(2)", "/out/c.py", "/out", cfg,
                                           "bash old.sh", "print(old)", "boom happened");
    CHECK(has(noisy, "Previous error:\nboom happened"));
    CHECK(has(noisy, "Previous failed bash script:\n```bash\nbash old.sh\n```"));
    CHECK(has(noisy, "Previous Python code:\n```python\nprint(old)\n```"));

    cfg.max_error_message_length = 64;
    std::string long_error(300, 'e');
    std::string truncated = build_shell_prompt("print(2)", "/out/c.py", "/out", cfg, "", "",
                                               long_error);
    CHECK(has(truncated, "Previous error:\n" + std::string(32, 'e') + "\n...(truncated)\n"));
    CHECK(!has(truncated, std::string(64, 'e')));
}

TEST_CASE("the judge prompt substitutes placeholders for silent streams") {
    std::string prompt = build_judge_prompt("the task", "the data", "print('x')", "", "");
    CHECK(has(prompt, "You are an expert code evaluator."));
    CHECK(has(prompt, "the task"));
    CHECK(has(prompt, "the data"));
    CHECK(has(prompt, "## Python Code\n```python\nprint('x')\n```"));
    CHECK(has(prompt, "### Standard Output (stdout)\n```\nNo standard output\n```"));
    CHECK(has(prompt, "### Standard Error (stderr)\n```\nNo standard error\n```"));
    CHECK(has(prompt, "DECISION: [FINISH or FIX]"));
    CHECK(has(prompt, "ANALYSIS: [Brief analysis of errors if any, or \"None\" if no errors]"));
    CHECK(has(prompt, "Even if the code executed without throwing errors"));

    std::string loud = build_judge_prompt("t", "d", "c", "all good\n", "warning: slow\n");
    CHECK(has(loud, "```\nall good\n\n```"));
    CHECK(has(loud, "```\nwarning: slow\n\n```"));
    CHECK(!has(loud, "No standard output"));
    CHECK(!has(loud, "No standard error"));
}

TEST_CASE("judge_execution maps verdicts and retries malformed output once") {
    SUBCASE("clean finish") {
        ScriptedBackend backend({"DECISION: FINISH\nANALYSIS: None"});
        Decision d = judge_execution("t", "d", "c", "out", "err", backend);
        CHECK(d.verdict == Verdict::Finish);
        CHECK(d.analysis == "None");
        CHECK(backend.calls() == 1);
        CHECK(backend.transcript()[0].role_name == "planner");
    }

    SUBCASE("bracketed fix with analysis") {
        ScriptedBackend backend({"DECISION: [FIX]\nANALYSIS: the model never saved predictions"});
        Decision d = judge_execution("t", "d", "c", "", "", backend);
        CHECK(d.verdict == Verdict::Fix);
        CHECK(d.analysis == "the model never saved predictions");
    }

    SUBCASE("lowercase labels and verdicts are accepted") {
        ScriptedBackend backend({"decision: finish\nanalysis: looks complete"});
        Decision d = judge_execution("t", "d", "c", "", "", backend);
        CHECK(d.verdict == Verdict::Finish);
        CHECK(d.analysis == "looks complete");
    }

    SUBCASE("a missing analysis defaults to None") {
        ScriptedBackend backend({"DECISION: FINISH"});
        Decision d = judge_execution("t", "d", "c", "", "", backend);
        CHECK(d.verdict == Verdict::Finish);
        CHECK(d.analysis == "None");
    }

    SUBCASE("one malformed response is retried") {
        ScriptedBackend backend({"thinking out loud, no labels here",
                                 "DECISION: FIX\nANALYSIS: missing import"});
        Decision d = judge_execution("t", "d", "c", "", "", backend);
        CHECK(d.verdict == Verdict::Fix);
        CHECK(d.analysis == "missing import");
        CHECK(backend.calls() == 2);
    }

    SUBCASE("an unrecognized verdict also triggers the retry") {
        ScriptedBackend backend({"DECISION: PROCEED\nANALYSIS: ok",
                                 "DECISION: FINISH\nANALYSIS: None"});
        Decision d = judge_execution("t", "d", "c", "", "", backend);
        CHECK(d.verdict == Verdict::Finish);
        CHECK(backend.calls() == 2);
    }

    SUBCASE("two failures degrade to a fix verdict") {
        ScriptedBackend backend({"gibberish", "more gibberish"});
        Decision d = judge_execution("t", "d", "c", "", "", backend);
        CHECK(d.verdict == Verdict::Fix);
        CHECK(d.analysis == "unparseable judgment");
        CHECK(backend.calls() == 2);
    }
}

TEST_CASE("find_results_file matches the stem non-recursively") {
    std::string dir = make_temp_dir();
    CHECK(!find_results_file(dir).has_value());
    CHECK(!find_results_file(dir + "/missing").has_value());

    std::ofstream(dir + "/my_results.csv") << "x";
    std::ofstream(dir + "/resultsold.txt") << "x";
    fs::create_directory(dir + "/results.d");
    std::ofstream(dir + "/results.d/results.csv") << "x";
    CHECK(!find_results_file(dir).has_value());

    std::ofstream(dir + "/results.json") << "{}";
    auto found = find_results_file(dir);
    REQUIRE(found.has_value());
    CHECK(*found == dir + "/results.json");

    std::ofstream(dir + "/results.csv") << "a,b";
    found = find_results_file(dir);
    REQUIRE(found.has_value());
    CHECK(*found == dir + "/results.csv");

    fs::remove_all(dir);
}

TEST_CASE("make_loop_config projects the run knobs out of the full config") {
    KernelConfig cfg = default_config();
    cfg.max_iterations = 3;
    cfg.per_execution_timeout = 60;
    cfg.max_error_message_length = 512;
    cfg.planner.max_stdout_length = 4096;
    cfg.planner.max_stderr_length = 1024;
    cfg.max_user_input_length = 256;
    cfg.create_venv = true;
    cfg.install_packages = true;

    LoopConfig loop = make_loop_config(cfg);
    CHECK(loop.max_iterations == 3);
    CHECK(loop.per_execution_timeout_seconds == 60);
    CHECK(loop.max_error_message_length == 512);
    CHECK(loop.max_stdout_length == 4096);
    CHECK(loop.max_stderr_length == 1024);
    CHECK(loop.max_user_input_length == 256);
    CHECK(loop.create_venv);
    CHECK(loop.install_packages);
    CHECK(!loop.multi_turn_coder);

    cfg.episodic_mode = EpisodicMode::MultiTurn;
    CHECK(make_loop_config(cfg).multi_turn_coder);
}

TEST_CASE("a passing first iteration finishes with artifacts in the run folder") {
    LoopFixture fx;
    fx.backend.push("1");  // retrieval
    fx.backend.push(fenced("python", "print('hello')"));
    fx.backend.push(fenced("bash", kPassingScript));
    fx.backend.push("DECISION: FINISH\nANALYSIS: None");

    RunOptions options;
    options.user_input = "Optimize for accuracy.";
    RunOutcome outcome = fx.run(options);

    CHECK(outcome.success);
    CHECK(outcome.iterations_used == 1);
    REQUIRE(outcome.results_path.has_value());
    CHECK(fs::path(*outcome.results_path).filename() == "results.csv");
    CHECK(slurp(*outcome.results_path) == "id,label\n1,x\n");

    CHECK(slurp(fx.out + "/generated_code_0.py") == "print('hello')");
    CHECK(has(slurp(fx.out + "/run_0.sh"), "results.csv"));
    CHECK(slurp(fx.out + "/stdout_0.log") == "trained\n");
    CHECK(slurp(fx.out + "/stderr_0.log") == "");
    CHECK(count_lines(fx.out + "/episodic.jsonl") == 1);

    REQUIRE(fx.backend.calls() == 4);
    const auto& t = fx.backend.transcript();
    CHECK(t[0].role_name == "planner");
    CHECK(has(t[0].turns[0].text, "Quick Start"));
    CHECK(t[1].role_name == "coder");
    CHECK(t[1].temperature == doctest::Approx(0.5));
    CHECK(has(t[1].turns[0].text, "As an AutoML Agent"));
    CHECK(has(t[1].turns[0].text, "Optimize for accuracy."));
    CHECK(has(t[1].turns[0].text, "Tutorial: Quick Start"));
    CHECK(has(t[1].turns[0].text, fx.out));
    CHECK(t[2].role_name == "coder");
    CHECK(has(t[2].turns[0].text, "Execute the Python script: " + fx.out + "/generated_code_0.py"));
    CHECK(has(t[2].turns[0].text, "The environment is already configured"));
    CHECK(t[3].role_name == "planner");
    CHECK(has(t[3].turns[0].text, "DECISION: [FINISH or FIX]"));
    CHECK(has(t[3].turns[0].text, "trained"));

    REQUIRE(outcome.episodic_store.size() == 1);
    const IterationRecord& rec = outcome.episodic_store.records()[0];
    CHECK(rec.return_code == 0);
    CHECK(rec.executer_analysis == "None");
    CHECK(rec.retrieved_titles == std::vector<std::string>{"Quick Start"});
    CHECK(!rec.error_context.has_value());

    fs::remove_all(fx.out);
}

TEST_CASE("a failure feeds the distilled error into the next iteration") {
    LoopFixture fx;
    // t = 0: the script fails, so the judge is never consulted and the
    // analyzer distills the stderr.
    fx.backend.push("1");
    fx.backend.push(fenced("python", "raise SystemExit(3)"));
    fx.backend.push(fenced("bash", "echo boom >&2\nexit 3\n"));
    fx.backend.push("ERROR SUMMARY: The script exited with code three.\n\n"
                    "SUGGESTED FIX: Return zero after writing results.");
    // t = 1: corrected script passes.
    fx.backend.push("1");
    fx.backend.push(fenced("python", "print('fixed')"));
    fx.backend.push(fenced("bash", kPassingScript));
    fx.backend.push("DECISION: FINISH\nANALYSIS: None");

    RunOutcome outcome = fx.run();

    CHECK(outcome.success);
    CHECK(outcome.iterations_used == 2);
    CHECK(fx.backend.calls() == 8);
    CHECK(fx.backend.remaining() == 0);

    const auto& t = fx.backend.transcript();
    CHECK(t[3].role_name == "planner");
    CHECK(has(t[3].turns[0].text, "Error Message:"));
    CHECK(has(t[3].turns[0].text, "boom"));

    // The second coder prompt carries the analyzer's distilled context.
    CHECK(t[5].role_name == "coder");
    CHECK(has(t[5].turns[0].text, "ERROR SUMMARY: The script exited with code three."));
    CHECK(has(t[5].turns[0].text, "SUGGESTED FIX: Return zero after writing results."));

    // The second shell prompt replays the failed pair.
    CHECK(has(t[6].turns[0].text, "Previous error:\nboom"));
    CHECK(has(t[6].turns[0].text, "Previous failed bash script:"));
    CHECK(has(t[6].turns[0].text, "Previous Python code:"));
    CHECK(has(t[6].turns[0].text, "raise SystemExit(3)"));

    REQUIRE(outcome.episodic_store.size() == 2);
    const IterationRecord& first = outcome.episodic_store.records()[0];
    CHECK(first.return_code == 3);
    CHECK(first.stderr_text == "boom\n");
    REQUIRE(first.error_context.has_value());
    CHECK(first.error_context->error_summary == "The script exited with code three.");
    CHECK(outcome.episodic_store.records()[1].return_code == 0);

    CHECK(count_lines(fx.out + "/episodic.jsonl") == 2);
    CHECK(fs::exists(fx.out + "/generated_code_0.py"));
    CHECK(fs::exists(fx.out + "/generated_code_1.py"));
    CHECK(fs::exists(fx.out + "/run_1.sh"));
    CHECK(fs::exists(fx.out + "/stderr_0.log"));
    CHECK(slurp(fx.out + "/stderr_0.log") == "boom\n");

    fs::remove_all(fx.out);
}

TEST_CASE("persistent failure stops after the configured iteration budget") {
    LoopFixture fx;
    for (int t = 0; t < 5; ++t) {
        fx.backend.push("1");
        fx.backend.push(fenced("python", "broken()"));
        fx.backend.push(fenced("bash", "echo fail >&2\nexit 1\n"));
        fx.backend.push("ERROR SUMMARY: round " + std::to_string(t) +
                        " failed.\n\nSUGGESTED FIX: try again.");
    }

    RunOutcome outcome = fx.run();

    CHECK(!outcome.success);
    CHECK(outcome.iterations_used == 5);
    CHECK(!outcome.results_path.has_value());
    CHECK(fx.backend.calls() == 20);
    CHECK(fx.backend.remaining() == 0);
    CHECK(outcome.episodic_store.size() == 5);
    CHECK(count_lines(fx.out + "/episodic.jsonl") == 5);
    CHECK(fs::exists(fx.out + "/generated_code_4.py"));
    CHECK(fs::exists(fx.out + "/run_4.sh"));

    // Each later coder prompt carries the immediately preceding round's context.
    const auto& t = fx.backend.transcript();
    for (int round = 1; round < 5; ++round) {
        const std::string& prompt = t[round * 4 + 1].turns[0].text;
        CHECK(has(prompt, "ERROR SUMMARY: round " + std::to_string(round - 1) + " failed."));
        CHECK(!has(prompt, "round " + std::to_string(round) + " failed."));
    }

    fs::remove_all(fx.out);
}

TEST_CASE("a finish verdict without a results file is downgraded to fix") {
    LoopFixture fx;
    fx.cfg.max_iterations = 1;
    fx.backend.push("1");
    fx.backend.push(fenced("python", "print('quiet')"));
    fx.backend.push(fenced("bash", "echo done\n"));  // exits zero, writes nothing
    fx.backend.push("DECISION: FINISH\nANALYSIS: None");
    fx.backend.push("ERROR SUMMARY: No results were written.\n\n"
                    "SUGGESTED FIX: Save predictions to the results file.");

    RunOutcome outcome = fx.run();

    CHECK(!outcome.success);
    CHECK(outcome.iterations_used == 1);
    CHECK(!outcome.results_path.has_value());
    CHECK(fx.backend.calls() == 5);

    REQUIRE(outcome.episodic_store.size() == 1);
    const IterationRecord& rec = outcome.episodic_store.records()[0];
    CHECK(rec.return_code == 0);
    CHECK(rec.executer_analysis == "no results file produced");

    // With empty stderr the downgraded analysis becomes the raw error, which
    // the analyzer prompt then receives.
    CHECK(has(fx.backend.transcript()[4].turns[0].text, "no results file produced"));

    fs::remove_all(fx.out);
}

TEST_CASE("a fix verdict from the judge is recorded even when results exist") {
    LoopFixture fx;
    fx.cfg.max_iterations = 1;
    fx.backend.push("1");
    fx.backend.push(fenced("python", "print('eh')"));
    fx.backend.push(fenced("bash", kPassingScript));
    fx.backend.push("DECISION: FIX\nANALYSIS: Predictions use the wrong column name.");
    fx.backend.push("ERROR SUMMARY: Output columns are misnamed.\n\n"
                    "SUGGESTED FIX: Match the training column names.");

    RunOutcome outcome = fx.run();

    CHECK(!outcome.success);
    CHECK(outcome.iterations_used == 1);
    REQUIRE(outcome.episodic_store.size() == 1);
    CHECK(outcome.episodic_store.records()[0].executer_analysis ==
          "Predictions use the wrong column name.");

    fs::remove_all(fx.out);
}

TEST_CASE("disabling semantic memory skips retrieval entirely") {
    LoopFixture fx;
    fx.cfg.semantic_memory_enabled = false;
    fx.backend.push(fenced("python", "print('hi')"));
    fx.backend.push(fenced("bash", kPassingScript));
    fx.backend.push("DECISION: FINISH\nANALYSIS: None");

    RunOutcome outcome = fx.run();

    CHECK(outcome.success);
    CHECK(fx.backend.calls() == 3);
    CHECK(fx.backend.transcript()[0].role_name == "coder");
    CHECK(!has(fx.backend.transcript()[0].turns[0].text, "Tutorial:"));
    CHECK(outcome.episodic_store.records()[0].retrieved_titles.empty());

    fs::remove_all(fx.out);
}

TEST_CASE("multi-turn mode accumulates the coder conversation") {
    LoopFixture fx;
    fx.cfg.episodic_mode = EpisodicMode::MultiTurn;
    fx.backend.push("1");
    fx.backend.push(fenced("python", "first_attempt()"));
    fx.backend.push(fenced("bash", "printf 'nope' >&2\nexit 1\n"));
    // No analyzer call in this mode; retrieval still runs every round.
    fx.backend.push("1");
    fx.backend.push(fenced("python", "second_attempt()"));
    fx.backend.push(fenced("bash", kPassingScript));
    fx.backend.push("DECISION: FINISH\nANALYSIS: None");

    RunOutcome outcome = fx.run();

    CHECK(outcome.success);
    CHECK(outcome.iterations_used == 2);
    CHECK(fx.backend.calls() == 7);

    const auto& t = fx.backend.transcript();
    CHECK(t[1].multi_turn);
    CHECK(t[1].turns.size() == 1);

    REQUIRE(t[4].turns.size() == 3);
    CHECK(t[4].multi_turn);
    CHECK(t[4].turns[0].speaker == "user");
    CHECK(has(t[4].turns[0].text, "As an AutoML Agent"));
    CHECK(t[4].turns[1].speaker == "assistant");
    CHECK(has(t[4].turns[1].text, "first_attempt()"));
    CHECK(t[4].turns[2].speaker == "user");
    CHECK(t[4].turns[2].text ==
          "Previous error:\nnope\n\nPlease fix the Python code and provide the complete "
          "corrected script.");
    CHECK(!has(t[4].turns[2].text, "ERROR SUMMARY"));

    fs::remove_all(fx.out);
}

TEST_CASE("without-fix mode injects the summary but never a suggested fix") {
    LoopFixture fx;
    fx.cfg.episodic_mode = EpisodicMode::WithoutFix;
    fx.backend.push("1");
    fx.backend.push(fenced("python", "a()"));
    fx.backend.push(fenced("bash", "echo sad >&2\nexit 1\n"));
    fx.backend.push("ERROR SUMMARY: The helper is undefined.\n\n"
                    "SUGGESTED FIX: Define the helper before use.");
    fx.backend.push("1");
    fx.backend.push(fenced("python", "b()"));
    fx.backend.push(fenced("bash", kPassingScript));
    fx.backend.push("DECISION: FINISH\nANALYSIS: None");

    RunOutcome outcome = fx.run();

    CHECK(outcome.success);
    const std::string& retry_prompt = fx.backend.transcript()[5].turns[0].text;
    CHECK(has(retry_prompt, "ERROR SUMMARY: The helper is undefined."));
    CHECK(!has(retry_prompt, "SUGGESTED FIX"));

    REQUIRE(outcome.episodic_store.records()[0].error_context.has_value());
    CHECK(outcome.episodic_store.records()[0].error_context->suggested_fix == "");

    fs::remove_all(fx.out);
}

TEST_CASE("without-both mode replays the raw error with no analyzer call") {
    LoopFixture fx;
    fx.cfg.episodic_mode = EpisodicMode::WithoutBoth;
    fx.backend.push("1");
    fx.backend.push(fenced("python", "x()"));
    fx.backend.push(fenced("bash", "echo raw failure >&2\nexit 1\n"));
    fx.backend.push("1");
    fx.backend.push(fenced("python", "y()"));
    fx.backend.push(fenced("bash", kPassingScript));
    fx.backend.push("DECISION: FINISH\nANALYSIS: None");

    RunOutcome outcome = fx.run();

    CHECK(outcome.success);
    CHECK(fx.backend.calls() == 7);

    const std::string& retry_prompt = fx.backend.transcript()[5].turns[0].text;
    CHECK(has(retry_prompt, "Previous error:\nraw failure"));
    CHECK(!has(retry_prompt, "ERROR SUMMARY"));
    CHECK(!has(retry_prompt, "Execution analysis:"));
    CHECK(!outcome.episodic_store.records()[0].error_context.has_value());

    fs::remove_all(fx.out);
}

TEST_CASE("without-both mode appends the judge analysis when the script exits zero") {
    LoopFixture fx;
    fx.cfg.episodic_mode = EpisodicMode::WithoutBoth;
    fx.cfg.max_iterations = 2;
    fx.backend.push("1");
    fx.backend.push(fenced("python", "quiet()"));
    fx.backend.push(fenced("bash", "echo ok\n"));  // zero exit, no results file
    fx.backend.push("DECISION: FIX\nANALYSIS: Nothing was saved to disk.");
    fx.backend.push("1");
    fx.backend.push(fenced("python", "loud()"));
    fx.backend.push(fenced("bash", kPassingScript));
    fx.backend.push("DECISION: FINISH\nANALYSIS: None");

    RunOutcome outcome = fx.run();

    CHECK(outcome.success);
    const std::string& retry_prompt = fx.backend.transcript()[5].turns[0].text;
    CHECK(has(retry_prompt, "Previous error:\nNothing was saved to disk."));
    CHECK(has(retry_prompt, "Execution analysis:\nNothing was saved to disk."));

    fs::remove_all(fx.out);
}

TEST_CASE("per-iteration input overrides the standing user input") {
    LoopFixture fx;
    fx.cfg.semantic_memory_enabled = false;
    fx.backend.push(fenced("python", "a()"));
    fx.backend.push(fenced("bash", "exit 1\n"));
    fx.backend.push("ERROR SUMMARY: s.\n\nSUGGESTED FIX: f.");
    fx.backend.push(fenced("python", "b()"));
    fx.backend.push(fenced("bash", kPassingScript));
    fx.backend.push("DECISION: FINISH\nANALYSIS: None");

    RunOptions options;
    options.user_input = "Original request.";
    options.iteration_input = [](int t) {
        return t == 1 ? std::string("Focus on runtime.") : std::string();
    };
    RunOutcome outcome = fx.run(options);

    CHECK(outcome.success);
    CHECK(has(fx.backend.transcript()[0].turns[0].text, "Original request."));
    CHECK(has(fx.backend.transcript()[3].turns[0].text, "Focus on runtime."));
    CHECK(!has(fx.backend.transcript()[3].turns[0].text, "Original request."));

    fs::remove_all(fx.out);
}

TEST_CASE("oversized user input is capped inside its budget") {
    LoopFixture fx;
    fx.cfg.semantic_memory_enabled = false;
    fx.cfg.max_iterations = 1;
    fx.backend.push(fenced("python", "a()"));
    fx.backend.push(fenced("bash", kPassingScript));
    fx.backend.push("DECISION: FINISH\nANALYSIS: None");

    RunOptions options;
    options.user_input = std::string(5000, 'u');
    fx.run(options);

    std::string expected =
        std::string(1016, 'u') + "\n...(truncated)\n" + std::string(1016, 'u');
    CHECK(has(fx.backend.transcript()[0].turns[0].text, expected));
    CHECK(!has(fx.backend.transcript()[0].turns[0].text, std::string(1017, 'u')));

    fs::remove_all(fx.out);
}

TEST_CASE("an exhausted wall clock stops the loop before any model call") {
    LoopFixture fx;
    RunOptions options;
    options.wall_limit_seconds = 0.0;
    RunOutcome outcome = fx.run(options);

    CHECK(!outcome.success);
    CHECK(outcome.iterations_used == 0);
    CHECK(fx.backend.calls() == 0);

    fs::remove_all(fx.out);
}

TEST_CASE("an unfenced coder response is used verbatim") {
    LoopFixture fx;
    fx.cfg.semantic_memory_enabled = false;
    fx.cfg.max_iterations = 1;
    fx.backend.push("print('raw')");  // no fence at all
    fx.backend.push(kPassingScript);  // shell response unfenced too
    fx.backend.push("DECISION: FINISH\nANALYSIS: None");

    RunOutcome outcome = fx.run();

    CHECK(outcome.success);
    CHECK(slurp(fx.out + "/generated_code_0.py") == "print('raw')");

    fs::remove_all(fx.out);
}

TEST_CASE("the loop applies the configured execution limits to the sandbox") {
    LoopFixture fx;
    fx.cfg.semantic_memory_enabled = false;
    fx.cfg.max_iterations = 1;
    fx.cfg.per_execution_timeout = 77;
    fx.cfg.planner.max_stdout_length = 333;
    fx.cfg.planner.max_stderr_length = 222;
    fx.backend.push(fenced("python", "a()"));
    fx.backend.push(fenced("bash", kPassingScript));
    fx.backend.push("DECISION: FINISH\nANALYSIS: None");

    fx.run();

    CHECK(fx.sandbox.options().timeout_seconds == 77);
    CHECK(fx.sandbox.options().max_stdout_length == 333);
    CHECK(fx.sandbox.options().max_stderr_length == 222);

    fs::remove_all(fx.out);
}
