#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <fstream>
#include <sstream>

#include "golden_common.hpp"
#include "mlzero/strings.hpp"

using namespace mlzero;

namespace {

std::string read_golden(const std::string& name) {
    const std::string path = std::string(MLZERO_GOLDEN_DIR) + "/" + name + ".txt";
    std::ifstream in(path, std::ios::binary);
    REQUIRE_MESSAGE(bool(in), "missing golden file: ", path,
                    " (regenerate with the write_goldens tool)");
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return buffer.str();
}

std::string first_difference(const std::string& a, const std::string& b) {
    size_t i = 0;
    while (i < a.size() && i < b.size() && a[i] == b[i]) ++i;
    std::ostringstream out;
    out << "first difference at byte " << i << "; golden continues "
        << a.substr(i, 40) << "| vs built |" << b.substr(i, 40);
    return out.str();
}

}  // namespace

TEST_CASE("every assembled prompt matches its frozen golden byte for byte") {
    const auto cases = golden::build_cases(MLZERO_REGISTRY_FILE);
    REQUIRE(cases.size() == 18);
    for (const auto& golden_case : cases) {
        CAPTURE(golden_case.name);
        const std::string frozen = read_golden(golden_case.name);
        CHECK_MESSAGE(frozen == golden_case.text,
                      first_difference(frozen, golden_case.text));
    }
}

TEST_CASE("template spot checks survive in the assembled prompts") {
    const auto cases = golden::build_cases(MLZERO_REGISTRY_FILE);
    auto text_of = [&](const std::string& name) -> const std::string& {
        for (const auto& golden_case : cases) {
            if (golden_case.name == name) return golden_case.text;
        }
        static const std::string empty;
        FAIL("unknown golden case: ", name);
        return empty;
    };

    CHECK(contains(text_of("coder_initial"), "As an AutoML Agent"));
    CHECK(contains(text_of("coder_initial"), "unneccesary index column"));
    CHECK(contains(text_of("coder_initial"),
                   "Use Autogluon Tabular with the following parameters:"));
    CHECK(contains(text_of("coder_initial"), "presets: \\\"medium_quality\\\""));
    CHECK(contains(text_of("retrieval_by_summary"), "Respond ONLY with the numbers"));
    CHECK(contains(text_of("executer_with_output"), "DECISION: [FINISH or FIX]"));
    CHECK(contains(text_of("executer_empty_streams"), "No standard output"));
    CHECK(contains(text_of("executer_empty_streams"), "No standard error"));
    CHECK(contains(text_of("error_analyzer"), "ERROR SUMMARY: Provide a brief"));
    CHECK(contains(text_of("file_perception_default"), "Generate Python code to read"));
    CHECK(contains(text_of("find_description"), "Description Files:"));
    CHECK(contains(text_of("library_selection"), "Selected Tool:"));
    CHECK(contains(text_of("condensation_later"),
                   "This is a continuation of the previous chunk. "));
    CHECK(contains(text_of("summarization"), "starting with\n\"Summary: \""));
    CHECK(contains(text_of("shell_default"),
                   "The environment is already configured. Do not install or update any "
                   "package."));
    CHECK(contains(text_of("shell_install_after_error"), "Previous failed bash script:"));
    CHECK(contains(text_of("shell_create_venv"), "- Python version: 3.11"));
}

TEST_CASE("multi-line interpolation keeps the template margin in shell prompts") {
    LoopConfig cfg;
    const std::string multi = golden::fixed_python_code();
    const std::string prompt =
        build_shell_prompt(multi, "/work/output/generated_code_0.py", "/work/output", cfg,
                           "", "", "");
    // dedent finds no common margin across interpolated lines, so the
    // template's own 12-space indentation survives.
    CHECK(contains(prompt, "Current Python code:\n            ```python\n            import"));

    const std::string single =
        build_shell_prompt("print(1)", "/x.py", "/work/output", cfg, "", "", "");
    CHECK(contains(single, "Current Python code:\n```python\nprint(1)\n```"));
}
