#pragma once

#include <string>
#include <vector>

#include "mlzero/config.hpp"
#include "mlzero/llm.hpp"
#include "mlzero/registry.hpp"
#include "mlzero/sandbox.hpp"

namespace mlzero {

// One bucket from hierarchical file grouping. The pattern is a list of path
// components (literal folder name or "*") terminated by an extension token.
struct FileGroup {
    std::vector<std::string> pattern;
    std::vector<std::string> members;  // sorted, same canonical form as the input paths

    std::string pattern_string() const;           // "a/*/*.csv"
    const std::string& example_member() const;    // lexicographically smallest member
};

// splitext-style extension: ".csv" for "dir/a.csv", "" for "README" or ".env".
std::string file_extension(const std::string& path);

// Two-pass grouping over folder structure: a directory level keeps literal
// names while it has <= delta distinct names across all inputs, otherwise it
// becomes "*". Files bucket by (pattern, extension). Groups are returned in
// pattern order with sorted members.
std::vector<FileGroup> group_files(const std::vector<std::string>& files, int delta);

// Small groups are inspected wholesale; large groups by a single exemplar.
std::vector<std::string> select_representatives(const FileGroup& group, int delta);

struct FilePerceptionReport {
    enum class Source { BuiltinReader, GeneratedReader };

    std::string file_path;
    std::string report_text;
    Source produced_by = Source::BuiltinReader;
    bool failed = false;
};

struct PerceptionLimits {
    int max_chars_per_file = 1024;
    bool details = false;
    bool always_generate_readers = false;
    int timeout_seconds = 600;
    double temperature = 0.0;
    int max_tokens = 65536;
};

std::string build_file_perception_prompt(const std::string& file_path, int max_chars,
                                         bool details);

// Produces the per-file report: recognized formats go through builtin readers;
// otherwise reader code is requested from the backend and run in the sandbox.
// A crashing generated reader yields its truncated error text with failed set.
FilePerceptionReport perceive_file(const std::string& path, LlmBackend* backend,
                                   Sandbox* sandbox, const PerceptionLimits& limits);

struct DescriptionFinding {
    std::vector<std::string> files;
    std::string explanation;
    std::vector<std::string> warnings;  // dropped nonexistent paths
};

std::string build_find_description_prompt(const std::string& data_prompt);
DescriptionFinding find_description_files(const std::string& data_prompt, LlmBackend& backend,
                                          const std::string& base_dir = "");

// Concatenates the found files' text, each truncated to max_chars characters.
std::string read_description_contents(const std::vector<std::string>& paths, int max_chars,
                                      const std::string& base_dir = "");

std::string build_task_description_prompt(const std::string& data_prompt,
                                          const std::string& description_analysis,
                                          const std::string& description_context);
std::string generate_task_description(const std::string& data_prompt,
                                      const std::string& description_analysis,
                                      const std::string& description_contents,
                                      LlmBackend& backend);

std::string format_tools_info(const std::vector<ToolSpec>& tools);
std::string build_library_selection_prompt(const std::string& data_prompt,
                                           const std::string& description,
                                           const std::vector<ToolSpec>& tools);

struct LibrarySelection {
    ToolSpec tool;
    std::string explanation;
};

LibrarySelection select_library(const std::string& data_prompt,
                                const std::string& task_description,
                                const std::vector<ToolSpec>& registry, LlmBackend& backend);

// P and M of the perception stage: everything downstream prompts build on.
struct PerceptionContext {
    std::string data_prompt;
    std::string task_description;
    std::vector<std::string> description_files;
    ToolSpec selected_tool;
    std::string selection_explanation;
};

// Renders the data prompt: "----------" separated per-file sections for small
// groups, then "Group pattern: ... (total N files)" sections with one example
// file for large groups, closed by a final separator. Paths are prefixed with
// root when given. Missing reports render as path-only sections.
std::string build_data_prompt(const std::vector<FilePerceptionReport>& reports,
                              const std::vector<FileGroup>& groups, int delta,
                              const std::string& root = "");

PerceptionContext assemble_perception_context(const std::vector<FilePerceptionReport>& reports,
                                              const std::vector<FileGroup>& groups, int delta,
                                              const std::string& task_description,
                                              const ToolSpec& tool,
                                              const std::string& explanation,
                                              const std::string& root = "");

// End-to-end perception over a data folder: scan, group, read representatives
// (bounded worker pool), find descriptions, draft the task description, and
// pick the library.
class PerceptionAgent {
public:
    PerceptionAgent(const KernelConfig& cfg, std::vector<ToolSpec> registry,
                    LlmBackend& backend);

    PerceptionContext perceive(const std::string& data_dir, Sandbox& sandbox) const;

private:
    const KernelConfig& cfg_;
    std::vector<ToolSpec> registry_;
    LlmBackend& backend_;
};

}  // namespace mlzero
