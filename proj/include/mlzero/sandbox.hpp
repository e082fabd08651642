#pragma once

#include <map>
#include <string>
#include <vector>

namespace mlzero {

// Outcome of one sandboxed script execution. Negative return codes are
// reserved: -1 timeout, -2 spawn failure. Signal deaths map to 128+signo.
struct ExecutionResult {
    int return_code = 0;
    std::string stdout_text;  // truncated to the configured cap
    std::string stderr_text;  // truncated to the configured cap
    double wall_seconds = 0.0;
    bool timed_out = false;
    std::string script_path;
    std::string stdout_path;  // untruncated log on disk
    std::string stderr_path;  // untruncated log on disk
};

struct SandboxOptions {
    int timeout_seconds = 10800;
    int grace_seconds = 10;  // TERM -> KILL escalation window
    size_t max_stdout_length = 8192;
    size_t max_stderr_length = 2048;
    bool stream_output = false;  // tee child output to our own streams
    std::vector<std::string> command_prefix;  // optional wrapper, e.g. a container runner
    std::map<std::string, std::string> extra_env;
};

struct Workspace {
    std::string root;        // absolute path, CWD for executed scripts
    std::string iterations;  // scripts and logs live here
};

// Creates the working directory (preserving existing contents) and the
// iterations/ subdirectory for scripts and logs.
Workspace prepare_workspace(const std::string& output_folder);

class Sandbox {
public:
    Sandbox(Workspace workspace, SandboxOptions options);

    const Workspace& workspace() const { return workspace_; }
    SandboxOptions& options() { return options_; }

    // Writes the script as iterations/<stem>.sh and runs it as its own
    // process group with CWD = workspace root. Full streams go to disk;
    // the returned strings are middle-truncated to the configured caps.
    ExecutionResult execute_shell_script(const std::string& script_text, const std::string& stem);
    ExecutionResult execute_shell_script(const std::string& script_text);

private:
    Workspace workspace_;
    SandboxOptions options_;
    int next_index_ = 0;
};

}  // namespace mlzero
