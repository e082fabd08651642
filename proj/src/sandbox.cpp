#include "mlzero/sandbox.hpp"

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/stat.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <chrono>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <system_error>

#include "mlzero/strings.hpp"

extern char** environ;

namespace mlzero {

namespace {

namespace fs = std::filesystem;

// Environment entries the child must not see.
bool blocked_env_entry(const char* entry) {
    return std::strncmp(entry, "MLZERO_API_KEY=", 15) == 0;
}

std::vector<std::string> build_child_env(const std::map<std::string, std::string>& extra) {
    std::vector<std::string> env;
    for (char** e = environ; e && *e; ++e) {
        if (blocked_env_entry(*e)) continue;
        std::string entry = *e;
        size_t eq = entry.find('=');
        if (eq != std::string::npos && extra.count(entry.substr(0, eq))) continue;
        env.push_back(std::move(entry));
    }
    for (const auto& [key, value] : extra) {
        env.push_back(key + "=" + value);
    }
    return env;
}

std::vector<char*> as_argv(std::vector<std::string>& strings) {
    std::vector<char*> out;
    out.reserve(strings.size() + 1);
    for (auto& s : strings) out.push_back(s.data());
    out.push_back(nullptr);
    return out;
}

void write_all(int fd, const char* data, size_t len) {
    while (len > 0) {
        ssize_t n = ::write(fd, data, len);
        if (n <= 0) {
            if (n < 0 && errno == EINTR) continue;
            return;
        }
        data += n;
        len -= static_cast<size_t>(n);
    }
}

struct StreamSink {
    int fd = -1;
    std::ofstream log;
    std::string buffer;
    int tee_fd = -1;  // -1 disables

    void close_fd() {
        if (fd >= 0) {
            ::close(fd);
            fd = -1;
        }
    }
    // Returns false once the stream reached EOF or failed.
    bool drain() {
        char chunk[4096];
        ssize_t n = ::read(fd, chunk, sizeof(chunk));
        if (n > 0) {
            buffer.append(chunk, static_cast<size_t>(n));
            log.write(chunk, n);
            log.flush();
            if (tee_fd >= 0) write_all(tee_fd, chunk, static_cast<size_t>(n));
            return true;
        }
        if (n < 0 && (errno == EINTR || errno == EAGAIN)) return true;
        close_fd();
        return false;
    }
};

}  // namespace

Workspace prepare_workspace(const std::string& output_folder) {
    std::error_code ec;
    fs::create_directories(output_folder, ec);
    if (ec) {
        throw std::runtime_error("cannot create workspace " + output_folder + ": " + ec.message());
    }
    Workspace ws;
    ws.root = fs::absolute(output_folder).lexically_normal().string();
    ws.iterations = (fs::path(ws.root) / "iterations").string();
    fs::create_directories(ws.iterations, ec);
    if (ec) {
        throw std::runtime_error("cannot create " + ws.iterations + ": " + ec.message());
    }
    return ws;
}

Sandbox::Sandbox(Workspace workspace, SandboxOptions options)
    : workspace_(std::move(workspace)), options_(std::move(options)) {}

ExecutionResult Sandbox::execute_shell_script(const std::string& script_text) {
    return execute_shell_script(script_text, "run_" + std::to_string(next_index_++));
}

ExecutionResult Sandbox::execute_shell_script(const std::string& script_text,
                                              const std::string& stem) {
    if (script_text.empty()) throw std::invalid_argument("script text is empty");
    if (options_.timeout_seconds <= 0) throw std::invalid_argument("timeout must be positive");

    ExecutionResult result;
    result.script_path = (fs::path(workspace_.iterations) / (stem + ".sh")).string();
    result.stdout_path = (fs::path(workspace_.iterations) / (stem + ".stdout.log")).string();
    result.stderr_path = (fs::path(workspace_.iterations) / (stem + ".stderr.log")).string();

    {
        std::ofstream script(result.script_path, std::ios::binary | std::ios::trunc);
        if (!script) throw std::runtime_error("cannot write " + result.script_path);
        script << script_text;
    }
    ::chmod(result.script_path.c_str(), 0755);

    int out_pipe[2], err_pipe[2], spawn_pipe[2];
    if (pipe(out_pipe) != 0 || pipe(err_pipe) != 0 || pipe(spawn_pipe) != 0) {
        throw std::runtime_error("pipe() failed");
    }
    fcntl(spawn_pipe[1], F_SETFD, FD_CLOEXEC);

    std::vector<std::string> child_env = build_child_env(options_.extra_env);
    std::vector<std::string> argv_strings = options_.command_prefix;
    argv_strings.push_back(result.script_path);

    auto started = std::chrono::steady_clock::now();
    pid_t pid = fork();
    if (pid < 0) {
        throw std::runtime_error("fork() failed");
    }
    if (pid == 0) {
        setpgid(0, 0);
        ::close(out_pipe[0]);
        ::close(err_pipe[0]);
        ::close(spawn_pipe[0]);
        dup2(out_pipe[1], STDOUT_FILENO);
        dup2(err_pipe[1], STDERR_FILENO);
        ::close(out_pipe[1]);
        ::close(err_pipe[1]);
        if (chdir(workspace_.root.c_str()) != 0) {
            int err = errno;
            write_all(spawn_pipe[1], reinterpret_cast<char*>(&err), sizeof(err));
            _exit(127);
        }
        std::vector<char*> argv = as_argv(argv_strings);
        std::vector<char*> envp = as_argv(child_env);
        execve(argv[0], argv.data(), envp.data());
        if (errno == ENOEXEC && options_.command_prefix.empty()) {
            // Script without an interpreter line: hand it to bash.
            std::vector<std::string> fallback = {"/bin/bash", result.script_path};
            std::vector<char*> fb_argv = as_argv(fallback);
            execve("/bin/bash", fb_argv.data(), envp.data());
        }
        int err = errno;
        write_all(spawn_pipe[1], reinterpret_cast<char*>(&err), sizeof(err));
        _exit(127);
    }

    setpgid(pid, pid);  // either parent or child wins the race, both set the same group
    ::close(out_pipe[1]);
    ::close(err_pipe[1]);
    ::close(spawn_pipe[1]);

    int spawn_errno = 0;
    ssize_t spawn_read = ::read(spawn_pipe[0], &spawn_errno, sizeof(spawn_errno));
    ::close(spawn_pipe[0]);
    if (spawn_read == static_cast<ssize_t>(sizeof(spawn_errno))) {
        ::close(out_pipe[0]);
        ::close(err_pipe[0]);
        int status = 0;
        waitpid(pid, &status, 0);
        result.return_code = -2;
        result.stderr_text = std::string("failed to execute script: ") + std::strerror(spawn_errno);
        result.wall_seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
        std::ofstream(result.stderr_path) << result.stderr_text << "\n";
        return result;
    }

    StreamSink out_sink{out_pipe[0], std::ofstream(result.stdout_path, std::ios::binary), "",
                        options_.stream_output ? STDOUT_FILENO : -1};
    StreamSink err_sink{err_pipe[0], std::ofstream(result.stderr_path, std::ios::binary), "",
                        options_.stream_output ? STDERR_FILENO : -1};

    auto deadline = started + std::chrono::seconds(options_.timeout_seconds);
    bool term_sent = false;
    std::chrono::steady_clock::time_point kill_deadline;

    while (out_sink.fd >= 0 || err_sink.fd >= 0) {
        auto now = std::chrono::steady_clock::now();
        if (!term_sent && now >= deadline) {
            kill(-pid, SIGTERM);
            term_sent = true;
            result.timed_out = true;
            kill_deadline = now + std::chrono::seconds(options_.grace_seconds);
        }
        if (term_sent && now >= kill_deadline) {
            kill(-pid, SIGKILL);
            kill_deadline = now + std::chrono::hours(24);  // do not spam KILL
        }
        auto next_event = term_sent ? kill_deadline : deadline;
        auto wait_ms = std::chrono::duration_cast<std::chrono::milliseconds>(next_event - now);
        int timeout_ms = static_cast<int>(std::clamp<long long>(wait_ms.count(), 0, 250));

        pollfd fds[2];
        nfds_t nfds = 0;
        if (out_sink.fd >= 0) fds[nfds++] = {out_sink.fd, POLLIN, 0};
        if (err_sink.fd >= 0) fds[nfds++] = {err_sink.fd, POLLIN, 0};
        int ready = poll(fds, nfds, timeout_ms);
        if (ready < 0) {
            if (errno == EINTR) continue;
            break;
        }
        for (nfds_t i = 0; i < nfds; ++i) {
            if (fds[i].revents == 0) continue;
            StreamSink& sink = (fds[i].fd == out_sink.fd) ? out_sink : err_sink;
            sink.drain();
        }
    }

    int status = 0;
    while (waitpid(pid, &status, 0) < 0 && errno == EINTR) {
    }
    // Sweep up any stragglers left in the group after the main child exited.
    if (result.timed_out) kill(-pid, SIGKILL);

    result.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    if (result.timed_out) {
        result.return_code = -1;
    } else if (WIFEXITED(status)) {
        result.return_code = WEXITSTATUS(status);
    } else if (WIFSIGNALED(status)) {
        result.return_code = 128 + WTERMSIG(status);
    } else {
        result.return_code = -2;
    }
    result.stdout_text = truncate_middle(out_sink.buffer, options_.max_stdout_length);
    result.stderr_text = truncate_middle(err_sink.buffer, options_.max_stderr_length);
    if (result.timed_out && result.stderr_text.empty()) {
        result.stderr_text = "process timed out after " +
                             std::to_string(options_.timeout_seconds) + " seconds";
    }
    return result;
}

}  // namespace mlzero
