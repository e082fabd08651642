#include "mlzero/config.hpp"

#include <charconv>
#include <fstream>
#include <map>
#include <sstream>
#include <vector>

#include "mlzero/strings.hpp"

namespace mlzero {

KernelConfig default_config() {
    KernelConfig cfg;
    cfg.coder = cfg.llm;
    cfg.coder.temperature = 0.5;
    cfg.coder.top_p = 1.0;
    cfg.planner = cfg.llm;
    cfg.file_reader = cfg.llm;
    return cfg;
}

namespace {

struct RawDoc {
    std::map<std::string, std::string> top;                             // flat key -> value
    std::map<std::string, std::vector<std::pair<std::string, std::string>>> blocks;
    std::vector<std::string> top_order;
};

std::string strip_comment(const std::string& line) {
    bool in_quotes = false;
    for (size_t i = 0; i < line.size(); ++i) {
        char c = line[i];
        if (c == '"') in_quotes = !in_quotes;
        if (c == '#' && !in_quotes && (i == 0 || line[i - 1] == ' ' || line[i - 1] == '\t')) {
            return line.substr(0, i);
        }
    }
    return line;
}

RawDoc parse_raw(const std::string& text) {
    RawDoc doc;
    std::string current_block;
    std::map<std::string, std::string> anchors;  // anchor name -> block key
    for (const std::string& raw_line : split_lines(text)) {
        std::string line = strip_comment(raw_line);
        if (trim(line).empty()) continue;
        bool indented = line[0] == ' ' || line[0] == '\t';
        std::string stripped = trim(line);
        size_t colon = stripped.find(':');
        if (colon == std::string::npos) {
            throw ConfigError("malformed config line: \"" + trim(raw_line) + "\"");
        }
        std::string key = trim(stripped.substr(0, colon));
        std::string value = trim(stripped.substr(colon + 1));
        if (!indented) {
            if (!value.empty() && value[0] == '&') {
                anchors[trim(value.substr(1))] = key;
                value.clear();
            }
            if (value.empty()) {
                current_block = key;
                doc.blocks[key];
            } else {
                current_block.clear();
                if (doc.top.count(key)) throw ConfigError("duplicate config key: " + key);
                doc.top[key] = value;
                doc.top_order.push_back(key);
            }
            continue;
        }
        if (current_block.empty()) {
            throw ConfigError("indented config line outside a block: \"" + stripped + "\"");
        }
        if (key == "<<") {
            if (value.empty() || value[0] != '*') {
                throw ConfigError("merge key must reference an anchor: \"" + stripped + "\"");
            }
            std::string anchor = trim(value.substr(1));
            auto it = anchors.find(anchor);
            if (it == anchors.end()) throw ConfigError("unknown anchor: *" + anchor);
            for (const auto& kv : doc.blocks[it->second]) {
                doc.blocks[current_block].push_back(kv);
            }
            continue;
        }
        doc.blocks[current_block].emplace_back(key, value);
    }
    return doc;
}

std::string unquote(const std::string& v) {
    if (v.size() >= 2 && v.front() == '"' && v.back() == '"') return v.substr(1, v.size() - 2);
    if (v.size() >= 2 && v.front() == '\'' && v.back() == '\'') return v.substr(1, v.size() - 2);
    return v;
}

bool parse_bool(const std::string& key, const std::string& v) {
    std::string low = to_lower(unquote(v));
    if (low == "true") return true;
    if (low == "false") return false;
    throw ConfigError("expected a boolean for \"" + key + "\", got \"" + v + "\"");
}

int parse_int(const std::string& key, const std::string& v) {
    const std::string u = unquote(v);
    int out = 0;
    auto [ptr, ec] = std::from_chars(u.data(), u.data() + u.size(), out);
    if (ec != std::errc() || ptr != u.data() + u.size()) {
        throw ConfigError("expected an integer for \"" + key + "\", got \"" + v + "\"");
    }
    return out;
}

double parse_real(const std::string& key, const std::string& v) {
    const std::string u = unquote(v);
    try {
        size_t used = 0;
        double out = std::stod(u, &used);
        if (used != u.size()) throw std::invalid_argument(u);
        return out;
    } catch (const std::exception&) {
        throw ConfigError("expected a number for \"" + key + "\", got \"" + v + "\"");
    }
}

std::string parse_string(const std::string& v) {
    std::string u = unquote(v);
    if (u == "null" || u == "~") return "";
    return u;
}

// Applies one key of an llm block. Returns false when the key is unknown.
bool set_role_key(LlmRoleConfig& role, const std::string& key, const std::string& value) {
    if (key == "provider") role.provider = parse_string(value);
    else if (key == "model") role.model = parse_string(value);
    else if (key == "max_tokens") role.max_tokens = parse_int(key, value);
    else if (key == "proxy_url") role.proxy_url = parse_string(value);
    else if (key == "temperature") role.temperature = parse_real(key, value);
    else if (key == "verbose") role.verbose = parse_bool(key, value);
    else if (key == "multi_turn") role.multi_turn = parse_bool(key, value);
    else if (key == "top_p") role.top_p = parse_real(key, value);
    else if (key == "max_stdout_length") role.max_stdout_length = parse_int(key, value);
    else if (key == "max_stderr_length") role.max_stderr_length = parse_int(key, value);
    else if (key == "details") role.details = parse_bool(key, value);
    else return false;
    return true;
}

// True when the role inherited this key from the default llm block, i.e. the
// role has no sticky default of its own (coder temperature, planner caps, ...).
bool role_inherits(const LlmRoleConfig& role_defaults, const LlmRoleConfig& llm_defaults,
                   const std::string& key) {
    if (key == "temperature") return role_defaults.temperature == llm_defaults.temperature;
    if (key == "top_p") return role_defaults.top_p == llm_defaults.top_p;
    if (key == "max_stdout_length")
        return role_defaults.max_stdout_length == llm_defaults.max_stdout_length;
    if (key == "max_stderr_length")
        return role_defaults.max_stderr_length == llm_defaults.max_stderr_length;
    if (key == "details") return role_defaults.details == llm_defaults.details;
    return true;
}

EpisodicMode parse_episodic_mode(const std::string& v) {
    std::string s = to_lower(unquote(v));
    if (s == "default") return EpisodicMode::Default;
    if (s == "without_fix") return EpisodicMode::WithoutFix;
    if (s == "without_both") return EpisodicMode::WithoutBoth;
    if (s == "multi_turn") return EpisodicMode::MultiTurn;
    throw ConfigError("unknown episodic_memory mode: \"" + v + "\"");
}

RetrievalIndexing parse_indexing(const std::string& v) {
    std::string s = to_lower(unquote(v));
    if (s == "by_summary") return RetrievalIndexing::BySummary;
    if (s == "by_title_only") return RetrievalIndexing::ByTitleOnly;
    throw ConfigError("unknown semantic_memory indexing: \"" + v + "\"");
}

std::string fmt_real(double v) {
    std::ostringstream out;
    out << v;
    return out.str();
}

std::string fmt_bool(bool v) { return v ? "True" : "False"; }

std::string fmt_string(const std::string& v) {
    if (v.empty()) return "null";
    return "\"" + v + "\"";
}

void emit_role_block(std::ostringstream& out, const std::string& name,
                     const LlmRoleConfig& role, bool anchor) {
    out << name << ":" << (anchor ? " &default_llm" : "") << "\n";
    out << "  provider: " << role.provider << "\n";
    out << "  model: " << fmt_string(role.model) << "\n";
    out << "  max_tokens: " << role.max_tokens << "\n";
    out << "  proxy_url: " << fmt_string(role.proxy_url) << "\n";
    out << "  temperature: " << fmt_real(role.temperature) << "\n";
    out << "  verbose: " << fmt_bool(role.verbose) << "\n";
    out << "  multi_turn: " << fmt_bool(role.multi_turn) << "\n";
    out << "  top_p: " << fmt_real(role.top_p) << "\n";
    out << "  max_stdout_length: " << role.max_stdout_length << "\n";
    out << "  max_stderr_length: " << role.max_stderr_length << "\n";
    out << "  details: " << fmt_bool(role.details) << "\n";
}

}  // namespace

KernelConfig parse_config_text(const std::string& text) {
    RawDoc doc = parse_raw(text);
    KernelConfig cfg = default_config();
    const KernelConfig base = cfg;

    for (const auto& key : doc.top_order) {
        const std::string& value = doc.top.at(key);
        if (key == "stream_output") cfg.stream_output = parse_bool(key, value);
        else if (key == "per_execution_timeout") cfg.per_execution_timeout = parse_int(key, value);
        else if (key == "max_chars_per_file") cfg.max_chars_per_file = parse_int(key, value);
        else if (key == "max_num_tutorials") cfg.max_num_tutorials = parse_int(key, value);
        else if (key == "max_user_input_length") cfg.max_user_input_length = parse_int(key, value);
        else if (key == "max_error_message_length")
            cfg.max_error_message_length = parse_int(key, value);
        else if (key == "max_tutorial_length") cfg.max_tutorial_length = parse_int(key, value);
        else if (key == "create_venv") cfg.create_venv = parse_bool(key, value);
        else if (key == "condense_tutorials") cfg.condense_tutorials = parse_bool(key, value);
        else if (key == "max_iterations") cfg.max_iterations = parse_int(key, value);
        else if (key == "install_packages") cfg.install_packages = parse_bool(key, value);
        else throw ConfigError("unknown config key: \"" + key + "\"");
    }

    // The shared block is applied before any role block so that explicit
    // role keys always win regardless of their order in the document.
    if (auto it = doc.blocks.find("llm"); it != doc.blocks.end()) {
        for (const auto& [key, value] : it->second) {
            if (!set_role_key(cfg.llm, key, value)) {
                throw ConfigError("unknown config key: \"llm." + key + "\"");
            }
            // Propagate to roles that inherited this key from the base block.
            for (auto [role, defaults] : {std::pair{&cfg.coder, &base.coder},
                                          std::pair{&cfg.planner, &base.planner},
                                          std::pair{&cfg.file_reader, &base.file_reader}}) {
                if (role_inherits(*defaults, base.llm, key)) {
                    set_role_key(*role, key, value);
                }
            }
        }
    }

    for (const auto& [block, entries] : doc.blocks) {
        if (block == "llm") {
            continue;
        } else if (block == "coder" || block == "planner" || block == "file_reader") {
            LlmRoleConfig& role = block == "coder" ? cfg.coder
                                : block == "planner" ? cfg.planner
                                                     : cfg.file_reader;
            for (const auto& [key, value] : entries) {
                if (!set_role_key(role, key, value)) {
                    throw ConfigError("unknown config key: \"" + block + "." + key + "\"");
                }
            }
        } else if (block == "perception") {
            for (const auto& [key, value] : entries) {
                if (key == "max_group_size") cfg.max_group_size = parse_int(key, value);
                else if (key == "always_generate_readers")
                    cfg.always_generate_readers = parse_bool(key, value);
                else throw ConfigError("unknown config key: \"perception." + key + "\"");
            }
        } else if (block == "semantic_memory") {
            for (const auto& [key, value] : entries) {
                if (key == "enabled") cfg.semantic_memory_enabled = parse_bool(key, value);
                else if (key == "indexing") cfg.retrieval_indexing = parse_indexing(value);
                else throw ConfigError("unknown config key: \"semantic_memory." + key + "\"");
            }
        } else if (block == "episodic_memory") {
            for (const auto& [key, value] : entries) {
                if (key == "mode") cfg.episodic_mode = parse_episodic_mode(value);
                else throw ConfigError("unknown config key: \"episodic_memory." + key + "\"");
            }
        } else {
            throw ConfigError("unknown config block: \"" + block + "\"");
        }
    }

    if (cfg.per_execution_timeout <= 0) throw ConfigError("per_execution_timeout must be positive");
    if (cfg.max_iterations <= 0) throw ConfigError("max_iterations must be positive");
    if (cfg.max_group_size < 1) throw ConfigError("perception.max_group_size must be >= 1");
    for (const auto* role : {&cfg.llm, &cfg.coder, &cfg.planner, &cfg.file_reader}) {
        if (role->temperature < 0.0 || role->temperature > 1.0) {
            throw ConfigError("temperature must be within [0,1]");
        }
        if (role->max_tokens <= 0) throw ConfigError("max_tokens must be positive");
    }
    return cfg;
}

KernelConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return parse_config_text(buffer.str());
}

std::string serialize_config(const KernelConfig& cfg) {
    std::ostringstream out;
    out << "stream_output: " << fmt_bool(cfg.stream_output) << "\n";
    out << "per_execution_timeout: " << cfg.per_execution_timeout << "\n\n";
    out << "max_chars_per_file: " << cfg.max_chars_per_file << "\n";
    out << "max_num_tutorials: " << cfg.max_num_tutorials << "\n";
    out << "max_user_input_length: " << cfg.max_user_input_length << "\n";
    out << "max_error_message_length: " << cfg.max_error_message_length << "\n";
    out << "max_tutorial_length: " << cfg.max_tutorial_length << "\n";
    out << "create_venv: " << fmt_bool(cfg.create_venv) << "\n";
    out << "condense_tutorials: " << fmt_bool(cfg.condense_tutorials) << "\n\n";
    out << "max_iterations: " << cfg.max_iterations << "\n";
    out << "install_packages: " << fmt_bool(cfg.install_packages) << "\n\n";
    emit_role_block(out, "llm", cfg.llm, true);
    out << "\n";
    emit_role_block(out, "coder", cfg.coder, false);
    out << "\n";
    emit_role_block(out, "planner", cfg.planner, false);
    out << "\n";
    emit_role_block(out, "file_reader", cfg.file_reader, false);
    out << "\n";
    out << "perception:\n";
    out << "  max_group_size: " << cfg.max_group_size << "\n";
    out << "  always_generate_readers: " << fmt_bool(cfg.always_generate_readers) << "\n\n";
    out << "semantic_memory:\n";
    out << "  enabled: " << fmt_bool(cfg.semantic_memory_enabled) << "\n";
    out << "  indexing: "
        << (cfg.retrieval_indexing == RetrievalIndexing::BySummary ? "by_summary" : "by_title_only")
        << "\n\n";
    out << "episodic_memory:\n";
    out << "  mode: ";
    switch (cfg.episodic_mode) {
        case EpisodicMode::Default: out << "default"; break;
        case EpisodicMode::WithoutFix: out << "without_fix"; break;
        case EpisodicMode::WithoutBoth: out << "without_both"; break;
        case EpisodicMode::MultiTurn: out << "multi_turn"; break;
    }
    out << "\n";
    return out.str();
}

}  // namespace mlzero
