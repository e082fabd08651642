#include "mlzero/episodic_memory.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "mlzero/strings.hpp"

namespace mlzero {

std::string build_error_analysis_prompt(const std::string& task_prompt,
                                        const std::string& data_prompt,
                                        const std::string& user_prompt,
                                        const std::string& python_code,
                                        const std::string& bash_script,
                                        const std::string& retrieved_tutorials,
                                        const std::string& error_message) {
    std::ostringstream out;
    out << task_prompt << "\n"
        << data_prompt << "\n"
        << user_prompt << "\n"
        << "Previous Python Code:\n"
        << python_code << "\n"
        << "Previous Bash Script to Execute the Python Code:\n"
        << bash_script << "\n"
        << retrieved_tutorials << "\n"
        << "Error Message:\n"
        << error_message << "\n"
        << "Analyze the error message and context provided. Your response MUST contain "
           "exactly two short paragraphs as follows:\n"
           "\n"
           "ERROR SUMMARY: Provide a brief, technical description of the error in 1-3 "
           "sentences. Focus only on identifying the root cause and affected component "
           "without background explanations.\n"
           "\n"
           "SUGGESTED FIX: Offer specific debugging directions in 1-3 sentences. Do not "
           "include actual code or commands, only tactical debugging guidance.\n"
           "\n"
           "Each paragraph must be concise (maximum 3 sentences). Do not include general "
           "advice, explanations beyond the direct debugging strategy, or any additional "
           "paragraphs.";
    return out.str();
}

ErrorContext analyze_error(const std::string& task_prompt, const std::string& data_prompt,
                           const std::string& user_prompt, const std::string& python_code,
                           const std::string& bash_script,
                           const std::string& retrieved_tutorials,
                           const std::string& error_message, LlmBackend& backend,
                           EpisodicMode mode) {
    if (error_message.empty()) throw std::invalid_argument("error message is empty");

    LlmRequest request;
    request.role_name = "planner";
    request.turns = {{"user", build_error_analysis_prompt(task_prompt, data_prompt, user_prompt,
                                                          python_code, bash_script,
                                                          retrieved_tutorials, error_message)}};
    auto parse = [](const std::string& response) {
        auto fields = parse_labeled_fields(response, {"ERROR SUMMARY", "SUGGESTED FIX"});
        ErrorContext ctx;
        ctx.error_summary = fields.at("ERROR SUMMARY");
        ctx.suggested_fix = fields.at("SUGGESTED FIX");
        return ctx;
    };

    ErrorContext ctx;
    try {
        ctx = parse(backend.complete(request).text);
    } catch (const ParseError&) {
        ctx = parse(backend.complete(request).text);  // one repair retry
    }
    if (mode == EpisodicMode::WithoutFix) ctx.suggested_fix.clear();
    return ctx;
}

EpisodicStore::EpisodicStore(std::string jsonl_path) : path_(std::move(jsonl_path)) {}

void EpisodicStore::record_iteration(const IterationRecord& record) {
    if (record.t != static_cast<int>(records_.size())) {
        throw std::invalid_argument("iteration index " + std::to_string(record.t) +
                                    " does not extend store of size " +
                                    std::to_string(records_.size()));
    }
    records_.push_back(record);
    if (path_.empty()) return;

    nlohmann::json line = {
        {"t", record.t},
        {"code_path", record.code_path},
        {"script_path", record.script_path},
        {"stdout_path", record.stdout_path},
        {"stderr_path", record.stderr_path},
        {"return_code", record.return_code},
        {"wall_seconds", record.wall_seconds},
        {"retrieved_titles", record.retrieved_titles},
        {"executer_analysis", record.executer_analysis},
    };
    if (record.error_context) {
        line["error_summary"] = record.error_context->error_summary;
        if (!record.error_context->suggested_fix.empty()) {
            line["suggested_fix"] = record.error_context->suggested_fix;
        }
    }
    std::ofstream out(path_, std::ios::app | std::ios::binary);
    if (!out) throw std::runtime_error("cannot append to " + path_);
    out << line.dump() << "\n";
}

std::string EpisodicStore::error_context_for(size_t t) const {
    if (t == 0 || t > records_.size()) return "";
    const IterationRecord& prev = records_[t - 1];
    if (!prev.error_context) return "";
    std::string block = "ERROR SUMMARY: " + prev.error_context->error_summary;
    if (!prev.error_context->suggested_fix.empty()) {
        block += "\n\nSUGGESTED FIX: " + prev.error_context->suggested_fix;
    }
    return block;
}

EpisodicStore EpisodicStore::load(const std::string& jsonl_path) {
    EpisodicStore store(jsonl_path);
    std::ifstream in(jsonl_path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + jsonl_path);
    std::string line;
    while (std::getline(in, line)) {
        if (trim(line).empty()) continue;
        nlohmann::json node = nlohmann::json::parse(line);
        IterationRecord record;
        record.t = node.at("t").get<int>();
        record.code_path = node.value("code_path", "");
        record.script_path = node.value("script_path", "");
        record.stdout_path = node.value("stdout_path", "");
        record.stderr_path = node.value("stderr_path", "");
        record.return_code = node.value("return_code", 0);
        record.wall_seconds = node.value("wall_seconds", 0.0);
        record.retrieved_titles = node.value("retrieved_titles", std::vector<std::string>{});
        record.executer_analysis = node.value("executer_analysis", "");
        if (node.contains("error_summary")) {
            ErrorContext ctx;
            ctx.error_summary = node["error_summary"].get<std::string>();
            ctx.suggested_fix = node.value("suggested_fix", "");
            record.error_context = ctx;
        }
        store.records_.push_back(std::move(record));
    }
    return store;
}

}  // namespace mlzero
