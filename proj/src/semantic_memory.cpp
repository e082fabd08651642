#include "mlzero/semantic_memory.hpp"

#include <cctype>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include "mlzero/strings.hpp"

namespace mlzero {

namespace fs = std::filesystem;

namespace {

constexpr size_t kChunkSize = 8192;
constexpr size_t kSummaryWordCap = 100;

std::string slugify(const std::string& title) {
    std::string slug;
    for (char c : title) {
        if (std::isalnum(static_cast<unsigned char>(c))) {
            slug += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
        } else if (!slug.empty() && slug.back() != '-') {
            slug += '-';
        }
    }
    while (!slug.empty() && slug.back() == '-') slug.pop_back();
    return slug.empty() ? "document" : slug;
}

std::string single_line(const std::string& text) {
    std::string out = replace_all(text, "\r", "");
    out = replace_all(out, "\n", " ");
    return trim(out);
}

std::string request_summary(const std::string& condensed, LlmBackend& backend) {
    LlmRequest request;
    request.role_name = "planner";
    request.turns = {{"user", build_summarization_prompt(condensed)}};
    return trim(backend.complete(request).text);
}

}  // namespace

std::string build_condensation_prompt(const std::string& chunk, size_t index,
                                      size_t chunk_count) {
    std::string context = index > 0 ? "This is a continuation of the previous chunk. " : "";
    std::ostringstream out;
    out << context
        << "Condense this portion of the tutorial while preserving\n"
           "essential implementation details, code samples, and key concepts.\n"
           "Focus on:\n"
           "\n"
           "1. Implementation details and techniques\n"
           "2. Code snippets with necessary context\n"
           "3. Critical configurations and parameters\n"
           "4. Important warnings and best practices\n"
           "\n"
           "Chunk "
        << (index + 1) << "/" << chunk_count << ":\n"
        << chunk
        << "\n"
           "\n"
           "Provide the condensed content in markdown format.";
    return out.str();
}

std::string build_summarization_prompt(const std::string& condensed_content) {
    std::string text =
        "Generate a concise summary (within 100 words) of this tutorial\n"
        "that helps a code generation LLM understand:\n"
        "1. What specific implementation knowledge or techniques it can find\n"
        "in this tutorial\n"
        "2. What coding tasks this tutorial can help with\n"
        "3. Key features or functionalities covered\n"
        "\n"
        "Tutorial content:\n"
        "{condensed_content}\n"
        "\n"
        "Provide the summary in a single paragraph starting with\n"
        "\"Summary: \".";
    return replace_all(text, "{condensed_content}", condensed_content);
}

std::string build_retrieval_prompt(const RetrievalQuery& query,
                                   const std::vector<KnowledgeDocument>& kb,
                                   RetrievalIndexing indexing) {
    std::string context = "Task: " + query.task_prompt + "\n" +
                          "Data: " + query.data_prompt + "\n" +
                          "User Question: " + query.user_prompt + "\n" +
                          "Previous Error: " + query.error_prompt;

    std::vector<std::string> entries;
    for (size_t i = 0; i < kb.size(); ++i) {
        std::string entry = std::to_string(i + 1) + ". " + kb[i].title;
        if (indexing == RetrievalIndexing::BySummary) entry += "\n" + kb[i].summary;
        entries.push_back(entry);
    }

    std::string text =
        "Given the following context and list of tutorials with their summaries, select the "
        "{max_num_tutorials} most relevant tutorials for helping with this task. Consider how "
        "well each tutorial's title and summary match the task, data, user question, and any "
        "errors.\n"
        "\n"
        "Context:\n"
        "{context}\n"
        "\n"
        "Available Tutorials:\n"
        "{tutorials_info}\n"
        "\n"
        "IMPORTANT: Respond ONLY with the numbers of the selected tutorials (up to "
        "{max_num_tutorials}) separated by commas. For example: \"1,3,4\" or \"2,5\" or just "
        "\"1\" if only one is relevant.\n"
        "DO NOT include any other text, explanation, or formatting in your response.";
    text = replace_all(text, "{max_num_tutorials}", std::to_string(query.max_num_tutorials));
    text = replace_all(text, "{context}", context);
    text = replace_all(text, "{tutorials_info}", join(entries, "\n\n"));
    return text;
}

std::vector<std::string> chunk_text(const std::string& text, size_t chunk_size) {
    if (chunk_size == 0) throw std::invalid_argument("chunk_size must be positive");
    if (text.size() <= chunk_size) return {text};

    // Paragraphs delimited by blank lines; delimiters restored on join.
    std::vector<std::string> paragraphs;
    size_t start = 0;
    while (start < text.size()) {
        size_t sep = text.find("\n\n", start);
        if (sep == std::string::npos) {
            paragraphs.push_back(text.substr(start));
            break;
        }
        paragraphs.push_back(text.substr(start, sep - start));
        start = sep + 2;
    }

    std::vector<std::string> chunks;
    std::string current;
    auto flush = [&]() {
        if (!current.empty()) {
            chunks.push_back(current);
            current.clear();
        }
    };
    for (const auto& paragraph : paragraphs) {
        if (paragraph.size() > chunk_size) {
            flush();
            for (size_t at = 0; at < paragraph.size(); at += chunk_size) {
                chunks.push_back(paragraph.substr(at, chunk_size));
            }
            continue;
        }
        size_t joined = current.empty() ? paragraph.size() : current.size() + 2 + paragraph.size();
        if (joined > chunk_size) flush();
        if (!current.empty()) current += "\n\n";
        current += paragraph;
    }
    flush();
    if (chunks.empty()) chunks.push_back("");
    return chunks;
}

std::string truncate_at_section_boundary(const std::string& text, size_t max_len) {
    if (max_len == 0) throw std::invalid_argument("max_len must be positive");
    if (text.size() <= max_len) return text;

    size_t best_cut = 0;
    size_t offset = 0;
    for (const std::string& line : split_lines(text)) {
        if (offset > 0 && offset <= max_len && starts_with(line, "#")) {
            best_cut = offset;
        }
        offset += line.size() + 1;
    }
    if (best_cut > 0) return text.substr(0, best_cut);
    return text.substr(0, max_len);
}

std::string extract_title(const std::string& raw_tutorial, const std::string& fallback) {
    for (const std::string& line : split_lines(raw_tutorial)) {
        std::string stripped = trim(line);
        if (starts_with(stripped, "#")) {
            size_t at = 0;
            while (at < stripped.size() && stripped[at] == '#') ++at;
            std::string title = trim(stripped.substr(at));
            if (!title.empty()) return title;
        }
    }
    return fallback;
}

KnowledgeDocument build_knowledge_document(const std::string& raw_tutorial,
                                           const std::string& title,
                                           const std::string& tool_name, LlmBackend& backend,
                                           const KernelConfig& cfg) {
    if (raw_tutorial.empty()) throw std::invalid_argument("tutorial text is empty");

    KnowledgeDocument doc;
    doc.tool_name = tool_name;
    doc.title = title;

    std::string body;
    if (cfg.condense_tutorials) {
        std::vector<std::string> chunks = chunk_text(raw_tutorial, kChunkSize);
        std::vector<std::string> condensed;
        for (size_t i = 0; i < chunks.size(); ++i) {
            LlmRequest request;
            request.role_name = "planner";
            request.turns = {{"user", build_condensation_prompt(chunks[i], i, chunks.size())}};
            condensed.push_back(trim(backend.complete(request).text));
        }
        body = join(condensed, "\n\n");
    } else {
        body = raw_tutorial;
    }
    doc.condensed_body =
        truncate_at_section_boundary(body, static_cast<size_t>(cfg.max_tutorial_length));

    std::string summary = request_summary(doc.condensed_body, backend);
    if (!starts_with(summary, "Summary: ")) {
        summary = request_summary(doc.condensed_body, backend);
        if (!starts_with(summary, "Summary: ")) {
            throw ParseError("summary does not start with \"Summary: \" after retry");
        }
    }
    if (count_words(summary) > kSummaryWordCap) {
        summary = first_n_words(summary, kSummaryWordCap);
    }
    doc.summary = summary;
    return doc;
}

std::vector<KnowledgeDocument> retrieve_documents(const RetrievalQuery& query,
                                                  const std::vector<KnowledgeDocument>& kb,
                                                  LlmBackend& backend,
                                                  RetrievalIndexing indexing) {
    if (kb.empty() || query.max_num_tutorials <= 0) return {};

    LlmRequest request;
    request.role_name = "planner";
    request.turns = {{"user", build_retrieval_prompt(query, kb, indexing)}};
    std::string response = backend.complete(request).text;

    std::vector<size_t> indices;
    std::set<size_t> seen;
    bool found_integer = false;
    size_t at = 0;
    while (at < response.size()) {
        if (!std::isdigit(static_cast<unsigned char>(response[at]))) {
            ++at;
            continue;
        }
        size_t end = at;
        while (end < response.size() && std::isdigit(static_cast<unsigned char>(response[end]))) {
            ++end;
        }
        std::string digits = response.substr(at, end - at);
        at = end;
        found_integer = true;
        size_t value = 0;
        try {
            value = std::stoul(digits);
        } catch (const std::out_of_range&) {
            value = 0;
        }
        if (value < 1 || value > kb.size()) {
            std::cerr << "warning: retrieval index " << digits << " out of range\n";
            continue;
        }
        if (seen.insert(value).second) indices.push_back(value);
    }
    if (!found_integer) {
        throw ParseError("retrieval response contains no tutorial number: \"" +
                         truncate_middle(response, 200) + "\"");
    }

    std::vector<KnowledgeDocument> selected;
    for (size_t index : indices) {
        if (selected.size() >= static_cast<size_t>(query.max_num_tutorials)) break;
        selected.push_back(kb[index - 1]);
    }
    return selected;
}

std::string save_knowledge_document(const std::string& kb_dir, const KnowledgeDocument& doc) {
    fs::path dir = fs::path(kb_dir) / doc.tool_name;
    fs::create_directories(dir);
    fs::path path = dir / (slugify(doc.title) + ".md");
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << "TITLE: " << single_line(doc.title) << "\n";
    out << "SUMMARY: " << single_line(doc.summary) << "\n";
    out << "\n";
    out << doc.condensed_body;
    return path.string();
}

std::vector<KnowledgeDocument> load_knowledge_base(const std::string& kb_dir) {
    return load_knowledge_base(kb_dir, "");
}

std::vector<KnowledgeDocument> load_knowledge_base(const std::string& kb_dir,
                                                   const std::string& tool_name) {
    std::vector<KnowledgeDocument> kb;
    std::error_code ec;
    if (!fs::is_directory(kb_dir, ec)) return kb;

    std::vector<fs::path> files;
    for (const auto& tool_entry : fs::directory_iterator(kb_dir)) {
        if (!tool_entry.is_directory()) continue;
        std::string tool = tool_entry.path().filename().string();
        if (!tool_name.empty() && tool != tool_name) continue;
        for (const auto& doc_entry : fs::directory_iterator(tool_entry.path())) {
            if (doc_entry.is_regular_file() && doc_entry.path().extension() == ".md") {
                files.push_back(doc_entry.path());
            }
        }
    }
    std::sort(files.begin(), files.end());

    for (const auto& path : files) {
        std::ifstream in(path, std::ios::binary);
        std::ostringstream buffer;
        buffer << in.rdbuf();
        std::string text = buffer.str();

        KnowledgeDocument doc;
        doc.tool_name = path.parent_path().filename().string();
        doc.source_path = path.string();
        std::vector<std::string> lines = split_lines(text);
        size_t body_start = 0;
        for (size_t i = 0; i < lines.size(); ++i) {
            if (starts_with(lines[i], "TITLE: ")) {
                doc.title = lines[i].substr(7);
            } else if (starts_with(lines[i], "SUMMARY: ")) {
                doc.summary = lines[i].substr(9);
            } else if (trim(lines[i]).empty()) {
                body_start = i + 1;
                break;
            }
        }
        std::vector<std::string> body(lines.begin() + static_cast<long>(body_start), lines.end());
        doc.condensed_body = join(body, "\n");
        if (doc.title.empty()) doc.title = path.stem().string();
        kb.push_back(std::move(doc));
    }
    return kb;
}

}  // namespace mlzero
