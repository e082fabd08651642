#include "mlzero/perception.hpp"

#include <atomic>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "mlzero/strings.hpp"

namespace mlzero {

namespace fs = std::filesystem;

namespace {

std::vector<std::string> split_path(const std::string& path) {
    std::vector<std::string> parts;
    std::string cur;
    for (char c : path) {
        if (c == '/') {
            if (!cur.empty()) parts.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    if (!cur.empty()) parts.push_back(cur);
    return parts;
}

std::string python_list(const std::vector<std::string>& items) {
    std::string out = "[";
    for (size_t i = 0; i < items.size(); ++i) {
        if (i) out += ", ";
        if (items[i] == "...") {
            out += "...";
        } else {
            out += "'" + items[i] + "'";
        }
    }
    return out + "]";
}

std::string file_size_line(uintmax_t bytes) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "File Size: %.2f MB",
                  static_cast<double>(bytes) / (1024.0 * 1024.0));
    return buf;
}

// Keeps the report within the configured cap, leaving room for the
// truncation marker when cutting is needed.
std::string clamp_report(const std::string& text, int cap) {
    if (cap <= 0 || text.size() <= static_cast<size_t>(cap)) return text;
    if (cap > 32) return truncate_middle(text, static_cast<size_t>(cap) - 16);
    return text.substr(0, static_cast<size_t>(cap));
}

std::vector<std::string> split_delimited(const std::string& line, char sep) {
    std::vector<std::string> out;
    std::string cur;
    bool quoted = false;
    for (size_t i = 0; i < line.size(); ++i) {
        char c = line[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    cur += '"';
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                cur += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == sep) {
            out.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    out.push_back(cur);
    return out;
}

std::string read_head(const std::string& path, size_t max_bytes) {
    std::ifstream in(path, std::ios::binary);
    std::string data(max_bytes, '\0');
    in.read(data.data(), static_cast<std::streamsize>(max_bytes));
    data.resize(static_cast<size_t>(in.gcount()));
    return data;
}

uint16_t read_u16(const unsigned char* p, bool big) {
    return big ? static_cast<uint16_t>(p[0] << 8 | p[1])
               : static_cast<uint16_t>(p[1] << 8 | p[0]);
}

uint32_t read_u32(const unsigned char* p, bool big) {
    return big ? (static_cast<uint32_t>(p[0]) << 24) | (p[1] << 16) | (p[2] << 8) | p[3]
               : (static_cast<uint32_t>(p[3]) << 24) | (p[2] << 16) | (p[1] << 8) | p[0];
}

struct ImageHeader {
    std::string format;
    long width = 0;
    long height = 0;
};

std::optional<ImageHeader> parse_image_header(const std::string& head) {
    const auto* p = reinterpret_cast<const unsigned char*>(head.data());
    size_t n = head.size();
    if (n >= 24 && std::memcmp(p, "\x89PNG\r\n\x1a\n", 8) == 0) {
        return ImageHeader{"PNG", read_u32(p + 16, true), read_u32(p + 20, true)};
    }
    if (n >= 10 && (std::memcmp(p, "GIF87a", 6) == 0 || std::memcmp(p, "GIF89a", 6) == 0)) {
        return ImageHeader{"GIF", read_u16(p + 6, false), read_u16(p + 8, false)};
    }
    if (n >= 26 && p[0] == 'B' && p[1] == 'M') {
        long h = static_cast<int32_t>(read_u32(p + 22, false));
        return ImageHeader{"BMP", static_cast<int32_t>(read_u32(p + 18, false)),
                           h < 0 ? -h : h};
    }
    if (n >= 4 && p[0] == 0xFF && p[1] == 0xD8) {
        size_t i = 2;
        while (i + 3 < n) {
            if (p[i] != 0xFF) break;
            unsigned char marker = p[i + 1];
            if (marker == 0xFF) {
                ++i;
                continue;
            }
            if (marker == 0xD8 || (marker >= 0xD0 && marker <= 0xD7)) {
                i += 2;
                continue;
            }
            if (i + 3 >= n) break;
            size_t len = read_u16(p + i + 2, true);
            bool sof = marker >= 0xC0 && marker <= 0xCF && marker != 0xC4 &&
                       marker != 0xC8 && marker != 0xCC;
            if (sof && i + 9 < n) {
                return ImageHeader{"JPEG", read_u16(p + i + 7, true), read_u16(p + i + 5, true)};
            }
            if (marker == 0xDA) break;
            i += 2 + len;
        }
        return ImageHeader{"JPEG", 0, 0};
    }
    bool tiff_le = n >= 8 && std::memcmp(p, "II*\0", 4) == 0;
    bool tiff_be = n >= 8 && std::memcmp(p, "MM\0*", 4) == 0;
    if (tiff_le || tiff_be) {
        bool big = tiff_be;
        ImageHeader header{"TIFF", 0, 0};
        size_t ifd = read_u32(p + 4, big);
        if (ifd + 2 <= n) {
            size_t count = read_u16(p + ifd, big);
            for (size_t e = 0; e < count; ++e) {
                size_t at = ifd + 2 + e * 12;
                if (at + 12 > n) break;
                uint16_t tag = read_u16(p + at, big);
                uint16_t type = read_u16(p + at + 2, big);
                long value = type == 3 ? read_u16(p + at + 8, big) : read_u32(p + at + 8, big);
                if (tag == 256) header.width = value;
                if (tag == 257) header.height = value;
            }
        }
        return header;
    }
    return std::nullopt;
}

enum class FileKind { Csv, Tsv, Json, Jsonl, Text, Image, Unknown };

FileKind classify_by_extension(const std::string& path) {
    std::string ext = to_lower(file_extension(path));
    if (ext == ".csv") return FileKind::Csv;
    if (ext == ".tsv") return FileKind::Tsv;
    if (ext == ".json") return FileKind::Json;
    if (ext == ".jsonl" || ext == ".ndjson") return FileKind::Jsonl;
    static const std::set<std::string> text_exts = {
        ".txt", ".md", ".log", ".rst", ".yaml", ".yml", ".py", ".sh",
        ".html", ".htm", ".xml", ".cfg", ".ini", ".toml"};
    if (text_exts.count(ext)) return FileKind::Text;
    static const std::set<std::string> image_exts = {
        ".png", ".jpg", ".jpeg", ".gif", ".bmp", ".tiff", ".tif"};
    if (image_exts.count(ext)) return FileKind::Image;
    return FileKind::Unknown;
}

std::string tabular_report(const std::string& path, uintmax_t size, char sep, int max_chars) {
    std::string head = read_head(path, 64 * 1024);
    std::vector<std::string> lines = split_lines(head);
    std::ostringstream out;
    out << file_size_line(size);
    if (lines.empty() || trim(lines[0]).empty()) return out.str();

    std::vector<std::string> columns = split_delimited(lines[0], sep);
    if (columns.size() > 20) {
        std::vector<std::string> shown(columns.begin(), columns.begin() + 10);
        shown.push_back("...");
        shown.insert(shown.end(), columns.end() - 10, columns.end());
        out << "\nColumn names (" << columns.size() << " total): " << python_list(shown);
    } else {
        out << "\nColumn names: " << python_list(columns);
    }
    out << "\nFirst rows:";
    for (size_t i = 1; i < lines.size() && i <= 3; ++i) {
        std::string row = lines[i];
        if (row.size() > 200) row = row.substr(0, 200) + "...";
        out << "\n" << row;
    }
    return clamp_report(out.str(), max_chars);
}

std::string text_report(const std::string& path, uintmax_t size, int max_chars) {
    std::ostringstream out;
    out << file_size_line(size);
    std::string head = read_head(path, static_cast<size_t>(max_chars));
    if (!head.empty()) {
        out << "\nFirst few lines (up to " << max_chars << " characters):\n" << head;
    }
    return clamp_report(out.str(), max_chars);
}

std::string json_report(const std::string& path, uintmax_t size, int max_chars) {
    std::string head = read_head(path, 256 * 1024);
    std::ostringstream out;
    out << file_size_line(size);
    nlohmann::json doc = nlohmann::json::parse(head, nullptr, false);
    if (doc.is_discarded()) {
        if (!head.empty()) {
            out << "\nFirst few lines (up to " << max_chars << " characters):\n" << head;
        }
        return clamp_report(out.str(), max_chars);
    }
    if (doc.is_object()) {
        std::vector<std::string> keys;
        for (auto it = doc.begin(); it != doc.end(); ++it) keys.push_back(it.key());
        out << "\nJSON object with " << keys.size() << " keys";
        out << "\nKeys: " << python_list(keys);
    } else if (doc.is_array()) {
        out << "\nJSON array with " << doc.size() << " elements";
        if (!doc.empty()) out << "\nFirst element: " << doc[0].dump();
    } else {
        out << "\nJSON value: " << doc.dump();
    }
    return clamp_report(out.str(), max_chars);
}

std::string jsonl_report(const std::string& path, uintmax_t size, int max_chars) {
    std::string head = read_head(path, 64 * 1024);
    std::vector<std::string> lines = split_lines(head);
    std::ostringstream out;
    out << file_size_line(size);
    if (!lines.empty()) {
        out << "\nFirst records:";
        for (size_t i = 0; i < lines.size() && i < 3; ++i) {
            std::string row = lines[i];
            if (row.size() > 300) row = row.substr(0, 300) + "...";
            out << "\n" << row;
        }
    }
    return clamp_report(out.str(), max_chars);
}

std::string image_report(const std::string& path, uintmax_t size, int max_chars) {
    std::ostringstream out;
    out << file_size_line(size);
    if (auto header = parse_image_header(read_head(path, 64 * 1024))) {
        out << "\nImage Format: " << header->format;
        if (header->width > 0 && header->height > 0) {
            out << "\nImage Size: (" << header->width << ", " << header->height << ")";
        }
    }
    return clamp_report(out.str(), max_chars);
}

bool looks_binary(const std::string& head) {
    return head.find('\0') != std::string::npos;
}

FilePerceptionReport builtin_report(const std::string& path, FileKind kind,
                                    const PerceptionLimits& limits) {
    FilePerceptionReport report;
    report.file_path = path;
    report.produced_by = FilePerceptionReport::Source::BuiltinReader;
    std::error_code ec;
    uintmax_t size = fs::file_size(path, ec);
    if (ec) {
        report.report_text = "Error reading file: " + ec.message();
        report.failed = true;
        return report;
    }
    if (size == 0) {
        report.report_text = file_size_line(0);
        return report;
    }
    int cap = limits.max_chars_per_file;
    switch (kind) {
        case FileKind::Csv: report.report_text = tabular_report(path, size, ',', cap); break;
        case FileKind::Tsv: report.report_text = tabular_report(path, size, '\t', cap); break;
        case FileKind::Json: report.report_text = json_report(path, size, cap); break;
        case FileKind::Jsonl: report.report_text = jsonl_report(path, size, cap); break;
        case FileKind::Text: report.report_text = text_report(path, size, cap); break;
        case FileKind::Image: report.report_text = image_report(path, size, cap); break;
        case FileKind::Unknown: {
            std::string head = read_head(path, 4096);
            report.report_text = looks_binary(head) ? file_size_line(size)
                                                    : text_report(path, size, cap);
            break;
        }
    }
    return report;
}

std::atomic<unsigned> reader_sequence{0};

}  // namespace

std::string file_extension(const std::string& path) {
    size_t slash = path.find_last_of('/');
    std::string name = slash == std::string::npos ? path : path.substr(slash + 1);
    size_t lead = 0;
    while (lead < name.size() && name[lead] == '.') ++lead;
    size_t dot = name.find_last_of('.');
    if (dot == std::string::npos || dot < lead) return "";
    return name.substr(dot);
}

std::string FileGroup::pattern_string() const {
    if (pattern.empty()) return "";
    std::string ext = pattern.back();
    std::vector<std::string> folders(pattern.begin(), pattern.end() - 1);
    if (folders.empty()) return "*" + ext;
    return join(folders, "/") + "/*" + ext;
}

const std::string& FileGroup::example_member() const {
    return members.front();  // members are sorted
}

std::vector<FileGroup> group_files(const std::vector<std::string>& files, int delta) {
    if (delta < 1) throw std::invalid_argument("delta must be >= 1");
    std::map<size_t, std::set<std::string>> depth_folders;
    std::vector<std::vector<std::string>> split;
    split.reserve(files.size());
    for (const auto& file : files) {
        std::vector<std::string> parts = split_path(file);
        if (parts.empty() || file.empty() || file.back() == '/') {
            throw std::invalid_argument("path has no filename component: \"" + file + "\"");
        }
        for (size_t depth = 0; depth + 1 < parts.size(); ++depth) {
            depth_folders[depth].insert(parts[depth]);
        }
        split.push_back(std::move(parts));
    }

    std::map<std::vector<std::string>, FileGroup> buckets;
    for (size_t i = 0; i < files.size(); ++i) {
        const auto& parts = split[i];
        std::vector<std::string> pattern;
        for (size_t depth = 0; depth + 1 < parts.size(); ++depth) {
            const auto& names = depth_folders[depth];
            pattern.push_back(names.size() <= static_cast<size_t>(delta) ? parts[depth] : "*");
        }
        pattern.push_back(file_extension(parts.back()));
        FileGroup& group = buckets[pattern];
        group.pattern = pattern;
        group.members.push_back(files[i]);
    }

    std::vector<FileGroup> groups;
    groups.reserve(buckets.size());
    for (auto& [pattern, group] : buckets) {
        std::sort(group.members.begin(), group.members.end());
        groups.push_back(std::move(group));
    }
    return groups;
}

std::vector<std::string> select_representatives(const FileGroup& group, int delta) {
    if (group.members.empty()) throw std::invalid_argument("empty file group");
    if (group.members.size() <= static_cast<size_t>(delta)) return group.members;
    return {group.example_member()};
}

std::string build_file_perception_prompt(const std::string& file_path, int max_chars,
                                         bool details) {
    std::string item3 = details ? "- Count total rows and provide basic statistics"
                                : "- No additional info needed.";
    std::string item6 = details ? "6. For other files, provide appropriate summary"
                                : "6. For binary or other files, provide only file size.";
    std::string text =
        "Generate Python code to read and analyze the file: \"{file_path}\"\n"
        "\n"
        "Your code should:\n"
        "1. Import all modules used (e.g. import os).\n"
        "2. Use appropriate libraries based on file type (pandas for tabular data, etc.)\n"
        "3. For tabular files (csv, excel, parquet, etc.):\n"
        "   - Display column names. If there are more than 20 columns, only display the first "
        "and last 10.\n"
        "   - Show first 2-3 rows with truncated cell content\n"
        "   - Do not show additional index column if it's not in the original table\n"
        "   - If failed to open the file, treat it as text file\n"
        "    {item3}\n"
        "4. For text files:\n"
        "   - Display first few lines (up to {max_chars} characters)\n"
        "5. For compressed tabular or text files, show its decompressed content as described.\n"
        "{item6}\n"
        "7. Keep the total output under {max_chars} characters\n"
        "\n"
        "Return ONLY the Python code, no explanations or markdown. The code should be "
        "self-contained and executable on its own.";
    text = replace_all(text, "{file_path}", file_path);
    text = replace_all(text, "{max_chars}", std::to_string(max_chars));
    text = replace_all(text, "{item3}", item3);
    text = replace_all(text, "{item6}", item6);
    return text;
}

FilePerceptionReport perceive_file(const std::string& path, LlmBackend* backend,
                                   Sandbox* sandbox, const PerceptionLimits& limits) {
    FileKind kind = classify_by_extension(path);
    bool want_generated = limits.always_generate_readers || kind == FileKind::Unknown;
    if (!want_generated || backend == nullptr || sandbox == nullptr) {
        return builtin_report(path, kind, limits);
    }

    LlmRequest request;
    request.role_name = "file_reader";
    request.turns = {{"user", build_file_perception_prompt(path, limits.max_chars_per_file,
                                                           limits.details)}};
    request.temperature = limits.temperature;
    request.max_tokens = limits.max_tokens;
    std::string code = backend->complete(request).text;
    try {
        code = extract_fenced_block(code, "python");
    } catch (const ParseError&) {
        // Raw code without fences, as the prompt requests.
    }

    std::string stem = "reader_" + std::to_string(reader_sequence++);
    std::string code_path = (fs::path(sandbox->workspace().iterations) / (stem + ".py")).string();
    std::ofstream(code_path, std::ios::binary) << code;

    int saved_timeout = sandbox->options().timeout_seconds;
    sandbox->options().timeout_seconds = limits.timeout_seconds;
    ExecutionResult run = sandbox->execute_shell_script("python3 \"" + code_path + "\"\n", stem);
    sandbox->options().timeout_seconds = saved_timeout;

    FilePerceptionReport report;
    report.file_path = path;
    report.produced_by = FilePerceptionReport::Source::GeneratedReader;
    if (run.return_code == 0) {
        report.report_text = clamp_report(run.stdout_text, limits.max_chars_per_file);
    } else {
        report.failed = true;
        std::string error = run.stderr_text.empty() ? run.stdout_text : run.stderr_text;
        report.report_text = clamp_report(error, limits.max_chars_per_file);
    }
    return report;
}

std::string build_find_description_prompt(const std::string& data_prompt) {
    std::string text =
        "Given this data prompt:\n"
        "\n"
        "{data_prompt}\n"
        "\n"
        "Please identify any files that appear to contain project\n"
        "descriptions, requirements, or task definitions.\n"
        "Look for files like README, documentation files, or task\n"
        "description files.\n"
        "\n"
        "Format your response as follows:\n"
        "Description Files: [list ONLY the absolute path, one per line]\n"
        "Explanation: [explain why these files were identified as description files]";
    return replace_all(text, "{data_prompt}", data_prompt);
}

DescriptionFinding find_description_files(const std::string& data_prompt, LlmBackend& backend,
                                          const std::string& base_dir) {
    LlmRequest request;
    request.role_name = "planner";
    request.turns = {{"user", build_find_description_prompt(data_prompt)}};
    std::string response = backend.complete(request).text;

    auto fields = parse_labeled_fields_lenient(response, {"Description Files", "Explanation"});
    if (fields.empty()) {
        throw ParseError("description-file response has neither expected label");
    }
    DescriptionFinding finding;
    if (auto it = fields.find("Explanation"); it != fields.end()) finding.explanation = it->second;
    std::string listed = fields.count("Description Files") ? fields.at("Description Files") : "";
    for (const std::string& raw : split_lines(listed)) {
        std::string line = trim(raw);
        if (starts_with(line, "- ") || starts_with(line, "* ")) line = trim(line.substr(2));
        if (line.size() >= 2 && line.front() == '[' && line.back() == ']') {
            line = trim(line.substr(1, line.size() - 2));
        }
        if (line.empty()) continue;
        std::string low = to_lower(line);
        if (low == "none" || low == "n/a" || low == "no description files found") continue;
        fs::path candidate = base_dir.empty() ? fs::path(line) : fs::path(base_dir) / line;
        std::error_code ec;
        if (fs::exists(candidate, ec)) {
            finding.files.push_back(line);
        } else {
            finding.warnings.push_back("description file does not exist: " + line);
        }
    }
    return finding;
}

std::string read_description_contents(const std::vector<std::string>& paths, int max_chars,
                                      const std::string& base_dir) {
    std::vector<std::string> sections;
    for (const auto& path : paths) {
        fs::path full = base_dir.empty() ? fs::path(path) : fs::path(base_dir) / path;
        std::string content = read_head(full.string(), static_cast<size_t>(max_chars));
        sections.push_back(path + ":\n" + content);
    }
    return join(sections, "\n\n");
}

std::string build_task_description_prompt(const std::string& data_prompt,
                                          const std::string& description_analysis,
                                          const std::string& description_context) {
    std::string text =
        "Based on this data prompt and description files:\n"
        "\n"
        "Data Prompt:\n"
        "(IMPORTANT: The metadata of example files in Data Prompt may not be representative - "
        "do not make assumptions about data statistics based on examples.)\n"
        "\n"
        "{data_prompt}\n"
        "\n"
        "Description File Analysis:\n"
        "{description_analysis}\n"
        "\n"
        "Description File Contents:\n"
        "{description_context}\n"
        "\n"
        "Based ONLY on the information explicitly stated in the provided data prompt, "
        "description files, and analysis, provide a condensed description of the data science "
        "task. Include only details that are directly mentioned in the source materials.\n"
        "Do not add assumptions or infer unstated information.\n";
    text = replace_all(text, "{data_prompt}", data_prompt);
    text = replace_all(text, "{description_analysis}", description_analysis);
    text = replace_all(text, "{description_context}", description_context);
    return text;
}

std::string generate_task_description(const std::string& data_prompt,
                                      const std::string& description_analysis,
                                      const std::string& description_contents,
                                      LlmBackend& backend) {
    LlmRequest request;
    request.role_name = "planner";
    request.turns = {{"user", build_task_description_prompt(data_prompt, description_analysis,
                                                            description_contents)}};
    return backend.complete(request).text;
}

std::string format_tools_info(const std::vector<ToolSpec>& tools) {
    std::vector<std::string> entries;
    for (size_t i = 0; i < tools.size(); ++i) {
        const ToolSpec& tool = tools[i];
        std::ostringstream entry;
        entry << (i + 1) << ". " << tool.name << " (version " << tool.version << ")\n";
        entry << "Description: " << tool.description;
        if (!tool.features.empty()) {
            entry << "\nFeatures:";
            for (const auto& feature : tool.features) entry << "\n- " << feature;
        }
        entries.push_back(entry.str());
    }
    return join(entries, "\n\n");
}

std::string build_library_selection_prompt(const std::string& data_prompt,
                                           const std::string& description,
                                           const std::vector<ToolSpec>& tools) {
    std::string text =
        "Given the following data science task:\n"
        "\n"
        "Data Description:\n"
        "{data_prompt}\n"
        "\n"
        "Task Analysis:\n"
        "{description}\n"
        "\n"
        "Available tools and their capabilities:\n"
        "\n"
        "{tools_info}\n"
        "\n"
        "Please select the most appropriate tool for this task. Consider:\n"
        "1. The nature of the data (tabular, time series, multimodal, etc.)\n"
        "2. The specific requirements of the task\n"
        "3. Any limitations or special features of each tool\n"
        "\n"
        "Format your response as follows:\n"
        "Selected Tool: [tool name ONLY]\n"
        "Explanation: [detailed explanation of why this tool is the best\n"
        "choice, including specific features that match the task requirements]";
    text = replace_all(text, "{data_prompt}", data_prompt);
    text = replace_all(text, "{description}", description);
    text = replace_all(text, "{tools_info}", format_tools_info(tools));
    return text;
}

LibrarySelection select_library(const std::string& data_prompt,
                                const std::string& task_description,
                                const std::vector<ToolSpec>& registry, LlmBackend& backend) {
    if (registry.empty()) throw std::invalid_argument("tool registry is empty");

    LlmRequest request;
    request.role_name = "planner";
    request.turns = {{"user",
                      build_library_selection_prompt(data_prompt, task_description, registry)}};
    std::string response = backend.complete(request).text;

    auto fields = parse_labeled_fields_lenient(response, {"Selected Tool", "Explanation"});
    LibrarySelection selection;
    if (auto it = fields.find("Explanation"); it != fields.end()) {
        selection.explanation = it->second;
    }
    std::string wanted = fields.count("Selected Tool") ? fields.at("Selected Tool") : "";
    if (registry.size() == 1) {
        selection.tool = registry.front();
        return selection;
    }
    if (wanted.empty()) throw ParseError("library-selection response lacks \"Selected Tool:\"");
    selection.tool = resolve_tool(registry, wanted);
    return selection;
}

std::string build_data_prompt(const std::vector<FilePerceptionReport>& reports,
                              const std::vector<FileGroup>& groups, int delta,
                              const std::string& root) {
    std::map<std::string, const FilePerceptionReport*> by_path;
    for (const auto& report : reports) by_path[report.file_path] = &report;

    auto display = [&](const std::string& member) {
        return root.empty() ? member : (fs::path(root) / member).generic_string();
    };
    auto lookup = [&](const std::string& member) -> const FilePerceptionReport* {
        if (auto it = by_path.find(display(member)); it != by_path.end()) return it->second;
        if (auto it = by_path.find(member); it != by_path.end()) return it->second;
        return nullptr;
    };

    std::ostringstream out;
    auto emit_file = [&](const std::string& member) {
        out << "----------\n" << display(member) << "\n";
        if (const FilePerceptionReport* report = lookup(member)) {
            out << "Content:\n" << report->report_text;
            if (!report->report_text.empty() && report->report_text.back() != '\n') out << "\n";
        }
    };

    std::vector<std::string> small_members;
    for (const auto& group : groups) {
        if (group.members.size() <= static_cast<size_t>(delta)) {
            small_members.insert(small_members.end(), group.members.begin(),
                                 group.members.end());
        }
    }
    std::sort(small_members.begin(), small_members.end(),
              [&](const std::string& a, const std::string& b) { return display(a) < display(b); });
    for (const auto& member : small_members) emit_file(member);

    for (const auto& group : groups) {
        if (group.members.size() <= static_cast<size_t>(delta)) continue;
        std::string pattern = group.pattern_string();
        if (!root.empty()) pattern = (fs::path(root) / pattern).generic_string();
        out << "----------\n";
        out << "Group pattern: " << pattern << " (total " << group.members.size()
            << " files)\n";
        out << "Example file:\n" << display(group.example_member()) << "\n";
        if (const FilePerceptionReport* report = lookup(group.example_member())) {
            out << "Content:\n" << report->report_text;
            if (!report->report_text.empty() && report->report_text.back() != '\n') out << "\n";
        }
    }
    out << "----------";
    return out.str();
}

PerceptionContext assemble_perception_context(const std::vector<FilePerceptionReport>& reports,
                                              const std::vector<FileGroup>& groups, int delta,
                                              const std::string& task_description,
                                              const ToolSpec& tool,
                                              const std::string& explanation,
                                              const std::string& root) {
    PerceptionContext ctx;
    ctx.data_prompt = build_data_prompt(reports, groups, delta, root);
    ctx.task_description = task_description;
    ctx.selected_tool = tool;
    ctx.selection_explanation = explanation;
    return ctx;
}

namespace {

// Serializes calls into backends that are not safe for concurrent use.
class LockedBackend : public LlmBackend {
public:
    explicit LockedBackend(LlmBackend& inner) : inner_(inner) {}
    LlmResponse complete(const LlmRequest& request) override {
        std::lock_guard<std::mutex> guard(mutex_);
        return inner_.complete(request);
    }

private:
    LlmBackend& inner_;
    std::mutex mutex_;
};

}  // namespace

PerceptionAgent::PerceptionAgent(const KernelConfig& cfg, std::vector<ToolSpec> registry,
                                 LlmBackend& backend)
    : cfg_(cfg), registry_(std::move(registry)), backend_(backend) {}

PerceptionContext PerceptionAgent::perceive(const std::string& data_dir,
                                            Sandbox& sandbox) const {
    fs::path root = fs::absolute(data_dir).lexically_normal();
    if (!fs::is_directory(root)) {
        throw std::invalid_argument("data folder does not exist: " + data_dir);
    }

    std::vector<std::string> rel_paths;
    for (const auto& entry : fs::recursive_directory_iterator(root)) {
        if (!entry.is_regular_file()) continue;
        rel_paths.push_back(fs::relative(entry.path(), root).generic_string());
    }
    std::sort(rel_paths.begin(), rel_paths.end());

    int delta = cfg_.max_group_size;
    std::vector<FileGroup> groups = group_files(rel_paths, delta);

    std::set<std::string> representative_set;
    for (const auto& group : groups) {
        for (const auto& rep : select_representatives(group, delta)) {
            representative_set.insert(rep);
        }
    }
    std::vector<std::string> representatives(representative_set.begin(),
                                             representative_set.end());

    PerceptionLimits limits;
    limits.max_chars_per_file = cfg_.max_chars_per_file;
    limits.details = cfg_.file_reader.details;
    limits.always_generate_readers = cfg_.always_generate_readers;
    limits.timeout_seconds = cfg_.per_execution_timeout;
    limits.temperature = cfg_.file_reader.temperature;
    limits.max_tokens = cfg_.file_reader.max_tokens;

    LockedBackend locked(backend_);
    std::vector<FilePerceptionReport> reports(representatives.size());
    std::atomic<size_t> next{0};
    auto worker = [&]() {
        for (size_t i = next++; i < representatives.size(); i = next++) {
            std::string abs_path = (root / representatives[i]).generic_string();
            reports[i] = perceive_file(abs_path, &locked, &sandbox, limits);
        }
    };
    size_t pool = std::min<size_t>(4, representatives.size());
    if (pool <= 1) {
        worker();
    } else {
        std::vector<std::thread> threads;
        for (size_t i = 0; i < pool; ++i) threads.emplace_back(worker);
        for (auto& thread : threads) thread.join();
    }

    std::string root_str = root.generic_string();
    std::string data_prompt = build_data_prompt(reports, groups, delta, root_str);

    DescriptionFinding finding = find_description_files(data_prompt, backend_);
    std::string contents = read_description_contents(finding.files, cfg_.max_chars_per_file);
    std::string task_description =
        generate_task_description(data_prompt, finding.explanation, contents, backend_);
    LibrarySelection selection =
        select_library(data_prompt, task_description, registry_, backend_);

    PerceptionContext ctx = assemble_perception_context(
        reports, groups, delta, task_description, selection.tool, selection.explanation,
        root_str);
    ctx.description_files = finding.files;
    return ctx;
}

}  // namespace mlzero
