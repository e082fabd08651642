#include "mlzero/strings.hpp"

#include <algorithm>
#include <cctype>
#include <sstream>

namespace mlzero {

std::string trim(const std::string& s) {
    size_t begin = 0;
    size_t end = s.size();
    while (begin < end && std::isspace(static_cast<unsigned char>(s[begin]))) ++begin;
    while (end > begin && std::isspace(static_cast<unsigned char>(s[end - 1]))) --end;
    return s.substr(begin, end - begin);
}

std::string to_lower(const std::string& s) {
    std::string out = s;
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

bool starts_with(const std::string& s, const std::string& prefix) {
    return s.size() >= prefix.size() && s.compare(0, prefix.size(), prefix) == 0;
}

bool istarts_with(const std::string& s, const std::string& prefix) {
    if (s.size() < prefix.size()) return false;
    for (size_t i = 0; i < prefix.size(); ++i) {
        if (std::tolower(static_cast<unsigned char>(s[i])) !=
            std::tolower(static_cast<unsigned char>(prefix[i]))) return false;
    }
    return true;
}

bool contains(const std::string& s, const std::string& needle) {
    return s.find(needle) != std::string::npos;
}

std::vector<std::string> split_lines(const std::string& s) {
    std::vector<std::string> lines;
    size_t pos = 0;
    while (pos <= s.size()) {
        size_t nl = s.find('\n', pos);
        if (nl == std::string::npos) {
            lines.push_back(s.substr(pos));
            break;
        }
        lines.push_back(s.substr(pos, nl - pos));
        pos = nl + 1;
    }
    return lines;
}

std::string join(const std::vector<std::string>& parts, const std::string& sep) {
    std::string out;
    for (size_t i = 0; i < parts.size(); ++i) {
        if (i > 0) out += sep;
        out += parts[i];
    }
    return out;
}

std::string replace_all(std::string s, const std::string& from, const std::string& to) {
    if (from.empty()) return s;
    size_t pos = 0;
    while ((pos = s.find(from, pos)) != std::string::npos) {
        s.replace(pos, from.size(), to);
        pos += to.size();
    }
    return s;
}

std::string truncate_middle(const std::string& message, size_t max_len) {
    if (message.size() <= max_len) return message;
    size_t half = max_len / 2;
    return message.substr(0, half) + "\n...(truncated)\n" + message.substr(message.size() - half);
}

std::string dedent(const std::string& text) {
    std::vector<std::string> lines = split_lines(text);
    std::string margin;
    bool margin_set = false;
    for (auto& line : lines) {
        size_t content = line.find_first_not_of(" \t");
        if (content == std::string::npos) {
            line.clear();
            continue;
        }
        std::string indent = line.substr(0, content);
        if (!margin_set) {
            margin = indent;
            margin_set = true;
        } else {
            size_t common = 0;
            while (common < margin.size() && common < indent.size() &&
                   margin[common] == indent[common]) ++common;
            margin = margin.substr(0, common);
        }
    }
    if (margin.empty()) return join(lines, "\n");
    std::vector<std::string> out;
    out.reserve(lines.size());
    for (const auto& line : lines) {
        if (starts_with(line, margin)) out.push_back(line.substr(margin.size()));
        else out.push_back(line);
    }
    return join(out, "\n");
}

size_t count_words(const std::string& s) {
    std::istringstream in(s);
    std::string word;
    size_t n = 0;
    while (in >> word) ++n;
    return n;
}

std::string first_n_words(const std::string& s, size_t n) {
    size_t i = 0;
    size_t words = 0;
    size_t end = 0;
    while (i < s.size()) {
        while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) ++i;
        if (i >= s.size()) break;
        if (words == n) break;
        while (i < s.size() && !std::isspace(static_cast<unsigned char>(s[i]))) ++i;
        ++words;
        end = i;
    }
    return s.substr(0, end);
}

}  // namespace mlzero
