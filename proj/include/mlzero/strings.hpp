#pragma once

#include <string>
#include <vector>

namespace mlzero {

std::string trim(const std::string& s);
std::string to_lower(const std::string& s);
bool starts_with(const std::string& s, const std::string& prefix);
bool istarts_with(const std::string& s, const std::string& prefix);
bool contains(const std::string& s, const std::string& needle);

std::vector<std::string> split_lines(const std::string& s);
std::string join(const std::vector<std::string>& parts, const std::string& sep);
std::string replace_all(std::string s, const std::string& from, const std::string& to);

// Keeps head and tail halves around a "...(truncated)" marker when the
// message exceeds max_len; unchanged otherwise.
std::string truncate_middle(const std::string& message, size_t max_len);

// textwrap.dedent: strips the longest common leading blank run from every
// line, ignoring whitespace-only lines (which are emptied).
std::string dedent(const std::string& text);

size_t count_words(const std::string& s);
std::string first_n_words(const std::string& s, size_t n);

}  // namespace mlzero
