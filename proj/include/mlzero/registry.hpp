#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace mlzero {

// One ML-library record from the tool registry.
struct ToolSpec {
    std::string name;
    std::string version;
    std::string description;
    std::vector<std::string> features;
    std::vector<std::string> requirements;
    std::vector<std::string> prompt_template;

    bool operator==(const ToolSpec&) const = default;
};

class RegistryError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Loads and validates the registry. Names must be unique and the generic
// "machine learning" fallback entry must be present.
std::vector<ToolSpec> load_tool_registry(const std::string& path);
std::vector<ToolSpec> parse_tool_registry(const std::string& json_text);

// Resolves a model's tool choice against the registry: exact match, then
// case-insensitive, then substring in either direction, then the generic
// fallback. Throws RegistryError when nothing resolves and no fallback exists.
const ToolSpec& resolve_tool(const std::vector<ToolSpec>& registry, const std::string& selection);

// The per-library instruction block injected into the coder prompt.
std::string tool_prompt(const ToolSpec& tool);

}  // namespace mlzero
