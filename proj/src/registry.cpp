#include "mlzero/registry.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "mlzero/strings.hpp"

namespace mlzero {

namespace {

constexpr const char* kFallbackName = "machine learning";

std::vector<std::string> string_list(const nlohmann::json& node, const std::string& field) {
    if (!node.contains(field) || !node[field].is_array()) {
        throw RegistryError("registry entry missing list field \"" + field + "\"");
    }
    std::vector<std::string> out;
    for (const auto& item : node[field]) {
        if (!item.is_string()) {
            throw RegistryError("registry field \"" + field + "\" must contain strings");
        }
        out.push_back(item.get<std::string>());
    }
    return out;
}

std::string string_field(const nlohmann::json& node, const std::string& field) {
    if (!node.contains(field) || !node[field].is_string()) {
        throw RegistryError("registry entry missing string field \"" + field + "\"");
    }
    return node[field].get<std::string>();
}

}  // namespace

std::vector<ToolSpec> parse_tool_registry(const std::string& json_text) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(json_text);
    } catch (const nlohmann::json::parse_error& err) {
        throw RegistryError(std::string("registry is not valid JSON: ") + err.what());
    }
    if (!doc.is_array() || doc.empty()) {
        throw RegistryError("registry must be a non-empty JSON array");
    }
    std::vector<ToolSpec> tools;
    std::set<std::string> seen;
    for (const auto& node : doc) {
        ToolSpec tool;
        tool.name = string_field(node, "name");
        tool.version = string_field(node, "version");
        tool.description = string_field(node, "description");
        tool.features = string_list(node, "features");
        tool.requirements = string_list(node, "requirements");
        tool.prompt_template = string_list(node, "prompt_template");
        if (!seen.insert(tool.name).second) {
            throw RegistryError("duplicate registry entry: \"" + tool.name + "\"");
        }
        tools.push_back(std::move(tool));
    }
    if (!seen.count(kFallbackName)) {
        throw RegistryError("registry has no generic \"machine learning\" fallback entry");
    }
    return tools;
}

std::vector<ToolSpec> load_tool_registry(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw RegistryError("cannot open registry file: " + path);
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return parse_tool_registry(buffer.str());
}

const ToolSpec& resolve_tool(const std::vector<ToolSpec>& registry, const std::string& selection) {
    const std::string wanted = trim(selection);
    for (const auto& tool : registry) {
        if (tool.name == wanted) return tool;
    }
    const std::string wanted_low = to_lower(wanted);
    for (const auto& tool : registry) {
        if (to_lower(tool.name) == wanted_low) return tool;
    }
    if (!wanted_low.empty()) {
        for (const auto& tool : registry) {
            if (contains(wanted_low, to_lower(tool.name))) return tool;
        }
        for (const auto& tool : registry) {
            if (contains(to_lower(tool.name), wanted_low)) return tool;
        }
    }
    for (const auto& tool : registry) {
        if (tool.name == kFallbackName) return tool;
    }
    throw RegistryError("cannot resolve tool \"" + selection + "\" and no fallback is present");
}

std::string tool_prompt(const ToolSpec& tool) {
    return join(tool.prompt_template, "\n");
}

}  // namespace mlzero
