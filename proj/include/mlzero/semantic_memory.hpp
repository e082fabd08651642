#pragma once

#include <string>
#include <vector>

#include "mlzero/config.hpp"
#include "mlzero/llm.hpp"

namespace mlzero {

// One condensed tutorial in the knowledge base.
struct KnowledgeDocument {
    std::string tool_name;
    std::string title;
    std::string summary;         // single paragraph beginning "Summary: "
    std::string condensed_body;  // <= max_tutorial_length chars
    std::string source_path;

    bool operator==(const KnowledgeDocument&) const = default;
};

// Inputs for one retrieval round: the task/data/user context plus the
// current error text (empty on the first iteration).
struct RetrievalQuery {
    std::string task_prompt;
    std::string data_prompt;
    std::string user_prompt;
    std::string error_prompt;
    int max_num_tutorials = 5;
};

std::string build_condensation_prompt(const std::string& chunk, size_t index,
                                      size_t chunk_count);
std::string build_summarization_prompt(const std::string& condensed_content);
std::string build_retrieval_prompt(const RetrievalQuery& query,
                                   const std::vector<KnowledgeDocument>& kb,
                                   RetrievalIndexing indexing);

// Splits text into chunks of at most chunk_size characters at blank-line
// boundaries; an oversized paragraph is hard-split.
std::vector<std::string> chunk_text(const std::string& text, size_t chunk_size);

// Cuts at the last markdown heading line that still fits within max_len;
// hard-cuts when no heading qualifies.
std::string truncate_at_section_boundary(const std::string& text, size_t max_len);

// First markdown heading, stripped of '#' markers; fallback otherwise.
std::string extract_title(const std::string& raw_tutorial, const std::string& fallback);

// Condense chunk-by-chunk (skipped when cfg.condense_tutorials is false),
// cap at a section boundary, then summarize the condensed content.
KnowledgeDocument build_knowledge_document(const std::string& raw_tutorial,
                                           const std::string& title,
                                           const std::string& tool_name, LlmBackend& backend,
                                           const KernelConfig& cfg);

// LLM-selected documents, at most max_num_tutorials, in response order with
// duplicates and out-of-range indices dropped. Empty KB or a zero budget
// short-circuits without an LLM call.
std::vector<KnowledgeDocument> retrieve_documents(const RetrievalQuery& query,
                                                  const std::vector<KnowledgeDocument>& kb,
                                                  LlmBackend& backend,
                                                  RetrievalIndexing indexing =
                                                      RetrievalIndexing::BySummary);

// On-disk layout: <kb_dir>/<tool_name>/<slug>.md holding
// "TITLE: ...\nSUMMARY: ...\n\n<body>".
std::string save_knowledge_document(const std::string& kb_dir, const KnowledgeDocument& doc);
std::vector<KnowledgeDocument> load_knowledge_base(const std::string& kb_dir);
std::vector<KnowledgeDocument> load_knowledge_base(const std::string& kb_dir,
                                                   const std::string& tool_name);

}  // namespace mlzero
