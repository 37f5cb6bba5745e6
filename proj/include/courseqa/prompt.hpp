#pragma once

#include <optional>
#include <string>
#include <string_view>

#include "courseqa/retrieval.hpp"

namespace courseqa::prompt {

// Default LLaMA-2 system message for the course teaching assistant.
std::string_view default_system_text();

struct PromptBundle {
  std::string system_text;
  std::optional<std::string> rag_block;
  std::string query_subject;
  std::string query_body;
  std::string rendered;
};

struct ChatPromptOptions {
  bool emit_bos = true;  // leading "<s>"; some serving stacks add it themselves
};

// Snippet block listing each retrieved chunk in order. Throws on an empty context.
std::string render_rag_block(const retrieval::RetrievedContext& context);
std::string render_rag_block(const std::vector<std::string>& snippets);

// Throws courseqa::Error when subject or body is empty.
PromptBundle render_chat_prompt(std::string_view system, const std::optional<std::string>& rag,
                                std::string_view subject, std::string_view body, ChatPromptOptions options = {});

struct QueryFields {
  std::string subject;
  std::string body;
};

// Pulls subject and body back out of a rendered chat prompt, undoing escaping.
std::optional<QueryFields> extract_query_fields(std::string_view rendered);

// Backtick runs inside a fenced field are broken up with U+2063 (and a
// leading/trailing backtick is padded) so the ``` fences stay unambiguous.
// Literal U+2063 characters are doubled so unescaping is exact.
std::string escape_backticks(std::string_view field);
std::string unescape_backticks(std::string_view field);

enum class Metric { usefulness, accuracy };
std::string_view metric_name(Metric metric);  // "Usefulness" / "Accuracy"

// G-Eval style judge prompt with the metric's criteria and steps.
std::string render_eval_prompt(Metric metric, std::string_view question, std::string_view ground_truth,
                               std::string_view answer);

}  // namespace courseqa::prompt
