#pragma once

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "smacs/common.hpp"

namespace smacs {

/// `user` must contain "{question}"; `system` may contain "{subject}".
/// An empty system prompt is omitted from the request.
struct PromptTemplate {
  std::string system;
  std::string user;
  bool operator==(const PromptTemplate&) const = default;
};

struct ChatRequest {
  std::string system_prompt;
  std::string user_prompt;
  bool want_logprobs = false;
};

/// Built-in per-benchmark prompts, keyed by dataset name, then by task kind,
/// then "generic". Keys are lower-case. Dataset tags of the form
/// "mmlu-pro:health" look up "mmlu-pro" and fill {subject} with "health".
class PromptRegistry {
 public:
  static PromptRegistry builtin();

  void set(std::string key, PromptTemplate tmpl);
  const std::map<std::string, PromptTemplate>& entries() const { return entries_; }

  const PromptTemplate& lookup(std::optional<TaskKind> kind, std::string_view dataset = {}) const;

  ChatRequest render(std::string_view question, std::optional<TaskKind> kind, std::string_view dataset = {}) const;

 private:
  std::map<std::string, PromptTemplate> entries_;
};

/// Fixed instruction text given to the aggregator before the enumerated
/// references.
extern const std::string_view kAggregatorInstruction;

/// System prompt: instruction, "Responses from models:", then "1.<r1>",
/// "2.<r2>", ... one per line in the given order. User prompt:
/// "Question: <question>.".
ChatRequest aggregation_request(std::string_view question, const std::vector<std::string>& responses);

/// Inverse of aggregation_request for the system prompt; returns nullopt when
/// the text is not an aggregation prompt.
std::optional<std::vector<std::string>> parse_aggregation_responses(std::string_view system_prompt);

}  // namespace smacs
