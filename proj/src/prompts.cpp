#include "smacs/prompts.hpp"

#include <algorithm>
#include <cctype>

namespace smacs {

namespace {

constexpr std::string_view kResponsesHeader = "Responses from models:";

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::tolower(c); });
  return out;
}

std::string replace_all(std::string s, std::string_view from, std::string_view to) {
  for (auto pos = s.find(from); pos != std::string::npos; pos = s.find(from, pos + to.size())) {
    s.replace(pos, from.size(), to);
  }
  return s;
}

}  // namespace

const std::string_view kAggregatorInstruction =
    "You have been provided with a set of responses from various open-source models to the latest user query. "
    "Your task is to synthesize these responses into a single, high-quality response. It is crucial to critically "
    "evaluate the information provided in these responses, recognizing that some of it may be biased or incorrect. "
    "Your response should not simply replicate the given answers but should offer a refined, accurate, and "
    "comprehensive reply to the instruction. Ensure your response is well-structured, coherent, and adheres to the "
    "highest standards of accuracy and reliability.";

PromptRegistry PromptRegistry::builtin() {
  const std::string question = "Question: {question}.";
  const PromptTemplate aime{"Please reason step by step, and put your final answer within \\boxed{}.", question};
  const PromptTemplate math{
      "You are a math problem solver. Please solve the following math problem. Be sure to explain your solution in "
      "detail. The numerical values in the answer should be surrounded by \\boxed{}. The final answer should start "
      "with 'The answer is' and give the conclusion directly. Do not add any extra content.",
      question};
  const PromptTemplate mbpp{
      "You are an exceptionally intelligent coding assistant that consistently delivers accurate and reliable "
      "responses to user instructions.",
      question};
  const PromptTemplate livecodebench{
      "You are an expert Python programmer. You will be given a question (problem specification) and will generate "
      "a correct Python program that matches the specification and passes all tests.",
      question};
  const PromptTemplate gpqa{"You are a very intelligent assistant, who follows instructions directly.", question};
  const PromptTemplate mmlu_pro{
      "The following are multiple choice questions (with answers) about {subject}. Think step by step and then "
      "output the answer in the format of \"The answer is (X)\" at the end.",
      question};
  const PromptTemplate ifeval{"", "Instruction: {question}."};
  const PromptTemplate medmcqa{
      "Provide your step-by-step reasoning first, and then print \"The answer is (X)\", where X is the answer choice "
      "(one capital letter), at the end of your response.",
      question};

  PromptRegistry r;
  r.set("aime", aime);
  r.set("math", math);
  r.set("mbpp", mbpp);
  r.set("livecodebench", livecodebench);
  r.set("gpqa", gpqa);
  r.set("mmlu-pro", mmlu_pro);
  r.set("ifeval", ifeval);
  r.set("medmcqa", medmcqa);

  r.set("boxed-math", math);
  r.set("multiple-choice", medmcqa);
  r.set("exact-match", gpqa);
  r.set("instruction", ifeval);
  r.set("code", mbpp);
  r.set("generic", gpqa);
  return r;
}

void PromptRegistry::set(std::string key, PromptTemplate tmpl) { entries_.insert_or_assign(lower(key), std::move(tmpl)); }

const PromptTemplate& PromptRegistry::lookup(std::optional<TaskKind> kind, std::string_view dataset) const {
  if (!dataset.empty()) {
    const auto key = lower(dataset.substr(0, dataset.find(':')));
    if (auto it = entries_.find(key); it != entries_.end()) return it->second;
  }
  if (kind) {
    if (auto it = entries_.find(std::string(to_string(*kind))); it != entries_.end()) return it->second;
  }
  if (auto it = entries_.find("generic"); it != entries_.end()) return it->second;
  static const PromptTemplate fallback{"", "Question: {question}."};
  return fallback;
}

ChatRequest PromptRegistry::render(std::string_view question, std::optional<TaskKind> kind,
                                   std::string_view dataset) const {
  const auto& t = lookup(kind, dataset);
  std::string subject = "general knowledge";
  if (const auto colon = dataset.find(':'); colon != std::string_view::npos && colon + 1 < dataset.size()) {
    subject = std::string(dataset.substr(colon + 1));
  }
  ChatRequest req;
  req.system_prompt = replace_all(t.system, "{subject}", subject);
  req.user_prompt = replace_all(t.user, "{question}", question);
  return req;
}

ChatRequest aggregation_request(std::string_view question, const std::vector<std::string>& responses) {
  std::string system(kAggregatorInstruction);
  system += '\n';
  system += kResponsesHeader;
  for (std::size_t i = 0; i < responses.size(); ++i) {
    system += '\n';
    system += std::to_string(i + 1) + "." + responses[i];
  }
  ChatRequest req;
  req.system_prompt = std::move(system);
  req.user_prompt = "Question: " + std::string(question) + ".";
  return req;
}

std::optional<std::vector<std::string>> parse_aggregation_responses(std::string_view system_prompt) {
  if (system_prompt.substr(0, kAggregatorInstruction.size()) != kAggregatorInstruction) return std::nullopt;
  auto pos = system_prompt.find(kResponsesHeader);
  if (pos == std::string_view::npos) return std::nullopt;
  std::string_view rest = system_prompt.substr(pos + kResponsesHeader.size());

  // Responses start at "\n<k>." with k = 1, 2, ... in sequence; anything
  // else (including newlines inside a response) belongs to the current one.
  std::vector<std::string> out;
  std::size_t next = 1;
  std::size_t cursor = 0;
  std::size_t body_start = std::string_view::npos;
  while (true) {
    const std::string marker = "\n" + std::to_string(next) + ".";
    const auto at = rest.find(marker, cursor);
    if (at == std::string_view::npos) break;
    if (body_start != std::string_view::npos) out.emplace_back(rest.substr(body_start, at - body_start));
    body_start = at + marker.size();
    cursor = body_start;
    ++next;
  }
  if (body_start != std::string_view::npos) out.emplace_back(rest.substr(body_start));
  return out;
}

}  // namespace smacs
