#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "smacs/config.hpp"
#include "smacs/gateway.hpp"
#include "smacs/posterior.hpp"
#include "smacs/prior_selection.hpp"
#include "smacs/prompts.hpp"
#include "smacs/question_bank.hpp"
#include "smacs/retrieval.hpp"

namespace smacs {

/// Per-request parameter overrides; unset fields take the config defaults.
struct AskOverrides {
  std::optional<std::size_t> K;
  std::optional<std::size_t> n;
  std::optional<std::size_t> k_drop;
  std::optional<double> lambda;
  std::optional<double> gamma;
};

struct AskRequest {
  std::string question;
  std::optional<TaskKind> task_kind;
  std::string dataset;  // optional prompt selector, e.g. "mmlu-pro:law"
  std::optional<std::uint64_t> seed;
  AskOverrides overrides;
};

struct EffectiveParams {
  std::size_t K = 7;
  std::size_t n_base = 400;
  double gamma = 0.95;
  std::size_t k_drop = 1;
  std::size_t n = 8;
  double lambda = 1.0;
  bool normalize_ppl = false;
};

struct StageTimings {
  double embed_ms = 0;
  double retrieve_ms = 0;
  double prior_ms = 0;
  double fan_out_ms = 0;
  double posterior_ms = 0;
  double total_ms = 0;
};

struct AskTrace {
  std::uint64_t seed = 0;
  std::string question;
  std::optional<TaskKind> task_kind;
  std::string dataset;
  EffectiveParams params;
  SupportSet support;
  std::vector<std::string> pool_ids;       // referencer-eligible models, prior order
  ReferencerSelection selection;           // as chosen by prior, before failures
  std::vector<std::string> failed_referencers;
  std::vector<std::string> references;     // responses of the surviving referencers
  std::vector<std::string> live_referencers;
  std::size_t k_drop_used = 0;
  CandidateSet candidates;
  bool degraded = false;
};

struct AskResponse {
  std::string answer;
  AskTrace trace;
  StageTimings timings;
};

/// Compact JSON document for clients and logs. Timings are left out unless
/// asked for so that seeded runs serialize byte-identically.
std::string to_json(const AskResponse& response, bool with_timings);

/// Request that reproduces a traced decision (question, task kind, dataset,
/// seed and every effective parameter).
AskRequest request_from_trace(std::string_view response_json);

/// Builds the transport selected by the config (HTTP, or the in-process
/// simulator for backend "sim").
std::shared_ptr<Transport> make_transport(const PipelineConfig& config);

class Pipeline {
 public:
  Pipeline(PipelineConfig config, std::shared_ptr<const QuestionBank> bank,
           std::shared_ptr<const CapabilityMatrix> capability, std::shared_ptr<Transport> transport);

  /// Loads bank, capability matrix and embedding cache from the config paths.
  static Pipeline from_config(const PipelineConfig& config);

  /// Same pipeline restricted to the first `size` referencer-eligible models.
  Pipeline with_pool_prefix(std::size_t size) const;

  AskResponse ask(const AskRequest& request) const;

  /// Stages up to referencer selection only (no model calls besides the
  /// query embedding).
  ReferencerSelection select(const std::string& question, std::size_t K, std::optional<double> gamma = {}) const;

  EffectiveParams resolve(const AskOverrides& overrides) const;

  const PipelineConfig& config() const { return config_; }
  const QuestionBank& bank() const { return *bank_; }
  const CapabilityMatrix& capability() const { return *capability_; }
  const Gateway& gateway() const { return *gateway_; }
  const Embedder& embedder() const { return *embedder_; }
  const std::vector<std::string>& referencer_ids() const { return referencer_ids_; }
  const EmbeddingCache& embedding_cache() const { return *cache_; }

 private:
  Pipeline() = default;
  std::uint64_t fresh_seed() const;

  PipelineConfig config_;
  std::shared_ptr<const QuestionBank> bank_;
  std::shared_ptr<const CapabilityMatrix> capability_;  // rows = referencer_ids_
  std::shared_ptr<Gateway> gateway_;
  std::shared_ptr<EmbeddingCache> cache_;
  std::shared_ptr<Embedder> embedder_;
  std::shared_ptr<PromptRegistry> prompts_;
  std::vector<std::string> referencer_ids_;
};

/// Embedder backed by the config's embedding endpoint.
std::shared_ptr<Embedder> make_embedder(const PipelineConfig& config, std::shared_ptr<Gateway> gateway,
                                        EmbeddingCache* cache);

/// Gateway with the config's pool over `transport`.
std::shared_ptr<Gateway> make_gateway(const PipelineConfig& config, std::shared_ptr<Transport> transport);

/// Prompt registry with the config's overrides applied.
PromptRegistry make_prompts(const PipelineConfig& config);

/// Asks every model in `model_ids` every bank question with its task
/// prompt. Calls run `batch` at a time. Throws PipelineError("profile")
/// naming the first (model, question) that failed after retries.
Transcripts collect_transcripts(const Gateway& gateway, const QuestionBank& bank,
                                const std::vector<std::string>& model_ids, const PromptRegistry& prompts,
                                std::size_t batch = 64);

}  // namespace smacs
