#pragma once

#include <condition_variable>
#include <cstddef>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "smacs/common.hpp"
#include "smacs/prompts.hpp"

namespace smacs {

enum class Role : unsigned { Referencer = 1, Aggregator = 2, Scorer = 4, Embedder = 8 };

std::string_view to_string(Role role);
std::optional<Role> parse_role(std::string_view text);

struct SamplingParams {
  double temperature = 0.7;
  int max_tokens = 8192;
  double presence_penalty = 1.05;
  bool operator==(const SamplingParams&) const = default;
};

struct ModelEndpoint {
  std::string id;
  std::string model;        // name sent on the wire; empty means `id`
  std::string base_url;     // e.g. http://host:8000/v1
  std::string api_key_env;  // environment variable holding the bearer token
  unsigned roles = 0;       // bitwise OR of Role values
  SamplingParams sampling;
  int max_in_flight = 4;
  double timeout_s = 300.0;
  int retries = 2;
  int backoff_ms = 500;

  bool has(Role r) const { return (roles & static_cast<unsigned>(r)) != 0; }
  const std::string& wire_model() const { return model.empty() ? id : model; }
  bool operator==(const ModelEndpoint&) const = default;
};

struct Usage {
  int prompt_tokens = 0;
  int completion_tokens = 0;
};

struct CompletionResult {
  std::string text;
  std::optional<std::vector<double>> token_logprobs;
  Usage usage;
  double latency_ms = 0.0;
  int attempts = 0;
  bool truncated = false;  // finish_reason == "length"; text is kept
  std::vector<std::string> attempt_log;
};

struct WireResponse {
  int status = 0;  // 0 = transport failure (no HTTP status)
  std::string body;
  std::string error;
};

/// One POST to an OpenAI-compatible endpoint. `path` is relative to the
/// endpoint's base_url, e.g. "/chat/completions".
class Transport {
 public:
  virtual ~Transport() = default;
  virtual WireResponse post(const ModelEndpoint& endpoint, const std::string& path, const std::string& body) = 0;
  /// True when calls are cheap in-process work; the gateway then runs them
  /// on the calling thread instead of spawning workers.
  virtual bool in_process() const { return false; }
};

/// cpp-httplib client, one connection per call.
class HttpTransport : public Transport {
 public:
  WireResponse post(const ModelEndpoint& endpoint, const std::string& path, const std::string& body) override;
};

/// Splits "http://h:p/v1" into {"http://h:p", "/v1"}.
std::pair<std::string, std::string> split_base_url(const std::string& base_url);

// Request bodies are pure functions of their inputs.
std::string build_chat_body(const ModelEndpoint& endpoint, const ChatRequest& request);
std::string build_embeddings_body(const ModelEndpoint& endpoint, const std::vector<std::string>& texts);
std::string build_score_body(const ModelEndpoint& endpoint, const std::string& text);

struct FanOutResult {
  std::string model_id;
  std::optional<CompletionResult> result;
  std::string error;  // set when result is empty
};

/// Counting semaphore with a runtime limit.
class Semaphore {
 public:
  explicit Semaphore(std::size_t limit) : available_(limit == 0 ? 1 : limit) {}
  void acquire();
  void release();

 private:
  std::mutex mu_;
  std::condition_variable cv_;
  std::size_t available_;
};

/// All traffic to the model pool: chat, embeddings, logprob scoring, with
/// retries, per-endpoint and global in-flight caps, and ordered fan-out.
class Gateway {
 public:
  Gateway(std::vector<ModelEndpoint> pool, std::shared_ptr<Transport> transport, std::size_t global_max_in_flight = 64);

  const std::vector<ModelEndpoint>& pool() const { return pool_; }
  const ModelEndpoint& endpoint(const std::string& id) const;
  bool in_process() const { return transport_->in_process(); }

  /// Throws EndpointError after retries are exhausted, TruncationError when
  /// the prompt overflows the context.
  CompletionResult chat_complete(const ModelEndpoint& endpoint, const ChatRequest& request) const;

  /// One identical request to each model; results in `model_ids` order.
  /// Throws PipelineError("fan-out") only when every call failed.
  std::vector<FanOutResult> fan_out(const std::vector<std::string>& model_ids, const ChatRequest& request) const;

  /// Independent (model, request) calls executed concurrently; per-call
  /// failures are reported, never thrown.
  std::vector<FanOutResult> run_all(const std::vector<std::pair<std::string, ChatRequest>>& calls) const;

  /// Per-token logprobs of `text` under the scoring model (echo mode of the
  /// completions endpoint). Throws CapabilityError when the endpoint
  /// returns no logprobs.
  std::vector<double> score_logprobs(const ModelEndpoint& endpoint, const std::string& text) const;

  /// Raw (un-normalized) embedding vectors in input order.
  std::vector<std::vector<double>> embed(const ModelEndpoint& endpoint, const std::vector<std::string>& texts) const;

 private:
  WireResponse post_with_retries(const ModelEndpoint& endpoint, const std::string& path, const std::string& body,
                                 int& attempts, std::vector<std::string>& log) const;
  Semaphore& slot(const std::string& id) const;

  std::vector<ModelEndpoint> pool_;
  std::shared_ptr<Transport> transport_;
  std::map<std::string, std::unique_ptr<Semaphore>> per_endpoint_;
  mutable Semaphore global_;
};

}  // namespace smacs
