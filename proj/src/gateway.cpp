#include "smacs/gateway.hpp"

#include <chrono>
#include <cstdlib>
#include <future>
#include <thread>

#include "httplib.h"
#include "json.hpp"

namespace smacs {

using nlohmann::json;

namespace {

constexpr std::pair<Role, std::string_view> kRoleNames[] = {
    {Role::Referencer, "referencer"},
    {Role::Aggregator, "aggregator"},
    {Role::Scorer, "scorer"},
    {Role::Embedder, "embedder"},
};

bool retryable(const WireResponse& r) { return r.status == 0 || r.status == 429 || r.status >= 500; }

bool looks_like_context_overflow(const std::string& body) {
  return body.find("context length") != std::string::npos || body.find("context_length") != std::string::npos ||
         body.find("maximum context") != std::string::npos || body.find("too many tokens") != std::string::npos;
}

std::string describe(const WireResponse& r) {
  if (r.status == 0) return "transport error: " + r.error;
  std::string body = r.body.substr(0, 200);
  return "HTTP " + std::to_string(r.status) + (body.empty() ? "" : ": " + body);
}

// Validator for a 200 response; returns an error message or empty.
using Validator = std::function<std::string(const WireResponse&)>;

}  // namespace

std::string_view to_string(Role role) {
  for (const auto& [r, name] : kRoleNames) {
    if (r == role) return name;
  }
  return "unknown";
}

std::optional<Role> parse_role(std::string_view text) {
  for (const auto& [r, name] : kRoleNames) {
    if (name == text) return r;
  }
  return std::nullopt;
}

std::pair<std::string, std::string> split_base_url(const std::string& base_url) {
  const auto scheme = base_url.find("://");
  const std::size_t host_start = scheme == std::string::npos ? 0 : scheme + 3;
  const auto slash = base_url.find('/', host_start);
  if (slash == std::string::npos) return {base_url, ""};
  std::string prefix = base_url.substr(slash);
  while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();
  return {base_url.substr(0, slash), prefix};
}

WireResponse HttpTransport::post(const ModelEndpoint& endpoint, const std::string& path, const std::string& body) {
  const auto [origin, prefix] = split_base_url(endpoint.base_url);
  httplib::Client cli(origin);
  const auto secs = static_cast<time_t>(endpoint.timeout_s);
  const auto usecs = static_cast<time_t>((endpoint.timeout_s - static_cast<double>(secs)) * 1e6);
  cli.set_connection_timeout(secs, usecs);
  cli.set_read_timeout(secs, usecs);
  cli.set_write_timeout(secs, usecs);
  httplib::Headers headers;
  if (!endpoint.api_key_env.empty()) {
    if (const char* key = std::getenv(endpoint.api_key_env.c_str()); key && *key) {
      headers.emplace("Authorization", std::string("Bearer ") + key);
    }
  }
  auto res = cli.Post(prefix + path, headers, body, "application/json");
  if (!res) return WireResponse{0, "", httplib::to_string(res.error())};
  return WireResponse{res->status, res->body, ""};
}

std::string build_chat_body(const ModelEndpoint& endpoint, const ChatRequest& request) {
  json messages = json::array();
  if (!request.system_prompt.empty()) messages.push_back({{"role", "system"}, {"content", request.system_prompt}});
  messages.push_back({{"role", "user"}, {"content", request.user_prompt}});
  json body = {{"model", endpoint.wire_model()},
               {"messages", std::move(messages)},
               {"temperature", endpoint.sampling.temperature},
               {"max_tokens", endpoint.sampling.max_tokens},
               {"presence_penalty", endpoint.sampling.presence_penalty}};
  if (request.want_logprobs) body["logprobs"] = true;
  return body.dump();
}

std::string build_embeddings_body(const ModelEndpoint& endpoint, const std::vector<std::string>& texts) {
  return json{{"model", endpoint.wire_model()}, {"input", texts}}.dump();
}

std::string build_score_body(const ModelEndpoint& endpoint, const std::string& text) {
  return json{{"model", endpoint.wire_model()},
              {"prompt", text},
              {"max_tokens", 1},
              {"temperature", 0.0},
              {"echo", true},
              {"logprobs", 0}}
      .dump();
}

// ---------------------------------------------------------------------------

void Semaphore::acquire() {
  std::unique_lock lock(mu_);
  cv_.wait(lock, [&] { return available_ > 0; });
  --available_;
}

void Semaphore::release() {
  {
    std::lock_guard lock(mu_);
    ++available_;
  }
  cv_.notify_one();
}

Gateway::Gateway(std::vector<ModelEndpoint> pool, std::shared_ptr<Transport> transport, std::size_t global_max_in_flight)
    : pool_(std::move(pool)), transport_(std::move(transport)), global_(global_max_in_flight) {
  for (const auto& ep : pool_) {
    per_endpoint_.emplace(ep.id, std::make_unique<Semaphore>(static_cast<std::size_t>(std::max(1, ep.max_in_flight))));
  }
}

const ModelEndpoint& Gateway::endpoint(const std::string& id) const {
  for (const auto& ep : pool_) {
    if (ep.id == id) return ep;
  }
  throw ConfigError("pool", "unknown model id: " + id);
}

Semaphore& Gateway::slot(const std::string& id) const {
  auto it = per_endpoint_.find(id);
  if (it == per_endpoint_.end()) throw ConfigError("pool", "unknown model id: " + id);
  return *it->second;
}

WireResponse Gateway::post_with_retries(const ModelEndpoint& endpoint, const std::string& path, const std::string& body,
                                        int& attempts, std::vector<std::string>& log) const {
  Semaphore& mine = slot(endpoint.id);
  const int max_attempts = std::max(0, endpoint.retries) + 1;
  WireResponse last;
  for (attempts = 1; attempts <= max_attempts; ++attempts) {
    mine.acquire();
    global_.acquire();
    try {
      last = transport_->post(endpoint, path, body);
    } catch (const std::exception& e) {
      last = WireResponse{0, "", e.what()};
    }
    global_.release();
    mine.release();

    if (last.status >= 200 && last.status < 300) return last;
    log.push_back("attempt " + std::to_string(attempts) + ": " + describe(last));
    if (!retryable(last) || attempts == max_attempts) break;
    const auto delay = std::chrono::milliseconds(static_cast<long long>(endpoint.backoff_ms) << (attempts - 1));
    std::this_thread::sleep_for(delay);
  }
  attempts = std::min(attempts, max_attempts);
  if (last.status == 400 && looks_like_context_overflow(last.body)) {
    throw TruncationError(endpoint.id + ": prompt exceeds the model context", log);
  }
  throw EndpointError(endpoint.id + ": request failed after " + std::to_string(attempts) + " attempt(s)", log);
}

CompletionResult Gateway::chat_complete(const ModelEndpoint& endpoint, const ChatRequest& request) const {
  if (!endpoint.has(Role::Referencer) && !endpoint.has(Role::Aggregator)) {
    throw EndpointError(endpoint.id + ": model has neither referencer nor aggregator role");
  }
  const std::string body = build_chat_body(endpoint, request);
  CompletionResult out;
  const auto t0 = std::chrono::steady_clock::now();
  const int max_attempts = std::max(0, endpoint.retries) + 1;
  int used = 0;
  // A 200 with unusable content consumes an attempt like a transport error.
  while (true) {
    int attempts = 0;
    std::vector<std::string> log;
    WireResponse resp;
    ModelEndpoint budget = endpoint;
    budget.retries = max_attempts - used - 1;
    try {
      resp = post_with_retries(budget, "/chat/completions", body, attempts, log);
    } catch (const EndpointError&) {
      out.attempt_log.insert(out.attempt_log.end(), log.begin(), log.end());
      throw;
    }
    used += attempts;
    out.attempt_log.insert(out.attempt_log.end(), log.begin(), log.end());

    std::string problem;
    try {
      const auto j = json::parse(resp.body);
      const auto& choice = j.at("choices").at(0);
      const auto& content = choice.at("message").at("content");
      out.text = content.is_string() ? content.get<std::string>() : std::string{};
      out.truncated = choice.value("finish_reason", std::string{}) == "length";
      if (request.want_logprobs && choice.contains("logprobs") && choice["logprobs"].is_object() &&
          choice["logprobs"].contains("content") && choice["logprobs"]["content"].is_array()) {
        std::vector<double> lp;
        for (const auto& tok : choice["logprobs"]["content"]) lp.push_back(tok.at("logprob").get<double>());
        out.token_logprobs = std::move(lp);
      }
      if (j.contains("usage") && j["usage"].is_object()) {
        out.usage.prompt_tokens = j["usage"].value("prompt_tokens", 0);
        out.usage.completion_tokens = j["usage"].value("completion_tokens", 0);
      }
      if (out.text.empty()) problem = "empty completion";
    } catch (const json::exception& e) {
      problem = std::string("malformed response: ") + e.what();
    }
    if (problem.empty()) break;
    out.attempt_log.push_back("attempt " + std::to_string(used) + ": " + problem);
    if (used >= max_attempts) {
      throw EndpointError(endpoint.id + ": request failed after " + std::to_string(used) + " attempt(s)",
                          out.attempt_log);
    }
  }
  out.attempts = used;
  out.latency_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

std::vector<FanOutResult> Gateway::run_all(const std::vector<std::pair<std::string, ChatRequest>>& calls) const {
  auto one = [this](const std::string& id, const ChatRequest& req) {
    FanOutResult r;
    r.model_id = id;
    try {
      r.result = chat_complete(endpoint(id), req);
    } catch (const std::exception& e) {
      r.error = e.what();
    }
    return r;
  };
  std::vector<FanOutResult> out;
  out.reserve(calls.size());
  if (in_process() || calls.size() <= 1) {
    for (const auto& [id, req] : calls) out.push_back(one(id, req));
    return out;
  }
  std::vector<std::future<FanOutResult>> futures;
  futures.reserve(calls.size());
  for (const auto& call : calls) {
    futures.push_back(std::async(std::launch::async, [&one, &call] { return one(call.first, call.second); }));
  }
  for (auto& f : futures) out.push_back(f.get());
  return out;
}

std::vector<FanOutResult> Gateway::fan_out(const std::vector<std::string>& model_ids, const ChatRequest& request) const {
  if (model_ids.empty()) throw PipelineError("fan-out", "no referencers");
  std::vector<std::pair<std::string, ChatRequest>> calls;
  calls.reserve(model_ids.size());
  for (const auto& id : model_ids) calls.emplace_back(id, request);
  auto results = run_all(calls);
  const bool any = std::any_of(results.begin(), results.end(), [](const auto& r) { return r.result.has_value(); });
  if (!any) {
    std::string detail = results.empty() ? "" : results.front().error;
    throw PipelineError("fan-out", "all " + std::to_string(results.size()) + " referencers failed (" + detail + ")");
  }
  return results;
}

std::vector<double> Gateway::score_logprobs(const ModelEndpoint& endpoint, const std::string& text) const {
  if (!endpoint.has(Role::Scorer)) throw CapabilityError(endpoint.id + ": model lacks the scorer role");
  if (text.empty()) throw Error("nothing to score: empty text");
  int attempts = 0;
  std::vector<std::string> log;
  const auto resp = post_with_retries(endpoint, "/completions", build_score_body(endpoint, text), attempts, log);
  try {
    const auto j = json::parse(resp.body);
    const auto& choice = j.at("choices").at(0);
    if (!choice.contains("logprobs") || !choice["logprobs"].is_object() ||
        !choice["logprobs"].contains("token_logprobs")) {
      throw CapabilityError(endpoint.id + ": endpoint returned no token logprobs", log);
    }
    const auto& lp = choice["logprobs"]["token_logprobs"];
    const json* offsets = choice["logprobs"].contains("text_offset") ? &choice["logprobs"]["text_offset"] : nullptr;
    std::vector<double> out;
    const std::size_t n = lp.size();
    for (std::size_t t = 0; t < n; ++t) {
      // Echo mode appends the generated token(s); keep only those inside the
      // supplied text. Without offsets, the single generated token is last.
      if (offsets && offsets->is_array() && t < offsets->size()) {
        if ((*offsets)[t].get<std::size_t>() >= text.size()) continue;
      } else if (!offsets && t + 1 == n) {
        continue;
      }
      if (lp[t].is_null()) continue;  // first token has no conditional probability
      out.push_back(lp[t].get<double>());
    }
    if (out.empty()) throw CapabilityError(endpoint.id + ": no scorable tokens returned", log);
    return out;
  } catch (const json::exception& e) {
    throw CapabilityError(endpoint.id + ": malformed scoring response: " + e.what(), log);
  }
}

std::vector<std::vector<double>> Gateway::embed(const ModelEndpoint& endpoint, const std::vector<std::string>& texts) const {
  if (!endpoint.has(Role::Embedder)) throw CapabilityError(endpoint.id + ": model lacks the embedder role");
  int attempts = 0;
  std::vector<std::string> log;
  const auto resp = post_with_retries(endpoint, "/embeddings", build_embeddings_body(endpoint, texts), attempts, log);
  try {
    const auto j = json::parse(resp.body);
    const auto& data = j.at("data");
    std::vector<std::vector<double>> out(texts.size());
    for (std::size_t k = 0; k < data.size(); ++k) {
      const std::size_t idx = data[k].value("index", k);
      if (idx >= out.size()) throw EndpointError(endpoint.id + ": embedding index out of range", log);
      out[idx] = data[k].at("embedding").get<std::vector<double>>();
    }
    for (const auto& v : out) {
      if (v.empty()) throw EndpointError(endpoint.id + ": missing embedding in response", log);
    }
    return out;
  } catch (const json::exception& e) {
    throw EndpointError(endpoint.id + ": malformed embeddings response: " + e.what(), log);
  }
}

}  // namespace smacs
