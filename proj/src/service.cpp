#include "smacs/service.hpp"

#include "httplib.h"
#include "json.hpp"

namespace smacs {

using nlohmann::json;

namespace {

HttpReply error_reply(int status, const std::string& kind, const std::string& message, json extra = json::object()) {
  json err = {{"kind", kind}, {"message", message}};
  for (auto it = extra.begin(); it != extra.end(); ++it) err[it.key()] = *it;
  return {status, json{{"error", err}}.dump()};
}

template <typename T>
std::optional<T> take_unsigned(const json& obj, const char* key, const std::string& field,
                               std::vector<FieldIssue>& issues) {
  if (!obj.contains(key) || obj[key].is_null()) return std::nullopt;
  const auto& v = obj[key];
  if (!v.is_number_unsigned()) {
    issues.push_back({field, "must be a non-negative integer"});
    return std::nullopt;
  }
  return v.get<T>();
}

std::optional<double> take_number(const json& obj, const char* key, const std::string& field,
                                  std::vector<FieldIssue>& issues) {
  if (!obj.contains(key) || obj[key].is_null()) return std::nullopt;
  const auto& v = obj[key];
  if (!v.is_number()) {
    issues.push_back({field, "must be a number"});
    return std::nullopt;
  }
  return v.get<double>();
}

}  // namespace

AskRequest parse_ask_body(const std::string& body, std::vector<FieldIssue>& issues) {
  AskRequest req;
  json j;
  try {
    j = json::parse(body);
  } catch (const json::exception& e) {
    issues.push_back({"body", std::string("invalid JSON: ") + e.what()});
    return req;
  }
  if (!j.is_object()) {
    issues.push_back({"body", "must be a JSON object"});
    return req;
  }
  if (!j.contains("question") || !j["question"].is_string() || j["question"].get<std::string>().empty()) {
    issues.push_back({"question", "required non-empty string"});
  } else {
    req.question = j["question"].get<std::string>();
  }
  if (j.contains("task_kind") && !j["task_kind"].is_null()) {
    const auto kind = j["task_kind"].is_string() ? parse_task_kind(j["task_kind"].get<std::string>()) : std::nullopt;
    if (!kind) {
      issues.push_back({"task_kind", "must be one of boxed-math, multiple-choice, exact-match, instruction, code"});
    }
    req.task_kind = kind;
  }
  if (j.contains("dataset") && !j["dataset"].is_null()) {
    if (j["dataset"].is_string()) {
      req.dataset = j["dataset"].get<std::string>();
    } else {
      issues.push_back({"dataset", "must be a string"});
    }
  }
  req.seed = take_unsigned<std::uint64_t>(j, "seed", "seed", issues);
  if (j.contains("overrides") && !j["overrides"].is_null()) {
    const auto& o = j["overrides"];
    if (!o.is_object()) {
      issues.push_back({"overrides", "must be an object"});
    } else {
      for (auto it = o.begin(); it != o.end(); ++it) {
        const auto& k = it.key();
        if (k != "K" && k != "n" && k != "k_drop" && k != "lambda" && k != "gamma") {
          issues.push_back({"overrides." + k, "not overridable; allowed: K, n, k_drop, lambda, gamma"});
        }
      }
      req.overrides.K = take_unsigned<std::size_t>(o, "K", "overrides.K", issues);
      req.overrides.n = take_unsigned<std::size_t>(o, "n", "overrides.n", issues);
      req.overrides.k_drop = take_unsigned<std::size_t>(o, "k_drop", "overrides.k_drop", issues);
      req.overrides.lambda = take_number(o, "lambda", "overrides.lambda", issues);
      req.overrides.gamma = take_number(o, "gamma", "overrides.gamma", issues);
    }
  }
  return req;
}

AskService::AskService(std::shared_ptr<const Pipeline> pipeline)
    : pipeline_(std::move(pipeline)), server_(std::make_unique<httplib::Server>()) {
  auto reply = [](httplib::Response& res, const HttpReply& r) {
    res.status = r.status;
    res.set_content(r.body, "application/json");
  };
  server_->Post("/v1/ask", [this, reply](const httplib::Request& req, httplib::Response& res) {
    reply(res, handle_ask(req.body));
  });
  server_->Get("/v1/health", [this, reply](const httplib::Request&, httplib::Response& res) {
    reply(res, handle_health());
  });
  server_->Get("/v1/pool", [this, reply](const httplib::Request&, httplib::Response& res) {
    reply(res, handle_pool());
  });
}

AskService::~AskService() { stop(); }

HttpReply AskService::handle_ask(const std::string& body) const {
  std::vector<FieldIssue> issues;
  const AskRequest req = parse_ask_body(body, issues);
  if (!issues.empty()) {
    json fields = json::array();
    for (const auto& i : issues) fields.push_back({{"field", i.field}, {"message", i.message}});
    return error_reply(400, "bad-request", "request body failed validation", {{"fields", fields}});
  }
  try {
    return {200, to_json(pipeline_->ask(req), true)};
  } catch (const ConfigError& e) {
    json fields = json::array({{{"field", e.field()}, {"message", e.what()}}});
    return error_reply(400, "bad-request", e.what(), {{"fields", fields}});
  } catch (const PipelineError& e) {
    return error_reply(502, "pipeline", e.what(), {{"stage", e.stage()}});
  } catch (const std::exception& e) {
    return error_reply(500, "internal", e.what());
  }
}

HttpReply AskService::handle_health() const {
  const json j = {{"status", "ok"},
                  {"bank_size", pipeline_->bank().size()},
                  {"pool_size", pipeline_->gateway().pool().size()},
                  {"referencers", pipeline_->referencer_ids().size()}};
  return {200, j.dump()};
}

HttpReply AskService::handle_pool() const {
  json models = json::array();
  for (const auto& ep : pipeline_->gateway().pool()) {
    json roles = json::array();
    for (Role r : {Role::Referencer, Role::Aggregator, Role::Scorer, Role::Embedder}) {
      if (ep.has(r)) roles.push_back(std::string(to_string(r)));
    }
    models.push_back({{"id", ep.id}, {"model", ep.wire_model()}, {"base_url", ep.base_url}, {"roles", roles}});
  }
  return {200, json{{"models", models}}.dump()};
}

int AskService::bind(const std::string& host, int port) {
  const int bound = port == 0 ? server_->bind_to_any_port(host) : (server_->bind_to_port(host, port) ? port : -1);
  if (bound <= 0) throw Error("cannot bind " + host + ":" + std::to_string(port));
  return bound;
}

void AskService::start() {
  thread_ = std::thread([this] { server_->listen_after_bind(); });
  server_->wait_until_ready();
}

void AskService::listen_blocking() { server_->listen_after_bind(); }

void AskService::stop() {
  if (server_) server_->stop();
  if (thread_.joinable()) thread_.join();
}

}  // namespace smacs
