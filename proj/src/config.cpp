#include "smacs/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

namespace smacs {

using nlohmann::json;

namespace {

// Reads `key` from `obj` when present, reporting type errors against
// `field`.
template <typename T>
void read(const json& obj, const char* key, T& out, const std::string& field) {
  if (!obj.contains(key) || obj[key].is_null()) return;
  try {
    out = obj[key].get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(field.empty() ? key : field + "." + key, e.what());
  }
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  if (p.empty()) return {};
  std::filesystem::path path(p);
  return path.is_absolute() ? path.lexically_normal() : (base / path).lexically_normal();
}

ModelEndpoint parse_endpoint(const json& entry, const json& defaults, std::size_t index) {
  const std::string field = "pool[" + std::to_string(index) + "]";
  if (!entry.is_object()) throw ConfigError(field, "must be an object");
  json merged = defaults.is_object() ? defaults : json::object();
  for (auto it = entry.begin(); it != entry.end(); ++it) {
    if (it.key() == "sampling" && merged.contains("sampling") && it->is_object()) {
      for (auto s = it->begin(); s != it->end(); ++s) merged["sampling"][s.key()] = *s;
    } else {
      merged[it.key()] = *it;
    }
  }

  ModelEndpoint ep;
  read(merged, "id", ep.id, field);
  if (ep.id.empty()) throw ConfigError(field + ".id", "required");
  read(merged, "model", ep.model, field);
  read(merged, "base_url", ep.base_url, field);
  read(merged, "api_key_env", ep.api_key_env, field);
  read(merged, "max_in_flight", ep.max_in_flight, field);
  read(merged, "timeout_s", ep.timeout_s, field);
  read(merged, "retries", ep.retries, field);
  read(merged, "backoff_ms", ep.backoff_ms, field);
  if (merged.contains("sampling")) {
    const auto& s = merged["sampling"];
    read(s, "temperature", ep.sampling.temperature, field + ".sampling");
    read(s, "max_tokens", ep.sampling.max_tokens, field + ".sampling");
    read(s, "presence_penalty", ep.sampling.presence_penalty, field + ".sampling");
  }
  std::vector<std::string> roles{"referencer"};
  read(merged, "roles", roles, field);
  for (const auto& r : roles) {
    const auto role = parse_role(r);
    if (!role) throw ConfigError(field + ".roles", "unknown role '" + r + "'");
    ep.roles |= static_cast<unsigned>(*role);
  }
  return ep;
}

json endpoint_to_json(const ModelEndpoint& ep) {
  json roles = json::array();
  for (Role r : {Role::Referencer, Role::Aggregator, Role::Scorer, Role::Embedder}) {
    if (ep.has(r)) roles.push_back(std::string(to_string(r)));
  }
  return {{"id", ep.id},
          {"model", ep.model},
          {"base_url", ep.base_url},
          {"api_key_env", ep.api_key_env},
          {"roles", roles},
          {"sampling",
           {{"temperature", ep.sampling.temperature},
            {"max_tokens", ep.sampling.max_tokens},
            {"presence_penalty", ep.sampling.presence_penalty}}},
          {"max_in_flight", ep.max_in_flight},
          {"timeout_s", ep.timeout_s},
          {"retries", ep.retries},
          {"backoff_ms", ep.backoff_ms}};
}

const ModelEndpoint* find_endpoint(const PipelineConfig& c, const std::string& id) {
  for (const auto& ep : c.pool) {
    if (ep.id == id) return &ep;
  }
  return nullptr;
}

void require_role(const PipelineConfig& c, const std::string& field, const std::string& id, Role role) {
  const auto* ep = find_endpoint(c, id);
  if (!ep) throw ConfigError(field, "model '" + id + "' is not in the pool");
  if (!ep->has(role)) throw ConfigError(field, "model '" + id + "' lacks the " + std::string(to_string(role)) + " role");
}

}  // namespace

std::vector<std::string> PipelineConfig::referencer_ids() const {
  std::vector<std::string> ids;
  for (const auto& ep : pool) {
    if (ep.has(Role::Referencer)) ids.push_back(ep.id);
  }
  return ids;
}

void validate_config(const PipelineConfig& c, PathCheck paths) {
  const auto& d = c.defaults;
  if (d.K < 1) throw ConfigError("defaults.K", "must be >= 1");
  if (d.n_base < 1) throw ConfigError("defaults.n_base", "must be >= 1");
  if (!(d.gamma >= 0.0 && d.gamma <= 1.0)) throw ConfigError("defaults.gamma", "must lie in [0, 1]");
  if (d.k_drop >= d.K) throw ConfigError("defaults.k_drop", "must be smaller than K");
  if (d.n < 1) throw ConfigError("defaults.n", "must be >= 1");
  if (!(d.lambda >= 0.0)) throw ConfigError("defaults.lambda", "must be >= 0");
  if (c.seed_policy != "random" && c.seed_policy != "fixed") {
    throw ConfigError("seed_policy", "must be 'random' or 'fixed'");
  }

  if (c.pool.empty()) throw ConfigError("pool", "at least one model required");
  std::set<std::string> ids;
  for (std::size_t i = 0; i < c.pool.size(); ++i) {
    const auto& ep = c.pool[i];
    const std::string field = "pool[" + std::to_string(i) + "]";
    if (!ids.insert(ep.id).second) throw ConfigError(field + ".id", "duplicate model id '" + ep.id + "'");
    if (ep.roles == 0) throw ConfigError(field + ".roles", "at least one role required");
    if (!(ep.sampling.temperature >= 0.0)) throw ConfigError(field + ".sampling.temperature", "must be >= 0");
    if (ep.sampling.max_tokens < 1) throw ConfigError(field + ".sampling.max_tokens", "must be >= 1");
    if (ep.retries < 0) throw ConfigError(field + ".retries", "must be >= 0");
    if (ep.max_in_flight < 1) throw ConfigError(field + ".max_in_flight", "must be >= 1");
    if (!(ep.timeout_s > 0.0)) throw ConfigError(field + ".timeout_s", "must be > 0");
    if (c.backend == BackendKind::Http && ep.base_url.empty()) throw ConfigError(field + ".base_url", "required");
  }
  if (c.referencer_ids().empty()) throw ConfigError("pool", "no referencer-eligible model");

  if (c.aggregator.default_id.empty()) throw ConfigError("aggregator.default", "required");
  require_role(c, "aggregator.default", c.aggregator.default_id, Role::Aggregator);
  for (const auto& [kind, id] : c.aggregator.overrides) {
    require_role(c, "aggregator.overrides." + std::string(to_string(kind)), id, Role::Aggregator);
  }
  if (c.embedder.empty()) throw ConfigError("embedder", "required");
  require_role(c, "embedder", c.embedder, Role::Embedder);
  if (!c.scorer.empty()) require_role(c, "scorer", c.scorer, Role::Scorer);
  if (c.scorer.empty() && d.lambda > 0.0) throw ConfigError("scorer", "required when defaults.lambda > 0");
  if (c.embedding_dim < 1) throw ConfigError("embedding_dim", "must be >= 1");

  for (const auto& [key, t] : c.prompt_overrides) {
    if (t.user.find("{question}") == std::string::npos) {
      throw ConfigError("prompt_overrides." + key + ".user", "must contain {question}");
    }
  }

  if (c.backend == BackendKind::Sim && c.sim_pool.empty()) throw ConfigError("sim_pool", "required for the sim backend");
  if (paths == PathCheck::Require) {
    if (c.bank_path.empty()) throw ConfigError("bank_path", "required");
    if (!std::filesystem::exists(c.bank_path)) throw ConfigError("bank_path", "no such file: " + c.bank_path.string());
    if (c.capability_path.empty()) throw ConfigError("capability_path", "required");
    if (!std::filesystem::exists(c.capability_path)) {
      throw ConfigError("capability_path", "no such file: " + c.capability_path.string());
    }
    if (c.backend == BackendKind::Sim && !std::filesystem::exists(c.sim_pool)) {
      throw ConfigError("sim_pool", "no such file: " + c.sim_pool.string());
    }
  }
}

PipelineConfig parse_config(std::string_view text, const std::filesystem::path& base_dir, PathCheck paths,
                            const std::string& location) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError("", location + ": " + e.what());
  }
  if (!j.is_object()) throw ConfigError("", location + ": top level must be an object");

  try {
    PipelineConfig c;
    std::string backend = "http";
    read(j, "backend", backend, "");
    if (backend == "sim") {
      c.backend = BackendKind::Sim;
    } else if (backend != "http") {
      throw ConfigError("backend", "must be 'http' or 'sim'");
    }
    std::string p;
    read(j, "sim_pool", p, "");
    c.sim_pool = resolve(base_dir, p);
    p.clear();
    read(j, "bank_path", p, "");
    c.bank_path = resolve(base_dir, p);
    p.clear();
    read(j, "capability_path", p, "");
    c.capability_path = resolve(base_dir, p);
    p.clear();
    read(j, "embedding_cache_path", p, "");
    c.embedding_cache_path = p.empty() ? std::filesystem::path() : resolve(base_dir, p);
    if (c.embedding_cache_path.empty() && !c.bank_path.empty()) {
      c.embedding_cache_path = c.bank_path.string() + ".embcache";
    }

    const json endpoint_defaults = j.value("endpoint_defaults", json::object());
    if (j.contains("pool")) {
      if (!j["pool"].is_array()) throw ConfigError("pool", "must be an array");
      for (std::size_t i = 0; i < j["pool"].size(); ++i) {
        c.pool.push_back(parse_endpoint(j["pool"][i], endpoint_defaults, i));
      }
    }
    read(j, "embedder", c.embedder, "");
    read(j, "scorer", c.scorer, "");
    read(j, "embedding_dim", c.embedding_dim, "");
    if (j.contains("defaults")) {
      const auto& d = j["defaults"];
      read(d, "K", c.defaults.K, "defaults");
      read(d, "n_base", c.defaults.n_base, "defaults");
      read(d, "gamma", c.defaults.gamma, "defaults");
      read(d, "k_drop", c.defaults.k_drop, "defaults");
      read(d, "n", c.defaults.n, "defaults");
      read(d, "lambda", c.defaults.lambda, "defaults");
      read(d, "normalize_ppl", c.defaults.normalize_ppl, "defaults");
    }
    if (j.contains("aggregator")) {
      const auto& a = j["aggregator"];
      if (a.is_string()) {
        c.aggregator.default_id = a.get<std::string>();
      } else {
        read(a, "default", c.aggregator.default_id, "aggregator");
        std::map<std::string, std::string> overrides;
        read(a, "overrides", overrides, "aggregator");
        for (const auto& [k, id] : overrides) {
          const auto kind = parse_task_kind(k);
          if (!kind) throw ConfigError("aggregator.overrides", "unknown task kind '" + k + "'");
          c.aggregator.overrides[*kind] = id;
        }
      }
    }
    if (j.contains("prompt_overrides")) {
      for (auto it = j["prompt_overrides"].begin(); it != j["prompt_overrides"].end(); ++it) {
        PromptTemplate t;
        read(*it, "system", t.system, "prompt_overrides." + it.key());
        read(*it, "user", t.user, "prompt_overrides." + it.key());
        c.prompt_overrides[it.key()] = t;
      }
    }
    read(j, "seed_policy", c.seed_policy, "");
    read(j, "seed", c.seed, "");
    read(j, "global_max_in_flight", c.global_max_in_flight, "");
    read(j, "hook_command", c.hook_command, "");
    read(j, "hook_timeout_s", c.hook_timeout_s, "");

    validate_config(c, paths);
    return c;
  } catch (const ConfigError& e) {
    throw ConfigError(e.field(), location + ": " + e.what());
  }
}

PipelineConfig load_config(const std::filesystem::path& path, PathCheck paths) {
  std::ifstream in(path);
  if (!in) throw ConfigError("", "cannot read config: " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  const auto base = std::filesystem::absolute(path).parent_path();
  return parse_config(ss.str(), base, paths, path.string());
}

std::string serialize_config(const PipelineConfig& c) {
  json pool = json::array();
  for (const auto& ep : c.pool) pool.push_back(endpoint_to_json(ep));
  json overrides = json::object();
  for (const auto& [kind, id] : c.aggregator.overrides) overrides[std::string(to_string(kind))] = id;
  json prompts = json::object();
  for (const auto& [k, t] : c.prompt_overrides) prompts[k] = {{"system", t.system}, {"user", t.user}};
  const json j = {{"backend", c.backend == BackendKind::Sim ? "sim" : "http"},
                  {"sim_pool", c.sim_pool.string()},
                  {"pool", pool},
                  {"bank_path", c.bank_path.string()},
                  {"capability_path", c.capability_path.string()},
                  {"embedding_cache_path", c.embedding_cache_path.string()},
                  {"embedder", c.embedder},
                  {"scorer", c.scorer},
                  {"embedding_dim", c.embedding_dim},
                  {"defaults",
                   {{"K", c.defaults.K},
                    {"n_base", c.defaults.n_base},
                    {"gamma", c.defaults.gamma},
                    {"k_drop", c.defaults.k_drop},
                    {"n", c.defaults.n},
                    {"lambda", c.defaults.lambda},
                    {"normalize_ppl", c.defaults.normalize_ppl}}},
                  {"aggregator", {{"default", c.aggregator.default_id}, {"overrides", overrides}}},
                  {"prompt_overrides", prompts},
                  {"seed_policy", c.seed_policy},
                  {"seed", c.seed},
                  {"global_max_in_flight", c.global_max_in_flight},
                  {"hook_command", c.hook_command},
                  {"hook_timeout_s", c.hook_timeout_s}};
  return j.dump(2);
}

}  // namespace smacs
