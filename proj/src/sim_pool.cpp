#include "smacs/sim_pool.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <regex>
#include <sstream>

#include "json.hpp"
#include "smacs/prompts.hpp"

namespace smacs::sim {

using nlohmann::json;

namespace {

// Standard normal stream from splitmix64 via Box-Muller.
class GaussianStream {
 public:
  explicit GaussianStream(std::uint64_t seed) : state_(seed) {}
  double next() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = 0.0;
    do {
      u1 = to_unit(bits());
    } while (u1 <= 0.0);
    const double u2 = to_unit(bits());
    const double r = std::sqrt(-2.0 * std::log(u1));
    spare_ = r * std::sin(2.0 * std::numbers::pi * u2);
    have_spare_ = true;
    return r * std::cos(2.0 * std::numbers::pi * u2);
  }

 private:
  std::uint64_t bits() { return splitmix64(state_++); }
  std::uint64_t state_;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

std::vector<double> unit_gaussian(std::uint64_t seed, std::size_t dim) {
  GaussianStream g(seed);
  std::vector<double> v(dim);
  double n2 = 0.0;
  for (auto& x : v) {
    x = g.next();
    n2 += x * x;
  }
  const double n = std::sqrt(n2);
  for (auto& x : v) x /= n;
  return v;
}

std::string distractor(const SimQuery& q, int k) { return std::to_string(std::stoll(q.truth) + k + 1); }

std::string phrase(int style, const std::string& answer) {
  switch (((style % 4) + 4) % 4) {
    case 0:
      return "Let me work through this step by step. The answer is \\boxed{" + answer + "}.";
    case 1:
      return "After careful analysis of the problem, I conclude \\boxed{" + answer + "}.";
    case 2:
      return "Solution: considering all constraints, the result is \\boxed{" + answer + "}.";
    default:
      return "\\boxed{" + answer + "}";
  }
}

WireResponse json_reply(const json& j) { return WireResponse{200, j.dump(), ""}; }

WireResponse error_reply(int status, const std::string& message) {
  return WireResponse{status, json{{"error", {{"message", message}}}}.dump(), ""};
}

struct TokenSpan {
  std::string text;
  std::size_t offset;
};

std::vector<TokenSpan> whitespace_tokens(std::string_view text) {
  std::vector<TokenSpan> out;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    const std::size_t start = i;
    while (i < text.size() && !std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    if (i > start) out.push_back({std::string(text.substr(start, i - start)), start});
  }
  return out;
}

double token_logprob(std::string_view token) { return -(0.05 + 0.10 * to_unit(splitmix64(fnv1a(token)))); }

}  // namespace

const SimModelSpec* SimWorld::find(std::string_view id) const {
  for (const auto& m : models) {
    if (m.id == id) return &m;
  }
  return nullptr;
}

double SimWorld::accuracy(const SimModelSpec& spec, const std::string& domain) const {
  auto it = spec.per_domain_accuracy.find(domain);
  return it == spec.per_domain_accuracy.end() ? default_accuracy : it->second;
}

SimWorld SimWorld::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("sim_pool", "cannot read sim pool spec: " + path.string());
  SimWorld w;
  try {
    const json j = json::parse(in);
    w.domains = j.at("domains").get<std::vector<std::string>>();
    w.dim = j.value("dim", w.dim);
    w.noise = j.value("noise", w.noise);
    w.default_accuracy = j.value("default_accuracy", w.default_accuracy);
    w.distractors = j.value("distractors", w.distractors);
    w.embedder_model = j.value("embedder_model", w.embedder_model);
    w.scorer_model = j.value("scorer_model", w.scorer_model);
    for (const auto& m : j.at("models")) {
      SimModelSpec s;
      s.id = m.at("id").get<std::string>();
      s.per_domain_accuracy = m.value("per_domain_accuracy", std::map<std::string, double>{});
      s.response_style = m.value("response_style", 0);
      s.seed = m.value("seed", std::uint64_t{0});
      for (const auto& [d, p] : s.per_domain_accuracy) {
        if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("models." + s.id, "accuracy for " + d + " outside [0,1]");
      }
      if (w.find(s.id)) throw ConfigError("models", "duplicate sim model id: " + s.id);
      w.models.push_back(std::move(s));
    }
  } catch (const json::exception& e) {
    throw ConfigError("sim_pool", path.string() + ": " + e.what());
  }
  if (w.distractors < 1) throw ConfigError("distractors", "must be >= 1");
  if (w.dim < 2) throw ConfigError("dim", "must be >= 2");
  return w;
}

void SimWorld::save(const std::filesystem::path& path) const {
  json models_json = json::array();
  for (const auto& m : models) {
    models_json.push_back({{"id", m.id},
                           {"per_domain_accuracy", m.per_domain_accuracy},
                           {"response_style", m.response_style},
                           {"seed", m.seed}});
  }
  const json j = {{"domains", domains},
                  {"dim", dim},
                  {"noise", noise},
                  {"default_accuracy", default_accuracy},
                  {"distractors", distractors},
                  {"embedder_model", embedder_model},
                  {"scorer_model", scorer_model},
                  {"models", models_json}};
  std::ofstream out(path);
  if (!out) throw Error("cannot write sim pool spec: " + path.string());
  out << j.dump(2) << '\n';
}

SimQuery make_query(const std::string& domain, std::size_t index, std::string_view salt) {
  SimQuery q;
  q.id = std::string(salt) + "-" + domain + "-" + std::to_string(index);
  q.domain = domain;
  q.truth = std::to_string(100 + splitmix64(fnv1a(q.id)) % 900);
  return q;
}

std::string question_text(const SimQuery& q) {
  return "[sim id=" + q.id + " domain=" + q.domain + "] Determine the hidden value for problem " + q.id + ".";
}

std::optional<SimQuery> parse_question(std::string_view text) {
  static const std::regex kTag(R"(\[sim id=(\S+) domain=([^\]\s]+)\])");
  std::match_results<std::string_view::const_iterator> m;
  if (!std::regex_search(text.begin(), text.end(), m, kTag)) return std::nullopt;
  SimQuery q;
  q.id = m[1].str();
  q.domain = m[2].str();
  q.truth = std::to_string(100 + splitmix64(fnv1a(q.id)) % 900);
  return q;
}

bool answers_correctly(const SimWorld& world, const SimModelSpec& spec, const SimQuery& query) {
  const double u = to_unit(splitmix64(spec.seed ^ fnv1a(query.id)));
  return u < world.accuracy(spec, query.domain);
}

std::string sim_answer(const SimWorld& world, const SimModelSpec& spec, const SimQuery& query) {
  if (answers_correctly(world, spec, query)) return phrase(spec.response_style, query.truth);
  const auto pick = splitmix64(spec.seed * 0x9e3779b97f4a7c15ULL ^ fnv1a(query.id) ^ 0x5bd1e995ULL);
  const int k = static_cast<int>(pick % static_cast<std::uint64_t>(std::max(1, world.distractors)));
  return phrase(spec.response_style, distractor(query, k));
}

std::vector<double> sim_embed(const SimWorld& world, std::string_view text) {
  std::string key;
  static const std::regex kDomain(R"(domain=([^\]\s]+)\])");
  std::match_results<std::string_view::const_iterator> m;
  if (std::regex_search(text.begin(), text.end(), m, kDomain)) {
    key = "domain:" + m[1].str();
  } else if (auto boxed = extract_boxed(text)) {
    key = "answer:" + normalize_answer(*boxed);
  } else {
    key = "text:" + std::string(text);
  }
  auto anchor = unit_gaussian(fnv1a(key), world.dim);
  const auto wobble = unit_gaussian(fnv1a(text, 0x1234567887654321ULL), world.dim);
  for (std::size_t i = 0; i < anchor.size(); ++i) anchor[i] += world.noise * wobble[i];
  double n2 = 0.0;
  for (double x : anchor) n2 += x * x;
  const double n = std::sqrt(n2);
  for (double& x : anchor) x /= n;
  return anchor;
}

std::string sim_aggregate(const std::vector<std::string>& subset_responses) {
  std::vector<std::string> order;
  std::map<std::string, int> votes;
  for (const auto& r : subset_responses) {
    auto a = extract_boxed(r);
    if (!a) continue;
    auto ans = normalize_answer(*a);
    if (ans.empty()) continue;
    if (votes[ans]++ == 0) order.push_back(ans);
  }
  if (order.empty()) return "None of the responses contained a usable final answer.";
  std::string best = order.front();
  for (const auto& a : order) {
    if (votes[a] > votes[best]) best = a;
  }
  return "Synthesizing the references, the final answer is \\boxed{" + best + "}.";
}

std::vector<double> sim_token_logprobs(std::string_view text) {
  std::vector<double> out;
  for (const auto& t : whitespace_tokens(text)) out.push_back(token_logprob(t.text));
  return out;
}

std::vector<QuestionRecord> bank_records(const SimWorld& world, std::size_t per_domain, std::string_view salt) {
  std::vector<QuestionRecord> out;
  out.reserve(world.domains.size() * per_domain);
  for (const auto& d : world.domains) {
    for (std::size_t i = 0; i < per_domain; ++i) {
      const auto q = make_query(d, i, salt);
      out.push_back(QuestionRecord{q.id, d, TaskKind::BoxedMath, question_text(q), q.truth, {}});
    }
  }
  return out;
}

SimWorld specialist_world() {
  SimWorld w;
  w.domains = {"math", "code", "medicine", "science"};
  const double in_domain[] = {0.80, 0.75, 0.70};
  const double off_domain[] = {0.30, 0.25, 0.20};
  const double generalist[] = {0.55, 0.50, 0.45};
  int style = 0;
  auto add = [&](std::string id, std::map<std::string, double> acc) {
    const std::uint64_t seed = fnv1a(id);
    w.models.push_back({std::move(id), std::move(acc), style++ % 4, seed});
  };
  for (int tier = 0; tier < 3; ++tier) {
    std::map<std::string, double> g;
    for (const auto& d : w.domains) g[d] = generalist[tier];
    add("generalist-" + std::to_string(tier + 1), g);
    for (const auto& home : w.domains) {
      std::map<std::string, double> acc;
      for (const auto& d : w.domains) acc[d] = d == home ? in_domain[tier] : off_domain[tier];
      add(home + "-" + std::to_string(tier + 1), acc);
    }
  }
  return w;
}

SimWorld sharp_world() {
  SimWorld w;
  w.domains = {"math", "code", "medicine", "science"};
  int style = 0;
  for (int tier = 0; tier < 3; ++tier) {
    for (std::size_t h = 0; h < w.domains.size(); ++h) {
      std::map<std::string, double> acc;
      for (std::size_t d = 0; d < w.domains.size(); ++d) {
        // Off-domain values differ per (model, domain) so priors rarely tie.
        acc[w.domains[d]] = d == h ? 0.97 + 0.01 * tier : 0.01 + 0.01 * static_cast<double>((tier + d + h) % 4);
      }
      std::string id = "sharp-" + w.domains[h] + "-" + std::to_string(tier + 1);
      const std::uint64_t seed = fnv1a(id);
      w.models.push_back({std::move(id), std::move(acc), style++ % 4, seed});
    }
  }
  return w;
}

// ---------------------------------------------------------------------------

WireResponse SimPool::handle(const std::string& path, const std::string& body) const {
  json req;
  try {
    req = body.empty() ? json::object() : json::parse(body);
  } catch (const json::exception& e) {
    return error_reply(400, std::string("malformed JSON: ") + e.what());
  }
  const std::string model = req.value("model", std::string{});

  if (path == "/models") {
    json data = json::array();
    for (const auto& m : world_.models) data.push_back({{"id", m.id}, {"object", "model"}});
    data.push_back({{"id", world_.embedder_model}, {"object", "model"}});
    data.push_back({{"id", world_.scorer_model}, {"object", "model"}});
    return json_reply({{"object", "list"}, {"data", data}});
  }

  if (path == "/chat/completions") {
    if (!req.contains("messages") || !req["messages"].is_array()) return error_reply(400, "messages required");
    std::string system, user;
    for (const auto& msg : req["messages"]) {
      const auto role = msg.value("role", std::string{});
      const auto content = msg.value("content", std::string{});
      if (role == "system") system = content;
      if (role == "user") user = content;
    }
    std::string text;
    if (auto refs = parse_aggregation_responses(system)) {
      text = sim_aggregate(*refs);
    } else {
      const SimModelSpec* spec = world_.find(model);
      if (!spec) return error_reply(404, "unknown model: " + model);
      if (auto q = parse_question(user)) {
        text = sim_answer(world_, *spec, *q);
      } else {
        text = "I am not sure how to answer this question.";
      }
    }
    const auto tokens = whitespace_tokens(text);
    json choice = {{"index", 0},
                   {"message", {{"role", "assistant"}, {"content", text}}},
                   {"finish_reason", "stop"}};
    if (req.value("logprobs", false)) {
      json content = json::array();
      for (const auto& t : tokens) content.push_back({{"token", t.text}, {"logprob", token_logprob(t.text)}});
      choice["logprobs"] = {{"content", content}};
    }
    return json_reply({{"id", "simcmpl-" + hex64(fnv1a(body))},
                       {"object", "chat.completion"},
                       {"model", model},
                       {"choices", json::array({choice})},
                       {"usage",
                        {{"prompt_tokens", whitespace_tokens(system).size() + whitespace_tokens(user).size()},
                         {"completion_tokens", tokens.size()}}}});
  }

  if (path == "/embeddings") {
    if (model != world_.embedder_model) return error_reply(404, "unknown embedding model: " + model);
    std::vector<std::string> inputs;
    if (req.contains("input") && req["input"].is_string()) {
      inputs.push_back(req["input"].get<std::string>());
    } else if (req.contains("input") && req["input"].is_array()) {
      inputs = req["input"].get<std::vector<std::string>>();
    } else {
      return error_reply(400, "input required");
    }
    json data = json::array();
    for (std::size_t i = 0; i < inputs.size(); ++i) {
      data.push_back({{"object", "embedding"}, {"index", i}, {"embedding", sim_embed(world_, inputs[i])}});
    }
    return json_reply({{"object", "list"}, {"model", model}, {"data", data}});
  }

  if (path == "/completions") {
    if (model != world_.scorer_model) return error_reply(400, "model does not support logprob scoring: " + model);
    if (!req.value("echo", false)) return error_reply(400, "only echo scoring is supported");
    const std::string prompt = req.value("prompt", std::string{});
    json tokens = json::array(), lps = json::array(), offsets = json::array();
    bool first = true;
    for (const auto& t : whitespace_tokens(prompt)) {
      tokens.push_back(t.text);
      lps.push_back(first ? json(nullptr) : json(token_logprob(t.text)));
      offsets.push_back(t.offset);
      first = false;
    }
    // One generated token after the echoed prompt.
    tokens.push_back(" .");
    lps.push_back(-0.5);
    offsets.push_back(prompt.size());
    json choice = {{"index", 0},
                   {"text", prompt + " ."},
                   {"finish_reason", "length"},
                   {"logprobs", {{"tokens", tokens}, {"token_logprobs", lps}, {"text_offset", offsets}}}};
    return json_reply({{"object", "text_completion"}, {"model", model}, {"choices", json::array({choice})}});
  }

  return error_reply(404, "no route: " + path);
}

WireResponse SimTransport::post(const ModelEndpoint&, const std::string& path, const std::string& body) {
  if (record_) {
    std::lock_guard lock(mu_);
    log_.emplace_back(path, body);
  }
  return pool_->handle(path, body);
}

std::vector<std::pair<std::string, std::string>> SimTransport::requests() const {
  std::lock_guard lock(mu_);
  return log_;
}

}  // namespace smacs::sim
