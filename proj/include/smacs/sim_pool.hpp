#pragma once

// Deterministic stand-in for a model pool. Questions carry a tag
// "[sim id=<id> domain=<domain>]" from which every simulated model derives
// the ground truth and its own (seeded) correctness, so the whole pool is
// stateless and can sit behind an HTTP server.

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "smacs/gateway.hpp"
#include "smacs/question_bank.hpp"

namespace smacs::sim {

struct SimModelSpec {
  std::string id;
  std::map<std::string, double> per_domain_accuracy;
  int response_style = 0;
  std::uint64_t seed = 0;
  bool operator==(const SimModelSpec&) const = default;
};

struct SimQuery {
  std::string id;
  std::string domain;
  std::string truth;
};

struct SimWorld {
  std::vector<std::string> domains;
  std::size_t dim = 256;
  double noise = 0.3;              // norm of the per-text perturbation
  double default_accuracy = 0.25;  // for domains a model does not list
  int distractors = 3;             // distinct wrong answers per question
  std::string embedder_model = "sim-embed";
  std::string scorer_model = "sim-scorer";
  std::vector<SimModelSpec> models;

  const SimModelSpec* find(std::string_view id) const;
  double accuracy(const SimModelSpec& spec, const std::string& domain) const;

  static SimWorld load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;
};

SimQuery make_query(const std::string& domain, std::size_t index, std::string_view salt);
std::string question_text(const SimQuery& q);
std::optional<SimQuery> parse_question(std::string_view text);

/// Whether `spec` answers `query` correctly; a pure function of
/// (spec.seed, query.id, accuracy).
bool answers_correctly(const SimWorld& world, const SimModelSpec& spec, const SimQuery& query);

/// Boxed answer text; correct with the model's domain accuracy, otherwise
/// one of the query's distractors. Phrasing follows response_style.
std::string sim_answer(const SimWorld& world, const SimModelSpec& spec, const SimQuery& query);

/// Unit vector: domain anchor (from the question tag), else answer anchor
/// (from a \boxed{} span), else text anchor, plus a small text-hash
/// perturbation.
std::vector<double> sim_embed(const SimWorld& world, std::string_view text);

/// Majority of the extracted answers; ties go to the earliest response.
std::string sim_aggregate(const std::vector<std::string>& subset_responses);

/// Per-whitespace-token logprobs in [-0.15, -0.05], hashed from the token.
std::vector<double> sim_token_logprobs(std::string_view text);

/// Bank records for `per_domain` questions in every domain (boxed-math).
std::vector<QuestionRecord> bank_records(const SimWorld& world, std::size_t per_domain, std::string_view salt);

/// Four domains; three specialist tiers (in-domain 0.80/0.75/0.70, elsewhere
/// 0.30/0.25/0.20) and three generalists (0.55/0.50/0.45). Model order is
/// generalist-1, math-1, code-1, medicine-1, science-1, generalist-2, ... so
/// prefixes of 5, 10 and 15 each cover every domain.
SimWorld specialist_world();

/// Twelve models, three per domain, near-perfect at home (0.97-0.99) and
/// near-useless elsewhere (0.01-0.04).
SimWorld sharp_world();

/// OpenAI-compatible handler for /chat/completions, /embeddings,
/// /completions (echo scoring) and /models. Paths exclude the /v1 prefix.
class SimPool {
 public:
  explicit SimPool(SimWorld world) : world_(std::move(world)) {}
  const SimWorld& world() const { return world_; }
  WireResponse handle(const std::string& path, const std::string& body) const;

 private:
  SimWorld world_;
};

/// Transport that calls SimPool::handle directly; optionally records every
/// (path, body) it sees.
class SimTransport : public Transport {
 public:
  explicit SimTransport(std::shared_ptr<const SimPool> pool, bool record = false)
      : pool_(std::move(pool)), record_(record) {}
  WireResponse post(const ModelEndpoint& endpoint, const std::string& path, const std::string& body) override;
  bool in_process() const override { return true; }
  std::vector<std::pair<std::string, std::string>> requests() const;

 private:
  std::shared_ptr<const SimPool> pool_;
  bool record_;
  mutable std::mutex mu_;
  std::vector<std::pair<std::string, std::string>> log_;
};

}  // namespace smacs::sim
