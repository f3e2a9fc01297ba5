#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "smacs/gateway.hpp"
#include "smacs/prior_selection.hpp"
#include "smacs/retrieval.hpp"

namespace smacs {

using Rng = std::mt19937_64;

struct DropDistribution {
  std::vector<double> probabilities;
};

/// Softmax of the z-scored priors (population standard deviation). A zero
/// spread gives the uniform distribution.
DropDistribution drop_distribution(std::span<const double> chosen_priors);

/// Draws K - k_drop distinct indices one at a time, each proportional to the
/// probability mass still in the urn. Returned ascending (referencer order).
/// k_drop = 0 returns every index without touching the generator.
std::vector<std::size_t> sample_subset(const DropDistribution& dist, std::size_t k_drop, Rng& rng);

/// exp(-mean(logprobs)). Throws on an empty list.
double perplexity(std::span<const double> token_logprobs);

/// S_i = (1/n) sum_j max(0, cos(G_i, G_j)), self-term included.
std::vector<double> mean_pairwise_similarity(const std::vector<std::string>& candidates, const Embedder& embedder);
std::vector<double> mean_pairwise_similarity(const std::vector<std::vector<double>>& unit_vectors);

struct FinalChoice {
  std::vector<double> total_scores;
  std::size_t selected = 0;
};

/// total_i = sim_i + lambda * (1 - ppl_i); argmax, lowest index on ties.
FinalChoice select_final(std::span<const double> sim_scores, std::span<const double> ppl_values, double lambda);

/// Min-max rescale of perplexities to [0, 1]; all-equal input maps to 0.
std::vector<double> minmax_normalize(std::span<const double> values);

struct PosteriorParams {
  std::size_t n = 8;
  std::size_t k_drop = 1;
  double lambda = 1.0;
  bool normalize_ppl = false;
  bool operator==(const PosteriorParams&) const = default;
};

struct CandidateSet {
  std::vector<std::string> candidates;             // empty text for a failed aggregation
  std::vector<std::vector<std::size_t>> subset_positions;  // positions into the referencer list
  std::vector<std::vector<std::string>> subsets;   // referencer ids per candidate
  std::vector<bool> failed;
  std::vector<std::string> errors;                 // per candidate, empty when fine
  std::vector<double> sim_scores;                  // NaN for failed candidates
  std::vector<std::optional<double>> ppl;          // raw perplexity, empty when not scored
  std::vector<double> ppl_scores;
  std::vector<double> total_scores;
  std::size_t selected = 0;
  bool degraded = false;                           // at least one candidate failed
  bool ppl_scored = false;

  const std::string& answer() const { return candidates.at(selected); }
};

struct PosteriorContext {
  const Gateway* gateway = nullptr;
  std::string aggregator_id;
  const Embedder* embedder = nullptr;
  std::optional<std::string> scorer_id;  // unset: perplexity unavailable
};

/// Single aggregation call over `subset_responses` in the given order.
CompletionResult aggregate(std::string_view question, const std::vector<std::string>& subset_responses,
                           const Gateway& gateway, const ModelEndpoint& aggregator);

/// Prior dropping n times, n aggregations, hybrid scoring and selection.
/// `references` are aligned with `selection.chosen`. Subsets are drawn
/// up-front from `rng` so the result does not depend on call completion
/// order.
CandidateSet run_posterior(std::string_view question, const ReferencerSelection& selection,
                           const std::vector<std::string>& references, const PosteriorParams& params, Rng& rng,
                           const PosteriorContext& ctx);

}  // namespace smacs
