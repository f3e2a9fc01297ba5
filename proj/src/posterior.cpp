#include "smacs/posterior.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <limits>
#include <numeric>

#include "smacs/kernels.hpp"

namespace smacs {

DropDistribution drop_distribution(std::span<const double> chosen_priors) {
  const std::size_t k = chosen_priors.size();
  if (k == 0) throw Error("drop distribution needs at least one referencer");
  const double mean = std::accumulate(chosen_priors.begin(), chosen_priors.end(), 0.0) / static_cast<double>(k);
  double var = 0.0;
  for (double v : chosen_priors) var += (v - mean) * (v - mean);
  const double sd = std::sqrt(var / static_cast<double>(k));

  DropDistribution d;
  d.probabilities.assign(k, 1.0 / static_cast<double>(k));
  if (!(sd > 0.0)) return d;

  std::vector<double> z(k);
  for (std::size_t i = 0; i < k; ++i) z[i] = (chosen_priors[i] - mean) / sd;
  const double zmax = *std::max_element(z.begin(), z.end());
  double sum = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    d.probabilities[i] = std::exp(z[i] - zmax);
    sum += d.probabilities[i];
  }
  for (double& p : d.probabilities) p /= sum;
  return d;
}

std::vector<std::size_t> sample_subset(const DropDistribution& dist, std::size_t k_drop, Rng& rng) {
  const std::size_t k = dist.probabilities.size();
  if (k_drop >= k) {
    throw Error("k_drop (" + std::to_string(k_drop) + ") must be smaller than the number of referencers (" +
                std::to_string(k) + ")");
  }
  std::vector<std::size_t> picked;
  if (k_drop == 0) {
    picked.resize(k);
    std::iota(picked.begin(), picked.end(), 0);
    return picked;
  }
  std::vector<double> weight = dist.probabilities;
  std::vector<bool> taken(k, false);
  const std::size_t keep = k - k_drop;
  picked.reserve(keep);
  for (std::size_t draw = 0; draw < keep; ++draw) {
    double remaining = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
      if (!taken[i]) remaining += weight[i];
    }
    const double u = to_unit(rng()) * remaining;
    double acc = 0.0;
    std::size_t choice = k;
    std::size_t last_open = k;
    for (std::size_t i = 0; i < k; ++i) {
      if (taken[i]) continue;
      last_open = i;
      acc += weight[i];
      if (u < acc) {
        choice = i;
        break;
      }
    }
    // Rounding can leave u just above the accumulated mass.
    if (choice == k) choice = last_open;
    taken[choice] = true;
    picked.push_back(choice);
  }
  std::sort(picked.begin(), picked.end());
  return picked;
}

double perplexity(std::span<const double> token_logprobs) {
  if (token_logprobs.empty()) throw Error("perplexity of zero tokens is undefined");
  double nll = 0.0;
  for (double lp : token_logprobs) nll -= lp;
  return std::exp(nll / static_cast<double>(token_logprobs.size()));
}

std::vector<double> mean_pairwise_similarity(const std::vector<std::vector<double>>& unit_vectors) {
  const std::size_t n = unit_vectors.size();
  if (n == 0) throw Error("mean pairwise similarity needs at least one candidate");
  const std::size_t dim = unit_vectors.front().size();
  std::vector<double> flat;
  flat.reserve(n * dim);
  for (const auto& v : unit_vectors) {
    if (v.size() != dim) throw Error("candidate embeddings differ in dimension");
    flat.insert(flat.end(), v.begin(), v.end());
  }
  std::vector<double> gram(n * n);
  kernels::gram_clamped(flat, dim, gram);
  std::vector<double> out(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < n; ++j) acc += gram[i * n + j];
    out[i] = acc / static_cast<double>(n);
  }
  return out;
}

std::vector<double> mean_pairwise_similarity(const std::vector<std::string>& candidates, const Embedder& embedder) {
  return mean_pairwise_similarity(embedder.embed_batch(candidates));
}

FinalChoice select_final(std::span<const double> sim_scores, std::span<const double> ppl_values, double lambda) {
  if (sim_scores.empty() || sim_scores.size() != ppl_values.size()) {
    throw Error("select_final needs equal-length, non-empty score vectors");
  }
  FinalChoice out;
  out.total_scores.resize(sim_scores.size());
  for (std::size_t i = 0; i < sim_scores.size(); ++i) {
    out.total_scores[i] = sim_scores[i] + lambda * (1.0 - ppl_values[i]);
    if (out.total_scores[i] > out.total_scores[out.selected]) out.selected = i;
  }
  return out;
}

std::vector<double> minmax_normalize(std::span<const double> values) {
  std::vector<double> out(values.begin(), values.end());
  if (out.empty()) return out;
  const auto [lo, hi] = std::minmax_element(out.begin(), out.end());
  const double low = *lo;
  const double span = *hi - *lo;
  for (double& v : out) v = span > 0.0 ? (v - low) / span : 0.0;
  return out;
}

CompletionResult aggregate(std::string_view question, const std::vector<std::string>& subset_responses,
                           const Gateway& gateway, const ModelEndpoint& aggregator) {
  if (subset_responses.empty()) throw Error("aggregation needs at least one reference");
  return gateway.chat_complete(aggregator, aggregation_request(question, subset_responses));
}

CandidateSet run_posterior(std::string_view question, const ReferencerSelection& selection,
                           const std::vector<std::string>& references, const PosteriorParams& params, Rng& rng,
                           const PosteriorContext& ctx) {
  if (!ctx.gateway || !ctx.embedder) throw Error("posterior context is incomplete");
  if (references.size() != selection.chosen.size() || references.empty()) {
    throw PipelineError("posterior", "references are not aligned with the selected referencers");
  }
  if (params.n < 1) throw PipelineError("posterior", "n must be >= 1");
  const Gateway& gw = *ctx.gateway;
  const std::size_t n = params.n;

  CandidateSet cs;
  const DropDistribution dist = drop_distribution(selection.chosen_priors);
  for (std::size_t round = 0; round < n; ++round) {
    auto positions = sample_subset(dist, params.k_drop, rng);
    std::vector<std::string> ids;
    for (auto p : positions) ids.push_back(selection.chosen[p]);
    cs.subset_positions.push_back(std::move(positions));
    cs.subsets.push_back(std::move(ids));
  }

  std::vector<std::pair<std::string, ChatRequest>> calls;
  calls.reserve(n);
  for (const auto& positions : cs.subset_positions) {
    std::vector<std::string> texts;
    for (auto p : positions) texts.push_back(references[p]);
    calls.emplace_back(ctx.aggregator_id, aggregation_request(question, texts));
  }
  const auto results = gw.run_all(calls);

  cs.candidates.resize(n);
  cs.failed.assign(n, false);
  cs.errors.assign(n, "");
  std::vector<std::size_t> live;
  for (std::size_t i = 0; i < n; ++i) {
    if (results[i].result) {
      cs.candidates[i] = results[i].result->text;
      live.push_back(i);
    } else {
      cs.failed[i] = true;
      cs.errors[i] = results[i].error;
      cs.degraded = true;
    }
  }
  if (live.empty()) throw PipelineError("aggregation", "all " + std::to_string(n) + " aggregations failed");

  // Similarity among surviving candidates only.
  std::vector<std::string> live_texts;
  for (auto i : live) live_texts.push_back(cs.candidates[i]);
  std::vector<double> live_sim;
  try {
    live_sim = mean_pairwise_similarity(live_texts, *ctx.embedder);
  } catch (const std::exception& e) {
    throw PipelineError("similarity", e.what());
  }

  const double nan = std::numeric_limits<double>::quiet_NaN();
  cs.sim_scores.assign(n, nan);
  cs.ppl.assign(n, std::nullopt);
  cs.ppl_scores.assign(n, nan);
  cs.total_scores.assign(n, nan);
  for (std::size_t k = 0; k < live.size(); ++k) cs.sim_scores[live[k]] = live_sim[k];

  std::vector<double> live_ppl(live.size(), 1.0);  // 1 - 1 = 0 when unscored
  if (params.lambda > 0.0) {
    if (!ctx.scorer_id) throw PipelineError("scoring", "lambda > 0 but no scorer is configured");
    try {
      const ModelEndpoint& scorer = gw.endpoint(*ctx.scorer_id);
      auto score_one = [&](const std::string& text) { return perplexity(gw.score_logprobs(scorer, text)); };
      if (gw.in_process()) {
        for (std::size_t k = 0; k < live.size(); ++k) live_ppl[k] = score_one(live_texts[k]);
      } else {
        std::vector<std::future<double>> futures;
        for (const auto& text : live_texts) futures.push_back(std::async(std::launch::async, score_one, std::cref(text)));
        for (std::size_t k = 0; k < live.size(); ++k) live_ppl[k] = futures[k].get();
      }
    } catch (const PipelineError&) {
      throw;
    } catch (const std::exception& e) {
      throw PipelineError("scoring", e.what());
    }
    cs.ppl_scored = true;
    for (std::size_t k = 0; k < live.size(); ++k) cs.ppl[live[k]] = live_ppl[k];
  }

  const std::vector<double> effective_ppl =
      cs.ppl_scored && params.normalize_ppl ? minmax_normalize(live_ppl) : live_ppl;
  const FinalChoice choice = select_final(live_sim, effective_ppl, params.lambda);
  for (std::size_t k = 0; k < live.size(); ++k) {
    cs.ppl_scores[live[k]] = cs.ppl_scored ? 1.0 - effective_ppl[k] : 0.0;
    cs.total_scores[live[k]] = choice.total_scores[k];
  }
  cs.selected = live[choice.selected];
  return cs;
}

}  // namespace smacs
