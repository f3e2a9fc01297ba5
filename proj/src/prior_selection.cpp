#include "smacs/prior_selection.hpp"

#include <algorithm>
#include <numeric>

#include "smacs/kernels.hpp"

namespace smacs {

std::vector<double> prior_vector(const CapabilityMatrix& capability, const SupportSet& support) {
  if (support.indices.size() != support.similarities.size()) throw Error("support set is misaligned");
  for (auto i : support.indices) {
    if (i >= capability.cols()) {
      throw Error("support index " + std::to_string(i) + " out of range for " + std::to_string(capability.cols()) +
                  " capability columns");
    }
  }
  std::vector<double> prior(capability.rows(), 0.0);
  kernels::masked_matvec(capability.data(), capability.cols(), support.indices, support.similarities, prior);
  return prior;
}

ReferencerSelection select_referencers(const std::vector<double>& prior, const std::vector<std::string>& pool_ids,
                                       std::size_t k) {
  if (k < 1) throw Error("k must be >= 1");
  if (pool_ids.empty()) throw Error("empty pool");
  if (prior.size() != pool_ids.size()) throw Error("prior length does not match pool size");

  ReferencerSelection sel;
  sel.prior_scores = prior;
  sel.truncated = k > pool_ids.size();
  const std::size_t take = std::min(k, pool_ids.size());

  std::vector<std::size_t> order(pool_ids.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return prior[a] > prior[b]; });
  order.resize(take);

  sel.chosen_rows = order;
  for (auto r : order) {
    sel.chosen.push_back(pool_ids[r]);
    sel.chosen_priors.push_back(prior[r]);
  }
  return sel;
}

std::string select_aggregator(const AggregatorChoice& choice, std::optional<TaskKind> kind) {
  if (kind) {
    auto it = choice.overrides.find(*kind);
    if (it != choice.overrides.end() && !it->second.empty()) return it->second;
  }
  if (choice.default_id.empty()) throw ConfigError("aggregator.default", "no aggregator configured");
  return choice.default_id;
}

}  // namespace smacs
