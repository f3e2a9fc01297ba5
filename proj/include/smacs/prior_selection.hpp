#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "smacs/common.hpp"
#include "smacs/question_bank.hpp"
#include "smacs/retrieval.hpp"

namespace smacs {

struct ReferencerSelection {
  std::vector<double> prior_scores;       // one per pool model, pool order
  std::vector<std::size_t> chosen_rows;   // pool positions, descending prior
  std::vector<std::string> chosen;        // model ids, same order
  std::vector<double> chosen_priors;      // non-increasing
  std::string aggregator_id;
  bool truncated = false;                 // k exceeded the pool size
};

/// prior[r] = sum over support positions of bits[r][i] * similarity_i.
std::vector<double> prior_vector(const CapabilityMatrix& capability, const SupportSet& support);

/// The k largest priors; equal priors keep pool order (lower index first).
/// k > pool size truncates and sets `truncated`.
ReferencerSelection select_referencers(const std::vector<double>& prior, const std::vector<std::string>& pool_ids,
                                       std::size_t k);

struct AggregatorChoice {
  std::string default_id;
  std::map<TaskKind, std::string> overrides;
  bool operator==(const AggregatorChoice&) const = default;
};

/// Per-task override when one exists for `kind`, else the default.
/// Throws ConfigError when nothing is configured.
std::string select_aggregator(const AggregatorChoice& choice, std::optional<TaskKind> kind);

}  // namespace smacs
