#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "smacs/pipeline.hpp"
#include "smacs/question_bank.hpp"

namespace smacs {

struct RankingQuestion {
  std::vector<double> prior;          // one score per model
  std::vector<std::uint8_t> correct;  // 0/1 per model, same order
};

/// Fraction of (correct model, incorrect model) pairs, pooled over questions,
/// whose prior is strictly higher for the correct one. Questions where every
/// model agrees contribute nothing. Throws Error when no question has both a
/// correct and an incorrect model.
double pairwise_ranking_score(const std::vector<RankingQuestion>& questions);

struct OcaMca {
  double oca = 0.0;  // share of questions with >= 1 correct candidate
  double mca = 0.0;  // share with >= 2
};

/// Rows must be non-empty and of equal width. Throws Error otherwise.
OcaMca oca_mca(const std::vector<std::vector<bool>>& rows);

struct QueryOutcome {
  std::string query_id;
  std::string dataset;
  bool correct = false;
  std::string answer;
  std::string reason;
  std::vector<bool> candidate_correct;
  std::vector<std::string> referencers;
  std::uint64_t seed = 0;
};

struct AccuracyRow {
  std::string dataset;
  std::size_t correct = 0;
  std::size_t total = 0;
  double percent = 0.0;
};

struct AccuracyReport {
  std::vector<AccuracyRow> rows;  // dataset order of first appearance
  double average = 0.0;           // macro average of the per-dataset percentages

  /// Aligned plain-text table, percentages with two decimals.
  std::string to_table() const;
  std::string to_json() const;
};

AccuracyReport accuracy_table(const std::vector<QueryOutcome>& outcomes);

/// Seed used for `query_id` under a run seed.
std::uint64_t query_seed(std::uint64_t run_seed, std::string_view query_id);

/// Verdict for one response, going through the config's hook for code.
Verdict grade(const QuestionRecord& record, std::string_view response, const PipelineConfig& config);

/// Runs every query through `pipeline` (OpenMP across queries, seeded per
/// query) and grades the answer and every candidate. The first pipeline
/// error is rethrown after the loop.
std::vector<QueryOutcome> evaluate_queries(const Pipeline& pipeline, const std::vector<QuestionRecord>& queries,
                                           const AskOverrides& overrides, std::uint64_t run_seed);

struct ScalingPoint {
  std::size_t pool_size = 0;
  std::size_t correct = 0;
  std::size_t total = 0;
  double accuracy = 0.0;
  OcaMca exploration;
  std::vector<QueryOutcome> outcomes;
};

/// Full pipeline over the same queries for each pool prefix size.
std::vector<ScalingPoint> scaling_run(const Pipeline& pipeline, const std::vector<std::size_t>& sizes,
                                      const std::vector<QuestionRecord>& queries, const AskOverrides& overrides,
                                      std::uint64_t run_seed);

std::string scaling_table(const std::vector<ScalingPoint>& points);
std::string scaling_json(const std::vector<ScalingPoint>& points);

}  // namespace smacs
