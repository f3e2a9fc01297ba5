#include "smacs/evaluation.hpp"

#include <cstdio>
#include <exception>
#include <map>
#include <sstream>

#include "json.hpp"
#include "smacs/kernels.hpp"

namespace smacs {

using nlohmann::json;

namespace {

std::string fixed2(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

}  // namespace

double pairwise_ranking_score(const std::vector<RankingQuestion>& questions) {
  if (questions.empty()) throw Error("ranking score: no questions");
  const std::size_t width = questions.front().prior.size();
  std::vector<double> priors;
  std::vector<std::uint8_t> correct;
  priors.reserve(questions.size() * width);
  correct.reserve(questions.size() * width);
  for (const auto& q : questions) {
    if (q.prior.size() != width || q.correct.size() != width) {
      throw Error("ranking score: every question needs one prior and one verdict per model");
    }
    priors.insert(priors.end(), q.prior.begin(), q.prior.end());
    for (auto c : q.correct) correct.push_back(c ? 1 : 0);
  }
  const auto counts = kernels::ranking_pair_counts(priors, correct, width);
  if (counts.total == 0) throw Error("ranking score undefined: no question has both correct and incorrect models");
  return static_cast<double>(counts.ordered) / static_cast<double>(counts.total);
}

OcaMca oca_mca(const std::vector<std::vector<bool>>& rows) {
  if (rows.empty()) throw Error("oca/mca: no rows");
  const std::size_t n = rows.front().size();
  if (n == 0) throw Error("oca/mca: rows must have at least one candidate");
  std::size_t one = 0, many = 0;
  for (const auto& row : rows) {
    if (row.size() != n) throw Error("oca/mca: rows differ in width");
    std::size_t c = 0;
    for (bool b : row) c += b ? 1 : 0;
    one += c >= 1;
    many += c >= 2;
  }
  const double q = static_cast<double>(rows.size());
  return {static_cast<double>(one) / q, static_cast<double>(many) / q};
}

AccuracyReport accuracy_table(const std::vector<QueryOutcome>& outcomes) {
  AccuracyReport report;
  std::map<std::string, std::size_t> slot;
  for (const auto& o : outcomes) {
    auto [it, inserted] = slot.emplace(o.dataset, report.rows.size());
    if (inserted) report.rows.push_back({o.dataset, 0, 0, 0.0});
    auto& row = report.rows[it->second];
    row.total += 1;
    row.correct += o.correct ? 1 : 0;
  }
  double sum = 0.0;
  for (auto& row : report.rows) {
    row.percent = 100.0 * static_cast<double>(row.correct) / static_cast<double>(row.total);
    sum += row.percent;
  }
  if (!report.rows.empty()) report.average = sum / static_cast<double>(report.rows.size());
  return report;
}

std::string AccuracyReport::to_table() const {
  std::size_t w = 7;  // "Average"
  for (const auto& r : rows) w = std::max(w, r.dataset.size());
  std::ostringstream os;
  auto line = [&](const std::string& name, const std::string& count, const std::string& pct) {
    os << name << std::string(w - name.size() + 2, ' ');
    os << std::string(count.size() < 12 ? 12 - count.size() : 0, ' ') << count;
    os << std::string(pct.size() < 10 ? 10 - pct.size() : 0, ' ') << pct << '\n';
  };
  line("Dataset", "Correct", "Acc(%)");
  for (const auto& r : rows) {
    line(r.dataset, std::to_string(r.correct) + "/" + std::to_string(r.total), fixed2(r.percent));
  }
  line("Average", "", fixed2(average));
  return os.str();
}

std::string AccuracyReport::to_json() const {
  json j = {{"datasets", json::array()}, {"average", fixed2(average)}};
  for (const auto& r : rows) {
    j["datasets"].push_back(
        {{"dataset", r.dataset}, {"correct", r.correct}, {"total", r.total}, {"accuracy", fixed2(r.percent)}});
  }
  return j.dump();
}

std::uint64_t query_seed(std::uint64_t run_seed, std::string_view query_id) {
  return splitmix64(run_seed ^ fnv1a(query_id));
}

Verdict grade(const QuestionRecord& record, std::string_view response, const PipelineConfig& config) {
  if (record.task_kind == TaskKind::Code) {
    HookOptions hook{config.hook_command,
                     std::chrono::milliseconds(static_cast<long long>(config.hook_timeout_s * 1000.0))};
    return verify_via_hook(response, record, hook);
  }
  return verify_response(response, record.label, record.task_kind);
}

std::vector<QueryOutcome> evaluate_queries(const Pipeline& pipeline, const std::vector<QuestionRecord>& queries,
                                           const AskOverrides& overrides, std::uint64_t run_seed) {
  std::vector<QueryOutcome> out(queries.size());
  std::exception_ptr first_error;
  const long long count = static_cast<long long>(queries.size());

#pragma omp parallel for schedule(dynamic)
  for (long long i = 0; i < count; ++i) {
    try {
      const auto& rec = queries[static_cast<std::size_t>(i)];
      AskRequest req;
      req.question = rec.question;
      req.task_kind = rec.task_kind;
      req.dataset = rec.dataset;
      req.seed = query_seed(run_seed, rec.id);
      req.overrides = overrides;
      const AskResponse r = pipeline.ask(req);

      QueryOutcome& o = out[static_cast<std::size_t>(i)];
      o.query_id = rec.id;
      o.dataset = rec.dataset;
      o.answer = r.answer;
      o.seed = *req.seed;
      o.referencers = r.trace.selection.chosen;
      const Verdict v = grade(rec, r.answer, pipeline.config());
      o.correct = v.correct;
      o.reason = v.reason;
      const auto& cs = r.trace.candidates;
      for (std::size_t k = 0; k < cs.candidates.size(); ++k) {
        o.candidate_correct.push_back(!cs.failed[k] && grade(rec, cs.candidates[k], pipeline.config()).correct);
      }
    } catch (...) {
#pragma omp critical(smacs_eval_error)
      if (!first_error) first_error = std::current_exception();
    }
  }
  if (first_error) std::rethrow_exception(first_error);
  return out;
}

std::vector<ScalingPoint> scaling_run(const Pipeline& pipeline, const std::vector<std::size_t>& sizes,
                                      const std::vector<QuestionRecord>& queries, const AskOverrides& overrides,
                                      std::uint64_t run_seed) {
  std::vector<ScalingPoint> points;
  for (std::size_t i = 1; i < sizes.size(); ++i) {
    if (sizes[i] <= sizes[i - 1]) throw ConfigError("sizes", "pool sizes must be strictly ascending");
  }
  for (std::size_t size : sizes) {
    const Pipeline sub = pipeline.with_pool_prefix(size);
    ScalingPoint pt;
    pt.pool_size = size;
    pt.outcomes = evaluate_queries(sub, queries, overrides, run_seed);
    pt.total = pt.outcomes.size();
    std::vector<std::vector<bool>> rows;
    for (const auto& o : pt.outcomes) {
      pt.correct += o.correct ? 1 : 0;
      rows.push_back(o.candidate_correct);
    }
    pt.accuracy = pt.total ? static_cast<double>(pt.correct) / static_cast<double>(pt.total) : 0.0;
    if (!rows.empty()) pt.exploration = oca_mca(rows);
    points.push_back(std::move(pt));
  }
  return points;
}

std::string scaling_table(const std::vector<ScalingPoint>& points) {
  std::ostringstream os;
  char buf[128];
  std::snprintf(buf, sizeof buf, "%-10s %12s %10s %8s %8s\n", "pool_size", "correct", "acc(%)", "OCA", "MCA");
  os << buf;
  for (const auto& p : points) {
    const std::string count = std::to_string(p.correct) + "/" + std::to_string(p.total);
    std::snprintf(buf, sizeof buf, "%-10zu %12s %10.2f %8.3f %8.3f\n", p.pool_size, count.c_str(), 100.0 * p.accuracy,
                  p.exploration.oca, p.exploration.mca);
    os << buf;
  }
  return os.str();
}

std::string scaling_json(const std::vector<ScalingPoint>& points) {
  json arr = json::array();
  for (const auto& p : points) {
    json per_query = json::array();
    for (const auto& o : p.outcomes) {
      per_query.push_back({{"id", o.query_id},
                           {"dataset", o.dataset},
                           {"correct", o.correct},
                           {"answer", o.answer},
                           {"seed", o.seed},
                           {"referencers", o.referencers},
                           {"candidate_correct", o.candidate_correct}});
    }
    arr.push_back({{"pool_size", p.pool_size},
                   {"correct", p.correct},
                   {"total", p.total},
                   {"accuracy", p.accuracy},
                   {"oca", p.exploration.oca},
                   {"mca", p.exploration.mca},
                   {"by_dataset", json::parse(accuracy_table(p.outcomes).to_json())},
                   {"queries", per_query}});
  }
  return arr.dump();
}

}  // namespace smacs
