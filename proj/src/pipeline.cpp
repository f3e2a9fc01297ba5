#include "smacs/pipeline.hpp"

#include <chrono>
#include <random>

#include "json.hpp"
#include "smacs/sim_pool.hpp"

namespace smacs {

using nlohmann::json;

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

constexpr std::size_t kTraceSupportTop = 10;

}  // namespace

std::shared_ptr<Transport> make_transport(const PipelineConfig& config) {
  if (config.backend == BackendKind::Sim) {
    auto pool = std::make_shared<const sim::SimPool>(sim::SimWorld::load(config.sim_pool));
    return std::make_shared<sim::SimTransport>(std::move(pool));
  }
  return std::make_shared<HttpTransport>();
}

std::shared_ptr<Gateway> make_gateway(const PipelineConfig& config, std::shared_ptr<Transport> transport) {
  return std::make_shared<Gateway>(config.pool, std::move(transport), config.global_max_in_flight);
}

std::shared_ptr<Embedder> make_embedder(const PipelineConfig& config, std::shared_ptr<Gateway> gateway,
                                        EmbeddingCache* cache) {
  const ModelEndpoint& ep = gateway->endpoint(config.embedder);
  RawEmbedFn raw = [gateway, &ep](const std::vector<std::string>& texts) { return gateway->embed(ep, texts); };
  return std::make_shared<Embedder>(config.embedder, config.embedding_dim, std::move(raw), cache);
}

PromptRegistry make_prompts(const PipelineConfig& config) {
  PromptRegistry reg = PromptRegistry::builtin();
  for (const auto& [key, tmpl] : config.prompt_overrides) reg.set(key, tmpl);
  return reg;
}

Pipeline::Pipeline(PipelineConfig config, std::shared_ptr<const QuestionBank> bank,
                   std::shared_ptr<const CapabilityMatrix> capability, std::shared_ptr<Transport> transport)
    : config_(std::move(config)), bank_(std::move(bank)) {
  if (!bank_ || bank_->empty()) throw BankError("question bank is empty");
  if (!bank_->embedded()) throw ConfigError("bank_path", "bank has no embeddings; rebuild it with an embedder");
  if (bank_->header().embedding_model != config_.embedder) {
    throw ConfigError("embedder", "bank was embedded with '" + bank_->header().embedding_model +
                                      "' but the config uses '" + config_.embedder + "'");
  }
  if (bank_->header().dim != config_.embedding_dim) {
    throw ConfigError("embedding_dim", "bank vectors have dimension " + std::to_string(bank_->header().dim));
  }
  if (!capability || capability->cols() != bank_->size()) {
    throw ConfigError("capability_path", "capability matrix does not cover the bank");
  }
  referencer_ids_ = config_.referencer_ids();
  capability_ = std::make_shared<const CapabilityMatrix>(capability->select_rows(referencer_ids_));
  gateway_ = make_gateway(config_, std::move(transport));
  cache_ = std::make_shared<EmbeddingCache>();
  embedder_ = make_embedder(config_, gateway_, cache_.get());
  prompts_ = std::make_shared<PromptRegistry>(make_prompts(config_));
}

Pipeline Pipeline::from_config(const PipelineConfig& config) {
  auto bank = std::make_shared<const QuestionBank>(QuestionBank::load(config.bank_path));
  auto cap = std::make_shared<const CapabilityMatrix>(CapabilityMatrix::load(config.capability_path));
  Pipeline p(config, std::move(bank), std::move(cap), make_transport(config));
  if (!config.embedding_cache_path.empty() && std::filesystem::exists(config.embedding_cache_path)) {
    p.cache_->load(config.embedding_cache_path);
  }
  return p;
}

Pipeline Pipeline::with_pool_prefix(std::size_t size) const {
  if (size < 1 || size > referencer_ids_.size()) {
    throw ConfigError("pool", "prefix size " + std::to_string(size) + " outside [1, " +
                                  std::to_string(referencer_ids_.size()) + "]");
  }
  Pipeline p = *this;
  p.referencer_ids_.assign(referencer_ids_.begin(), referencer_ids_.begin() + static_cast<std::ptrdiff_t>(size));
  p.capability_ = std::make_shared<const CapabilityMatrix>(capability_->select_rows(p.referencer_ids_));
  return p;
}

EffectiveParams Pipeline::resolve(const AskOverrides& o) const {
  const auto& d = config_.defaults;
  EffectiveParams p{o.K.value_or(d.K),  d.n_base,           o.gamma.value_or(d.gamma), o.k_drop.value_or(d.k_drop),
                    o.n.value_or(d.n), o.lambda.value_or(d.lambda), d.normalize_ppl};
  if (p.K < 1) throw ConfigError("overrides.K", "must be >= 1");
  if (p.n < 1) throw ConfigError("overrides.n", "must be >= 1");
  if (p.k_drop >= p.K) throw ConfigError("overrides.k_drop", "must be smaller than K");
  if (!(p.lambda >= 0.0)) throw ConfigError("overrides.lambda", "must be >= 0");
  if (!(p.gamma >= 0.0 && p.gamma <= 1.0)) throw ConfigError("overrides.gamma", "must lie in [0, 1]");
  if (p.lambda > 0.0 && config_.scorer.empty()) throw ConfigError("overrides.lambda", "no scorer configured");
  return p;
}

std::uint64_t Pipeline::fresh_seed() const {
  if (config_.seed_policy == "fixed") return config_.seed;
  std::random_device rd;
  return (static_cast<std::uint64_t>(rd()) << 32) ^ rd();
}

ReferencerSelection Pipeline::select(const std::string& question, std::size_t K, std::optional<double> gamma) const {
  std::vector<double> q;
  try {
    q = embedder_->embed(question);
  } catch (const std::exception& e) {
    throw PipelineError("embed", e.what());
  }
  const auto sim = similarity_vector(q, *bank_);
  const auto support = retrieve_support(sim, config_.defaults.n_base, gamma.value_or(config_.defaults.gamma));
  return select_referencers(prior_vector(*capability_, support), referencer_ids_, K);
}

AskResponse Pipeline::ask(const AskRequest& request) const {
  const auto t_total = Clock::now();
  if (request.question.empty()) throw ConfigError("question", "must be a non-empty string");
  AskResponse out;
  AskTrace& tr = out.trace;
  tr.params = resolve(request.overrides);
  tr.seed = request.seed ? *request.seed : fresh_seed();
  tr.question = request.question;
  tr.task_kind = request.task_kind;
  tr.dataset = request.dataset;
  tr.pool_ids = referencer_ids_;
  const EffectiveParams& p = tr.params;

  auto t0 = Clock::now();
  std::vector<double> q;
  try {
    q = embedder_->embed(request.question);
  } catch (const std::exception& e) {
    throw PipelineError("embed", e.what());
  }
  out.timings.embed_ms = ms_since(t0);

  t0 = Clock::now();
  try {
    tr.support = retrieve_support(similarity_vector(q, *bank_), p.n_base, p.gamma);
  } catch (const std::exception& e) {
    throw PipelineError("retrieve", e.what());
  }
  out.timings.retrieve_ms = ms_since(t0);

  t0 = Clock::now();
  try {
    tr.selection = select_referencers(prior_vector(*capability_, tr.support), referencer_ids_, p.K);
    tr.selection.aggregator_id = select_aggregator(config_.aggregator, request.task_kind);
  } catch (const std::exception& e) {
    throw PipelineError("prior", e.what());
  }
  out.timings.prior_ms = ms_since(t0);

  t0 = Clock::now();
  const ChatRequest chat = prompts_->render(request.question, request.task_kind, request.dataset);
  const auto fan = gateway_->fan_out(tr.selection.chosen, chat);
  ReferencerSelection live = tr.selection;
  live.chosen.clear();
  live.chosen_rows.clear();
  live.chosen_priors.clear();
  for (std::size_t i = 0; i < fan.size(); ++i) {
    if (fan[i].result) {
      live.chosen.push_back(tr.selection.chosen[i]);
      live.chosen_rows.push_back(tr.selection.chosen_rows[i]);
      live.chosen_priors.push_back(tr.selection.chosen_priors[i]);
      tr.references.push_back(fan[i].result->text);
    } else {
      tr.failed_referencers.push_back(tr.selection.chosen[i]);
    }
  }
  tr.live_referencers = live.chosen;
  out.timings.fan_out_ms = ms_since(t0);

  t0 = Clock::now();
  tr.k_drop_used = std::min(p.k_drop, live.chosen.size() - 1);
  const PosteriorParams pp{p.n, tr.k_drop_used, p.lambda, p.normalize_ppl};
  PosteriorContext ctx{gateway_.get(), tr.selection.aggregator_id, embedder_.get(), std::nullopt};
  if (!config_.scorer.empty()) ctx.scorer_id = config_.scorer;
  Rng rng(tr.seed);
  try {
    tr.candidates = run_posterior(request.question, live, tr.references, pp, rng, ctx);
  } catch (const PipelineError&) {
    throw;
  } catch (const std::exception& e) {
    throw PipelineError("posterior", e.what());
  }
  out.timings.posterior_ms = ms_since(t0);

  tr.degraded = !tr.failed_referencers.empty() || tr.candidates.degraded;
  out.answer = tr.candidates.answer();
  out.timings.total_ms = ms_since(t_total);
  return out;
}

std::string to_json(const AskResponse& r, bool with_timings) {
  const AskTrace& t = r.trace;
  json top = json::array();
  for (std::size_t i = 0; i < t.support.indices.size() && i < kTraceSupportTop; ++i) {
    top.push_back({{"position", t.support.indices[i]}, {"similarity", t.support.similarities[i]}});
  }
  json priors = json::array();
  for (std::size_t i = 0; i < t.pool_ids.size(); ++i) {
    priors.push_back({{"model", t.pool_ids[i]}, {"score", t.selection.prior_scores.at(i)}});
  }
  json cands = json::array();
  const CandidateSet& c = t.candidates;
  for (std::size_t i = 0; i < c.candidates.size(); ++i) {
    cands.push_back({{"subset", c.subsets[i]},
                     {"text", c.candidates[i]},
                     {"failed", static_cast<bool>(c.failed[i])},
                     {"error", c.errors[i]},
                     {"similarity", number_or_null(c.sim_scores[i])},
                     {"ppl", c.ppl[i] ? json(*c.ppl[i]) : json(nullptr)},
                     {"ppl_score", number_or_null(c.ppl_scores[i])},
                     {"total", number_or_null(c.total_scores[i])}});
  }
  json trace = {
      {"seed", t.seed},
      {"question", t.question},
      {"task_kind", t.task_kind ? json(std::string(to_string(*t.task_kind))) : json(nullptr)},
      {"dataset", t.dataset},
      {"params",
       {{"K", t.params.K},
        {"n_base", t.params.n_base},
        {"gamma", t.params.gamma},
        {"k_drop", t.params.k_drop},
        {"n", t.params.n},
        {"lambda", t.params.lambda},
        {"normalize_ppl", t.params.normalize_ppl}}},
      {"support", {{"size", t.support.indices.size()}, {"threshold", t.support.threshold}, {"top", top}}},
      {"prior_scores", priors},
      {"referencers",
       {{"chosen", t.selection.chosen},
        {"priors", t.selection.chosen_priors},
        {"truncated", t.selection.truncated},
        {"failed", t.failed_referencers},
        {"live", t.live_referencers}}},
      {"aggregator", t.selection.aggregator_id},
      {"k_drop_used", t.k_drop_used},
      {"references", t.references},
      {"candidates", cands},
      {"selected", c.selected},
      {"degraded", t.degraded},
  };
  if (with_timings) {
    trace["timings"] = {{"embed_ms", r.timings.embed_ms},         {"retrieve_ms", r.timings.retrieve_ms},
                        {"prior_ms", r.timings.prior_ms},         {"fan_out_ms", r.timings.fan_out_ms},
                        {"posterior_ms", r.timings.posterior_ms}, {"total_ms", r.timings.total_ms}};
  }
  return json{{"answer", r.answer}, {"trace", trace}}.dump();
}

AskRequest request_from_trace(std::string_view response_json) {
  const json j = json::parse(response_json);
  const json& t = j.contains("trace") ? j["trace"] : j;
  AskRequest r;
  r.question = t.at("question").get<std::string>();
  if (t.contains("task_kind") && t["task_kind"].is_string()) {
    r.task_kind = parse_task_kind(t["task_kind"].get<std::string>());
  }
  r.dataset = t.value("dataset", std::string{});
  r.seed = t.at("seed").get<std::uint64_t>();
  const json& p = t.at("params");
  r.overrides.K = p.at("K").get<std::size_t>();
  r.overrides.n = p.at("n").get<std::size_t>();
  r.overrides.k_drop = p.at("k_drop").get<std::size_t>();
  r.overrides.lambda = p.at("lambda").get<double>();
  r.overrides.gamma = p.at("gamma").get<double>();
  return r;
}

Transcripts collect_transcripts(const Gateway& gateway, const QuestionBank& bank,
                                const std::vector<std::string>& model_ids, const PromptRegistry& prompts,
                                std::size_t batch) {
  if (batch == 0) batch = 1;
  struct Job {
    std::string model;
    std::size_t question;
  };
  std::vector<Job> jobs;
  for (const auto& m : model_ids) {
    for (std::size_t i = 0; i < bank.size(); ++i) jobs.push_back({m, i});
  }
  Transcripts out;
  for (std::size_t start = 0; start < jobs.size(); start += batch) {
    const std::size_t end = std::min(jobs.size(), start + batch);
    std::vector<std::pair<std::string, ChatRequest>> calls;
    for (std::size_t k = start; k < end; ++k) {
      const auto& rec = bank.at(jobs[k].question);
      calls.emplace_back(jobs[k].model, prompts.render(rec.question, rec.task_kind, rec.dataset));
    }
    const auto results = gateway.run_all(calls);
    for (std::size_t k = start; k < end; ++k) {
      const auto& res = results[k - start];
      const auto& rec = bank.at(jobs[k].question);
      if (!res.result) {
        throw PipelineError("profile", "model '" + jobs[k].model + "' failed on question '" + rec.id + "': " + res.error);
      }
      out[jobs[k].model][rec.id] = res.result->text;
    }
  }
  return out;
}

}  // namespace smacs
