#include <set>
#include <thread>

#include "doctest.h"
#include "httplib.h"
#include "json.hpp"
#include "smacs/evaluation.hpp"
#include "smacs/service.hpp"
#include "smacs/sim_setup.hpp"

using namespace smacs;
using nlohmann::json;

namespace {

const sim::SimSetup& shared_setup() {
  static const sim::SimSetup setup = sim::build_sim_setup(sim::specialist_world(), 200);
  return setup;
}

// Sim transport that answers 500 for selected models.
class PartlyDown : public Transport {
 public:
  PartlyDown(std::shared_ptr<const sim::SimPool> pool, std::set<std::string> down)
      : inner_(std::move(pool)), down_(std::move(down)) {}
  WireResponse post(const ModelEndpoint& ep, const std::string& path, const std::string& body) override {
    if (down_.count(ep.id)) return {500, "{}", ""};
    return inner_.post(ep, path, body);
  }
  bool in_process() const override { return true; }

 private:
  sim::SimTransport inner_;
  std::set<std::string> down_;
};

AskRequest math_request(std::uint64_t seed) {
  AskRequest r;
  r.question = sim::question_text(sim::make_query("math", 7, "ask"));
  r.task_kind = TaskKind::BoxedMath;
  r.seed = seed;
  return r;
}

}  // namespace

TEST_CASE("ask on the sim pool routes a math question to math specialists") {
  const auto& setup = shared_setup();
  const auto pipeline = sim::sim_pipeline(setup);
  const auto resp = pipeline.ask(math_request(5));
  const auto& chosen = resp.trace.selection.chosen;
  REQUIRE(chosen.size() == 7);
  for (int i = 0; i < 3; ++i) CHECK(chosen[i].rfind("math-", 0) == 0);
  const auto q = sim::make_query("math", 7, "ask");
  CHECK(verify_response(resp.answer, q.truth, TaskKind::BoxedMath).correct);
  CHECK(resp.trace.candidates.candidates.size() == 8);
  CHECK(resp.trace.support.indices.size() > 0);
  CHECK_FALSE(resp.trace.degraded);
}

TEST_CASE("fixed seed gives an identical trace and replays from the trace") {
  const auto pipeline = sim::sim_pipeline(shared_setup());
  const auto a = to_json(pipeline.ask(math_request(11)), false);
  const auto b = to_json(pipeline.ask(math_request(11)), false);
  CHECK(a == b);
  const auto replayed = to_json(pipeline.ask(request_from_trace(a)), false);
  CHECK(replayed == a);

  AskRequest unseeded = math_request(0);
  unseeded.seed.reset();
  const auto r = pipeline.ask(unseeded);
  const auto again = to_json(pipeline.ask(request_from_trace(to_json(r, true))), false);
  CHECK(again == to_json(r, false));
}

TEST_CASE("overrides are applied and validated") {
  const auto pipeline = sim::sim_pipeline(shared_setup());
  auto req = math_request(3);
  req.overrides.K = 3;
  req.overrides.n = 2;
  req.overrides.lambda = 0.0;
  const auto r = pipeline.ask(req);
  CHECK(r.trace.selection.chosen.size() == 3);
  CHECK(r.trace.candidates.candidates.size() == 2);
  CHECK_FALSE(r.trace.candidates.ppl_scored);

  req.overrides.k_drop = 3;
  CHECK_THROWS_AS(pipeline.ask(req), ConfigError);
  req = math_request(3);
  req.overrides.gamma = 2.0;
  CHECK_THROWS_AS(pipeline.ask(req), ConfigError);
  req = math_request(3);
  req.question.clear();
  CHECK_THROWS_AS(pipeline.ask(req), ConfigError);
}

TEST_CASE("failed referencers degrade instead of failing") {
  const auto& setup = shared_setup();
  const auto pipeline = sim::sim_pipeline(setup, std::make_shared<PartlyDown>(setup.pool, std::set<std::string>{"math-1"}));
  const auto r = pipeline.ask(math_request(9));
  CHECK(r.trace.degraded);
  CHECK(r.trace.failed_referencers == std::vector<std::string>{"math-1"});
  CHECK(r.trace.live_referencers.size() == 6);
  for (const auto& subset : r.trace.candidates.subsets) {
    CHECK(std::find(subset.begin(), subset.end(), "math-1") == subset.end());
  }
}

TEST_CASE("stage errors name the stage") {
  const auto& setup = shared_setup();
  auto stage_of = [&](std::set<std::string> down) {
    const auto p = sim::sim_pipeline(setup, std::make_shared<PartlyDown>(setup.pool, std::move(down)));
    try {
      p.ask(math_request(1));
    } catch (const PipelineError& e) {
      return e.stage();
    }
    return std::string("<none>");
  };
  CHECK(stage_of({sim::kEmbedderId}) == "embed");
  CHECK(stage_of({sim::kAggregatorId}) == "aggregation");
  CHECK(stage_of({sim::kScorerId}) == "scoring");
  std::set<std::string> all_refs;
  for (const auto& id : setup.config.referencer_ids()) all_refs.insert(id);
  CHECK(stage_of(all_refs) == "fan-out");

  // Nothing listening: the very first call fails.
  auto cfg = sim::sim_config(setup.world, "http://127.0.0.1:1/v1");
  for (auto& ep : cfg.pool) {
    ep.retries = 0;
    ep.timeout_s = 2;
  }
  Pipeline offline(cfg, setup.bank, setup.capability, std::make_shared<HttpTransport>());
  try {
    offline.ask(math_request(1));
    FAIL("expected failure");
  } catch (const PipelineError& e) {
    CHECK(e.stage() == "embed");
  }
}

TEST_CASE("pipeline refuses a bank embedded with another model") {
  const auto& setup = shared_setup();
  auto cfg = setup.config;
  cfg.pool.push_back(cfg.pool.back());
  cfg.pool.back().id = "other-embed";
  cfg.pool.back().roles = static_cast<unsigned>(Role::Embedder);
  cfg.embedder = "other-embed";
  CHECK_THROWS_AS(Pipeline(cfg, setup.bank, setup.capability, std::make_shared<sim::SimTransport>(setup.pool)),
                  ConfigError);
}

TEST_CASE("ask body parsing reports every bad field") {
  std::vector<FieldIssue> issues;
  parse_ask_body(R"({"task_kind":"poetry","seed":-1,"overrides":{"K":"x","temperature":1}})", issues);
  std::set<std::string> fields;
  for (const auto& i : issues) fields.insert(i.field);
  CHECK(fields == std::set<std::string>{"question", "task_kind", "seed", "overrides.K", "overrides.temperature"});

  issues.clear();
  const auto r = parse_ask_body(R"({"question":"q","task_kind":"code","seed":3,"overrides":{"K":2,"lambda":0}})", issues);
  CHECK(issues.empty());
  CHECK(r.task_kind == TaskKind::Code);
  CHECK(r.seed == 3u);
  CHECK(r.overrides.K == 2u);
  CHECK(r.overrides.lambda == 0.0);

  issues.clear();
  parse_ask_body("[1,2]", issues);
  CHECK(issues.size() == 1);
}

TEST_CASE("service handlers and HTTP round-trip") {
  const auto& setup = shared_setup();
  auto pipeline = std::make_shared<const Pipeline>(sim::sim_pipeline(setup));
  AskService service(pipeline);

  const auto health = json::parse(service.handle_health().body);
  CHECK(health["status"] == "ok");
  CHECK(health["bank_size"] == setup.bank->size());
  CHECK(health["pool_size"] == setup.config.pool.size());

  const auto pool = json::parse(service.handle_pool().body);
  CHECK(pool["models"].size() == setup.config.pool.size());

  auto bad = service.handle_ask("{\"seed\": 1}");
  CHECK(bad.status == 400);
  CHECK(json::parse(bad.body)["error"]["fields"][0]["field"] == "question");
  bad = service.handle_ask(R"({"question":"q","overrides":{"K":2,"k_drop":2}})");
  CHECK(bad.status == 400);
  CHECK(json::parse(bad.body)["error"]["fields"][0]["field"] == "overrides.k_drop");

  const int port = service.bind("127.0.0.1", 0);
  service.start();
  httplib::Client client("127.0.0.1", port);
  client.set_read_timeout(60, 0);
  const json body = {{"question", sim::question_text(sim::make_query("code", 3, "svc"))}, {"seed", 4}};

  std::vector<std::string> answers(4);
  std::vector<int> statuses(4);
  std::vector<std::thread> threads;
  for (int t = 0; t < 4; ++t) {
    threads.emplace_back([&, t] {
      httplib::Client c("127.0.0.1", port);
      c.set_read_timeout(60, 0);
      auto res = c.Post("/v1/ask", body.dump(), "application/json");
      statuses[t] = res ? res->status : -1;
      if (res) answers[t] = res->body;
    });
  }
  for (auto& th : threads) th.join();
  for (int t = 0; t < 4; ++t) {
    CHECK(statuses[t] == 200);
    const auto j = json::parse(answers[t]);
    CHECK(j["trace"]["referencers"]["chosen"].size() == 7);
    CHECK(j["trace"]["seed"] == 4);
    CHECK(j["answer"] == json::parse(answers[0])["answer"]);
  }
  auto h = client.Get("/v1/health");
  REQUIRE(h);
  CHECK(h->status == 200);
  auto malformed = client.Post("/v1/ask", "not json", "application/json");
  REQUIRE(malformed);
  CHECK(malformed->status == 400);
  service.stop();
}
