#include "smacs/sim_setup.hpp"

#include <fstream>

namespace smacs::sim {

PipelineConfig sim_config(const SimWorld& world, const std::string& base_url) {
  PipelineConfig c;
  c.backend = base_url.empty() ? BackendKind::Sim : BackendKind::Http;
  for (const auto& m : world.models) {
    ModelEndpoint ep;
    ep.id = m.id;
    ep.base_url = base_url;
    ep.roles = static_cast<unsigned>(Role::Referencer);
    c.pool.push_back(ep);
  }
  auto service = [&](const std::string& id, const std::string& wire, Role role) {
    ModelEndpoint ep;
    ep.id = id;
    ep.model = wire == id ? std::string() : wire;
    ep.base_url = base_url;
    ep.roles = static_cast<unsigned>(role);
    c.pool.push_back(ep);
  };
  service(kAggregatorId, kAggregatorId, Role::Aggregator);
  service(kEmbedderId, world.embedder_model, Role::Embedder);
  service(kScorerId, world.scorer_model, Role::Scorer);
  c.embedder = kEmbedderId;
  c.scorer = kScorerId;
  c.embedding_dim = world.dim;
  c.aggregator.default_id = kAggregatorId;
  c.seed_policy = "random";
  return c;
}

SimSetup build_sim_setup(const SimWorld& world, std::size_t per_domain, std::string_view salt) {
  SimSetup s;
  s.world = world;
  s.config = sim_config(world);
  s.pool = std::make_shared<const SimPool>(world);
  auto transport = std::make_shared<SimTransport>(s.pool);
  auto gateway = make_gateway(s.config, transport);
  EmbeddingCache cache;
  auto embedder = make_embedder(s.config, gateway, &cache);

  s.bank = std::make_shared<QuestionBank>();
  s.bank->ingest(bank_records(world, per_domain, salt));
  embed_bank(*s.bank, *embedder);

  const auto ids = s.config.referencer_ids();
  s.transcripts = collect_transcripts(*gateway, *s.bank, ids, make_prompts(s.config), 256);
  s.capability = std::make_shared<CapabilityMatrix>(build_capability_matrix(*s.bank, ids, s.transcripts));
  return s;
}

Pipeline sim_pipeline(const SimSetup& setup, std::shared_ptr<Transport> transport) {
  if (!transport) transport = std::make_shared<SimTransport>(setup.pool);
  return Pipeline(setup.config, setup.bank, setup.capability, std::move(transport));
}

void write_sim_setup(const SimSetup& setup, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  setup.world.save(dir / "pool.json");
  setup.bank->save(dir / "bank.jsonl");
  setup.capability->save(dir / "capability.txt");
  PipelineConfig c = setup.config;
  c.backend = BackendKind::Sim;
  c.sim_pool = "pool.json";
  c.bank_path = "bank.jsonl";
  c.capability_path = "capability.txt";
  c.embedding_cache_path.clear();
  std::ofstream out(dir / "config.json");
  if (!out) throw Error("cannot write " + (dir / "config.json").string());
  out << serialize_config(c) << '\n';
}

std::vector<QuestionRecord> sim_queries(const SimWorld& world, std::size_t per_domain, std::string_view salt) {
  std::vector<QuestionRecord> out;
  out.reserve(per_domain * world.domains.size());
  for (std::size_t i = 0; i < per_domain; ++i) {
    for (const auto& d : world.domains) {
      const auto q = make_query(d, i, salt);
      out.push_back(QuestionRecord{q.id, d, TaskKind::BoxedMath, question_text(q), q.truth, {}});
    }
  }
  return out;
}

}  // namespace smacs::sim
