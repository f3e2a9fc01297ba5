#pragma once

#include <filesystem>
#include <memory>

#include "smacs/config.hpp"
#include "smacs/pipeline.hpp"
#include "smacs/sim_pool.hpp"

namespace smacs::sim {

inline constexpr const char* kAggregatorId = "sim-aggregator";
inline constexpr const char* kEmbedderId = "sim-embed";
inline constexpr const char* kScorerId = "sim-scorer";

/// Config for a simulated pool: every world model as a referencer plus an
/// aggregator, an embedder and a scorer endpoint. `base_url` is left empty
/// for the in-process backend.
PipelineConfig sim_config(const SimWorld& world, const std::string& base_url = {});

struct SimSetup {
  SimWorld world;
  PipelineConfig config;
  std::shared_ptr<const SimPool> pool;
  std::shared_ptr<QuestionBank> bank;
  std::shared_ptr<CapabilityMatrix> capability;
  Transcripts transcripts;
};

/// Bank of `per_domain` questions per domain, embedded and profiled by
/// asking every referencer through the in-process transport.
SimSetup build_sim_setup(const SimWorld& world, std::size_t per_domain, std::string_view salt = "bank");

/// Pipeline over `setup`, in-process unless another transport is given.
Pipeline sim_pipeline(const SimSetup& setup, std::shared_ptr<Transport> transport = nullptr);

/// Writes pool.json, bank.jsonl, capability.txt and config.json into `dir`.
void write_sim_setup(const SimSetup& setup, const std::filesystem::path& dir);

/// Mixed-domain evaluation queries, `per_domain` per domain, interleaved.
std::vector<QuestionRecord> sim_queries(const SimWorld& world, std::size_t per_domain, std::string_view salt);

}  // namespace smacs::sim
