#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "smacs/gateway.hpp"
#include "smacs/prior_selection.hpp"
#include "smacs/prompts.hpp"

namespace smacs {

struct PipelineDefaults {
  std::size_t K = 7;
  std::size_t n_base = 400;
  double gamma = 0.95;
  std::size_t k_drop = 1;
  std::size_t n = 8;
  double lambda = 1.0;
  bool normalize_ppl = false;
  bool operator==(const PipelineDefaults&) const = default;
};

enum class BackendKind { Http, Sim };

struct PipelineConfig {
  BackendKind backend = BackendKind::Http;
  std::filesystem::path sim_pool;  // sim backend only
  std::vector<ModelEndpoint> pool;
  std::filesystem::path bank_path;
  std::filesystem::path capability_path;
  std::filesystem::path embedding_cache_path;  // defaults to <bank>.embcache
  std::string embedder;
  std::string scorer;  // empty: no perplexity scoring
  std::size_t embedding_dim = 4096;
  PipelineDefaults defaults;
  AggregatorChoice aggregator;
  std::map<std::string, PromptTemplate> prompt_overrides;
  std::string seed_policy = "random";  // "random" | "fixed"
  std::uint64_t seed = 0;              // used when seed_policy == "fixed"
  std::size_t global_max_in_flight = 64;
  std::string hook_command;
  double hook_timeout_s = 30.0;

  /// Referencer-eligible models in pool order.
  std::vector<std::string> referencer_ids() const;
  bool operator==(const PipelineConfig&) const = default;
};

enum class PathCheck { Require, Skip };

/// Parses and validates a JSON config. Relative paths resolve against the
/// config file's directory; omitted fields take their defaults. Errors are
/// ConfigError naming the field and the file.
PipelineConfig load_config(const std::filesystem::path& path, PathCheck paths = PathCheck::Require);
PipelineConfig parse_config(std::string_view text, const std::filesystem::path& base_dir,
                            PathCheck paths = PathCheck::Require, const std::string& location = "<config>");

/// Fully expanded JSON (absolute paths, every default written out).
std::string serialize_config(const PipelineConfig& config);

void validate_config(const PipelineConfig& config, PathCheck paths);

}  // namespace smacs
