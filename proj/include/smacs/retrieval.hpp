#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <mutex>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "smacs/common.hpp"
#include "smacs/question_bank.hpp"

namespace smacs {

class EmbeddingUnavailable : public Error {
 public:
  using Error::Error;
};

struct SimilarityVector {
  std::vector<double> values;  // clamped cosine, each in [0, 1]
};

struct SupportSet {
  std::vector<std::size_t> indices;   // bank positions, descending similarity
  std::vector<double> similarities;   // aligned with indices
  double threshold = 0.0;
};

/// v / |v|. Throws EmbeddingUnavailable for a zero or non-finite vector.
std::vector<double> normalize(std::vector<double> v);

/// Content-hash keyed store of unit vectors, shared by profiling runs and
/// the service. Thread-safe.
class EmbeddingCache {
 public:
  static std::string key(std::string_view model, std::string_view text);

  bool lookup(const std::string& key, std::vector<double>& out) const;
  void insert(const std::string& key, std::vector<double> v);
  std::size_t size() const;

  /// One JSON object {"h": key, "v": [...]} per line.
  void save(const std::filesystem::path& path) const;
  void load(const std::filesystem::path& path);

 private:
  mutable std::mutex mu_;
  std::unordered_map<std::string, std::vector<double>> entries_;
};

/// Raw batched embedding call (endpoint or simulator). Vectors need not be
/// normalized.
using RawEmbedFn = std::function<std::vector<std::vector<double>>(const std::vector<std::string>&)>;

/// Text -> unit vector of a fixed dimension.
class Embedder {
 public:
  Embedder(std::string model_id, std::size_t dim, RawEmbedFn raw, EmbeddingCache* cache = nullptr);

  const std::string& model_id() const { return model_id_; }
  std::size_t dim() const { return dim_; }

  std::vector<double> embed(const std::string& text) const;
  std::vector<std::vector<double>> embed_batch(const std::vector<std::string>& texts) const;

 private:
  std::string model_id_;
  std::size_t dim_;
  RawEmbedFn raw_;
  EmbeddingCache* cache_;
};

/// Embeds every bank question (in batches) and installs the vectors.
void embed_bank(QuestionBank& bank, const Embedder& embedder, std::size_t batch = 64);

/// entry i = max(0, <bank_i, query>), bank order.
SimilarityVector similarity_vector(std::span<const double> query, const QuestionBank& bank);
SimilarityVector similarity_vector(std::span<const double> query, std::span<const double> rows, std::size_t dim);

/// All positions whose similarity reaches gamma times the n_base-th largest
/// similarity (the smallest one when n_base exceeds the bank). Ties at the
/// threshold are included.
SupportSet retrieve_support(const SimilarityVector& sim, std::size_t n_base, double gamma);

}  // namespace smacs
