#include "smacs/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "json.hpp"
#include "smacs/kernels.hpp"

namespace smacs {

std::vector<double> normalize(std::vector<double> v) {
  double norm2 = 0.0;
  for (double x : v) norm2 += x * x;
  const double norm = std::sqrt(norm2);
  if (!(norm > 0.0) || !std::isfinite(norm)) throw EmbeddingUnavailable("cannot normalize a zero or non-finite vector");
  for (double& x : v) x /= norm;
  return v;
}

// ---------------------------------------------------------------------------

std::string EmbeddingCache::key(std::string_view model, std::string_view text) {
  std::string material;
  material.reserve(model.size() + text.size() + 1);
  material.append(model).push_back('\0');
  material.append(text);
  return hex64(fnv1a(material)) + hex64(fnv1a(material, 0x84222325cbf29ce4ULL));
}

bool EmbeddingCache::lookup(const std::string& key, std::vector<double>& out) const {
  std::lock_guard lock(mu_);
  auto it = entries_.find(key);
  if (it == entries_.end()) return false;
  out = it->second;
  return true;
}

void EmbeddingCache::insert(const std::string& key, std::vector<double> v) {
  std::lock_guard lock(mu_);
  entries_.insert_or_assign(key, std::move(v));
}

std::size_t EmbeddingCache::size() const {
  std::lock_guard lock(mu_);
  return entries_.size();
}

void EmbeddingCache::save(const std::filesystem::path& path) const {
  std::lock_guard lock(mu_);
  std::vector<const std::string*> keys;
  keys.reserve(entries_.size());
  for (const auto& [k, v] : entries_) keys.push_back(&k);
  std::sort(keys.begin(), keys.end(), [](auto* a, auto* b) { return *a < *b; });
  std::ofstream out(path);
  if (!out) throw Error("cannot write embedding cache: " + path.string());
  for (const auto* k : keys) out << nlohmann::json{{"h", *k}, {"v", entries_.at(*k)}}.dump() << '\n';
}

void EmbeddingCache::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) return;
  std::string line;
  std::lock_guard lock(mu_);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      auto j = nlohmann::json::parse(line);
      entries_.insert_or_assign(j.at("h").get<std::string>(), j.at("v").get<std::vector<double>>());
    } catch (const nlohmann::json::exception& e) {
      throw Error("corrupt embedding cache " + path.string() + ": " + e.what());
    }
  }
}

// ---------------------------------------------------------------------------

Embedder::Embedder(std::string model_id, std::size_t dim, RawEmbedFn raw, EmbeddingCache* cache)
    : model_id_(std::move(model_id)), dim_(dim), raw_(std::move(raw)), cache_(cache) {}

std::vector<double> Embedder::embed(const std::string& text) const { return embed_batch({text}).front(); }

std::vector<std::vector<double>> Embedder::embed_batch(const std::vector<std::string>& texts) const {
  std::vector<std::vector<double>> out(texts.size());
  std::vector<std::string> missing;
  std::vector<std::size_t> missing_pos;
  for (std::size_t i = 0; i < texts.size(); ++i) {
    if (texts[i].empty()) throw EmbeddingUnavailable("cannot embed empty text");
    if (cache_ && cache_->lookup(EmbeddingCache::key(model_id_, texts[i]), out[i])) continue;
    missing.push_back(texts[i]);
    missing_pos.push_back(i);
  }
  if (missing.empty()) return out;

  std::vector<std::vector<double>> raw;
  try {
    raw = raw_(missing);
  } catch (const EmbeddingUnavailable&) {
    throw;
  } catch (const std::exception& e) {
    throw EmbeddingUnavailable(std::string("embedding endpoint failed: ") + e.what());
  }
  if (raw.size() != missing.size()) throw EmbeddingUnavailable("embedding endpoint returned wrong batch size");
  for (std::size_t k = 0; k < raw.size(); ++k) {
    if (dim_ != 0 && raw[k].size() != dim_) {
      throw EmbeddingUnavailable("embedding dimension " + std::to_string(raw[k].size()) + " != configured " +
                                 std::to_string(dim_));
    }
    auto unit = normalize(std::move(raw[k]));
    if (cache_) cache_->insert(EmbeddingCache::key(model_id_, missing[k]), unit);
    out[missing_pos[k]] = std::move(unit);
  }
  return out;
}

void embed_bank(QuestionBank& bank, const Embedder& embedder, std::size_t batch) {
  std::vector<std::vector<double>> vectors;
  vectors.reserve(bank.size());
  for (std::size_t start = 0; start < bank.size(); start += batch) {
    std::vector<std::string> texts;
    for (std::size_t i = start; i < std::min(bank.size(), start + batch); ++i) texts.push_back(bank.at(i).question);
    for (auto& v : embedder.embed_batch(texts)) vectors.push_back(std::move(v));
  }
  bank.set_embeddings(embedder.model_id(), std::move(vectors));
}

// ---------------------------------------------------------------------------

SimilarityVector similarity_vector(std::span<const double> query, std::span<const double> rows, std::size_t dim) {
  if (query.size() != dim) {
    throw Error("query dimension " + std::to_string(query.size()) + " != bank dimension " + std::to_string(dim));
  }
  SimilarityVector s;
  s.values.resize(dim == 0 ? 0 : rows.size() / dim);
  kernels::similarity_scan(rows, dim, query, s.values);
  return s;
}

SimilarityVector similarity_vector(std::span<const double> query, const QuestionBank& bank) {
  if (!bank.embedded()) throw Error("bank has no embeddings");
  return similarity_vector(query, bank.embedding_matrix(), bank.header().dim);
}

SupportSet retrieve_support(const SimilarityVector& sim, std::size_t n_base, double gamma) {
  const auto& s = sim.values;
  if (s.empty()) throw Error("cannot retrieve support from an empty bank");
  if (n_base < 1) throw Error("n_base must be >= 1");
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw Error("gamma must lie in [0, 1]");

  std::vector<double> sorted = s;
  const std::size_t rank = std::min(n_base, s.size()) - 1;
  std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(rank), sorted.end(),
                   std::greater<>());
  SupportSet out;
  out.threshold = gamma * sorted[rank];

  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] >= out.threshold) out.indices.push_back(i);
  }
  std::stable_sort(out.indices.begin(), out.indices.end(), [&](std::size_t a, std::size_t b) { return s[a] > s[b]; });
  out.similarities.reserve(out.indices.size());
  for (auto i : out.indices) out.similarities.push_back(s[i]);
  return out;
}

}  // namespace smacs
