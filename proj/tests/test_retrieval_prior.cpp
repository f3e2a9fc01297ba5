#include <random>
#include <set>

#include "doctest.h"
#include "oracles.hpp"
#include "smacs/prior_selection.hpp"
#include "smacs/retrieval.hpp"

using namespace smacs;

namespace {

SimilarityVector sv(std::vector<double> v) { return SimilarityVector{std::move(v)}; }

std::set<std::size_t> as_set(const SupportSet& s) { return {s.indices.begin(), s.indices.end()}; }

}  // namespace

TEST_CASE("embedder normalizes, caches and checks dimension") {
  int calls = 0;
  RawEmbedFn raw = [&](const std::vector<std::string>& texts) {
    ++calls;
    std::vector<std::vector<double>> out;
    for (const auto& t : texts) out.push_back({3.0, 4.0 + static_cast<double>(t.size() % 2)});
    return out;
  };
  EmbeddingCache cache;
  Embedder e("m", 2, raw, &cache);
  const auto v = e.embed("ab");
  CHECK(v[0] == doctest::Approx(0.6).epsilon(1e-12));
  CHECK(v[1] == doctest::Approx(0.8).epsilon(1e-12));
  CHECK(e.embed("ab") == v);
  CHECK(calls == 1);
  const auto batch = e.embed_batch({"ab", "abc", "abc"});
  CHECK(batch[0] == v);
  CHECK(batch[1] == batch[2]);
  CHECK(calls == 2);

  Embedder wrong_dim("m", 3, raw);
  CHECK_THROWS_AS(wrong_dim.embed("x"), EmbeddingUnavailable);
  Embedder failing("m", 2, [](const std::vector<std::string>&) -> std::vector<std::vector<double>> {
    throw EndpointError("down");
  });
  CHECK_THROWS_AS(failing.embed("x"), EmbeddingUnavailable);
  CHECK_THROWS_AS(normalize({0.0, 0.0}), EmbeddingUnavailable);

  const auto path = std::filesystem::temp_directory_path() / "smacs_embcache.jsonl";
  cache.save(path);
  EmbeddingCache reloaded;
  reloaded.load(path);
  CHECK(reloaded.size() == cache.size());
  std::vector<double> got;
  CHECK(reloaded.lookup(EmbeddingCache::key("m", "ab"), got));
  CHECK(got == v);
}

TEST_CASE("similarity_vector examples") {
  const std::vector<double> rows = {1, 0, 0, 0, 1, 0, 0, 0, -1};
  const std::vector<double> q = {1, 0, 0};
  const auto s = similarity_vector(q, rows, 3);
  CHECK(s.values == std::vector<double>{1.0, 0.0, 0.0});
  CHECK_THROWS(similarity_vector(std::vector<double>{1, 0}, rows, 3));

  std::mt19937_64 rng(5);
  std::vector<std::vector<double>> bank;
  std::vector<double> flat;
  for (int i = 0; i < 5; ++i) {
    bank.push_back(oracle::random_unit(rng, 32));
    flat.insert(flat.end(), bank.back().begin(), bank.back().end());
  }
  const auto query = oracle::random_unit(rng, 32);
  const auto got = similarity_vector(query, flat, 32).values;
  const auto want = oracle::similarity(bank, query);
  for (int i = 0; i < 5; ++i) CHECK(std::abs(got[i] - want[i]) <= 1e-12);
}

TEST_CASE("retrieve_support examples") {
  auto s = retrieve_support(sv({0.9, 0.8, 0.7, 0.2}), 2, 0.95);
  CHECK(s.threshold == doctest::Approx(0.76).epsilon(1e-12));
  CHECK(s.indices == std::vector<std::size_t>{0, 1});

  s = retrieve_support(sv({0.3, 0.9, 0.1, 0.5}), 2, 1.0);
  CHECK(as_set(s) == std::set<std::size_t>{1, 3});
  CHECK(s.indices == std::vector<std::size_t>{1, 3});  // descending similarity

  // Ties at the threshold are all included.
  s = retrieve_support(sv({0.5, 0.5, 0.5, 0.1}), 1, 1.0);
  CHECK(s.indices.size() == 3);

  // n_base beyond the bank falls back to the smallest value.
  s = retrieve_support(sv({0.4, 0.2}), 10, 1.0);
  CHECK(s.indices.size() == 2);

  CHECK_THROWS(retrieve_support(sv({}), 1, 0.9));
  CHECK_THROWS(retrieve_support(sv({0.1}), 0, 0.9));
  CHECK_THROWS(retrieve_support(sv({0.1}), 1, 1.5));
}

TEST_CASE("retrieve_support matches a brute-force scan at the default parameters") {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 5; ++trial) {
    std::vector<double> s(2000);
    for (auto& x : s) x = u(rng);
    const auto got = retrieve_support(sv(s), 400, 0.95);
    CHECK(as_set(got) == oracle::support(s, 400, 0.95));
    for (std::size_t i = 1; i < got.similarities.size(); ++i) {
      CHECK(got.similarities[i - 1] >= got.similarities[i]);
    }
  }
}

TEST_CASE("prior_vector examples") {
  CapabilityMatrix cap({"a", "b"}, 2);
  cap.set(0, 0, true);
  cap.set(1, 1, true);
  SupportSet support{{0, 1}, {0.9, 0.5}, 0.0};
  CHECK(prior_vector(cap, support) == std::vector<double>{0.9, 0.5});

  CapabilityMatrix zeros({"z"}, 2);
  CHECK(prior_vector(zeros, support) == std::vector<double>{0.0});

  SupportSet bad{{0, 5}, {0.9, 0.5}, 0.0};
  CHECK_THROWS(prior_vector(cap, bad));
}

TEST_CASE("prior_vector matches a scalar loop on a random 15x300 matrix") {
  std::mt19937_64 rng(23);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<std::string> ids;
  for (int r = 0; r < 15; ++r) ids.push_back("m" + std::to_string(r));
  CapabilityMatrix cap(ids, 300);
  std::vector<std::vector<int>> bits(15, std::vector<int>(300));
  for (int r = 0; r < 15; ++r) {
    for (int c = 0; c < 300; ++c) {
      bits[r][c] = static_cast<int>(rng() & 1u);
      cap.set(r, c, bits[r][c]);
    }
  }
  SupportSet s;
  for (std::size_t c = 0; c < 300; c += 2) {
    s.indices.push_back(c);
    s.similarities.push_back(u(rng));
  }
  const auto got = prior_vector(cap, s);
  const auto want = oracle::prior(bits, s.indices, s.similarities);
  for (int r = 0; r < 15; ++r) CHECK(std::abs(got[r] - want[r]) <= 1e-9);
}

TEST_CASE("select_referencers examples") {
  auto sel = select_referencers({3, 1, 2}, {"m0", "m1", "m2"}, 2);
  CHECK(sel.chosen_rows == std::vector<std::size_t>{0, 2});
  CHECK(sel.chosen == std::vector<std::string>{"m0", "m2"});
  CHECK(sel.chosen_priors == std::vector<double>{3, 2});
  CHECK_FALSE(sel.truncated);

  sel = select_referencers({1, 1, 1}, {"a", "b", "c"}, 2);
  CHECK(sel.chosen == std::vector<std::string>{"a", "b"});

  std::vector<double> prior(15);
  std::vector<std::string> ids;
  for (int i = 0; i < 15; ++i) {
    prior[i] = (i * 7) % 15;
    ids.push_back("m" + std::to_string(i));
  }
  sel = select_referencers(prior, ids, 7);
  CHECK(sel.chosen.size() == 7);
  for (std::size_t i = 1; i < sel.chosen_priors.size(); ++i) CHECK(sel.chosen_priors[i - 1] >= sel.chosen_priors[i]);

  sel = select_referencers({1, 2}, {"a", "b"}, 5);
  CHECK(sel.truncated);
  CHECK(sel.chosen == std::vector<std::string>{"b", "a"});
}

TEST_CASE("select_aggregator examples") {
  AggregatorChoice c{"modelA", {}};
  CHECK(select_aggregator(c, TaskKind::BoxedMath) == "modelA");
  CHECK(select_aggregator(c, std::nullopt) == "modelA");
  c.overrides[TaskKind::Code] = "modelB";
  CHECK(select_aggregator(c, TaskKind::Code) == "modelB");
  CHECK(select_aggregator(c, TaskKind::BoxedMath) == "modelA");
  CHECK_THROWS_AS(select_aggregator(AggregatorChoice{}, TaskKind::Code), ConfigError);
}
