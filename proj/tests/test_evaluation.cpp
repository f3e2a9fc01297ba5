#include <random>

#include "doctest.h"
#include "oracles.hpp"
#include "smacs/evaluation.hpp"
#include "smacs/sim_setup.hpp"

using namespace smacs;

TEST_CASE("pairwise_ranking_score examples") {
  CHECK(pairwise_ranking_score({{{3, 1}, {1, 0}}}) == 1.0);
  CHECK(pairwise_ranking_score({{{1, 3}, {1, 0}}}) == 0.0);
  CHECK(pairwise_ranking_score({{{2, 2}, {1, 0}}}) == 0.0);  // ties score nothing
  // Unanimous questions are skipped.
  CHECK(pairwise_ranking_score({{{3, 1}, {1, 0}}, {{1, 3}, {1, 1}}, {{1, 3}, {0, 0}}}) == 1.0);
  CHECK_THROWS(pairwise_ranking_score({{{1, 2}, {1, 1}}}));
  CHECK_THROWS(pairwise_ranking_score({}));
}

TEST_CASE("pairwise_ranking_score matches a triple loop on random questions") {
  std::mt19937_64 rng(61);
  std::uniform_real_distribution<double> u(0, 1);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<RankingQuestion> qs;
    std::vector<std::vector<double>> p;
    std::vector<std::vector<int>> c;
    for (int q = 0; q < 50; ++q) {
      RankingQuestion rq;
      std::vector<int> ci;
      for (int r = 0; r < 15; ++r) {
        rq.prior.push_back(std::floor(u(rng) * 10));  // coarse values so ties occur
        const int bit = static_cast<int>(rng() & 1u);
        rq.correct.push_back(static_cast<std::uint8_t>(bit));
        ci.push_back(bit);
      }
      p.push_back(rq.prior);
      c.push_back(ci);
      qs.push_back(rq);
    }
    CHECK(std::abs(pairwise_ranking_score(qs) - oracle::ranking(p, c)) <= 1e-12);

    // Invariant under a strictly increasing transform of each question's prior.
    auto transformed = qs;
    for (auto& q : transformed) {
      const double a = 0.5 + u(rng), b = u(rng) * 10;
      for (auto& x : q.prior) x = std::exp(a * x) + b;
    }
    CHECK(pairwise_ranking_score(transformed) == pairwise_ranking_score(qs));
  }
}

TEST_CASE("a prior equal to the truth scores exactly 1") {
  std::mt19937_64 rng(62);
  std::vector<RankingQuestion> qs;
  for (int q = 0; q < 100; ++q) {
    RankingQuestion rq;
    for (int r = 0; r < 8; ++r) {
      const auto bit = static_cast<std::uint8_t>(rng() & 1u);
      rq.correct.push_back(bit);
      rq.prior.push_back(bit);
    }
    qs.push_back(rq);
  }
  CHECK(pairwise_ranking_score(qs) == 1.0);
}

TEST_CASE("oca_mca examples and properties") {
  auto r = oca_mca({{true, false, false}, {true, true, false}});
  CHECK(r.oca == 1.0);
  CHECK(r.mca == 0.5);
  r = oca_mca({{false, false}, {false, false}});
  CHECK(r.oca == 0.0);
  CHECK(r.mca == 0.0);
  r = oca_mca({{true, true}, {true, true}});
  CHECK(r.oca == 1.0);
  CHECK(r.mca == 1.0);
  CHECK_THROWS(oca_mca({}));
  CHECK_THROWS(oca_mca({{true}, {true, false}}));

  std::mt19937_64 rng(63);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<std::vector<bool>> rows(10, std::vector<bool>(5));
    for (auto& row : rows) {
      for (std::size_t i = 0; i < row.size(); ++i) row[i] = (rng() % 4) == 0;
    }
    const auto a = oca_mca(rows);
    CHECK(a.mca <= a.oca);
    auto permuted = rows;
    for (auto& row : permuted) std::reverse(row.begin(), row.end());
    const auto b = oca_mca(permuted);
    CHECK(a.oca == b.oca);
    CHECK(a.mca == b.mca);
  }
}

TEST_CASE("accuracy_table") {
  std::vector<QueryOutcome> outcomes;
  for (int i = 0; i < 10; ++i) outcomes.push_back({"a" + std::to_string(i), "all-right", true});
  for (int i = 0; i < 10; ++i) outcomes.push_back({"b" + std::to_string(i), "all-wrong", false});
  for (int i = 0; i < 3; ++i) outcomes.push_back({"c" + std::to_string(i), "mixed", i == 0});
  const auto t = accuracy_table(outcomes);
  REQUIRE(t.rows.size() == 3);
  CHECK(t.rows[0].percent == 100.0);
  CHECK(t.rows[1].percent == 0.0);
  CHECK(t.rows[2].correct == 1);
  CHECK(t.rows[2].total == 3);
  const std::string table = t.to_table();
  CHECK(table.find("100.00") != std::string::npos);
  CHECK(table.find("0.00") != std::string::npos);
  CHECK(table.find("33.33") != std::string::npos);
  CHECK(table.find("44.44") != std::string::npos);  // (100 + 0 + 33.33) / 3
  CHECK(accuracy_table({}).rows.empty());
}

TEST_CASE("scaling_run on the simulated specialist pool") {
  const auto setup = sim::build_sim_setup(sim::specialist_world(), 100);
  const auto pipeline = sim::sim_pipeline(setup);
  const auto queries = sim::sim_queries(setup.world, 25, "scale");

  CHECK(scaling_run(pipeline, {}, queries, {}, 1).empty());
  CHECK_THROWS_AS(scaling_run(pipeline, {10, 5}, queries, {}, 1), ConfigError);

  // Size 1: the single model answers alone (K truncated to 1, no dropping).
  AskOverrides solo;
  solo.k_drop = 0;
  const auto one = scaling_run(pipeline, {1}, queries, solo, 1);
  REQUIRE(one.size() == 1);
  std::size_t direct = 0;
  const auto& spec = setup.world.models.front();
  for (const auto& q : queries) {
    direct += sim::answers_correctly(setup.world, spec, *sim::parse_question(q.question)) ? 1 : 0;
  }
  CHECK(one[0].correct == direct);

  const auto pts = scaling_run(pipeline, {5, 15}, queries, {}, 7);
  REQUIRE(pts.size() == 2);
  CHECK(pts[0].total == queries.size());
  CHECK(pts[1].pool_size == 15);
  const auto again = scaling_run(pipeline, {5, 15}, queries, {}, 7);
  CHECK(scaling_json(pts) == scaling_json(again));
  CHECK(scaling_table(pts).find("pool_size") != std::string::npos);
}
