#include <filesystem>

#include "doctest.h"
#include "smacs/question_bank.hpp"

using namespace smacs;

namespace {

QuestionRecord rec(std::string id, std::string label, TaskKind kind = TaskKind::BoxedMath) {
  return QuestionRecord{std::move(id), "math", kind, "What is 6*7?", std::move(label), {}};
}

std::filesystem::path temp_path(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("smacs_qb_" + name);
}

}  // namespace

TEST_CASE("ingest counts fresh records and rejects duplicates") {
  QuestionBank bank;
  CHECK(bank.ingest({rec("a", "1"), rec("b", "2")}) == 2);
  CHECK(bank.size() == 2);
  try {
    bank.ingest({rec("c", "3"), rec("a", "9")});
    FAIL("duplicate accepted");
  } catch (const BankError& e) {
    CHECK(std::string(e.what()).find("duplicate id: a") != std::string::npos);
  }
  CHECK(bank.size() == 2);  // whole batch rejected
  CHECK_THROWS_AS(bank.ingest({rec("d", "4"), rec("d", "5")}), BankError);
  CHECK_THROWS_AS(bank.ingest({rec("e", "")}), BankError);
  CHECK_FALSE(bank.find("c").has_value());
}

TEST_CASE("ingest of a 1000-question validation split") {
  std::vector<QuestionRecord> batch;
  for (int i = 0; i < 1000; ++i) batch.push_back(rec("math-" + std::to_string(i), std::to_string(i)));
  QuestionBank bank;
  CHECK(bank.ingest(std::move(batch)) == 1000);
  CHECK(bank.find("math-999") == 999u);
}

TEST_CASE("verify_response examples") {
  auto v = verify_response("...so \\boxed{42}", "42", TaskKind::BoxedMath);
  CHECK(v.correct);
  CHECK(v.reason == verdict_reason::kMatch);

  v = verify_response("The answer is (C)", "B", TaskKind::MultipleChoice);
  CHECK_FALSE(v.correct);
  CHECK(v.extracted == "C");

  v = verify_response("no final answer given", "7", TaskKind::BoxedMath);
  CHECK_FALSE(v.correct);
  CHECK(v.reason == verdict_reason::kExtractionFailed);
  CHECK(v.extracted.empty());
}

TEST_CASE("answer extraction details") {
  CHECK(extract_boxed("\\boxed{1} then \\boxed{\\frac{1}{2}}") == "\\frac{1}{2}");
  CHECK_FALSE(extract_boxed("\\boxed{unclosed").has_value());
  CHECK(extract_choice("I think the answer is (a). Actually the answer is D") == "D");
  CHECK_FALSE(extract_choice("no letter").has_value());
  CHECK(normalize_answer("  $\\left( 1,  2 \\right)$ ") == "( 1, 2 )");
  CHECK(verify_response("The answer is (b)", "(B)", TaskKind::MultipleChoice).correct);
  CHECK(verify_response("  Paris ", "Paris", TaskKind::ExactMatch).correct);
  CHECK(verify_response("print(1)", "x", TaskKind::Code).reason == verdict_reason::kNeedsHook);
}

TEST_CASE("external hook verdicts") {
  const auto r = rec("c1", "tests", TaskKind::Code);
  CHECK(verify_via_hook("code", r, {"/bin/true"}).correct);
  auto v = verify_via_hook("code", r, {"/bin/false"});
  CHECK_FALSE(v.correct);
  CHECK(v.reason == verdict_reason::kHookReject);
  v = verify_via_hook("code", r, {""});
  CHECK_FALSE(v.correct);
  CHECK(v.reason == verdict_reason::kHookFailure);
  v = verify_via_hook("code", r, {"/nonexistent/checker-binary"});
  CHECK(v.reason == verdict_reason::kHookFailure);
  v = verify_via_hook("code", r, {"sleep 5", std::chrono::milliseconds(200)});
  CHECK_FALSE(v.correct);
  CHECK(v.reason == verdict_reason::kHookFailure);
  // The hook sees the response on stdin.
  CHECK(verify_via_hook("MAGIC", r, {"grep -q MAGIC"}).correct);
}

TEST_CASE("capability matrix from transcripts") {
  QuestionBank bank;
  bank.ingest({rec("q0", "1"), rec("q1", "2"), rec("q2", "3")});

  Transcripts all_right;
  for (int i = 0; i < 3; ++i) all_right["m"]["q" + std::to_string(i)] = "\\boxed{" + std::to_string(i + 1) + "}";
  const auto one = build_capability_matrix(bank, {"m"}, all_right);
  CHECK(one.rows() == 1);
  for (std::size_t i = 0; i < 3; ++i) CHECK(one.bit(0, i));

  // Model 0 correct exactly on even positions; every cell is re-verified.
  QuestionBank big;
  std::vector<QuestionRecord> rs;
  for (int i = 0; i < 10; ++i) rs.push_back(rec("q" + std::to_string(i), std::to_string(i)));
  big.ingest(rs);
  Transcripts t;
  for (int i = 0; i < 10; ++i) {
    const auto id = "q" + std::to_string(i);
    t["even"][id] = "\\boxed{" + std::to_string(i % 2 == 0 ? i : i + 100) + "}";
    t["other"][id] = i % 3 == 0 ? "no answer" : "\\boxed{" + std::to_string(i) + "}";
  }
  const auto cap = build_capability_matrix(big, {"even", "other"}, t);
  for (std::size_t i = 0; i < 10; ++i) {
    CHECK(cap.bit(0, i) == (i % 2 == 0));
    CHECK(cap.bit(0, i) == verify_response(t["even"][big.at(i).id], big.at(i).label, TaskKind::BoxedMath).correct);
    CHECK(cap.bit(1, i) == verify_response(t["other"][big.at(i).id], big.at(i).label, TaskKind::BoxedMath).correct);
  }

  Transcripts missing = t;
  missing["other"].erase("q4");
  try {
    build_capability_matrix(big, {"even", "other"}, missing);
    FAIL("missing pair accepted");
  } catch (const BankError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("other") != std::string::npos);
    CHECK(msg.find("q4") != std::string::npos);
  }
  CHECK_THROWS_AS(build_capability_matrix(QuestionBank{}, {"m"}, {}), BankError);
}

TEST_CASE("code questions go through the hook when profiling") {
  QuestionBank bank;
  bank.ingest({rec("c0", "unit tests", TaskKind::Code)});
  Transcripts t;
  t["m"]["c0"] = "def f(): pass";
  CHECK(build_capability_matrix(bank, {"m"}, t, {"/bin/true"}).bit(0, 0));
  CHECK_FALSE(build_capability_matrix(bank, {"m"}, t, {"/bin/false"}).bit(0, 0));
  CHECK_FALSE(build_capability_matrix(bank, {"m"}, t, {}).bit(0, 0));
}

TEST_CASE("bank, capability and transcripts survive save/load") {
  QuestionBank bank;
  bank.ingest({rec("a", "1"), rec("b", "2", TaskKind::MultipleChoice)});
  bank.set_embeddings("emb", {{1.0, 0.0}, {0.6, 0.8}});
  const auto p = temp_path("bank.jsonl");
  bank.save(p);
  const auto back = QuestionBank::load(p);
  CHECK(back.size() == 2);
  CHECK(back.header() == bank.header());
  CHECK(back.at(1).task_kind == TaskKind::MultipleChoice);
  CHECK(std::vector<double>(back.embedding_matrix().begin(), back.embedding_matrix().end()) ==
        std::vector<double>(bank.embedding_matrix().begin(), bank.embedding_matrix().end()));
  CHECK_THROWS(bank.set_embeddings("emb", {{1.0, 1.0}, {1.0, 0.0}}));  // not unit norm

  CapabilityMatrix cap({"m1", "m2"}, 3);
  cap.set(0, 1, true);
  cap.set(1, 2, true);
  const auto cp = temp_path("cap.txt");
  cap.save(cp);
  CHECK(CapabilityMatrix::load(cp) == cap);
  const auto swapped = cap.select_rows({"m2", "m1"});
  CHECK(swapped.bit(0, 2));
  CHECK(swapped.bit(1, 1));
  CHECK_THROWS_AS(cap.select_rows({"m3"}), BankError);

  Transcripts t;
  t["m1"]["a"] = "multi\nline \"quoted\"";
  const auto tp = temp_path("tx.jsonl");
  save_transcripts(t, tp);
  CHECK(load_transcripts(tp) == t);
}
