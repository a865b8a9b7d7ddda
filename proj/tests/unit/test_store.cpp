#include <random>

#include "doctest.h"
#include "qmtot/store.hpp"
#include "test_support.hpp"

using namespace qmtot;

namespace {

RunRecord make_record(Method method, const Question& q, std::optional<char> answer,
                      const std::string& run_id = "r") {
  RunRecord r;
  r.run_id = run_id;
  r.method = method;
  r.question = q;
  r.config = testing::scripted_config();
  if (answer) r.final_answer = OptionLabel(*answer);
  if (method == Method::qmtot) {
    SelectionResult s;
    s.route = answer ? Route::agreement : Route::abstain;
    s.chosen = r.final_answer;
    r.selection = s;
  }
  r.started_at = r.finished_at = "2025-01-01T00:00:00Z";
  return r;
}

RunRecord cot_record(const Question& q, const std::vector<char>& answers, int samples) {
  RunRecord r = make_record(Method::cot, q, std::nullopt);
  r.config.cot_samples = samples;
  for (char a : answers) {
    ChainRecord c;
    c.question_id = q.id;
    c.steps = {{0, "text", Verdict::solved}};
    c.answer = OptionLabel(a);
    grade_chain(c, q.gold);
    r.chains.push_back(c);
  }
  return r;
}

}  // namespace

TEST_CASE("ingest reads MedQA-style lines") {
  testing::TempDir dir;
  testing::write_file(dir / "d.jsonl",
                      R"({"question": "Q1?", "options": {"A": "a", "B": "b", "C": "c", "D": "d", "E": "e"}, "answer_idx": "C"}
{"question": "Q2?", "options": [{"key": "A", "value": "x"}, {"key": "B", "value": "y"}], "answer": "y"}
{"id": "custom", "question": "Q3?", "options": {"A": "p", "B": "q"}, "answer": "A"}
)");
  const auto qs = ingest_dataset(dir / "d.jsonl");
  REQUIRE(qs.size() == 3);
  CHECK(qs[0].gold == OptionLabel('C'));
  CHECK(qs[0].options.size() == 5);
  CHECK(qs[1].gold == OptionLabel('B'));
  CHECK(qs[2].id == "custom");
  CHECK(qs[0].id != qs[1].id);
}

TEST_CASE("ingest names the offending line") {
  testing::TempDir dir;
  testing::write_file(dir / "d.jsonl",
                      "{\"question\": \"Q1?\", \"options\": {\"A\": \"a\", \"B\": \"b\"}, \"answer_idx\": \"A\"}\n"
                      "{\"question\": \"Q2?\", \"answer_idx\": \"A\"}\n");
  try {
    ingest_dataset(dir / "d.jsonl");
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.line() == 2);
    CHECK(std::string(e.what()).find("options") != std::string::npos);
  }

  testing::write_file(dir / "bad.jsonl", "{\"question\": \"Q?\", \"options\": {\"A\": \"a\", \"B\": \"b\"}, "
                                         "\"answer_idx\": \"D\"}\n");
  CHECK_THROWS_AS(ingest_dataset(dir / "bad.jsonl"), ValidationError);
  testing::write_file(dir / "junk.jsonl", "not json\n");
  CHECK_THROWS_AS(ingest_dataset(dir / "junk.jsonl"), ParseError);
}

TEST_CASE("saved questions load back unchanged") {
  testing::TempDir dir;
  std::vector<Question> qs = {testing::make_question("a", 5, 3), testing::make_question("b", 2)};
  save_questions(dir / "q.jsonl", qs);
  CHECK(load_questions(dir / "q.jsonl") == qs);
}

TEST_CASE("subsample is seeded and keeps input order") {
  std::vector<Question> qs;
  for (int i = 0; i < 20; ++i) qs.push_back(testing::make_question("q" + std::to_string(100 + i)));
  const auto a = subsample(qs, 7, 3);
  CHECK(a.size() == 7);
  CHECK(subsample(qs, 7, 3) == a);
  for (std::size_t i = 1; i < a.size(); ++i) CHECK(a[i - 1].id < a[i].id);
  CHECK(subsample(qs, 50, 3).size() == 20);
}

TEST_CASE("append then load preserves order") {
  testing::TempDir dir;
  RunStore store(dir.path());
  const RunRecord first = make_record(Method::qmtot, testing::make_question("q1"), 'A', "run");
  const RunRecord second = make_record(Method::qmtot, testing::make_question("q2"), 'B', "run");
  store.append_record(first);
  store.append_record(second);
  const auto loaded = store.load_records("run");
  REQUIRE(loaded.size() == 2);
  CHECK(loaded[0] == first);
  CHECK(loaded[1] == second);
  CHECK(store.completed("run") == std::set<std::string>{"q1", "q2"});
  CHECK(store.completed("missing").empty());
}

TEST_CASE("a truncated final line is reported and can be repaired") {
  testing::TempDir dir;
  RunStore store(dir.path());
  for (int i = 0; i < 3; ++i) {
    store.append_record(make_record(Method::cot, testing::make_question("q" + std::to_string(i)),
                                    std::nullopt, "run"));
  }
  const auto path = store.run_path("run");
  std::string text = testing::read_file(path);
  const auto cut = text.rfind('\n', text.size() - 2) + 1 + 40;
  testing::write_file(path, text.substr(0, cut));
  try {
    store.load_records("run");
    FAIL("expected CorruptRecord");
  } catch (const CorruptRecord& e) {
    CHECK(e.line() == 3);
  }
  CHECK(store.repair_tail("run") == 40);
  CHECK(store.load_records("run").size() == 2);
  CHECK(store.repair_tail("run") == 0);
}

TEST_CASE("check_record catches inconsistent grading") {
  const Question q = testing::make_question("g", 4, 1);
  RunRecord r = cot_record(q, {'B', 'C'}, 2);
  CHECK(check_record(r).empty());
  r.chains[1].correct = true;
  CHECK_FALSE(check_record(r).empty());
  RunRecord no_sel = make_record(Method::qmtot, q, 'B');
  no_sel.selection.reset();
  CHECK_FALSE(check_record(no_sel).empty());
}

TEST_CASE("record JSON round-trips") {
  const Question q = testing::make_question("j", 4, 1);
  RunRecord r = cot_record(q, {'B', 'C'}, 3);
  r.vote = OptionLabel('B');
  r.usage = CallTotals{3, 30, 9};
  r.stats = TreeRunStats{3, 1, 1, 7, 2};
  r.judge = JudgeTranscript{0, 1, "(B)", false};
  CHECK(run_record_from_json(Json::parse(to_json(r).dump())) == r);
}

TEST_CASE("report examples") {
  std::vector<RunRecord> records;
  const std::vector<char> answers = {'A', 'A', 'A', 'B'};
  for (int i = 0; i < 4; ++i) {
    records.push_back(make_record(Method::qmtot, testing::make_question("q" + std::to_string(i)),
                                  answers[i]));
  }
  const Report r = build_report(records, {});
  CHECK(r.methods.at(Method::qmtot).overall.accuracy == 0.75);
  CHECK(r.methods.at(Method::qmtot).overall.questions == 4);
  CHECK(r.unclassified_questions == 4);
  CHECK_FALSE(r.methods.at(Method::cot).overall.accuracy.has_value());
}

TEST_CASE("CoT-AVG averages per-question sample accuracy") {
  const Question q1 = testing::make_question("a", 4, 0);
  const Question q2 = testing::make_question("b", 4, 0);
  const std::vector<RunRecord> records = {cot_record(q1, {'A', 'A', 'A', 'A', 'A'}, 5),
                                          cot_record(q2, {'A', 'A', 'B', 'C', 'D'}, 5)};
  const Report r = build_report(records, {{"a", classify(1.0, 0.9, 0.25, 5)},
                                          {"b", classify(0.4, 0.9, 0.25, 5)}});
  const auto& cot = r.methods.at(Method::cot);
  CHECK(*cot.overall.accuracy == doctest::Approx(0.7).epsilon(1e-12));
  CHECK(cot.by_level.at(Level::easy).accuracy == 1.0);
  CHECK(*cot.by_level.at(Level::medium).accuracy == doctest::Approx(0.4));
  CHECK_FALSE(cot.by_level.at(Level::hard).accuracy.has_value());
  CHECK(r.unclassified_questions == 0);
}

TEST_CASE("empty report has zero counts and null accuracies") {
  const Report r = build_report({}, {});
  for (Method m : kAllMethods) {
    CHECK(r.methods.at(m).overall.questions == 0);
    CHECK_FALSE(r.methods.at(m).overall.accuracy.has_value());
  }
  CHECK_FALSE(r.judge_rate.has_value());
  const Json j = to_json(r);
  CHECK(j.dump() == to_json(build_report({}, {})).dump());
  CHECK_FALSE(render_report_table(r).empty());
}

TEST_CASE("report ignores record order and keeps the latest duplicate") {
  std::mt19937_64 rng(4);
  std::vector<RunRecord> records;
  for (int i = 0; i < 12; ++i) {
    const char a = static_cast<char>('A' + i % 3);
    records.push_back(make_record(Method::tot, testing::make_question("q" + std::to_string(i)), a));
  }
  const std::string base = to_json(build_report(records, {})).dump();
  for (int k = 0; k < 10; ++k) {
    std::shuffle(records.begin(), records.end(), rng);
    CHECK(to_json(build_report(records, {})).dump() == base);
  }

  std::vector<RunRecord> dup = {make_record(Method::tot, testing::make_question("x"), 'B'),
                                make_record(Method::tot, testing::make_question("x"), 'A')};
  CHECK(build_report(dup, {}).methods.at(Method::tot).overall.accuracy == 1.0);
}

TEST_CASE("records without a gold label cannot be reported") {
  Question q = testing::make_question("ng");
  q.gold.reset();
  CHECK_THROWS_AS(build_report({make_record(Method::tot, q, 'A')}, {}), MissingGold);
}
