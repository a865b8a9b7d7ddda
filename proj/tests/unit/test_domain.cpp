#include <random>

#include "doctest.h"
#include "qmtot/domain.hpp"
#include "test_support.hpp"

using namespace qmtot;

TEST_CASE("validate_question accepts a well-formed five-option item") {
  Question q = testing::make_question("q1", 5, 2);
  CHECK(validate_question(q).empty());
}

TEST_CASE("validate_question rejects gaps and foreign golds") {
  Question gap;
  gap.id = "g";
  gap.stem = "stem";
  gap.options = {{OptionLabel('A'), "a"}, {OptionLabel('C'), "c"}};
  gap.gold = OptionLabel('A');
  CHECK(validate_question(gap) == std::vector<std::string>{"options not consecutive from A"});

  Question foreign = testing::make_question("f", 5);
  foreign.gold = OptionLabel('F');
  CHECK(validate_question(foreign) == std::vector<std::string>{"gold not an option"});
}

TEST_CASE("validate_question flags empty fields") {
  Question q = testing::make_question("e", 2);
  q.stem = "  ";
  q.id.clear();
  q.options[OptionLabel('B')] = "";
  const auto v = validate_question(q);
  CHECK(v.size() >= 3);
}

TEST_CASE("OptionLabel parses single uppercase letters only") {
  CHECK(OptionLabel::parse("C") == OptionLabel('C'));
  CHECK_FALSE(OptionLabel::parse("c").has_value());
  CHECK_FALSE(OptionLabel::parse("AB").has_value());
  CHECK_FALSE(OptionLabel::parse("").has_value());
  CHECK(OptionLabel('D').offset() == 3);
}

TEST_CASE("grade_chain sets correctness against the gold") {
  ChainRecord c;
  c.answer = OptionLabel('B');
  grade_chain(c, OptionLabel('B'));
  CHECK(c.correct == true);
  grade_chain(c, OptionLabel('A'));
  CHECK(c.correct == false);
  c.answer.reset();
  grade_chain(c, OptionLabel('A'));
  CHECK_FALSE(c.correct.has_value());
  c.answer = OptionLabel('A');
  grade_chain(c, std::nullopt);
  CHECK_FALSE(c.correct.has_value());
}

TEST_CASE("format_options lists options in label order") {
  Question q = testing::make_question("q", 3);
  CHECK(format_options(q) == "A. option 0\nB. option 1\nC. option 2");
}

TEST_CASE("validate_run_config names each violated field") {
  RunConfig cfg = testing::scripted_config();
  CHECK(validate_run_config(cfg).empty());
  cfg.alpha = 1.5;
  cfg.branching = 0;
  cfg.node_budget = 2;
  cfg.max_depth = 3;
  const auto v = validate_run_config(cfg);
  auto mentions = [&](const std::string& field) {
    for (const auto& s : v) {
      if (s.rfind(field + ":", 0) == 0) return true;
    }
    return false;
  };
  CHECK(mentions("alpha"));
  CHECK(mentions("branching"));
  CHECK(mentions("node_budget"));

  RunConfig no_roles;
  CHECK_FALSE(validate_run_config(no_roles).empty());
  CHECK(validate_run_config(no_roles, false).empty());
}

TEST_CASE("validate_backend_ref requires the fields of each kind") {
  BackendRef scripted;
  scripted.kind = BackendKind::scripted;
  CHECK_FALSE(validate_backend_ref(scripted).empty());
  scripted.fixture = "x.json";
  CHECK(validate_backend_ref(scripted).empty());

  BackendRef remote;
  remote.kind = BackendKind::openai_compatible;
  CHECK_FALSE(validate_backend_ref(remote).empty());
  remote.base_url = "http://localhost:8000";
  remote.model = "m";
  CHECK(validate_backend_ref(remote).empty());
}

namespace {

ChainRecord random_chain(std::mt19937_64& rng) {
  auto pick = [&rng](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };
  ChainRecord c;
  c.question_id = "q" + std::to_string(pick(0, 99));
  const int n = pick(0, 4);
  for (int i = 0; i < n; ++i) {
    c.steps.push_back(ReasoningStep{i, "step \"" + std::to_string(pick(0, 9)) + "\"\n\t\xc3\xa9",
                                    static_cast<Verdict>(pick(0, 2))});
  }
  if (pick(0, 1)) c.answer = OptionLabel(static_cast<char>('A' + pick(0, 4)));
  if (pick(0, 1)) {
    ChainScores s;
    s.r = pick(0, 10) / 10.0;
    s.c = pick(0, 10) / 10.0;
    s.fs = 1.0 + pick(0, 1000) / 7.0;
    s.reasoning_text = "SCORE: " + std::to_string(pick(0, 10));
    c.scores = s;
  }
  if (pick(0, 1)) c.correct = pick(0, 1) == 1;
  return c;
}

}  // namespace

TEST_CASE("property: domain types round-trip through JSON") {
  std::mt19937_64 rng(5);
  for (int i = 0; i < 300; ++i) {
    const ChainRecord c = random_chain(rng);
    const Json j = to_json(c);
    CHECK(chain_record_from_json(j) == c);
    CHECK(chain_record_from_json(Json::parse(j.dump())) == c);
  }
  Question q = testing::make_question("rt", 5, 4);
  CHECK(question_from_json(to_json(q)) == q);
  q.gold.reset();
  CHECK(question_from_json(to_json(q)) == q);

  RunConfig cfg = testing::scripted_config();
  cfg.seed = 0xFFFFFFFFFFFFFFFFull;
  cfg.alpha = 0.35;
  cfg.roles[Role::judge].kind = BackendKind::ollama;
  cfg.roles[Role::judge].base_url = "http://h:1";
  cfg.roles[Role::judge].model = "m";
  cfg.roles[Role::judge].auth_env = "TOKEN";
  CHECK(run_config_from_json(Json::parse(to_json(cfg).dump())) == cfg);
}

TEST_CASE("decoding rejects malformed objects with SchemaError") {
  CHECK_THROWS_AS(chain_record_from_json(Json{{"question_id", 3}}), SchemaError);
  CHECK_THROWS_AS(question_from_json(Json::array()), SchemaError);
  CHECK_THROWS_AS(run_config_from_json(Json{{"roles", {{"boss", Json::object()}}}}), SchemaError);
  CHECK_THROWS_AS(option_label_from_json(Json("ab")), SchemaError);
}
