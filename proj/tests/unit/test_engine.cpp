#include <random>

#include "doctest.h"
#include "qmtot/engine.hpp"
#include "test_support.hpp"

using namespace qmtot;

namespace {

struct Harness {
  explicit Harness(std::vector<ScriptEntry> script, RunConfig c = testing::scripted_config())
      : backend(std::make_shared<ScriptedBackend>(std::move(script))),
        backends(backend),
        templates(TemplateSet::builtin()),
        cfg(std::move(c)) {}

  CallSession session(const Question& q) { return CallSession(backends, templates, cfg, q.id); }

  std::shared_ptr<ScriptedBackend> backend;
  RoleBackends backends;
  TemplateSet templates;
  RunConfig cfg;
};

ScriptEntry entry(Purpose p, int i, std::string text) { return {p, i, std::move(text), ""}; }

}  // namespace

TEST_CASE("root with one solved and one dead-end child") {
  RunConfig cfg = testing::scripted_config();
  cfg.branching = 2;
  cfg.max_depth = 3;
  cfg.max_chains = 3;
  cfg.node_budget = 10;
  Harness h({entry(Purpose::decompose, 0, "Consider iron deficiency."),
             entry(Purpose::validate, 0, "VERDICT: promising"),
             entry(Purpose::extend, 0, "Microcytosis fits; choose B."),
             entry(Purpose::extend, 1, "Macrocytosis is expected."),
             entry(Purpose::validate, 1, "VERDICT: solved"),
             entry(Purpose::validate, 2, "VERDICT: dead_end"),
             entry(Purpose::readout, 0, "The answer is (B).")},
            cfg);
  const Question q = testing::make_question("q1", 4, 1);
  CallSession s = h.session(q);
  const TreeRun run = run_tree(q, s);

  CHECK(run.stats.nodes_created == 3);
  CHECK(run.stats.nodes_pruned == 1);
  CHECK(run.stats.chains_collected == 1);
  CHECK(run.stats.paths_per_question == 2);
  CHECK(run.stats.llm_calls == 7);
  REQUIRE(run.chains.size() == 1);
  const ChainRecord& chain = run.chains[0];
  REQUIRE(chain.steps.size() == 2);
  CHECK(chain.steps[0].text == "Consider iron deficiency.");
  CHECK(chain.steps[1].verdict == Verdict::solved);
  CHECK(chain.answer == OptionLabel('B'));
  CHECK(chain.correct == true);
  CHECK(check_tree(run, cfg.max_depth).empty());
  CHECK(run.nodes[2].status == NodeStatus::pruned);
}

TEST_CASE("a blank candidate is skipped and its siblings are kept") {
  RunConfig cfg = testing::scripted_config();
  cfg.branching = 3;
  cfg.max_depth = 2;
  cfg.max_chains = 5;
  cfg.node_budget = 10;
  Harness h({entry(Purpose::decompose, 0, "start"), entry(Purpose::validate, 0, "VERDICT: promising"),
             entry(Purpose::extend, 0, "first"), entry(Purpose::extend, 1, "   \n"),
             entry(Purpose::extend, 2, "third"), entry(Purpose::validate, 1, "VERDICT: solved"),
             entry(Purpose::validate, 2, "VERDICT: solved"), entry(Purpose::readout, 0, "(A)"),
             entry(Purpose::readout, 1, "(C)")},
            cfg);
  const Question q = testing::make_question("q2");
  CallSession s = h.session(q);
  const TreeRun run = run_tree(q, s);
  CHECK(run.stats.nodes_created == 3);
  REQUIRE(run.chains.size() == 2);
  CHECK(run.chains[0].steps.back().text == "first");
  CHECK(run.chains[1].steps.back().text == "third");
  CHECK(run.chains[1].answer == OptionLabel('C'));
}

TEST_CASE("max_chains of one stops after the first solved leaf") {
  RunConfig cfg = testing::scripted_config();
  cfg.branching = 2;
  cfg.max_depth = 2;
  cfg.max_chains = 1;
  cfg.node_budget = 10;
  Harness h({entry(Purpose::decompose, 0, "start"), entry(Purpose::validate, 0, "VERDICT: promising"),
             entry(Purpose::extend, 0, "a"), entry(Purpose::extend, 1, "b"),
             entry(Purpose::validate, 1, "VERDICT: solved"), entry(Purpose::readout, 0, "(D)")},
            cfg);
  const Question q = testing::make_question("q3");
  CallSession s = h.session(q);
  const TreeRun run = run_tree(q, s);
  CHECK(run.chains.size() == 1);
  // The second child is never validated.
  CHECK(run.nodes[2].status == NodeStatus::open);
  CHECK(check_tree(run, cfg.max_depth).empty());
}

TEST_CASE("a solved root yields a one-step chain") {
  Harness h({entry(Purpose::decompose, 0, "Obvious: B."), entry(Purpose::validate, 0, "VERDICT: solved"),
             entry(Purpose::readout, 0, "Final answer: B")});
  const Question q = testing::make_question("q4", 4, 1);
  CallSession s = h.session(q);
  const TreeRun run = run_tree(q, s);
  REQUIRE(run.chains.size() == 1);
  CHECK(run.chains[0].steps.size() == 1);
  CHECK(run.stats.llm_calls == 3);
}

TEST_CASE("blank decomposition produces no chains") {
  Harness h({entry(Purpose::decompose, 0, "  ")});
  const Question q = testing::make_question("q5");
  CallSession s = h.session(q);
  const TreeRun run = run_tree(q, s);
  CHECK(run.chains.empty());
  CHECK(run.stats.nodes_created == 0);
  CHECK(run.stats.llm_calls == 1);
}

TEST_CASE("promising steps at max_depth are pruned") {
  RunConfig cfg = testing::scripted_config();
  cfg.branching = 1;
  cfg.max_depth = 1;
  cfg.node_budget = 5;
  Harness h({entry(Purpose::decompose, 0, "s0"), entry(Purpose::validate, 0, "promising"),
             entry(Purpose::extend, 0, "s1"), entry(Purpose::validate, 1, "still promising")},
            cfg);
  const Question q = testing::make_question("q6");
  CallSession s = h.session(q);
  const TreeRun run = run_tree(q, s);
  CHECK(run.stats.nodes_created == 2);
  CHECK(run.stats.nodes_pruned == 1);
  CHECK(run.chains.empty());
  CHECK(run.nodes[1].depth == 1);
  CHECK(run.nodes[1].status == NodeStatus::pruned);
}

TEST_CASE("property: random trees stay well formed and within budget") {
  std::mt19937_64 rng(99);
  auto pick = [&rng](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };
  for (int trial = 0; trial < 200; ++trial) {
    RunConfig cfg = testing::scripted_config();
    cfg.max_depth = pick(1, 4);
    cfg.branching = pick(1, 4);
    cfg.max_chains = pick(1, 6);
    cfg.node_budget = pick(cfg.max_depth, 25);
    std::uint64_t state = rng();
    auto backend = std::make_shared<testing::FnBackend>([state](const ChatRequest& req) mutable {
      state = mix64(state + 1);
      switch (req.purpose) {
        case Purpose::validate: {
          static const char* verdicts[] = {"VERDICT: promising", "VERDICT: solved",
                                           "VERDICT: dead_end"};
          return std::string(verdicts[state % 3]);
        }
        case Purpose::readout:
          return std::string("(") + static_cast<char>('A' + state % 4) + ")";
        default:
          return state % 7 == 0 ? std::string(" ") : "step " + std::to_string(state % 1000);
      }
    });
    RoleBackends backends(backend);
    const TemplateSet templates = TemplateSet::builtin();
    const Question q = testing::make_question("p" + std::to_string(trial));
    CallSession s(backends, templates, cfg, q.id);
    const TreeRun run = run_tree(q, s);
    CHECK(check_tree(run, cfg.max_depth).empty());
    CHECK(run.stats.nodes_created <= cfg.node_budget);
    CHECK(run.stats.llm_calls <= 2 * cfg.node_budget + cfg.max_chains);
    CHECK(run.stats.llm_calls == backend->calls());
    CHECK(static_cast<int>(run.chains.size()) <= cfg.max_chains);
  }
}

TEST_CASE("run_cot collects one chain per usable sample") {
  Harness h({entry(Purpose::cot, 0, "The answer is (C)."), entry(Purpose::cot, 1, "   "),
             entry(Purpose::cot, 2, "I cannot decide.")});
  const Question q = testing::make_question("c1", 4, 2);
  CallSession s = h.session(q);
  const auto chains = run_cot(q, 3, s);
  REQUIRE(chains.size() == 2);
  CHECK(chains[0].answer == OptionLabel('C'));
  CHECK(chains[0].correct == true);
  CHECK(chains[0].steps.size() == 1);
  CHECK_FALSE(chains[1].answer.has_value());
  CHECK_FALSE(chains[1].correct.has_value());
  CHECK_THROWS_AS(run_cot(q, 0, s), RangeError);
}

TEST_CASE("run_cot issues distinct seeds per sample") {
  auto backend = std::make_shared<testing::FnBackend>([](const ChatRequest&) { return "(A)"; });
  RoleBackends backends(backend);
  const TemplateSet templates = TemplateSet::builtin();
  const RunConfig cfg = testing::scripted_config();
  const Question q = testing::make_question("c2");
  CallSession s(backends, templates, cfg, q.id);
  run_cot(q, 3, s);
  const auto reqs = backend->requests();
  REQUIRE(reqs.size() == 3);
  CHECK(reqs[0].seed != reqs[1].seed);
  CHECK(reqs[1].seed != reqs[2].seed);
  CHECK(reqs[2].ordinal == 2);
}

TEST_CASE("majority_vote examples") {
  auto chains_for = [](std::initializer_list<std::optional<char>> answers) {
    std::vector<ChainRecord> out;
    for (auto a : answers) {
      ChainRecord c;
      if (a) c.answer = OptionLabel(*a);
      out.push_back(c);
    }
    return out;
  };
  CHECK(majority_vote(chains_for({'B', 'B', 'C'})) == OptionLabel('B'));
  CHECK(majority_vote(chains_for({'C', 'A'})) == OptionLabel('A'));
  CHECK(majority_vote(chains_for({std::nullopt, 'D', std::nullopt})) == OptionLabel('D'));
  CHECK_FALSE(majority_vote(chains_for({std::nullopt})).has_value());
  CHECK_FALSE(majority_vote({}).has_value());
}

TEST_CASE("check_tree reports broken links") {
  TreeRun run;
  TreeNode root;
  root.id = 0;
  root.status = NodeStatus::expanded;
  root.children = {1};
  TreeNode child;
  child.id = 1;
  child.parent = 0;
  child.depth = 2;
  child.step.index = 2;
  run.nodes = {root, child};
  const auto v = check_tree(run, 3);
  REQUIRE_FALSE(v.empty());
  CHECK(v[0].find("depth") != std::string::npos);
}
