#include "qmtot/evaluator.hpp"

#include <cmath>

#include "qmtot/promptkit.hpp"

namespace qmtot {

namespace {

constexpr std::string_view kScoreReminder =
    "\n\nReminder: the first line of your reply must be exactly \"SCORE: <integer>\" with an "
    "integer from 0 to 10.";

double score_once(const Question& q, const std::string& chain_text, TemplateName name,
                  const EvaluatorConfig& cfg, CallSession& session, std::string& raw) {
  Bindings b = question_bindings(q);
  b["chain"] = chain_text;
  const double temperature = session.config().scoring_temperature;
  ChatResponse resp = session.call(Role::scorer, Purpose::score, name, b, temperature);
  raw = resp.text;
  try {
    return extract_score(resp.text);
  } catch (const ScoreParseError&) {
    if (!cfg.retry_on_parse_failure) throw;
  }
  resp = session.call(Role::scorer, Purpose::score, name, b, temperature, kScoreReminder);
  raw = resp.text;
  return extract_score(resp.text);
}

}  // namespace

double final_score(double r, double c, double alpha) {
  auto in_unit = [](double x) { return x >= 0.0 && x <= 1.0; };
  if (!in_unit(r) || !in_unit(c) || !in_unit(alpha)) {
    throw RangeError("final_score inputs must lie in [0,1]");
  }
  // The weighted sum of two equal terms can round one ulp away from the term.
  if (r == c) return std::exp(r);
  return alpha * std::exp(r) + (1.0 - alpha) * std::exp(c);
}

std::string format_chain(const ChainRecord& chain) {
  std::string out = format_history(chain.steps);
  out += "\nFinal answer: ";
  out += chain.answer ? "(" + chain.answer->str() + ")" : std::string("none");
  return out;
}

ChainScores score_chain(const Question& q, const ChainRecord& chain, const EvaluatorConfig& cfg,
                        CallSession& session) {
  if (!chain.answer) throw Error("score_chain needs a chain with an answer");
  if (!(cfg.alpha >= 0.0 && cfg.alpha <= 1.0)) throw RangeError("alpha must lie in [0,1]");
  const std::string text = format_chain(chain);
  ChainScores s;
  s.r = score_once(q, text, TemplateName::score_reasoning, cfg, session, s.reasoning_text);
  s.c = score_once(q, text, TemplateName::score_correctness, cfg, session, s.correctness_text);
  s.fs = final_score(s.r, s.c, cfg.alpha);
  return s;
}

JudgeOutcome judge(const Question& q, const JudgeCandidate& avg_side,
                   const JudgeCandidate& max_side, CallSession& session) {
  if (avg_side.option == max_side.option) {
    throw Error("judge needs two different candidates, got " + avg_side.option.str() + " twice");
  }
  if (avg_side.best_chain == nullptr || max_side.best_chain == nullptr) {
    throw Error("judge candidates must carry their best chain");
  }
  Bindings b = question_bindings(q);
  b["candidate_a"] = avg_side.option.str();
  b["candidate_b"] = max_side.option.str();
  b["chain_a"] = format_chain(*avg_side.best_chain);
  b["chain_b"] = format_chain(*max_side.best_chain);
  const ChatResponse resp =
      session.call(Role::judge, Purpose::judge, TemplateName::judge, b, 0.0);

  JudgeOutcome out{avg_side.option, false, resp.text};
  if (auto pick = extract_answer(resp.text, {avg_side.option, max_side.option})) {
    out.winner = *pick;
  } else {
    out.fallback = true;
    log_warning("question " + q.id + ": judge reply named neither candidate; keeping " +
                avg_side.option.str());
  }
  return out;
}

}  // namespace qmtot
