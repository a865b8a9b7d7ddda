#pragma once

#include <string>

#include "qmtot/domain.hpp"
#include "qmtot/session.hpp"

namespace qmtot {

struct EvaluatorConfig {
  double alpha = 0.6;
  bool retry_on_parse_failure = true;
};

/// alpha * exp(r) + (1 - alpha) * exp(c). Throws RangeError outside [0,1].
double final_score(double r, double c, double alpha);

/// Chain text the scorers and the judge see: numbered steps plus the answer.
std::string format_chain(const ChainRecord& chain);

/// Runs the reasoning and correctness scorers and fuses the two scores.
/// Throws ScoreParseError when a scorer reply has no usable SCORE token
/// (after one stricter retry when enabled).
ChainScores score_chain(const Question& q, const ChainRecord& chain, const EvaluatorConfig& cfg,
                        CallSession& session);

struct JudgeCandidate {
  OptionLabel option;
  const ChainRecord* best_chain = nullptr;
};

struct JudgeOutcome {
  OptionLabel winner;
  // The judge reply named neither candidate; `winner` is the average-score side.
  bool fallback = false;
  std::string text;
};

/// Asks the judge model to pick between the average-score and max-score
/// finalists, each shown with its best chain.
JudgeOutcome judge(const Question& q, const JudgeCandidate& avg_side,
                   const JudgeCandidate& max_side, CallSession& session);

}  // namespace qmtot
