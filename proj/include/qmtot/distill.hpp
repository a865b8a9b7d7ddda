#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "qmtot/domain.hpp"
#include "qmtot/session.hpp"

namespace qmtot {

/// The reflected text ends on a different option than its source chain.
class AnswerDriftError : public Error {
 public:
  using Error::Error;
};

struct LongCoT {
  std::string question_id;
  // Position of the source chain within its run record.
  int source_chain = 0;
  // Question rendered as a standalone prompt (stem plus options).
  std::string prompt;
  std::string text;
  bool correct = false;

  bool operator==(const LongCoT&) const = default;
};

struct PreferencePair {
  std::string question_id;
  std::string prompt;
  std::string chosen;
  std::string rejected;

  bool operator==(const PreferencePair&) const = default;
};

/// Question text as it appears in exported training prompts.
std::string render_question_prompt(const Question& q);

/// Rewrites a graded short chain into a long reflective CoT with the same answer.
LongCoT reflect(const Question& q, const ChainRecord& chain, int source_index,
                CallSession& session);

/// Per question: shuffle correct and incorrect long CoTs with a seeded
/// generator and pair them by position, min(#correct, #incorrect) pairs.
std::vector<PreferencePair> match_pairs(const std::vector<LongCoT>& longs, std::uint64_t seed);

/// Invariant violations of a pair list (empty when all hold).
std::vector<std::string> check_pairs(const std::vector<PreferencePair>& pairs);

Json to_json(const PreferencePair& p);
PreferencePair preference_pair_from_json(const Json& j);

/// One JSON object per line. Returns the number of lines written.
std::size_t export_dpo(const std::vector<PreferencePair>& pairs, const std::filesystem::path& path);
std::vector<PreferencePair> load_dpo(const std::filesystem::path& path);

}  // namespace qmtot
