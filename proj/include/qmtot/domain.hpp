#pragma once

#include <compare>
#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace qmtot {

using Json = nlohmann::ordered_json;

/// Base for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A value fell outside the closed range an operation requires.
class RangeError : public Error {
 public:
  using Error::Error;
};

/// A serialized object did not match its schema.
class SchemaError : public Error {
 public:
  using Error::Error;
};

/// One multiple-choice option letter, A through Z.
class OptionLabel {
 public:
  OptionLabel() = default;
  explicit OptionLabel(char letter);

  static std::optional<OptionLabel> parse(std::string_view text);

  char letter() const noexcept { return letter_; }
  std::string str() const { return std::string(1, letter_); }

  /// Zero-based position in the alphabet.
  int offset() const noexcept { return letter_ - 'A'; }

  friend auto operator<=>(const OptionLabel&, const OptionLabel&) = default;

 private:
  char letter_ = 'A';
};

enum class Verdict { solved, promising, dead_end };

std::string_view to_string(Verdict v);
std::optional<Verdict> verdict_from_string(std::string_view s);

struct ReasoningStep {
  int index = 0;
  std::string text;
  Verdict verdict = Verdict::promising;

  bool operator==(const ReasoningStep&) const = default;
};

struct ChainScores {
  double r = 0.0;
  double c = 0.0;
  double fs = 1.0;
  // Scorer completions the two numbers were parsed from.
  std::string reasoning_text;
  std::string correctness_text;

  bool operator==(const ChainScores&) const = default;
};

struct ChainRecord {
  std::string question_id;
  std::vector<ReasoningStep> steps;
  std::optional<OptionLabel> answer;
  std::optional<ChainScores> scores;
  std::optional<bool> correct;

  bool operator==(const ChainRecord&) const = default;
};

struct Question {
  std::string id;
  std::string stem;
  std::map<OptionLabel, std::string> options;
  std::optional<OptionLabel> gold;

  std::vector<OptionLabel> labels() const;

  bool operator==(const Question&) const = default;
};

/// Lists every invariant the question breaks. Empty means valid.
std::vector<std::string> validate_question(const Question& q);

/// Sets `correct` from the chain's answer and the gold label when both exist.
void grade_chain(ChainRecord& chain, const std::optional<OptionLabel>& gold);

/// Checks step numbering and the answer/correctness invariants of a chain.
std::vector<std::string> validate_chain(const ChainRecord& chain);

/// "A. text" lines in label order.
std::string format_options(const Question& q);

enum class BackendKind { openai_compatible, ollama, scripted };

std::string_view to_string(BackendKind k);
std::optional<BackendKind> backend_kind_from_string(std::string_view s);

struct BackendRef {
  BackendKind kind = BackendKind::scripted;
  std::string base_url;
  std::string model;
  // Name of the environment variable holding the bearer token, never the token.
  std::optional<std::string> auth_env;
  // Scripted backends only: path of the response fixture.
  std::string fixture;

  bool operator==(const BackendRef&) const = default;
};

std::vector<std::string> validate_backend_ref(const BackendRef& ref);

enum class Role { generator, validator, scorer, judge, reflector };

inline constexpr Role kAllRoles[] = {Role::generator, Role::validator, Role::scorer,
                                     Role::judge, Role::reflector};

std::string_view to_string(Role r);
std::optional<Role> role_from_string(std::string_view s);

struct RunConfig {
  double alpha = 0.6;
  int max_depth = 5;
  int branching = 3;
  int max_chains = 8;
  int node_budget = 64;
  int cot_samples = 5;
  std::uint64_t seed = 0;
  double generation_temperature = 0.7;
  double scoring_temperature = 0.0;
  int max_tokens = 1024;
  bool retry_on_parse_failure = true;
  std::map<Role, BackendRef> roles;

  bool operator==(const RunConfig&) const = default;
};

/// Every bound violation, each naming the offending field.
std::vector<std::string> validate_run_config(const RunConfig& cfg, bool require_roles = true);

// JSON schemas. Field names and order are stable; see docs/schemas.md.
Json to_json(const OptionLabel& l);
Json to_json(const ReasoningStep& s);
Json to_json(const ChainScores& s);
Json to_json(const ChainRecord& c);
Json to_json(const Question& q);
Json to_json(const BackendRef& b);
Json to_json(const RunConfig& c);

OptionLabel option_label_from_json(const Json& j);
ReasoningStep reasoning_step_from_json(const Json& j);
ChainScores chain_scores_from_json(const Json& j);
ChainRecord chain_record_from_json(const Json& j);
Question question_from_json(const Json& j);
BackendRef backend_ref_from_json(const Json& j);
RunConfig run_config_from_json(const Json& j);

}  // namespace qmtot
