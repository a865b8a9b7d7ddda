#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "qmtot/domain.hpp"

namespace qmtot {

class MissingBinding : public Error {
 public:
  explicit MissingBinding(std::string name)
      : Error("missing template binding '" + name + "'"), name_(std::move(name)) {}
  const std::string& name() const { return name_; }

 private:
  std::string name_;
};

class TemplateError : public Error {
 public:
  using Error::Error;
};

class ScoreParseError : public Error {
 public:
  using Error::Error;
};

enum class TemplateName {
  decompose,
  extend,
  validate,
  readout,
  score_reasoning,
  score_correctness,
  judge,
  reflect,
  cot,
};

inline constexpr TemplateName kAllTemplates[] = {
    TemplateName::decompose,       TemplateName::extend,
    TemplateName::validate,        TemplateName::readout,
    TemplateName::score_reasoning, TemplateName::score_correctness,
    TemplateName::judge,           TemplateName::reflect,
    TemplateName::cot,
};

std::string_view to_string(TemplateName n);
std::optional<TemplateName> template_name_from_string(std::string_view s);

/// Placeholders a template of this kind must have bound before rendering.
const std::set<std::string>& required_placeholders(TemplateName n);

struct PromptTemplate {
  TemplateName name = TemplateName::cot;
  std::string system;
  std::string user;
};

/// Parses the on-disk format: system text, a line holding only `---`, user text.
PromptTemplate parse_template(TemplateName name, std::string_view contents);

using Bindings = std::map<std::string, std::string>;

struct RenderedPrompt {
  std::string system;
  std::string user;
};

/// Substitutes `{name}` placeholders. Substituted values are not rescanned.
RenderedPrompt render(const PromptTemplate& t, const Bindings& bindings);

class TemplateSet {
 public:
  /// The templates shipped in the repository's templates/ directory.
  static TemplateSet builtin();

  /// Built-in set with any `<name>.txt` found in `dir` taking precedence.
  static TemplateSet with_overrides(const std::filesystem::path& dir);

  const PromptTemplate& get(TemplateName n) const;

 private:
  std::map<TemplateName, PromptTemplate> templates_;
};

/// Reads the chosen option out of free-form completion text.
///
/// Precedence: (1) the last "answer is (X)" / "answer: X" style phrase,
/// (2) a lone valid letter on the final non-empty line, (3) the last
/// standalone valid letter anywhere. Labels outside `valid` never match.
std::optional<OptionLabel> extract_answer(std::string_view text,
                                          const std::vector<OptionLabel>& valid);

/// Reads the `VERDICT:` token. Absent token means promising; blank text means dead_end.
Verdict extract_verdict(std::string_view text);

/// First integer after a `SCORE:` token, clamped to 0..10 and divided by 10.
double extract_score(std::string_view text);

/// Reasoning steps rendered as "Step 1: ..." lines for prompts.
std::string format_history(const std::vector<ReasoningStep>& steps);

}  // namespace qmtot
