#include "qmtot/promptkit.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

namespace qmtot {

namespace {

struct BuiltinTemplate {
  const char* name;
  const char* contents;
};

constexpr BuiltinTemplate kBuiltinTemplates[] = {
#include "qmtot/builtin_templates.inc"
};

const std::set<std::string> kKnownPlaceholders = {
    "stem",        "options",     "history", "chain",   "candidate_a",
    "candidate_b", "chain_a",     "chain_b", "answer",
};

bool is_ident_char(char ch) {
  return std::isalnum(static_cast<unsigned char>(ch)) || ch == '_';
}

// Letters glued to these characters are part of a word, not a standalone label.
bool is_word_char(char ch) {
  return std::isalnum(static_cast<unsigned char>(ch)) || ch == '_' || ch == '-';
}

bool is_blank(std::string_view s) {
  return std::all_of(s.begin(), s.end(), [](unsigned char ch) { return std::isspace(ch); });
}

std::string lowercase(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char ch) { return static_cast<char>(std::tolower(ch)); });
  return out;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

bool contains(const std::vector<OptionLabel>& valid, char ch) {
  return std::any_of(valid.begin(), valid.end(),
                     [ch](const OptionLabel& l) { return l.letter() == ch; });
}

bool standalone_at(std::string_view text, std::size_t i) {
  const bool left = i == 0 || !is_word_char(text[i - 1]);
  const bool right = i + 1 >= text.size() || !is_word_char(text[i + 1]);
  return left && right;
}

// Finds `word` in `lower` at or after `from`, not embedded in a longer word.
std::size_t find_word(const std::string& lower, std::string_view word, std::size_t from) {
  while (true) {
    auto pos = lower.find(word, from);
    if (pos == std::string::npos) return pos;
    const bool left = pos == 0 || !std::isalpha(static_cast<unsigned char>(lower[pos - 1]));
    const std::size_t end = pos + word.size();
    const bool right = end >= lower.size() || !std::isalpha(static_cast<unsigned char>(lower[end]));
    if (left && right) return pos;
    from = pos + 1;
  }
}

std::size_t skip_chars(std::string_view s, std::size_t i, std::string_view chars) {
  while (i < s.size() && chars.find(s[i]) != std::string_view::npos) ++i;
  return i;
}

std::size_t skip_keyword(const std::string& lower, std::size_t i, std::string_view word) {
  if (lower.compare(i, word.size(), word) == 0) {
    const std::size_t end = i + word.size();
    if (end >= lower.size() || !std::isalpha(static_cast<unsigned char>(lower[end]))) return end;
  }
  return i;
}

std::optional<OptionLabel> rule_answer_phrase(std::string_view text,
                                              const std::vector<OptionLabel>& valid) {
  const std::string lower = lowercase(text);
  std::optional<OptionLabel> found;
  for (std::size_t pos = find_word(lower, "answer", 0); pos != std::string::npos;
       pos = find_word(lower, "answer", pos + 1)) {
    std::size_t i = skip_chars(text, pos + 6, " \t");
    i = skip_keyword(lower, i, "is");
    i = skip_chars(text, i, " \t:=-");
    i = skip_chars(text, i, " \t*([\"'`");
    std::size_t after_option = skip_keyword(lower, i, "option");
    if (after_option != i) i = skip_chars(text, after_option, " \t*([\"'`");
    if (i >= text.size()) continue;
    const char ch = text[i];
    if (ch < 'A' || ch > 'Z' || !contains(valid, ch)) continue;
    if (i + 1 < text.size() && is_word_char(text[i + 1])) continue;
    found = OptionLabel(ch);
  }
  return found;
}

std::optional<OptionLabel> rule_final_line(std::string_view text,
                                           const std::vector<OptionLabel>& valid) {
  std::string_view rest = text;
  std::string_view last;
  while (!rest.empty()) {
    const auto nl = rest.find('\n');
    std::string_view line = rest.substr(0, nl);
    if (!is_blank(line)) last = line;
    if (nl == std::string_view::npos) break;
    rest.remove_prefix(nl + 1);
  }
  constexpr std::string_view kWrap = " \t\r*()[].:,;!?\"'`";
  while (!last.empty() && kWrap.find(last.front()) != std::string_view::npos) last.remove_prefix(1);
  while (!last.empty() && kWrap.find(last.back()) != std::string_view::npos) last.remove_suffix(1);
  if (last.size() == 1 && last[0] >= 'A' && last[0] <= 'Z' && contains(valid, last[0])) {
    return OptionLabel(last[0]);
  }
  return std::nullopt;
}

std::optional<OptionLabel> rule_last_standalone(std::string_view text,
                                                const std::vector<OptionLabel>& valid) {
  for (std::size_t i = text.size(); i-- > 0;) {
    const char ch = text[i];
    if (ch >= 'A' && ch <= 'Z' && contains(valid, ch) && standalone_at(text, i)) {
      return OptionLabel(ch);
    }
  }
  return std::nullopt;
}

}  // namespace

std::string_view to_string(TemplateName n) {
  switch (n) {
    case TemplateName::decompose:
      return "decompose";
    case TemplateName::extend:
      return "extend";
    case TemplateName::validate:
      return "validate";
    case TemplateName::readout:
      return "readout";
    case TemplateName::score_reasoning:
      return "score_reasoning";
    case TemplateName::score_correctness:
      return "score_correctness";
    case TemplateName::judge:
      return "judge";
    case TemplateName::reflect:
      return "reflect";
    case TemplateName::cot:
      return "cot";
  }
  return "cot";
}

std::optional<TemplateName> template_name_from_string(std::string_view s) {
  for (TemplateName n : kAllTemplates) {
    if (to_string(n) == s) return n;
  }
  return std::nullopt;
}

const std::set<std::string>& required_placeholders(TemplateName n) {
  static const std::set<std::string> question{"stem", "options"};
  static const std::set<std::string> with_history{"stem", "options", "history"};
  static const std::set<std::string> with_chain{"stem", "options", "chain"};
  static const std::set<std::string> judge{"stem",        "options", "candidate_a",
                                           "candidate_b", "chain_a", "chain_b"};
  static const std::set<std::string> reflect{"stem", "options", "chain", "answer"};
  switch (n) {
    case TemplateName::decompose:
    case TemplateName::cot:
      return question;
    case TemplateName::extend:
    case TemplateName::validate:
    case TemplateName::readout:
      return with_history;
    case TemplateName::score_reasoning:
    case TemplateName::score_correctness:
      return with_chain;
    case TemplateName::judge:
      return judge;
    case TemplateName::reflect:
      return reflect;
  }
  return question;
}

PromptTemplate parse_template(TemplateName name, std::string_view contents) {
  std::string_view system;
  std::string_view user;
  bool found = false;
  std::size_t line_start = 0;
  while (line_start <= contents.size()) {
    auto nl = contents.find('\n', line_start);
    const std::size_t line_end = nl == std::string_view::npos ? contents.size() : nl;
    std::string_view line = contents.substr(line_start, line_end - line_start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line == "---") {
      system = contents.substr(0, line_start);
      user = nl == std::string_view::npos ? std::string_view() : contents.substr(nl + 1);
      found = true;
      break;
    }
    if (nl == std::string_view::npos) break;
    line_start = nl + 1;
  }
  if (!found) {
    throw TemplateError("template '" + std::string(to_string(name)) +
                        "' has no '---' line separating system and user sections");
  }
  PromptTemplate t{name, std::string(trim(system)), std::string(trim(user))};
  if (t.system.empty() || t.user.empty()) {
    throw TemplateError("template '" + std::string(to_string(name)) + "' has an empty section");
  }
  for (const auto& slot : required_placeholders(name)) {
    const std::string token = "{" + slot + "}";
    if (t.user.find(token) == std::string::npos && t.system.find(token) == std::string::npos) {
      throw TemplateError("template '" + std::string(to_string(name)) + "' lacks placeholder " +
                          token);
    }
  }
  return t;
}

namespace {

std::string substitute(std::string_view text, const Bindings& bindings) {
  std::string out;
  out.reserve(text.size());
  std::size_t i = 0;
  while (i < text.size()) {
    if (text[i] == '{') {
      std::size_t j = i + 1;
      while (j < text.size() && is_ident_char(text[j])) ++j;
      if (j < text.size() && text[j] == '}' && j > i + 1) {
        const std::string name(text.substr(i + 1, j - i - 1));
        if (kKnownPlaceholders.contains(name)) {
          auto it = bindings.find(name);
          if (it == bindings.end()) throw MissingBinding(name);
          out += it->second;
          i = j + 1;
          continue;
        }
      }
    }
    out += text[i++];
  }
  return out;
}

}  // namespace

RenderedPrompt render(const PromptTemplate& t, const Bindings& bindings) {
  for (const auto& name : required_placeholders(t.name)) {
    if (!bindings.contains(name)) throw MissingBinding(name);
  }
  RenderedPrompt out{substitute(t.system, bindings), substitute(t.user, bindings)};
  if (is_blank(out.system) || is_blank(out.user)) {
    throw TemplateError("template '" + std::string(to_string(t.name)) + "' rendered empty");
  }
  return out;
}

TemplateSet TemplateSet::builtin() {
  TemplateSet set;
  for (const auto& entry : kBuiltinTemplates) {
    auto name = template_name_from_string(entry.name);
    if (!name) throw TemplateError(std::string("unknown builtin template ") + entry.name);
    set.templates_[*name] = parse_template(*name, entry.contents);
  }
  for (TemplateName n : kAllTemplates) {
    if (!set.templates_.contains(n)) {
      throw TemplateError("builtin template missing: " + std::string(to_string(n)));
    }
  }
  return set;
}

TemplateSet TemplateSet::with_overrides(const std::filesystem::path& dir) {
  TemplateSet set = builtin();
  if (!std::filesystem::is_directory(dir)) {
    throw TemplateError("template directory not found: " + dir.string());
  }
  for (TemplateName n : kAllTemplates) {
    const auto file = dir / (std::string(to_string(n)) + ".txt");
    if (!std::filesystem::exists(file)) continue;
    std::ifstream in(file, std::ios::binary);
    std::stringstream buf;
    buf << in.rdbuf();
    set.templates_[n] = parse_template(n, buf.str());
  }
  return set;
}

const PromptTemplate& TemplateSet::get(TemplateName n) const { return templates_.at(n); }

std::optional<OptionLabel> extract_answer(std::string_view text,
                                          const std::vector<OptionLabel>& valid) {
  if (valid.empty()) throw RangeError("extract_answer needs at least one valid label");
  if (auto a = rule_answer_phrase(text, valid)) return a;
  if (auto a = rule_final_line(text, valid)) return a;
  return rule_last_standalone(text, valid);
}

Verdict extract_verdict(std::string_view text) {
  if (is_blank(text)) return Verdict::dead_end;
  const std::string lower = lowercase(text);
  for (std::size_t pos = find_word(lower, "verdict", 0); pos != std::string::npos;
       pos = find_word(lower, "verdict", pos + 1)) {
    std::size_t i = skip_chars(lower, pos + 7, " \t*");
    if (i >= lower.size() || (lower[i] != ':' && lower[i] != '=')) continue;
    i = skip_chars(lower, i + 1, " \t*\"'`");
    std::string word;
    while (i < lower.size() && (std::isalpha(static_cast<unsigned char>(lower[i])) ||
                                lower[i] == '_' || lower[i] == '-' || lower[i] == ' ')) {
      word += lower[i++];
      if (word == "solved" || word == "promising") break;
    }
    word = std::string(trim(word));
    if (word == "solved") return Verdict::solved;
    if (word == "promising") return Verdict::promising;
    if (word.rfind("dead_end", 0) == 0 || word.rfind("dead-end", 0) == 0 ||
        word.rfind("dead end", 0) == 0 || word.rfind("deadend", 0) == 0) {
      return Verdict::dead_end;
    }
  }
  return Verdict::promising;
}

double extract_score(std::string_view text) {
  const std::string lower = lowercase(text);
  for (std::size_t pos = find_word(lower, "score", 0); pos != std::string::npos;
       pos = find_word(lower, "score", pos + 1)) {
    std::size_t i = skip_chars(lower, pos + 5, " \t*");
    if (i >= lower.size() || lower[i] != ':') continue;
    i = skip_chars(lower, i + 1, " \t*\"'`");
    bool negative = false;
    if (i < lower.size() && (lower[i] == '-' || lower[i] == '+')) {
      negative = lower[i] == '-';
      ++i;
    }
    if (i >= lower.size() || !std::isdigit(static_cast<unsigned char>(lower[i]))) continue;
    long long value = 0;
    while (i < lower.size() && std::isdigit(static_cast<unsigned char>(lower[i]))) {
      value = std::min<long long>(value * 10 + (lower[i] - '0'), 1000000);
      ++i;
    }
    if (negative) value = -value;
    value = std::clamp<long long>(value, 0, 10);
    return static_cast<double>(value) / 10.0;
  }
  throw ScoreParseError("no integer follows a SCORE: token in: " +
                        std::string(text.substr(0, 120)));
}

std::string format_history(const std::vector<ReasoningStep>& steps) {
  std::string out;
  for (const auto& s : steps) {
    if (!out.empty()) out += '\n';
    out += "Step " + std::to_string(s.index + 1) + ": " + std::string(trim(s.text));
  }
  return out;
}

}  // namespace qmtot
