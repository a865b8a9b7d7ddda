#include "qmtot/domain.hpp"

#include <algorithm>
#include <cctype>

namespace qmtot {

namespace {

bool is_blank(std::string_view s) {
  return std::all_of(s.begin(), s.end(), [](unsigned char ch) { return std::isspace(ch); });
}

template <typename T>
T require(const Json& j, const char* key) {
  if (!j.is_object() || !j.contains(key)) {
    throw SchemaError(std::string("missing field '") + key + "'");
  }
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("field '") + key + "': " + e.what());
  }
}

const Json* optional_field(const Json& j, const char* key) {
  if (!j.is_object()) throw SchemaError("expected an object");
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return nullptr;
  return &*it;
}

}  // namespace

OptionLabel::OptionLabel(char letter) : letter_(letter) {
  if (letter < 'A' || letter > 'Z') {
    throw RangeError(std::string("option label must be A-Z, got '") + letter + "'");
  }
}

std::optional<OptionLabel> OptionLabel::parse(std::string_view text) {
  if (text.size() != 1 || text[0] < 'A' || text[0] > 'Z') return std::nullopt;
  return OptionLabel(text[0]);
}

std::string_view to_string(Verdict v) {
  switch (v) {
    case Verdict::solved:
      return "solved";
    case Verdict::promising:
      return "promising";
    case Verdict::dead_end:
      return "dead_end";
  }
  return "promising";
}

std::optional<Verdict> verdict_from_string(std::string_view s) {
  if (s == "solved") return Verdict::solved;
  if (s == "promising") return Verdict::promising;
  if (s == "dead_end") return Verdict::dead_end;
  return std::nullopt;
}

std::vector<OptionLabel> Question::labels() const {
  std::vector<OptionLabel> out;
  out.reserve(options.size());
  for (const auto& [label, _] : options) out.push_back(label);
  return out;
}

std::vector<std::string> validate_question(const Question& q) {
  std::vector<std::string> violations;
  if (q.id.empty()) violations.emplace_back("id is empty");
  if (is_blank(q.stem)) violations.emplace_back("stem is empty");
  if (q.options.size() < 2 || q.options.size() > 26) {
    violations.emplace_back("options count must be between 2 and 26");
  }
  int expected = 0;
  for (const auto& [label, text] : q.options) {
    if (label.offset() != expected) {
      violations.emplace_back("options not consecutive from A");
      break;
    }
    ++expected;
  }
  for (const auto& [label, text] : q.options) {
    if (is_blank(text)) violations.push_back("option " + label.str() + " text is empty");
  }
  if (q.gold && !q.options.contains(*q.gold)) violations.emplace_back("gold not an option");
  return violations;
}

void grade_chain(ChainRecord& chain, const std::optional<OptionLabel>& gold) {
  if (chain.answer && gold) {
    chain.correct = *chain.answer == *gold;
  } else {
    chain.correct.reset();
  }
}

std::vector<std::string> validate_chain(const ChainRecord& chain) {
  std::vector<std::string> violations;
  for (std::size_t i = 0; i < chain.steps.size(); ++i) {
    const auto& step = chain.steps[i];
    if (step.index != static_cast<int>(i)) {
      violations.push_back("step " + std::to_string(i) + " has index " + std::to_string(step.index));
    }
    if (is_blank(step.text)) violations.push_back("step " + std::to_string(i) + " text is empty");
  }
  const bool solved = !chain.steps.empty() && chain.steps.back().verdict == Verdict::solved;
  if (chain.answer && !solved) violations.emplace_back("answer set on an unsolved chain");
  if (chain.correct && !chain.answer) violations.emplace_back("correct set without an answer");
  if (chain.scores) {
    const auto& s = *chain.scores;
    if (s.r < 0.0 || s.r > 1.0) violations.emplace_back("scores.r outside [0,1]");
    if (s.c < 0.0 || s.c > 1.0) violations.emplace_back("scores.c outside [0,1]");
  }
  return violations;
}

std::string format_options(const Question& q) {
  std::string out;
  for (const auto& [label, text] : q.options) {
    if (!out.empty()) out += '\n';
    out += label.str();
    out += ". ";
    out += text;
  }
  return out;
}

std::string_view to_string(BackendKind k) {
  switch (k) {
    case BackendKind::openai_compatible:
      return "openai_compatible";
    case BackendKind::ollama:
      return "ollama";
    case BackendKind::scripted:
      return "scripted";
  }
  return "scripted";
}

std::optional<BackendKind> backend_kind_from_string(std::string_view s) {
  if (s == "openai_compatible") return BackendKind::openai_compatible;
  if (s == "ollama") return BackendKind::ollama;
  if (s == "scripted") return BackendKind::scripted;
  return std::nullopt;
}

std::vector<std::string> validate_backend_ref(const BackendRef& ref) {
  std::vector<std::string> violations;
  if (ref.kind == BackendKind::scripted) {
    if (ref.fixture.empty()) violations.emplace_back("fixture is required for scripted backends");
    return violations;
  }
  const auto& url = ref.base_url;
  const bool http = url.rfind("http://", 0) == 0;
  const bool https = url.rfind("https://", 0) == 0;
  const std::size_t host_start = http ? 7 : (https ? 8 : 0);
  if ((!http && !https) || url.size() <= host_start || url[host_start] == '/' ||
      url[host_start] == ':') {
    violations.push_back("base_url '" + url + "' is not a well-formed http(s) URL");
  }
  if (ref.model.empty()) violations.emplace_back("model is empty");
  return violations;
}

std::string_view to_string(Role r) {
  switch (r) {
    case Role::generator:
      return "generator";
    case Role::validator:
      return "validator";
    case Role::scorer:
      return "scorer";
    case Role::judge:
      return "judge";
    case Role::reflector:
      return "reflector";
  }
  return "generator";
}

std::optional<Role> role_from_string(std::string_view s) {
  for (Role r : kAllRoles) {
    if (to_string(r) == s) return r;
  }
  return std::nullopt;
}

std::vector<std::string> validate_run_config(const RunConfig& cfg, bool require_roles) {
  std::vector<std::string> v;
  if (!(cfg.alpha >= 0.0 && cfg.alpha <= 1.0)) v.emplace_back("alpha: must be within [0,1]");
  if (cfg.max_depth < 1) v.emplace_back("max_depth: must be >= 1");
  if (cfg.branching < 1) v.emplace_back("branching: must be >= 1");
  if (cfg.max_chains < 1) v.emplace_back("max_chains: must be >= 1");
  if (cfg.node_budget < cfg.max_depth) v.emplace_back("node_budget: must be >= max_depth");
  if (cfg.cot_samples < 1) v.emplace_back("cot_samples: must be >= 1");
  if (cfg.generation_temperature < 0.0) v.emplace_back("generation_temperature: must be >= 0");
  if (cfg.scoring_temperature < 0.0) v.emplace_back("scoring_temperature: must be >= 0");
  if (cfg.max_tokens < 1) v.emplace_back("max_tokens: must be >= 1");
  for (Role role : kAllRoles) {
    if (!require_roles) break;
    auto it = cfg.roles.find(role);
    if (it == cfg.roles.end()) {
      v.push_back("roles." + std::string(to_string(role)) + ": no backend configured");
      continue;
    }
    for (const auto& msg : validate_backend_ref(it->second)) {
      v.push_back("roles." + std::string(to_string(role)) + ": " + msg);
    }
  }
  return v;
}

Json to_json(const OptionLabel& l) { return l.str(); }

Json to_json(const ReasoningStep& s) {
  return Json{{"index", s.index}, {"text", s.text}, {"verdict", to_string(s.verdict)}};
}

Json to_json(const ChainScores& s) {
  return Json{{"r", s.r},
              {"c", s.c},
              {"fs", s.fs},
              {"reasoning_text", s.reasoning_text},
              {"correctness_text", s.correctness_text}};
}

Json to_json(const ChainRecord& c) {
  Json steps = Json::array();
  for (const auto& s : c.steps) steps.push_back(to_json(s));
  return Json{{"question_id", c.question_id},
              {"steps", std::move(steps)},
              {"answer", c.answer ? to_json(*c.answer) : Json()},
              {"scores", c.scores ? to_json(*c.scores) : Json()},
              {"correct", c.correct ? Json(*c.correct) : Json()}};
}

Json to_json(const Question& q) {
  Json options = Json::object();
  for (const auto& [label, text] : q.options) options[label.str()] = text;
  return Json{{"id", q.id},
              {"stem", q.stem},
              {"options", std::move(options)},
              {"gold", q.gold ? to_json(*q.gold) : Json()}};
}

Json to_json(const BackendRef& b) {
  Json j{{"kind", to_string(b.kind)}, {"base_url", b.base_url}, {"model", b.model}};
  j["auth_env"] = b.auth_env ? Json(*b.auth_env) : Json();
  j["fixture"] = b.fixture;
  return j;
}

Json to_json(const RunConfig& c) {
  Json roles = Json::object();
  for (const auto& [role, ref] : c.roles) roles[std::string(to_string(role))] = to_json(ref);
  return Json{{"alpha", c.alpha},
              {"max_depth", c.max_depth},
              {"branching", c.branching},
              {"max_chains", c.max_chains},
              {"node_budget", c.node_budget},
              {"cot_samples", c.cot_samples},
              {"seed", c.seed},
              {"generation_temperature", c.generation_temperature},
              {"scoring_temperature", c.scoring_temperature},
              {"max_tokens", c.max_tokens},
              {"retry_on_parse_failure", c.retry_on_parse_failure},
              {"roles", std::move(roles)}};
}

OptionLabel option_label_from_json(const Json& j) {
  if (!j.is_string()) throw SchemaError("option label must be a string");
  auto label = OptionLabel::parse(j.get<std::string>());
  if (!label) throw SchemaError("invalid option label '" + j.get<std::string>() + "'");
  return *label;
}

ReasoningStep reasoning_step_from_json(const Json& j) {
  ReasoningStep s;
  s.index = require<int>(j, "index");
  s.text = require<std::string>(j, "text");
  auto verdict = verdict_from_string(require<std::string>(j, "verdict"));
  if (!verdict) throw SchemaError("unknown verdict '" + j.at("verdict").get<std::string>() + "'");
  s.verdict = *verdict;
  return s;
}

ChainScores chain_scores_from_json(const Json& j) {
  ChainScores s;
  s.r = require<double>(j, "r");
  s.c = require<double>(j, "c");
  s.fs = require<double>(j, "fs");
  if (const auto* t = optional_field(j, "reasoning_text")) s.reasoning_text = t->get<std::string>();
  if (const auto* t = optional_field(j, "correctness_text")) {
    s.correctness_text = t->get<std::string>();
  }
  return s;
}

ChainRecord chain_record_from_json(const Json& j) {
  ChainRecord c;
  c.question_id = require<std::string>(j, "question_id");
  if (!j.contains("steps") || !j.at("steps").is_array()) throw SchemaError("steps must be an array");
  for (const auto& s : j.at("steps")) c.steps.push_back(reasoning_step_from_json(s));
  if (const auto* a = optional_field(j, "answer")) c.answer = option_label_from_json(*a);
  if (const auto* s = optional_field(j, "scores")) c.scores = chain_scores_from_json(*s);
  if (const auto* k = optional_field(j, "correct")) {
    if (!k->is_boolean()) throw SchemaError("correct must be a boolean");
    c.correct = k->get<bool>();
  }
  return c;
}

Question question_from_json(const Json& j) {
  Question q;
  q.id = require<std::string>(j, "id");
  q.stem = require<std::string>(j, "stem");
  if (!j.contains("options") || !j.at("options").is_object()) {
    throw SchemaError("options must be an object");
  }
  for (const auto& [key, value] : j.at("options").items()) {
    auto label = OptionLabel::parse(key);
    if (!label) throw SchemaError("invalid option label '" + key + "'");
    if (!value.is_string()) throw SchemaError("option " + key + " must be a string");
    q.options.emplace(*label, value.get<std::string>());
  }
  if (const auto* g = optional_field(j, "gold")) q.gold = option_label_from_json(*g);
  return q;
}

BackendRef backend_ref_from_json(const Json& j) {
  BackendRef b;
  auto kind = backend_kind_from_string(require<std::string>(j, "kind"));
  if (!kind) throw SchemaError("unknown backend kind '" + j.at("kind").get<std::string>() + "'");
  b.kind = *kind;
  if (const auto* v = optional_field(j, "base_url")) b.base_url = v->get<std::string>();
  if (const auto* v = optional_field(j, "model")) b.model = v->get<std::string>();
  if (const auto* v = optional_field(j, "auth_env")) b.auth_env = v->get<std::string>();
  if (const auto* v = optional_field(j, "fixture")) b.fixture = v->get<std::string>();
  return b;
}

RunConfig run_config_from_json(const Json& j) {
  RunConfig c;
  auto take = [&j](const char* key, auto& field) {
    if (const auto* v = optional_field(j, key)) {
      try {
        field = v->get<std::decay_t<decltype(field)>>();
      } catch (const nlohmann::json::exception& e) {
        throw SchemaError(std::string(key) + ": " + e.what());
      }
    }
  };
  take("alpha", c.alpha);
  take("max_depth", c.max_depth);
  take("branching", c.branching);
  take("max_chains", c.max_chains);
  take("node_budget", c.node_budget);
  take("cot_samples", c.cot_samples);
  take("seed", c.seed);
  take("generation_temperature", c.generation_temperature);
  take("scoring_temperature", c.scoring_temperature);
  take("max_tokens", c.max_tokens);
  take("retry_on_parse_failure", c.retry_on_parse_failure);
  if (const auto* roles = optional_field(j, "roles")) {
    if (!roles->is_object()) throw SchemaError("roles must be an object");
    for (const auto& [name, ref] : roles->items()) {
      auto role = role_from_string(name);
      if (!role) throw SchemaError("roles: unknown role '" + name + "'");
      c.roles[*role] = backend_ref_from_json(ref);
    }
  }
  return c;
}

}  // namespace qmtot
