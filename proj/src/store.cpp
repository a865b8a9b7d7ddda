#include "qmtot/store.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include "qmtot/random.hpp"

namespace qmtot {

namespace {

std::string join(const std::vector<std::string>& parts, const char* sep) {
  std::string out;
  for (const auto& p : parts) {
    if (!out.empty()) out += sep;
    out += p;
  }
  return out;
}

std::optional<OptionLabel> optional_label(const Json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return option_label_from_json(j.at(key));
}

Json label_or_null(const std::optional<OptionLabel>& l) { return l ? Json(l->str()) : Json(); }

Json chains_to_json(const std::vector<ChainRecord>& chains) {
  Json out = Json::array();
  for (const auto& c : chains) out.push_back(to_json(c));
  return out;
}

std::vector<ChainRecord> chains_from_json(const Json& j) {
  std::vector<ChainRecord> out;
  if (!j.is_array()) throw SchemaError("chains must be an array");
  for (const auto& c : j) out.push_back(chain_record_from_json(c));
  return out;
}

std::map<OptionLabel, std::string> parse_medqa_options(const Json& options, int line) {
  std::map<OptionLabel, std::string> out;
  auto add = [&](const std::string& key, const Json& value) {
    auto label = OptionLabel::parse(key);
    if (!label) throw ParseError(line, "invalid option key '" + key + "'");
    if (!value.is_string()) throw ParseError(line, "option " + key + " is not a string");
    if (!out.emplace(*label, value.get<std::string>()).second) {
      throw ParseError(line, "duplicate option key '" + key + "'");
    }
  };
  if (options.is_object()) {
    for (const auto& [key, value] : options.items()) add(key, value);
  } else if (options.is_array()) {
    for (const auto& item : options) {
      if (!item.is_object() || !item.contains("key") || !item.contains("value") ||
          !item.at("key").is_string()) {
        throw ParseError(line, "options list entries need string 'key' and 'value'");
      }
      add(item.at("key").get<std::string>(), item.at("value"));
    }
  } else {
    throw ParseError(line, "options must be an object or a list");
  }
  return out;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void add_sample(AccuracyCell& cell, double correct) {
  ++cell.questions;
  cell.correct += correct;
}

void finish_cell(AccuracyCell& cell) {
  if (cell.questions > 0) cell.accuracy = cell.correct / cell.questions;
}

Json cell_to_json(const AccuracyCell& c) {
  return Json{{"questions", c.questions},
              {"correct", c.correct},
              {"accuracy", c.accuracy ? Json(*c.accuracy) : Json()}};
}

std::string fmt_opt(const std::optional<double>& v, int precision = 4) {
  if (!v) return "-";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.*f", precision, *v);
  return buf;
}

}  // namespace

ValidationError::ValidationError(int line, std::vector<std::string> rules)
    : Error("line " + std::to_string(line) + ": " + join(rules, "; ")),
      line_(line),
      rules_(std::move(rules)) {}

std::vector<Question> ingest_dataset(const std::filesystem::path& path, DatasetFormat format) {
  if (format != DatasetFormat::medqa_jsonl) throw Error("unsupported dataset format");
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open dataset " + path.string());

  std::vector<Question> questions;
  std::set<std::string> seen;
  std::string raw;
  int line = 0;
  while (std::getline(in, raw)) {
    ++line;
    if (std::all_of(raw.begin(), raw.end(), [](unsigned char ch) { return std::isspace(ch); })) {
      continue;
    }
    Json j;
    try {
      j = Json::parse(raw);
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError(line, std::string("invalid JSON: ") + e.what());
    }
    if (!j.is_object()) throw ParseError(line, "expected a JSON object");
    if (!j.contains("question") || !j.at("question").is_string()) {
      throw ParseError(line, "missing string field 'question'");
    }
    if (!j.contains("options")) throw ParseError(line, "missing field 'options'");

    Question q;
    if (j.contains("id") && j.at("id").is_string()) {
      q.id = j.at("id").get<std::string>();
    } else if (j.contains("id") && j.at("id").is_number_integer()) {
      q.id = std::to_string(j.at("id").get<long long>());
    } else {
      char buf[16];
      std::snprintf(buf, sizeof buf, "q%05d", line);
      q.id = buf;
    }
    q.stem = j.at("question").get<std::string>();
    q.options = parse_medqa_options(j.at("options"), line);

    if (j.contains("answer_idx") && !j.at("answer_idx").is_null()) {
      if (!j.at("answer_idx").is_string()) throw ParseError(line, "answer_idx must be a string");
      const auto idx = j.at("answer_idx").get<std::string>();
      q.gold = OptionLabel::parse(idx);
      if (!q.gold) throw ValidationError(line, {"answer_idx '" + idx + "' is not an option label"});
    } else if (j.contains("answer") && j.at("answer").is_string()) {
      const auto answer = j.at("answer").get<std::string>();
      if (auto label = OptionLabel::parse(answer); label && q.options.contains(*label)) {
        q.gold = label;
      } else {
        for (const auto& [label, text] : q.options) {
          if (text == answer) q.gold = label;
        }
        if (!q.gold) throw ValidationError(line, {"answer does not match any option"});
      }
    }

    auto violations = validate_question(q);
    if (!seen.insert(q.id).second) violations.push_back("duplicate id '" + q.id + "'");
    if (!violations.empty()) throw ValidationError(line, std::move(violations));
    questions.push_back(std::move(q));
  }
  return questions;
}

void save_questions(const std::filesystem::path& path, const std::vector<Question>& questions) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  for (const auto& q : questions) out << to_json(q).dump() << '\n';
  if (!out) throw Error("failed writing " + path.string());
}

std::vector<Question> load_questions(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open dataset " + path.string());
  std::vector<Question> out;
  std::string raw;
  int line = 0;
  while (std::getline(in, raw)) {
    ++line;
    if (raw.empty()) continue;
    Question q;
    try {
      q = question_from_json(Json::parse(raw));
    } catch (const std::exception& e) {
      throw ParseError(line, e.what());
    }
    if (auto v = validate_question(q); !v.empty()) throw ValidationError(line, std::move(v));
    out.push_back(std::move(q));
  }
  return out;
}

std::vector<Question> subsample(const std::vector<Question>& questions, std::size_t n,
                                std::uint64_t seed) {
  if (n >= questions.size()) return questions;
  std::vector<std::size_t> idx(questions.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  SeededRng rng(seed);
  rng.shuffle(idx);
  idx.resize(n);
  std::sort(idx.begin(), idx.end());
  std::vector<Question> out;
  out.reserve(n);
  for (auto i : idx) out.push_back(questions[i]);
  return out;
}

std::string_view to_string(Method m) {
  switch (m) {
    case Method::cot:
      return "cot";
    case Method::cotsc:
      return "cotsc";
    case Method::tot:
      return "tot";
    case Method::qmtot:
      return "qmtot";
  }
  return "cot";
}

std::optional<Method> method_from_string(std::string_view s) {
  for (Method m : kAllMethods) {
    if (to_string(m) == s) return m;
  }
  return std::nullopt;
}

Json to_json(const RunRecord& r) {
  Json judge;
  if (r.judge) {
    judge = Json{{"avg_side_chain", r.judge->avg_side_chain},
                 {"max_side_chain", r.judge->max_side_chain},
                 {"text", r.judge->text},
                 {"fallback", r.judge->fallback}};
  }
  return Json{{"run_id", r.run_id},
              {"method", to_string(r.method)},
              {"question", to_json(r.question)},
              {"chains", chains_to_json(r.chains)},
              {"final_answer", label_or_null(r.final_answer)},
              {"selection", r.selection ? to_json(*r.selection) : Json()},
              {"stats", r.stats ? to_json(*r.stats) : Json()},
              {"vote", label_or_null(r.vote)},
              {"judge", std::move(judge)},
              {"fallback_chains", chains_to_json(r.fallback_chains)},
              {"usage",
               {{"calls", r.usage.calls},
                {"prompt_tokens", r.usage.prompt_tokens},
                {"completion_tokens", r.usage.completion_tokens}}},
              {"config", to_json(r.config)},
              {"started_at", r.started_at},
              {"finished_at", r.finished_at}};
}

RunRecord run_record_from_json(const Json& j) {
  RunRecord r;
  try {
    r.run_id = j.at("run_id").get<std::string>();
    auto method = method_from_string(j.at("method").get<std::string>());
    if (!method) throw SchemaError("unknown method " + j.at("method").dump());
    r.method = *method;
    r.question = question_from_json(j.at("question"));
    r.chains = chains_from_json(j.at("chains"));
    r.final_answer = optional_label(j, "final_answer");
    if (j.contains("selection") && !j.at("selection").is_null()) {
      r.selection = selection_result_from_json(j.at("selection"));
    }
    if (j.contains("stats") && !j.at("stats").is_null()) {
      r.stats = tree_run_stats_from_json(j.at("stats"));
    }
    r.vote = optional_label(j, "vote");
    if (j.contains("judge") && !j.at("judge").is_null()) {
      const auto& t = j.at("judge");
      r.judge = JudgeTranscript{t.at("avg_side_chain").get<int>(), t.at("max_side_chain").get<int>(),
                                t.at("text").get<std::string>(), t.at("fallback").get<bool>()};
    }
    if (j.contains("fallback_chains")) r.fallback_chains = chains_from_json(j.at("fallback_chains"));
    const auto& usage = j.at("usage");
    r.usage.calls = usage.at("calls").get<std::int64_t>();
    r.usage.prompt_tokens = usage.at("prompt_tokens").get<std::int64_t>();
    r.usage.completion_tokens = usage.at("completion_tokens").get<std::int64_t>();
    r.config = run_config_from_json(j.at("config"));
    r.started_at = j.at("started_at").get<std::string>();
    r.finished_at = j.at("finished_at").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("run record: ") + e.what());
  }
  return r;
}

std::vector<std::string> check_record(const RunRecord& r) {
  std::vector<std::string> v;
  if (r.method == Method::qmtot && !r.selection) v.emplace_back("qmtot record without selection");
  const auto n = static_cast<int>(r.chains.size());
  if (r.judge) {
    if (r.judge->avg_side_chain < 0 || r.judge->avg_side_chain >= n ||
        r.judge->max_side_chain < 0 || r.judge->max_side_chain >= n) {
      v.emplace_back("judge evidence refers to a chain outside the record");
    }
  }
  if (r.selection && r.selection->route == Route::judge && !r.judge) {
    v.emplace_back("judge route without a judge transcript");
  }
  for (const auto* list : {&r.chains, &r.fallback_chains}) {
    for (const auto& c : *list) {
      if (c.question_id != r.question.id) v.emplace_back("chain belongs to another question");
      for (auto& msg : validate_chain(c)) v.push_back(std::move(msg));
      const bool graded = c.answer && r.question.gold;
      if (graded != c.correct.has_value() ||
          (c.correct && *c.correct != (*c.answer == *r.question.gold))) {
        v.emplace_back("chain grading disagrees with the gold label");
      }
    }
  }
  return v;
}

RunStore::RunStore(std::filesystem::path root) : root_(std::move(root)) {
  std::filesystem::create_directories(root_ / "runs");
}

std::filesystem::path RunStore::run_path(const std::string& run_id) const {
  if (run_id.empty() || run_id.find('/') != std::string::npos || run_id.find("..") == 0) {
    throw Error("invalid run id '" + run_id + "'");
  }
  return root_ / "runs" / (run_id + ".jsonl");
}

void RunStore::append_record(const RunRecord& record) { append_record(record.run_id, record); }

void RunStore::append_record(const std::string& run_id, const RunRecord& record) {
  const auto path = run_path(run_id);
  std::ofstream out(path, std::ios::binary | std::ios::app);
  if (!out) throw Error("cannot append to " + path.string());
  out << to_json(record).dump() << '\n';
  out.flush();
  if (!out) throw Error("failed appending to " + path.string());
}

std::vector<RunRecord> load_record_file(const std::filesystem::path& path) {
  const std::string contents = read_file(path);
  std::vector<RunRecord> records;
  std::size_t start = 0;
  int line = 0;
  while (start < contents.size()) {
    ++line;
    const auto nl = contents.find('\n', start);
    const auto end = nl == std::string::npos ? contents.size() : nl;
    const std::string_view raw(contents.data() + start, end - start);
    start = end + 1;
    if (raw.empty()) continue;
    try {
      records.push_back(run_record_from_json(Json::parse(raw)));
    } catch (const std::exception& e) {
      throw CorruptRecord(path.string(), line, e.what());
    }
  }
  return records;
}

std::vector<RunRecord> RunStore::load_records(const std::string& run_id) const {
  const auto path = run_path(run_id);
  if (!std::filesystem::exists(path)) return {};
  return load_record_file(path);
}

std::size_t RunStore::repair_tail(const std::string& run_id) {
  const auto path = run_path(run_id);
  if (!std::filesystem::exists(path)) return 0;
  const std::string contents = read_file(path);
  if (contents.empty() || contents.back() == '\n') return 0;
  const auto last_nl = contents.rfind('\n');
  const std::size_t keep = last_nl == std::string::npos ? 0 : last_nl + 1;
  std::filesystem::resize_file(path, keep);
  return contents.size() - keep;
}

std::set<std::string> RunStore::completed(const std::string& run_id) const {
  std::set<std::string> ids;
  for (const auto& r : load_records(run_id)) ids.insert(r.question.id);
  return ids;
}

Report build_report(const std::vector<RunRecord>& records,
                    const std::vector<ManifestEntry>& manifest) {
  std::map<std::string, Level> levels;
  for (const auto& e : manifest) levels[e.question_id] = e.label.level;

  std::map<std::pair<Method, std::string>, const RunRecord*> latest;
  std::vector<std::pair<Method, std::string>> order;
  for (const auto& r : records) {
    if (!r.question.gold) {
      throw MissingGold("question " + r.question.id + " in run " + r.run_id + " has no gold label");
    }
    auto key = std::make_pair(r.method, r.question.id);
    if (!latest.contains(key)) order.push_back(key);
    latest[key] = &r;
  }

  Report report;
  for (Method m : kAllMethods) {
    auto& s = report.methods[m];
    for (Level l : kAllLevels) s.by_level[l];
  }

  std::map<Method, std::map<Level, std::pair<double, int>>> paths;
  std::map<Method, std::pair<double, int>> paths_overall;
  std::set<std::string> unclassified;

  for (const auto& key : order) {
    const RunRecord& r = *latest.at(key);
    auto& summary = report.methods[r.method];
    const OptionLabel gold = *r.question.gold;

    double correct = 0.0;
    if (r.method == Method::cot) {
      int hits = 0;
      for (const auto& c : r.chains) hits += (c.answer && *c.answer == gold) ? 1 : 0;
      const int denom = std::max<int>(r.config.cot_samples, static_cast<int>(r.chains.size()));
      correct = denom > 0 ? static_cast<double>(hits) / denom : 0.0;
    } else {
      correct = (r.final_answer && *r.final_answer == gold) ? 1.0 : 0.0;
    }
    add_sample(summary.overall, correct);
    summary.calls += r.usage.calls;
    summary.prompt_tokens += r.usage.prompt_tokens;
    summary.completion_tokens += r.usage.completion_tokens;

    auto level = levels.find(r.question.id);
    if (level == levels.end()) {
      unclassified.insert(r.question.id);
    } else {
      add_sample(summary.by_level[level->second], correct);
    }
    if (r.stats) {
      auto& all = paths_overall[r.method];
      all.first += r.stats->paths_per_question;
      ++all.second;
      if (level != levels.end()) {
        auto& cell = paths[r.method][level->second];
        cell.first += r.stats->paths_per_question;
        ++cell.second;
      }
    }
    if (r.method == Method::qmtot) {
      ++report.qmtot_questions;
      if (r.selection && r.selection->route == Route::judge) ++report.judge_invocations;
    }
  }

  for (auto& [method, s] : report.methods) {
    finish_cell(s.overall);
    for (auto& [level, cell] : s.by_level) {
      finish_cell(cell);
      const auto& p = paths[method][level];
      s.avg_paths[level] = p.second > 0 ? std::optional<double>(p.first / p.second) : std::nullopt;
    }
    const auto& all = paths_overall[method];
    if (all.second > 0) s.avg_paths_overall = all.first / all.second;
  }
  report.unclassified_questions = static_cast<int>(unclassified.size());
  if (report.qmtot_questions > 0) {
    report.judge_rate = static_cast<double>(report.judge_invocations) / report.qmtot_questions;
  }
  return report;
}

Json to_json(const Report& r) {
  Json methods = Json::object();
  for (const auto& [method, s] : r.methods) {
    Json by_level = Json::object();
    Json avg_paths = Json::object();
    for (const auto& [level, cell] : s.by_level) {
      by_level[std::string(to_string(level))] = cell_to_json(cell);
      const auto& p = s.avg_paths.at(level);
      avg_paths[std::string(to_string(level))] = p ? Json(*p) : Json();
    }
    Json m = cell_to_json(s.overall);
    m["by_level"] = std::move(by_level);
    m["avg_paths"] = std::move(avg_paths);
    m["avg_paths_overall"] = s.avg_paths_overall ? Json(*s.avg_paths_overall) : Json();
    m["calls"] = s.calls;
    m["prompt_tokens"] = s.prompt_tokens;
    m["completion_tokens"] = s.completion_tokens;
    methods[std::string(to_string(method))] = std::move(m);
  }
  return Json{{"methods", std::move(methods)},
              {"judge",
               {{"qmtot_questions", r.qmtot_questions},
                {"invocations", r.judge_invocations},
                {"rate", r.judge_rate ? Json(*r.judge_rate) : Json()}}},
              {"unclassified_questions", r.unclassified_questions}};
}

std::string render_report_table(const Report& r) {
  std::string out;
  char line[256];
  std::snprintf(line, sizeof line, "%-8s %9s %9s %9s %9s %9s %10s %8s\n", "method", "questions",
                "accuracy", "easy", "medium", "hard", "avg_paths", "calls");
  out += line;
  for (const auto& [method, s] : r.methods) {
    const std::string name(to_string(method));
    std::snprintf(line, sizeof line, "%-8s %9d %9s %9s %9s %9s %10s %8lld\n", name.c_str(),
                  s.overall.questions, fmt_opt(s.overall.accuracy).c_str(),
                  fmt_opt(s.by_level.at(Level::easy).accuracy).c_str(),
                  fmt_opt(s.by_level.at(Level::medium).accuracy).c_str(),
                  fmt_opt(s.by_level.at(Level::hard).accuracy).c_str(),
                  fmt_opt(s.avg_paths_overall, 2).c_str(), static_cast<long long>(s.calls));
    out += line;
  }
  std::snprintf(line, sizeof line, "judge invoked on %d of %d qmtot questions (rate %s)\n",
                r.judge_invocations, r.qmtot_questions, fmt_opt(r.judge_rate).c_str());
  out += line;
  if (r.unclassified_questions > 0) {
    std::snprintf(line, sizeof line, "%d question(s) missing from the difficulty manifest\n",
                  r.unclassified_questions);
    out += line;
  }
  return out;
}

}  // namespace qmtot
