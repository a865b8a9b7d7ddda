#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "qmtot/difficulty.hpp"
#include "qmtot/domain.hpp"
#include "qmtot/engine.hpp"
#include "qmtot/selector.hpp"
#include "qmtot/session.hpp"

namespace qmtot {

class ParseError : public Error {
 public:
  ParseError(int line, const std::string& what)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
  int line() const { return line_; }

 private:
  int line_;
};

class ValidationError : public Error {
 public:
  ValidationError(int line, std::vector<std::string> rules);
  int line() const { return line_; }
  const std::vector<std::string>& rules() const { return rules_; }

 private:
  int line_;
  std::vector<std::string> rules_;
};

class CorruptRecord : public Error {
 public:
  CorruptRecord(const std::string& file, int line, const std::string& what)
      : Error(file + ":" + std::to_string(line) + ": corrupt record: " + what), line_(line) {}
  int line() const { return line_; }

 private:
  int line_;
};

class MissingGold : public Error {
 public:
  using Error::Error;
};

enum class DatasetFormat { medqa_jsonl };

/// Reads MedQA-style JSONL: `question`, `options` (object or list of
/// {key, value}), and `answer_idx` or `answer` for the gold label. Rejects
/// the whole file on the first unparseable or invalid line.
std::vector<Question> ingest_dataset(const std::filesystem::path& path,
                                     DatasetFormat format = DatasetFormat::medqa_jsonl);

/// Question JSONL in the library's own schema.
void save_questions(const std::filesystem::path& path, const std::vector<Question>& questions);
std::vector<Question> load_questions(const std::filesystem::path& path);

/// `n` questions drawn without replacement by a seeded shuffle, in original order.
std::vector<Question> subsample(const std::vector<Question>& questions, std::size_t n,
                                std::uint64_t seed);

enum class Method { cot, cotsc, tot, qmtot };

inline constexpr Method kAllMethods[] = {Method::cot, Method::cotsc, Method::tot, Method::qmtot};

std::string_view to_string(Method m);
std::optional<Method> method_from_string(std::string_view s);

struct JudgeTranscript {
  // Indices into RunRecord::chains of the evidence shown to the judge.
  int avg_side_chain = 0;
  int max_side_chain = 0;
  std::string text;
  bool fallback = false;

  bool operator==(const JudgeTranscript&) const = default;
};

struct RunRecord {
  std::string run_id;
  Method method = Method::cot;
  Question question;
  std::vector<ChainRecord> chains;
  std::optional<OptionLabel> final_answer;
  std::optional<SelectionResult> selection;
  std::optional<TreeRunStats> stats;
  std::optional<OptionLabel> vote;
  std::optional<JudgeTranscript> judge;
  // CoT samples drawn when the tree produced nothing to select from.
  std::vector<ChainRecord> fallback_chains;
  CallTotals usage;
  RunConfig config;
  std::string started_at;
  std::string finished_at;

  bool operator==(const RunRecord&) const = default;
};

Json to_json(const RunRecord& r);
RunRecord run_record_from_json(const Json& j);

/// Violations of the record-level invariants.
std::vector<std::string> check_record(const RunRecord& r);

/// Append-only JSONL run files under `<root>/runs/`.
class RunStore {
 public:
  explicit RunStore(std::filesystem::path root);

  const std::filesystem::path& root() const { return root_; }
  std::filesystem::path run_path(const std::string& run_id) const;

  void append_record(const RunRecord& record);
  void append_record(const std::string& run_id, const RunRecord& record);

  /// Records in append order. Throws CorruptRecord on any unparseable line.
  std::vector<RunRecord> load_records(const std::string& run_id) const;

  /// Drops a trailing partial line left by a crash. Returns the bytes removed.
  std::size_t repair_tail(const std::string& run_id);

  /// Question ids already recorded for the run.
  std::set<std::string> completed(const std::string& run_id) const;

 private:
  std::filesystem::path root_;
};

std::vector<RunRecord> load_record_file(const std::filesystem::path& path);

struct AccuracyCell {
  int questions = 0;
  double correct = 0.0;
  std::optional<double> accuracy;

  bool operator==(const AccuracyCell&) const = default;
};

struct MethodSummary {
  AccuracyCell overall;
  std::map<Level, AccuracyCell> by_level;
  std::map<Level, std::optional<double>> avg_paths;
  std::optional<double> avg_paths_overall;
  std::int64_t calls = 0;
  std::int64_t prompt_tokens = 0;
  std::int64_t completion_tokens = 0;

  bool operator==(const MethodSummary&) const = default;
};

struct Report {
  std::map<Method, MethodSummary> methods;
  int unclassified_questions = 0;
  int judge_invocations = 0;
  int qmtot_questions = 0;
  std::optional<double> judge_rate;

  bool operator==(const Report&) const = default;
};

/// Accuracy per method and per difficulty band.
///
/// cot: mean over questions of per-question sample accuracy (CoT-AVG).
/// cotsc, tot: majority vote of the record's chains. qmtot: selection.
/// When several records share (method, question) the last one wins.
Report build_report(const std::vector<RunRecord>& records,
                    const std::vector<ManifestEntry>& manifest);

Json to_json(const Report& r);

/// Fixed-width text table of the report.
std::string render_report_table(const Report& r);

}  // namespace qmtot
