#include "qmtot/pipeline.hpp"

#include <chrono>
#include <ctime>

#include "qmtot/engine.hpp"
#include "qmtot/evaluator.hpp"
#include "qmtot/promptkit.hpp"

namespace qmtot {

namespace {

// Index of the highest-fs chain answering `option`; earliest index on ties.
int best_chain_for(const std::vector<ChainRecord>& chains, OptionLabel option) {
  int best = -1;
  for (int i = 0; i < static_cast<int>(chains.size()); ++i) {
    const auto& c = chains[i];
    if (!c.answer || *c.answer != option || !c.scores) continue;
    if (best < 0 || c.scores->fs > chains[best].scores->fs) best = i;
  }
  return best;
}

void run_qmtot(const Question& q, CallSession& session, const Services& s, RunRecord& record) {
  TreeRun tree = run_tree(q, session);
  record.stats = tree.stats;
  record.chains = std::move(tree.chains);

  const EvaluatorConfig eval{s.config.alpha, s.config.retry_on_parse_failure};
  for (auto& chain : record.chains) {
    if (!chain.answer) continue;
    try {
      chain.scores = score_chain(q, chain, eval, session);
    } catch (const ScoreParseError& e) {
      log_warning("question " + q.id + ": chain left unscored: " + e.what());
    }
  }

  const auto aggs = aggregate(record.chains);
  JudgeContext ctx;
  if (aggs.empty()) {
    record.fallback_chains = run_cot(q, s.config.cot_samples, session);
    record.vote = majority_vote(record.fallback_chains);
    ctx.cotsc_vote = record.vote;
  }
  ctx.judge = [&](OptionLabel avg_side, OptionLabel max_side) {
    const int a = best_chain_for(record.chains, avg_side);
    const int b = best_chain_for(record.chains, max_side);
    record.judge = JudgeTranscript{a, b, std::string(), true};
    JudgeOutcome outcome = judge(q, JudgeCandidate{avg_side, &record.chains.at(a)},
                                 JudgeCandidate{max_side, &record.chains.at(b)}, session);
    record.judge->text = outcome.text;
    record.judge->fallback = outcome.fallback;
    return outcome;
  };
  record.selection = decide(aggs, ctx);
  record.final_answer = record.selection->chosen;
}

}  // namespace

std::string timestamp_now(const Services& s) {
  if (s.fixed_timestamp) return *s.fixed_timestamp;
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

RunRecord run_question(Method method, const Question& q, const Services& s,
                       const std::string& run_id) {
  RunRecord record;
  record.run_id = run_id;
  record.method = method;
  record.question = q;
  record.config = s.config;
  record.started_at = timestamp_now(s);

  CallSession session(s.backends, s.templates, s.config, q.id);
  switch (method) {
    case Method::cot:
      record.chains = run_cot(q, s.config.cot_samples, session);
      break;
    case Method::cotsc:
      record.chains = run_cot(q, s.config.cot_samples, session);
      record.vote = majority_vote(record.chains);
      record.final_answer = record.vote;
      break;
    case Method::tot: {
      TreeRun tree = run_tree(q, session);
      record.stats = tree.stats;
      record.chains = std::move(tree.chains);
      record.final_answer = majority_vote(record.chains);
      break;
    }
    case Method::qmtot:
      run_qmtot(q, session, s, record);
      break;
  }
  record.usage = session.totals();
  record.finished_at = timestamp_now(s);
  return record;
}

ManifestEntry classify_question(const Question& q, const Services& s) {
  CallSession session(s.backends, s.templates, s.config, q.id);
  const double acc = measure_accuracy(q, s.config.cot_samples, session);
  return ManifestEntry{q.id, classify(acc, s.difficulty.k1, omega_for(q, s.difficulty),
                                      s.config.cot_samples)};
}

std::vector<LongCoT> reflect_record(const RunRecord& record, const Services& s) {
  CallSession session(s.backends, s.templates, s.config, record.question.id);
  std::vector<LongCoT> out;
  for (int i = 0; i < static_cast<int>(record.chains.size()); ++i) {
    const auto& chain = record.chains[i];
    if (!chain.correct) continue;
    try {
      out.push_back(reflect(record.question, chain, i, session));
    } catch (const AnswerDriftError& e) {
      log_warning(std::string("reflection skipped: ") + e.what());
    }
  }
  return out;
}

BatchResult run_batch(Method method, const std::vector<Question>& questions, const Services& s,
                      RunStore& store, const std::string& run_id, int workers) {
  if (const auto dropped = store.repair_tail(run_id); dropped > 0) {
    log_warning("run " + run_id + ": dropped " + std::to_string(dropped) +
                " bytes of a partially written record");
  }
  const auto done = store.completed(run_id);
  std::vector<Question> pending;
  BatchResult result;
  for (const auto& q : questions) {
    if (done.contains(q.id)) {
      ++result.skipped;
    } else {
      pending.push_back(q);
    }
  }
  ordered_parallel<Question, RunRecord>(
      pending, workers,
      [&](const Question& q) { return run_question(method, q, s, run_id); },
      [&](RunRecord&& r) {
        store.append_record(r);
        ++result.executed;
      });
  return result;
}

}  // namespace qmtot
