#pragma once

#include <condition_variable>
#include <exception>
#include <functional>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "qmtot/difficulty.hpp"
#include "qmtot/distill.hpp"
#include "qmtot/store.hpp"

namespace qmtot {

/// Everything a pipeline stage needs to process one question.
struct Services {
  RunConfig config;
  TemplateSet templates = TemplateSet::builtin();
  RoleBackends backends;
  DifficultyConfig difficulty;
  // When set, every record timestamp uses this value (golden runs).
  std::optional<std::string> fixed_timestamp;
};

/// Current UTC time as an ISO-8601 string, or the fixed timestamp.
std::string timestamp_now(const Services& s);

/// Executes one method on one question and returns its graded record.
RunRecord run_question(Method method, const Question& q, const Services& s,
                       const std::string& run_id);

/// CoT-sampled accuracy and difficulty band for one question.
ManifestEntry classify_question(const Question& q, const Services& s);

/// Reflects every graded chain of a record. Chains whose reflection drifts
/// to another answer are skipped with a warning.
std::vector<LongCoT> reflect_record(const RunRecord& record, const Services& s);

/// Runs `work` over `items` on up to `workers` threads and hands results to
/// `commit` strictly in input order, from the calling thread. After a
/// failure no new items start; results before the failed one are still
/// committed, then the first exception is rethrown.
template <typename In, typename Out>
void ordered_parallel(const std::vector<In>& items, int workers,
                      const std::function<Out(const In&)>& work,
                      const std::function<void(Out&&)>& commit) {
  const std::size_t n = items.size();
  if (n == 0) return;
  workers = std::max(1, std::min<int>(workers, static_cast<int>(n)));
  if (workers == 1) {
    for (const auto& item : items) commit(work(item));
    return;
  }

  std::mutex mutex;
  std::condition_variable ready;
  std::vector<std::optional<Out>> slots(n);
  std::vector<bool> failed(n, false);
  std::exception_ptr error;
  std::size_t next = 0;

  auto worker = [&] {
    while (true) {
      std::size_t idx = 0;
      {
        std::lock_guard lock(mutex);
        if (next >= n || error) return;
        idx = next++;
      }
      try {
        Out out = work(items[idx]);
        std::lock_guard lock(mutex);
        slots[idx] = std::move(out);
      } catch (...) {
        std::lock_guard lock(mutex);
        if (!error) error = std::current_exception();
        failed[idx] = true;
      }
      ready.notify_all();
    }
  };

  std::vector<std::thread> threads;
  threads.reserve(workers);
  for (int i = 0; i < workers; ++i) threads.emplace_back(worker);

  std::exception_ptr commit_error;
  for (std::size_t i = 0; i < n && !commit_error; ++i) {
    std::optional<Out> out;
    {
      std::unique_lock lock(mutex);
      ready.wait(lock, [&] { return slots[i].has_value() || failed[i] || (error && i >= next); });
      if (!slots[i]) break;
      out = std::move(slots[i]);
      slots[i].reset();
    }
    try {
      commit(std::move(*out));
    } catch (...) {
      commit_error = std::current_exception();
      std::lock_guard lock(mutex);
      if (!error) error = commit_error;
    }
  }
  for (auto& t : threads) t.join();
  if (commit_error) std::rethrow_exception(commit_error);
  if (error) std::rethrow_exception(error);
}

struct BatchResult {
  int executed = 0;
  int skipped = 0;
};

/// Runs `method` over `questions`, appending one record per question to the
/// run file in input order. Questions already recorded are skipped, and a
/// partial last line from a crash is dropped first.
BatchResult run_batch(Method method, const std::vector<Question>& questions, const Services& s,
                      RunStore& store, const std::string& run_id, int workers);

}  // namespace qmtot
