#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <string_view>

#include "qmtot/backend.hpp"
#include "qmtot/domain.hpp"
#include "qmtot/promptkit.hpp"

namespace qmtot {

/// Receives diagnostics the pipeline logs instead of raising.
using LogSink = std::function<void(std::string_view)>;

/// Default sink writes to stderr. Passing an empty function silences logging.
void set_log_sink(LogSink sink);
void log_warning(std::string_view message);

/// Backend instance behind each pipeline role.
class RoleBackends {
 public:
  RoleBackends() = default;

  /// Every role served by the same backend.
  explicit RoleBackends(std::shared_ptr<Backend> all);

  void set(Role role, std::shared_ptr<Backend> backend);
  Backend& at(Role role) const;
  bool has(Role role) const { return backends_.contains(role); }

 private:
  std::map<Role, std::shared_ptr<Backend>> backends_;
};

struct CallTotals {
  std::int64_t calls = 0;
  std::int64_t prompt_tokens = 0;
  std::int64_t completion_tokens = 0;

  bool operator==(const CallTotals&) const = default;
};

/// Deterministic 64-bit mixer (splitmix64 finalizer).
std::uint64_t mix64(std::uint64_t x);

/// FNV-1a over bytes; stable across platforms.
std::uint64_t stable_hash(std::string_view bytes);

/// Issues the model calls for one question.
///
/// Each request carries the question id as scope, a per-purpose ordinal and a
/// seed derived from (run seed, question id, purpose, ordinal), so identical
/// pipeline stages issue identical requests across commands and reruns.
/// Not thread-safe; one session belongs to one coordinating task.
class CallSession {
 public:
  CallSession(const RoleBackends& backends, const TemplateSet& templates, const RunConfig& cfg,
              std::string scope);

  /// Renders `name` with `bindings`, appends `suffix` to the user text, and sends it.
  ChatResponse call(Role role, Purpose purpose, TemplateName name, const Bindings& bindings,
                    double temperature, std::string_view suffix = {});

  const RunConfig& config() const { return cfg_; }
  const TemplateSet& templates() const { return templates_; }
  const std::string& scope() const { return scope_; }
  const CallTotals& totals() const { return totals_; }

 private:
  const RoleBackends& backends_;
  const TemplateSet& templates_;
  const RunConfig& cfg_;
  std::string scope_;
  std::map<Purpose, int> ordinals_;
  CallTotals totals_;
};

/// Bindings shared by every template: the stem and the formatted options.
Bindings question_bindings(const Question& q);

}  // namespace qmtot
