#include "qmtot/session.hpp"

#include <iostream>
#include <mutex>

namespace qmtot {

namespace {

std::mutex& log_mutex() {
  static std::mutex m;
  return m;
}

LogSink& log_sink() {
  static LogSink sink = [](std::string_view msg) { std::cerr << "warning: " << msg << '\n'; };
  return sink;
}

}  // namespace

void set_log_sink(LogSink sink) {
  std::lock_guard lock(log_mutex());
  log_sink() = std::move(sink);
}

void log_warning(std::string_view message) {
  std::lock_guard lock(log_mutex());
  if (log_sink()) log_sink()(message);
}

RoleBackends::RoleBackends(std::shared_ptr<Backend> all) {
  for (Role r : kAllRoles) backends_[r] = all;
}

void RoleBackends::set(Role role, std::shared_ptr<Backend> backend) {
  backends_[role] = std::move(backend);
}

Backend& RoleBackends::at(Role role) const {
  auto it = backends_.find(role);
  if (it == backends_.end() || !it->second) {
    throw Error("no backend configured for role " + std::string(to_string(role)));
  }
  return *it->second;
}

std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t stable_hash(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : bytes) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

CallSession::CallSession(const RoleBackends& backends, const TemplateSet& templates,
                         const RunConfig& cfg, std::string scope)
    : backends_(backends), templates_(templates), cfg_(cfg), scope_(std::move(scope)) {}

ChatResponse CallSession::call(Role role, Purpose purpose, TemplateName name,
                               const Bindings& bindings, double temperature,
                               std::string_view suffix) {
  const RenderedPrompt prompt = render(templates_.get(name), bindings);
  const int ordinal = ordinals_[purpose]++;

  ChatRequest req;
  req.messages = {{"system", prompt.system}, {"user", prompt.user + std::string(suffix)}};
  req.temperature = temperature;
  req.max_tokens = cfg_.max_tokens;
  req.purpose = purpose;
  req.scope = scope_;
  req.ordinal = ordinal;
  const std::uint64_t seed =
      mix64(cfg_.seed ^ mix64(stable_hash(scope_) ^
                              mix64((static_cast<std::uint64_t>(purpose) << 32) ^
                                    static_cast<std::uint64_t>(ordinal))));
  req.seed = static_cast<std::int64_t>(seed & 0x7fffffffULL);

  ChatResponse resp = backends_.at(role).complete(req);
  ++totals_.calls;
  totals_.prompt_tokens += resp.usage.prompt_tokens;
  totals_.completion_tokens += resp.usage.completion_tokens;
  return resp;
}

Bindings question_bindings(const Question& q) {
  return Bindings{{"stem", q.stem}, {"options", format_options(q)}};
}

}  // namespace qmtot
