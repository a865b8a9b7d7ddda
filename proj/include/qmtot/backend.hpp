#pragma once

#include <array>
#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <semaphore>
#include <string>
#include <tuple>
#include <vector>

#include "qmtot/domain.hpp"

namespace qmtot {

/// Network failure, timeout, or retryable HTTP status that outlived the retry cap.
class TransportError : public Error {
 public:
  using Error::Error;
};

/// The provider answered with a body that does not match its dialect.
class ProtocolError : public Error {
 public:
  using Error::Error;
};

/// HTTP 401/403. Never retried.
class AuthError : public Error {
 public:
  using Error::Error;
};

/// A scripted backend has no entry for the requested (purpose, index).
class ScriptMissError : public Error {
 public:
  using Error::Error;
};

/// Offline replay needed a response the cache does not hold.
class CacheMissError : public Error {
 public:
  using Error::Error;
};

enum class Purpose { decompose, extend, validate, readout, score, judge, reflect, cot };

std::string_view to_string(Purpose p);
std::optional<Purpose> purpose_from_string(std::string_view s);

struct ChatMessage {
  std::string role;  // system | user | assistant
  std::string content;

  bool operator==(const ChatMessage&) const = default;
};

struct ChatRequest {
  std::string model;
  std::vector<ChatMessage> messages;
  double temperature = 0.0;
  int max_tokens = 1024;
  std::optional<std::int64_t> seed;
  Purpose purpose = Purpose::cot;
  // Routing metadata for scripted fixtures. Not part of the cache key.
  std::string scope;
  std::optional<int> ordinal;
};

std::vector<std::string> validate_request(const ChatRequest& req);

struct Usage {
  std::int64_t prompt_tokens = 0;
  std::int64_t completion_tokens = 0;

  bool operator==(const Usage&) const = default;
};

struct ChatResponse {
  std::string text;
  Usage usage;
  bool cached = false;
  std::optional<double> latency_ms;
  int attempts = 1;
};

Json to_json(const ChatResponse& r);
ChatResponse chat_response_from_json(const Json& j);

/// Anything that can answer a chat request.
class Backend {
 public:
  virtual ~Backend() = default;
  virtual ChatResponse complete(const ChatRequest& req) = 0;
};

using Digest = std::array<std::uint8_t, 32>;

/// SHA-256 over the canonical (kind, model, messages, temperature, max_tokens, seed).
Digest cache_key(const BackendRef& ref, const ChatRequest& req);
std::string to_hex(const Digest& d);

struct RetryPolicy {
  int max_attempts = 4;
  std::chrono::milliseconds base_delay{500};
  std::chrono::milliseconds max_delay{8000};
  std::chrono::milliseconds timeout{120000};
};

/// Request body for the dialect selected by `ref.kind`.
Json build_request_body(const BackendRef& ref, const ChatRequest& req);

/// Extracts completion text and usage from a dialect response body.
ChatResponse parse_response_body(BackendKind kind, const std::string& body);

/// OpenAI-style `/v1/chat/completions` or Ollama-style `/api/chat` over HTTP.
class HttpBackend : public Backend {
 public:
  HttpBackend(BackendRef ref, RetryPolicy policy);

  ChatResponse complete(const ChatRequest& req) override;

  const std::string& endpoint_path() const { return path_; }

 private:
  BackendRef ref_;
  RetryPolicy policy_;
  std::string origin_;
  std::string path_;
  std::optional<std::string> token_;
};

struct ScriptEntry {
  Purpose purpose = Purpose::cot;
  int index = 0;
  std::string text;
  std::string question_id;
};

std::vector<ScriptEntry> load_script(const std::filesystem::path& path);

/// Replays canned responses keyed by (question_id, purpose, index).
///
/// The index comes from `ChatRequest::ordinal` when set, otherwise from a
/// per-(scope, purpose) counter. Unmatched lookups raise ScriptMissError.
class ScriptedBackend : public Backend {
 public:
  explicit ScriptedBackend(std::vector<ScriptEntry> entries);

  ChatResponse complete(const ChatRequest& req) override;

  std::size_t calls() const { return calls_.load(); }

 private:
  using Key = std::tuple<std::string, Purpose, int>;
  std::map<Key, std::string> entries_;
  std::mutex mutex_;
  std::map<std::pair<std::string, Purpose>, int> counters_;
  std::atomic<std::size_t> calls_{0};
};

/// Disk-backed map from cache-key hex digest to ChatResponse JSON.
class ResponseCache {
 public:
  explicit ResponseCache(std::filesystem::path dir);

  std::optional<ChatResponse> get(const std::string& hex) const;
  void put(const std::string& hex, const ChatResponse& response);

  const std::filesystem::path& dir() const { return dir_; }

 private:
  std::filesystem::path file_for(const std::string& hex) const;
  std::filesystem::path dir_;
};

class CachedBackend : public Backend {
 public:
  /// With `offline` set, a miss raises CacheMissError instead of reaching `inner`.
  CachedBackend(std::shared_ptr<Backend> inner, BackendRef ref,
                std::shared_ptr<ResponseCache> cache, bool offline = false);

  ChatResponse complete(const ChatRequest& req) override;

  std::size_t hits() const { return hits_.load(); }
  std::size_t misses() const { return misses_.load(); }

 private:
  std::shared_ptr<Backend> inner_;
  BackendRef ref_;
  std::shared_ptr<ResponseCache> cache_;
  bool offline_;
  std::atomic<std::size_t> hits_{0};
  std::atomic<std::size_t> misses_{0};
};

/// Bounds the number of requests in flight across every backend sharing it.
class RequestLimiter {
 public:
  explicit RequestLimiter(int max_in_flight);

  void acquire() { slots_.acquire(); }
  void release() { slots_.release(); }

 private:
  std::counting_semaphore<> slots_;
};

class LimitedBackend : public Backend {
 public:
  LimitedBackend(std::shared_ptr<Backend> inner, std::shared_ptr<RequestLimiter> limiter);

  ChatResponse complete(const ChatRequest& req) override;

 private:
  std::shared_ptr<Backend> inner_;
  std::shared_ptr<RequestLimiter> limiter_;
};

struct BackendOptions {
  RetryPolicy retry;
  std::shared_ptr<ResponseCache> cache;
  bool offline = false;
  std::shared_ptr<RequestLimiter> limiter;
};

/// Builds the transport for `ref`, layered as cache -> limiter -> transport.
std::shared_ptr<Backend> make_backend(const BackendRef& ref, const BackendOptions& options);

/// Convenience wrapper matching the `complete(ref, req)` call shape.
ChatResponse complete(Backend& backend, const ChatRequest& req);

}  // namespace qmtot
