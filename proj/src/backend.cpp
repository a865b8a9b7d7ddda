#include "qmtot/backend.hpp"

#include <cctype>
#include <cstdlib>
#include <fstream>
#include <random>
#include <sstream>
#include <thread>

#include <openssl/evp.h>

#include "httplib.h"

namespace qmtot {

namespace {

std::int64_t count_words(std::string_view text) {
  std::int64_t n = 0;
  bool in_word = false;
  for (unsigned char ch : text) {
    if (std::isspace(ch)) {
      in_word = false;
    } else if (!in_word) {
      in_word = true;
      ++n;
    }
  }
  return n;
}

bool retryable_status(int status) { return status == 429 || status >= 500; }

}  // namespace

std::string_view to_string(Purpose p) {
  switch (p) {
    case Purpose::decompose:
      return "decompose";
    case Purpose::extend:
      return "extend";
    case Purpose::validate:
      return "validate";
    case Purpose::readout:
      return "readout";
    case Purpose::score:
      return "score";
    case Purpose::judge:
      return "judge";
    case Purpose::reflect:
      return "reflect";
    case Purpose::cot:
      return "cot";
  }
  return "cot";
}

std::optional<Purpose> purpose_from_string(std::string_view s) {
  for (Purpose p : {Purpose::decompose, Purpose::extend, Purpose::validate, Purpose::readout,
                    Purpose::score, Purpose::judge, Purpose::reflect, Purpose::cot}) {
    if (to_string(p) == s) return p;
  }
  return std::nullopt;
}

std::vector<std::string> validate_request(const ChatRequest& req) {
  std::vector<std::string> v;
  if (req.messages.empty()) {
    v.emplace_back("messages is empty");
  } else if (req.messages.front().role != "system" && req.messages.front().role != "user") {
    v.emplace_back("first message must be system or user");
  }
  for (const auto& m : req.messages) {
    if (m.role != "system" && m.role != "user" && m.role != "assistant") {
      v.push_back("unknown message role '" + m.role + "'");
    }
  }
  if (!(req.temperature >= 0.0)) v.emplace_back("temperature must be >= 0");
  if (req.max_tokens < 1) v.emplace_back("max_tokens must be >= 1");
  return v;
}

Json to_json(const ChatResponse& r) {
  Json j{{"text", r.text},
         {"usage",
          {{"prompt_tokens", r.usage.prompt_tokens},
           {"completion_tokens", r.usage.completion_tokens}}},
         {"cached", r.cached}};
  j["latency_ms"] = r.latency_ms ? Json(*r.latency_ms) : Json();
  j["attempts"] = r.attempts;
  return j;
}

ChatResponse chat_response_from_json(const Json& j) {
  ChatResponse r;
  try {
    r.text = j.at("text").get<std::string>();
    r.usage.prompt_tokens = j.at("usage").at("prompt_tokens").get<std::int64_t>();
    r.usage.completion_tokens = j.at("usage").at("completion_tokens").get<std::int64_t>();
    r.cached = j.value("cached", false);
    if (j.contains("latency_ms") && !j.at("latency_ms").is_null()) {
      r.latency_ms = j.at("latency_ms").get<double>();
    }
    r.attempts = j.value("attempts", 1);
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("chat response: ") + e.what());
  }
  return r;
}

Digest cache_key(const BackendRef& ref, const ChatRequest& req) {
  Json messages = Json::array();
  for (const auto& m : req.messages) messages.push_back(Json::array({m.role, m.content}));
  Json material{{"kind", to_string(ref.kind)},
                {"model", req.model.empty() ? ref.model : req.model},
                {"messages", std::move(messages)},
                {"temperature", req.temperature},
                {"max_tokens", req.max_tokens},
                {"seed", req.seed ? Json(*req.seed) : Json()}};
  const std::string canonical = material.dump();

  Digest digest{};
  unsigned int len = 0;
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  if (ctx == nullptr || EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr) != 1 ||
      EVP_DigestUpdate(ctx, canonical.data(), canonical.size()) != 1 ||
      EVP_DigestFinal_ex(ctx, digest.data(), &len) != 1) {
    EVP_MD_CTX_free(ctx);
    throw Error("SHA-256 digest failed");
  }
  EVP_MD_CTX_free(ctx);
  return digest;
}

std::string to_hex(const Digest& d) {
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(d.size() * 2);
  for (auto byte : d) {
    out += kHex[byte >> 4];
    out += kHex[byte & 0x0f];
  }
  return out;
}

Json build_request_body(const BackendRef& ref, const ChatRequest& req) {
  Json messages = Json::array();
  for (const auto& m : req.messages) messages.push_back({{"role", m.role}, {"content", m.content}});
  const std::string& model = req.model.empty() ? ref.model : req.model;

  if (ref.kind == BackendKind::ollama) {
    Json options{{"temperature", req.temperature}, {"num_predict", req.max_tokens}};
    if (req.seed) options["seed"] = *req.seed;
    return Json{{"model", model},
                {"messages", std::move(messages)},
                {"stream", false},
                {"options", std::move(options)}};
  }
  Json body{{"model", model},
            {"messages", std::move(messages)},
            {"temperature", req.temperature},
            {"max_tokens", req.max_tokens},
            {"stream", false}};
  if (req.seed) body["seed"] = *req.seed;
  return body;
}

ChatResponse parse_response_body(BackendKind kind, const std::string& body) {
  Json j;
  try {
    j = Json::parse(body);
  } catch (const nlohmann::json::parse_error& e) {
    throw ProtocolError(std::string("response is not JSON: ") + e.what());
  }
  ChatResponse r;
  try {
    if (kind == BackendKind::ollama) {
      const auto& content = j.at("message").at("content");
      r.text = content.is_null() ? std::string() : content.get<std::string>();
      r.usage.prompt_tokens = j.value("prompt_eval_count", std::int64_t{0});
      r.usage.completion_tokens = j.value("eval_count", std::int64_t{0});
    } else {
      const auto& choices = j.at("choices");
      if (!choices.is_array() || choices.empty()) throw ProtocolError("response has no choices");
      const auto& content = choices.at(0).at("message").at("content");
      r.text = content.is_null() ? std::string() : content.get<std::string>();
      if (j.contains("usage") && j.at("usage").is_object()) {
        r.usage.prompt_tokens = j.at("usage").value("prompt_tokens", std::int64_t{0});
        r.usage.completion_tokens = j.at("usage").value("completion_tokens", std::int64_t{0});
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw ProtocolError(std::string("malformed completion body: ") + e.what());
  }
  if (r.usage.prompt_tokens < 0 || r.usage.completion_tokens < 0) {
    throw ProtocolError("negative token counts in usage");
  }
  return r;
}

HttpBackend::HttpBackend(BackendRef ref, RetryPolicy policy)
    : ref_(std::move(ref)), policy_(policy) {
  if (auto errors = validate_backend_ref(ref_); !errors.empty()) throw Error(errors.front());
  if (policy_.max_attempts < 1) throw RangeError("retry max_attempts must be >= 1");

  std::string url = ref_.base_url;
  while (!url.empty() && url.back() == '/') url.pop_back();
  const auto scheme_end = url.find("://");
  const auto path_start = url.find('/', scheme_end + 3);
  origin_ = url.substr(0, path_start);
  const std::string prefix = path_start == std::string::npos ? "" : url.substr(path_start);
  path_ = prefix + (ref_.kind == BackendKind::ollama ? "/api/chat" : "/v1/chat/completions");

  if (ref_.auth_env) {
    if (const char* token = std::getenv(ref_.auth_env->c_str()); token && *token) token_ = token;
  }
}

ChatResponse HttpBackend::complete(const ChatRequest& req) {
  if (auto errors = validate_request(req); !errors.empty()) {
    throw Error("invalid chat request: " + errors.front());
  }
  const std::string body = build_request_body(ref_, req).dump();
  httplib::Headers headers;
  if (token_) headers.emplace("Authorization", "Bearer " + *token_);

  const auto start = std::chrono::steady_clock::now();
  std::string last_failure;
  for (int attempt = 1; attempt <= policy_.max_attempts; ++attempt) {
    httplib::Client client(origin_);
    client.set_connection_timeout(policy_.timeout);
    client.set_read_timeout(policy_.timeout);
    client.set_write_timeout(policy_.timeout);

    auto res = client.Post(path_, headers, body, "application/json");
    if (!res) {
      last_failure = "transport: " + httplib::to_string(res.error());
    } else if (res->status >= 200 && res->status < 300) {
      ChatResponse out = parse_response_body(ref_.kind, res->body);
      out.attempts = attempt;
      out.latency_ms = std::chrono::duration<double, std::milli>(
                           std::chrono::steady_clock::now() - start)
                           .count();
      return out;
    } else if (res->status == 401 || res->status == 403) {
      throw AuthError("HTTP " + std::to_string(res->status) + " from " + origin_ + path_);
    } else if (retryable_status(res->status)) {
      last_failure = "HTTP " + std::to_string(res->status);
    } else {
      throw TransportError("HTTP " + std::to_string(res->status) + " from " + origin_ + path_ +
                           " (not retryable): " + res->body.substr(0, 200));
    }

    if (attempt < policy_.max_attempts) {
      auto delay = policy_.base_delay * (1LL << std::min(attempt - 1, 20));
      std::this_thread::sleep_for(std::min<std::chrono::milliseconds>(delay, policy_.max_delay));
    }
  }
  throw TransportError(origin_ + path_ + " failed after " + std::to_string(policy_.max_attempts) +
                       " attempts: " + last_failure);
}

std::vector<ScriptEntry> load_script(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open script fixture " + path.string());
  Json j;
  try {
    j = Json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw SchemaError("script fixture " + path.string() + ": " + e.what());
  }
  if (!j.is_array()) throw SchemaError("script fixture must be a JSON list");
  std::vector<ScriptEntry> entries;
  entries.reserve(j.size());
  for (const auto& item : j) {
    ScriptEntry e;
    try {
      auto purpose = purpose_from_string(item.at("purpose").get<std::string>());
      if (!purpose) throw SchemaError("unknown purpose " + item.at("purpose").dump());
      e.purpose = *purpose;
      e.index = item.at("index").get<int>();
      e.text = item.at("text").get<std::string>();
      e.question_id = item.value("question_id", std::string());
    } catch (const nlohmann::json::exception& ex) {
      throw SchemaError("script fixture entry " + item.dump() + ": " + ex.what());
    }
    entries.push_back(std::move(e));
  }
  return entries;
}

ScriptedBackend::ScriptedBackend(std::vector<ScriptEntry> entries) {
  for (auto& e : entries) {
    Key key{e.question_id, e.purpose, e.index};
    if (!entries_.emplace(key, std::move(e.text)).second) {
      throw SchemaError("duplicate script entry for " + std::string(to_string(e.purpose)) + "#" +
                        std::to_string(e.index) +
                        (e.question_id.empty() ? "" : " in " + e.question_id));
    }
  }
}

ChatResponse ScriptedBackend::complete(const ChatRequest& req) {
  if (auto errors = validate_request(req); !errors.empty()) {
    throw Error("invalid chat request: " + errors.front());
  }
  int index = 0;
  if (req.ordinal) {
    index = *req.ordinal;
  } else {
    std::lock_guard lock(mutex_);
    index = counters_[{req.scope, req.purpose}]++;
  }
  ++calls_;

  auto it = entries_.find(Key{req.scope, req.purpose, index});
  if (it == entries_.end() && !req.scope.empty()) {
    it = entries_.find(Key{std::string(), req.purpose, index});
  }
  if (it == entries_.end()) {
    throw ScriptMissError("no scripted response for " + std::string(to_string(req.purpose)) + "#" +
                          std::to_string(index) +
                          (req.scope.empty() ? "" : " in scope '" + req.scope + "'"));
  }

  ChatResponse out;
  out.text = it->second;
  for (const auto& m : req.messages) out.usage.prompt_tokens += count_words(m.content);
  out.usage.completion_tokens = count_words(out.text);
  return out;
}

ResponseCache::ResponseCache(std::filesystem::path dir) : dir_(std::move(dir)) {
  std::filesystem::create_directories(dir_);
}

std::filesystem::path ResponseCache::file_for(const std::string& hex) const {
  return dir_ / hex.substr(0, 2) / (hex + ".json");
}

std::optional<ChatResponse> ResponseCache::get(const std::string& hex) const {
  std::ifstream in(file_for(hex));
  if (!in) return std::nullopt;
  try {
    return chat_response_from_json(Json::parse(in));
  } catch (const std::exception&) {
    // A half-written entry from a crashed writer counts as a miss.
    return std::nullopt;
  }
}

void ResponseCache::put(const std::string& hex, const ChatResponse& response) {
  const auto target = file_for(hex);
  std::filesystem::create_directories(target.parent_path());
  std::ostringstream suffix;
  suffix << ".tmp." << std::this_thread::get_id() << '.' << std::random_device{}();
  const auto tmp = target.string() + suffix.str();
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write cache entry " + tmp);
    out << to_json(response).dump();
  }
  std::filesystem::rename(tmp, target);
}

CachedBackend::CachedBackend(std::shared_ptr<Backend> inner, BackendRef ref,
                             std::shared_ptr<ResponseCache> cache, bool offline)
    : inner_(std::move(inner)), ref_(std::move(ref)), cache_(std::move(cache)), offline_(offline) {}

ChatResponse CachedBackend::complete(const ChatRequest& req) {
  const std::string key = to_hex(cache_key(ref_, req));
  if (auto hit = cache_->get(key)) {
    ++hits_;
    hit->cached = true;
    hit->latency_ms.reset();
    return *hit;
  }
  ++misses_;
  if (offline_) {
    throw CacheMissError("offline replay: no cached response for " +
                         std::string(to_string(req.purpose)) + " request " + key);
  }
  ChatResponse fresh = inner_->complete(req);
  fresh.cached = false;
  cache_->put(key, fresh);
  return fresh;
}

RequestLimiter::RequestLimiter(int max_in_flight) : slots_(std::max(1, max_in_flight)) {}

LimitedBackend::LimitedBackend(std::shared_ptr<Backend> inner,
                               std::shared_ptr<RequestLimiter> limiter)
    : inner_(std::move(inner)), limiter_(std::move(limiter)) {}

ChatResponse LimitedBackend::complete(const ChatRequest& req) {
  limiter_->acquire();
  struct Release {
    RequestLimiter* limiter;
    ~Release() { limiter->release(); }
  } release{limiter_.get()};
  return inner_->complete(req);
}

std::shared_ptr<Backend> make_backend(const BackendRef& ref, const BackendOptions& options) {
  std::shared_ptr<Backend> backend;
  if (ref.kind == BackendKind::scripted) {
    backend = std::make_shared<ScriptedBackend>(load_script(ref.fixture));
  } else {
    backend = std::make_shared<HttpBackend>(ref, options.retry);
    if (options.limiter) backend = std::make_shared<LimitedBackend>(backend, options.limiter);
  }
  if (options.cache) {
    backend = std::make_shared<CachedBackend>(backend, ref, options.cache, options.offline);
  }
  return backend;
}

ChatResponse complete(Backend& backend, const ChatRequest& req) { return backend.complete(req); }

}  // namespace qmtot
