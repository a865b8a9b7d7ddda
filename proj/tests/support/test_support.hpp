#pragma once

#include <atomic>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <functional>
#include <mutex>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "httplib.h"
#include "qmtot/backend.hpp"
#include "qmtot/domain.hpp"
#include "qmtot/session.hpp"

namespace qmtot::testing {

class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("qmtot-test-" + std::to_string(rd()) + "-" + std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::filesystem::path& p, const std::string& text) {
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out << text;
}

/// Question with options A.. and the gold at `gold_offset`.
inline Question make_question(const std::string& id, int n_options = 4, int gold_offset = 0) {
  Question q;
  q.id = id;
  q.stem = "Stem of " + id + "?";
  for (int i = 0; i < n_options; ++i) {
    q.options[OptionLabel(static_cast<char>('A' + i))] = "option " + std::to_string(i);
  }
  q.gold = OptionLabel(static_cast<char>('A' + gold_offset));
  return q;
}

/// Backend answering through a callback.
class FnBackend : public Backend {
 public:
  using Fn = std::function<std::string(const ChatRequest&)>;
  explicit FnBackend(Fn fn) : fn_(std::move(fn)) {}

  ChatResponse complete(const ChatRequest& req) override {
    ++calls_;
    {
      std::lock_guard lock(mutex_);
      requests_.push_back(req);
    }
    ChatResponse r;
    r.text = fn_(req);
    return r;
  }

  int calls() const { return calls_.load(); }
  std::vector<ChatRequest> requests() const {
    std::lock_guard lock(mutex_);
    return requests_;
  }

 private:
  Fn fn_;
  std::atomic<int> calls_{0};
  mutable std::mutex mutex_;
  std::vector<ChatRequest> requests_;
};

inline RunConfig scripted_config() {
  RunConfig cfg;
  BackendRef ref;
  ref.kind = BackendKind::scripted;
  ref.fixture = "unused.json";
  for (Role r : kAllRoles) cfg.roles[r] = ref;
  return cfg;
}

struct StubReply {
  int status = 200;
  std::string body;
  std::chrono::milliseconds delay{0};
};

inline std::string openai_body(const std::string& text) {
  return Json{{"choices", Json::array({Json{{"message", {{"role", "assistant"}, {"content", text}}}}})},
              {"usage", {{"prompt_tokens", 11}, {"completion_tokens", 3}}}}
      .dump();
}

inline std::string ollama_body(const std::string& text) {
  return Json{{"message", {{"role", "assistant"}, {"content", text}}},
              {"done", true},
              {"prompt_eval_count", 11},
              {"eval_count", 3}}
      .dump();
}

/// Local HTTP server replaying `script` in order; the last reply repeats.
class StubServer {
 public:
  explicit StubServer(std::vector<StubReply> script) : script_(std::move(script)) {
    server_.Post(R"(.*)", [this](const httplib::Request& req, httplib::Response& res) {
      StubReply reply;
      {
        std::lock_guard lock(mutex_);
        const std::size_t i = std::min(hits_.size(), script_.size() - 1);
        reply = script_[i];
        hits_.push_back(Hit{req.path, req.body, req.get_header_value("Authorization"),
                            std::chrono::steady_clock::now()});
      }
      if (reply.delay.count() > 0) std::this_thread::sleep_for(reply.delay);
      res.status = reply.status;
      res.set_content(reply.body, "application/json");
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~StubServer() {
    server_.stop();
    if (thread_.joinable()) thread_.join();
  }

  struct Hit {
    std::string path;
    std::string body;
    std::string authorization;
    std::chrono::steady_clock::time_point at;
  };

  std::string base_url() const { return "http://127.0.0.1:" + std::to_string(port_); }
  std::vector<Hit> hits() const {
    std::lock_guard lock(mutex_);
    return hits_;
  }

 private:
  httplib::Server server_;
  std::vector<StubReply> script_;
  mutable std::mutex mutex_;
  std::vector<Hit> hits_;
  int port_ = 0;
  std::thread thread_;
};

}  // namespace qmtot::testing
