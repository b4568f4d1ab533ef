#pragma once

#include <chrono>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <mutex>
#include <string>
#include <vector>

#include "sga/proposer/prompt.hpp"

namespace sga::proposer {

struct CallRecord {
  double temperature = 0.0;
  int n = 0;
  std::uint64_t prompt_hash = 0;
  int returned = 0;
};

class Backend {
 public:
  virtual ~Backend() = default;

  /// Up to n raw responses. Transport failures shrink the result instead of
  /// throwing; see errors(). Throws std::invalid_argument on a bad
  /// temperature or n.
  std::vector<std::string> propose(const PromptBundle& prompt, double temperature, int n);

  std::vector<CallRecord> calls() const;
  std::vector<std::string> errors() const;

 protected:
  virtual std::vector<std::string> do_propose(const PromptBundle& prompt, double temperature,
                                              int n) = 0;
  void record_error(std::string message);

 private:
  mutable std::mutex log_mutex_;
  std::vector<CallRecord> calls_;
  std::vector<std::string> errors_;
};

/// Replays a fixed queue of responses in order.
class ScriptedBackend : public Backend {
 public:
  explicit ScriptedBackend(std::vector<std::string> responses);
  /// A script is a JSON array of strings.
  static std::vector<std::string> read_script(const std::filesystem::path& path);
  static ScriptedBackend from_file(const std::filesystem::path& path);

  std::size_t remaining() const;

 protected:
  std::vector<std::string> do_propose(const PromptBundle& prompt, double temperature,
                                      int n) override;

 private:
  mutable std::mutex mutex_;
  std::deque<std::string> queue_;
};

struct HttpConfig {
  std::string endpoint;  // e.g. https://api.example.com/v1/chat/completions
  std::string model;
  std::string api_key;
  std::chrono::milliseconds timeout{120000};
  int max_retries = 3;
  std::chrono::milliseconds backoff_base{1000};  // doubled after each failed attempt
};

/// Chat-completion client: POST {model, messages, temperature, n} with a
/// bearer token.
class HttpChatBackend : public Backend {
 public:
  explicit HttpChatBackend(HttpConfig config);

  /// Request body for one call, as sent.
  std::string request_body(const PromptBundle& prompt, double temperature, int n) const;

 protected:
  std::vector<std::string> do_propose(const PromptBundle& prompt, double temperature,
                                      int n) override;

 private:
  // One request with retries; empty on failure.
  std::vector<std::string> request(const PromptBundle& prompt, double temperature, int n);

  HttpConfig config_;
  std::string origin_;
  std::string path_;
};

}  // namespace sga::proposer
