#include "sga/proposer/backend.hpp"

#include <fstream>
#include <sstream>
#include <thread>

#include "httplib.h"
#include "json.hpp"

namespace sga::proposer {

std::vector<std::string> Backend::propose(const PromptBundle& prompt, double temperature, int n) {
  if (!(temperature >= 0.0 && temperature <= 2.0))
    throw std::invalid_argument("temperature must be in [0, 2]");
  if (n < 1) throw std::invalid_argument("n must be at least 1");
  auto out = do_propose(prompt, temperature, n);
  std::lock_guard lock(log_mutex_);
  calls_.push_back({temperature, n, prompt_hash(prompt), static_cast<int>(out.size())});
  return out;
}

std::vector<CallRecord> Backend::calls() const {
  std::lock_guard lock(log_mutex_);
  return calls_;
}

std::vector<std::string> Backend::errors() const {
  std::lock_guard lock(log_mutex_);
  return errors_;
}

void Backend::record_error(std::string message) {
  std::lock_guard lock(log_mutex_);
  errors_.push_back(std::move(message));
}

ScriptedBackend::ScriptedBackend(std::vector<std::string> responses)
    : queue_(responses.begin(), responses.end()) {}

std::vector<std::string> ScriptedBackend::read_script(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open script " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("script " + path.string() + ": " + e.what());
  }
  if (!j.is_array()) throw std::runtime_error("script " + path.string() + " must be a JSON array");
  std::vector<std::string> responses;
  for (const auto& item : j) {
    if (!item.is_string())
      throw std::runtime_error("script " + path.string() + " must contain only strings");
    responses.push_back(item.get<std::string>());
  }
  return responses;
}

ScriptedBackend ScriptedBackend::from_file(const std::filesystem::path& path) {
  return ScriptedBackend(read_script(path));
}

std::size_t ScriptedBackend::remaining() const {
  std::lock_guard lock(mutex_);
  return queue_.size();
}

std::vector<std::string> ScriptedBackend::do_propose(const PromptBundle&, double, int n) {
  std::lock_guard lock(mutex_);
  std::vector<std::string> out;
  while (static_cast<int>(out.size()) < n && !queue_.empty()) {
    out.push_back(std::move(queue_.front()));
    queue_.pop_front();
  }
  return out;
}

HttpChatBackend::HttpChatBackend(HttpConfig config) : config_(std::move(config)) {
  const auto scheme = config_.endpoint.find("://");
  if (scheme == std::string::npos) throw std::invalid_argument("endpoint must include a scheme");
  const auto slash = config_.endpoint.find('/', scheme + 3);
  origin_ = config_.endpoint.substr(0, slash);
  path_ = slash == std::string::npos ? "/" : config_.endpoint.substr(slash);
  if (config_.max_retries < 0) throw std::invalid_argument("max_retries must be non-negative");
}

std::string HttpChatBackend::request_body(const PromptBundle& prompt, double temperature,
                                          int n) const {
  nlohmann::json body = {
      {"model", config_.model},
      {"messages",
       nlohmann::json::array({{{"role", "system"}, {"content", prompt.system}},
                              {{"role", "user"}, {"content", prompt.user_message()}}})},
      {"temperature", temperature},
      {"n", n},
  };
  return body.dump();
}

std::vector<std::string> HttpChatBackend::request(const PromptBundle& prompt, double temperature,
                                                  int n) {
  httplib::Client client(origin_);
  const auto seconds = config_.timeout.count() / 1000;
  const auto micros = (config_.timeout.count() % 1000) * 1000;
  client.set_connection_timeout(seconds, micros);
  client.set_read_timeout(seconds, micros);
  client.set_write_timeout(seconds, micros);
  const httplib::Headers headers = {{"Authorization", "Bearer " + config_.api_key}};
  const std::string body = request_body(prompt, temperature, n);

  auto delay = config_.backoff_base;
  for (int attempt = 0; attempt <= config_.max_retries; ++attempt) {
    if (attempt > 0) {
      std::this_thread::sleep_for(delay);
      delay *= 2;
    }
    auto res = client.Post(path_, headers, body, "application/json");
    if (!res) {
      record_error("attempt " + std::to_string(attempt + 1) + ": " + httplib::to_string(res.error()));
      continue;
    }
    if (res->status == 429 || res->status >= 500) {
      record_error("attempt " + std::to_string(attempt + 1) + ": HTTP " + std::to_string(res->status));
      continue;
    }
    if (res->status != 200) {
      record_error("HTTP " + std::to_string(res->status) + ", not retried");
      return {};
    }
    try {
      const auto j = nlohmann::json::parse(res->body);
      std::vector<std::string> out;
      for (const auto& choice : j.at("choices"))
        out.push_back(choice.at("message").at("content").get<std::string>());
      return out;
    } catch (const nlohmann::json::exception& e) {
      record_error(std::string("malformed response: ") + e.what());
      return {};
    }
  }
  record_error("giving up after " + std::to_string(config_.max_retries + 1) + " attempts");
  return {};
}

std::vector<std::string> HttpChatBackend::do_propose(const PromptBundle& prompt,
                                                     double temperature, int n) {
  // Servers may return fewer choices than asked; top up with further calls.
  std::vector<std::string> out;
  while (static_cast<int>(out.size()) < n) {
    auto got = request(prompt, temperature, n - static_cast<int>(out.size()));
    if (got.empty()) break;
    for (auto& text : got)
      if (static_cast<int>(out.size()) < n) out.push_back(std::move(text));
  }
  return out;
}

}  // namespace sga::proposer
