#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace sga::io {

/// Append-only event log, one JSON object per line. Every event carries a
/// sequence number ("seq") and a type ("event"); appends are serialized.
class RunLog {
 public:
  RunLog() = default;
  /// Also writes each line to `sink` as it is appended (file is truncated).
  explicit RunLog(const std::filesystem::path& sink);
  RunLog(RunLog&& other) noexcept;
  RunLog& operator=(RunLog&& other) noexcept;

  std::uint64_t append(std::string_view event, nlohmann::json fields = nlohmann::json::object());

  std::vector<nlohmann::json> events() const;
  std::size_t size() const;
  /// All lines, each newline-terminated.
  std::string text() const;

  void save(const std::filesystem::path& path) const;
  /// Throws std::runtime_error on malformed lines or out-of-order sequence
  /// numbers.
  static RunLog parse(std::string_view text);
  static RunLog load(const std::filesystem::path& path);

 private:
  mutable std::mutex mutex_;
  std::vector<std::string> lines_;
  std::ofstream sink_;
};

}  // namespace sga::io
