#include "sga/io/runlog.hpp"

#include <sstream>
#include <stdexcept>

namespace sga::io {

RunLog::RunLog(const std::filesystem::path& sink) : sink_(sink, std::ios::binary | std::ios::trunc) {
  if (!sink_) throw std::runtime_error("cannot open log file " + sink.string());
}

RunLog::RunLog(RunLog&& other) noexcept {
  std::lock_guard lock(other.mutex_);
  lines_ = std::move(other.lines_);
  sink_ = std::move(other.sink_);
}

RunLog& RunLog::operator=(RunLog&& other) noexcept {
  if (this != &other) {
    std::scoped_lock lock(mutex_, other.mutex_);
    lines_ = std::move(other.lines_);
    sink_ = std::move(other.sink_);
  }
  return *this;
}

std::uint64_t RunLog::append(std::string_view event, nlohmann::json fields) {
  std::lock_guard lock(mutex_);
  const auto seq = static_cast<std::uint64_t>(lines_.size());
  nlohmann::ordered_json line;
  line["seq"] = seq;
  line["event"] = event;
  for (auto it = fields.begin(); it != fields.end(); ++it) line[it.key()] = it.value();
  lines_.push_back(line.dump());
  if (sink_.is_open()) {
    sink_ << lines_.back() << '\n';
    sink_.flush();
  }
  return seq;
}

std::vector<nlohmann::json> RunLog::events() const {
  std::lock_guard lock(mutex_);
  std::vector<nlohmann::json> out;
  out.reserve(lines_.size());
  for (const auto& l : lines_) out.push_back(nlohmann::json::parse(l));
  return out;
}

std::size_t RunLog::size() const {
  std::lock_guard lock(mutex_);
  return lines_.size();
}

std::string RunLog::text() const {
  std::lock_guard lock(mutex_);
  std::string s;
  for (const auto& l : lines_) s += l + "\n";
  return s;
}

void RunLog::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text();
}

RunLog RunLog::parse(std::string_view text) {
  RunLog log;
  std::istringstream in{std::string(text)};
  std::string line;
  std::uint64_t expected = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw std::runtime_error("log line " + std::to_string(expected) + ": " + e.what());
    }
    if (!j.is_object() || !j.contains("seq") || !j.contains("event") ||
        j["seq"].get<std::uint64_t>() != expected)
      throw std::runtime_error("log line " + std::to_string(expected) + " is out of sequence");
    log.lines_.push_back(line);
    ++expected;
  }
  return log;
}

RunLog RunLog::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

}  // namespace sga::io
