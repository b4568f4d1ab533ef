#include "sga/proposer/parse.hpp"

#include <vector>

#include "sga/dsl/parser.hpp"

namespace sga::proposer {

std::string_view to_string(ProposalErrorKind kind) {
  switch (kind) {
    case ProposalErrorKind::NoCodeBlock: return "no code block";
    case ProposalErrorKind::Syntax: return "syntax error";
    case ProposalErrorKind::Type: return "type error";
    case ProposalErrorKind::UnknownIdentifier: return "unknown identifier";
    case ProposalErrorKind::DuplicateParam: return "duplicate parameter";
  }
  return "error";
}

ProposalError::ProposalError(ProposalErrorKind kind, const std::string& message)
    : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

namespace {

struct Line {
  std::size_t begin;
  std::size_t end;  // exclusive, before the newline
};

std::vector<Line> split_lines(std::string_view text) {
  std::vector<Line> lines;
  std::size_t start = 0;
  while (start <= text.size()) {
    auto nl = text.find('\n', start);
    if (nl == std::string_view::npos) nl = text.size();
    std::size_t end = nl;
    if (end > start && text[end - 1] == '\r') --end;
    lines.push_back({start, end});
    start = nl + 1;
  }
  return lines;
}

std::string_view trim_left(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  return s;
}

bool is_heading(std::string_view line, std::string_view title) {
  line = trim_left(line);
  if (line.substr(0, 4) != "### ") return false;
  line.remove_prefix(4);
  line = trim_left(line);
  return line.substr(0, title.size()) == title;
}

bool is_level3(std::string_view line) {
  line = trim_left(line);
  return line.substr(0, 4) == "### ";
}

bool is_fence(std::string_view line) { return trim_left(line).substr(0, 3) == "```"; }

}  // namespace

std::optional<std::string> extract_code_block(std::string_view text) {
  const auto lines = split_lines(text);
  const auto at = [&](std::size_t i) {
    return text.substr(lines[i].begin, lines[i].end - lines[i].begin);
  };
  std::optional<std::size_t> heading;
  for (std::size_t i = 0; i < lines.size(); ++i)
    if (is_heading(at(i), "Code")) heading = i;
  if (!heading) return std::nullopt;

  std::optional<std::string> last;
  std::size_t i = *heading + 1;
  while (i < lines.size()) {
    if (!is_fence(at(i))) {
      ++i;
      continue;
    }
    std::size_t j = i + 1;
    while (j < lines.size() && !is_fence(at(j))) ++j;
    if (j == lines.size()) break;  // unterminated
    std::string body;
    for (std::size_t k = i + 1; k < j; ++k) {
      body += at(k);
      body += '\n';
    }
    last = std::move(body);
    i = j + 1;
  }
  return last;
}

std::string analysis_excerpt(std::string_view text) {
  const auto lines = split_lines(text);
  std::size_t begin = std::string_view::npos;
  std::size_t end = text.size();
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const auto line = text.substr(lines[i].begin, lines[i].end - lines[i].begin);
    if (begin == std::string_view::npos) {
      if (is_heading(line, "Analysis")) begin = i + 1 < lines.size() ? lines[i + 1].begin : text.size();
    } else if (is_level3(line)) {
      end = lines[i].begin;
      break;
    }
  }
  if (begin == std::string_view::npos) return {};
  std::string_view section = text.substr(begin, end - begin);
  while (!section.empty() && (section.front() == '\n' || section.front() == '\r' ||
                              section.front() == ' '))
    section.remove_prefix(1);
  // Count code points by their lead bytes so a multi-byte character is never split.
  std::size_t chars = 0;
  std::size_t cut = 0;
  for (; cut < section.size(); ++cut) {
    const auto byte = static_cast<unsigned char>(section[cut]);
    if ((byte & 0xC0) != 0x80) {
      if (chars == kAnalysisExcerptChars) break;
      ++chars;
    }
  }
  std::string out(section.substr(0, cut));
  while (!out.empty() && (out.back() == '\n' || out.back() == ' ' || out.back() == '\r'))
    out.pop_back();
  return out;
}

Proposal parse_proposal(std::string_view text) {
  auto code = extract_code_block(text);
  if (!code) throw ProposalError(ProposalErrorKind::NoCodeBlock, "no fenced block after a ### Code heading");
  Proposal p;
  try {
    p.program = dsl::parse_law(*code);
  } catch (const dsl::ParseError& e) {
    ProposalErrorKind kind = ProposalErrorKind::Syntax;
    switch (e.kind()) {
      case dsl::ParseErrorKind::Syntax: kind = ProposalErrorKind::Syntax; break;
      case dsl::ParseErrorKind::Type: kind = ProposalErrorKind::Type; break;
      case dsl::ParseErrorKind::UnknownIdentifier: kind = ProposalErrorKind::UnknownIdentifier; break;
      case dsl::ParseErrorKind::DuplicateParam: kind = ProposalErrorKind::DuplicateParam; break;
    }
    throw ProposalError(kind, e.what());
  }
  p.analysis_excerpt = analysis_excerpt(text);
  return p;
}

}  // namespace sga::proposer
