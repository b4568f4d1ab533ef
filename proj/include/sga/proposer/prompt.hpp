#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "sga/dsl/ast.hpp"
#include "sga/search/candidate.hpp"

namespace sga::proposer {

struct PromptBundle {
  std::string system;
  std::vector<std::string> history_blocks;  // worst of the top-K first, best last
  std::string format;

  /// System, history blocks and format, in that order.
  std::vector<std::string> segments() const;
  /// The user turn sent alongside `system`: history blocks then format.
  std::string user_message() const;
  /// All segments joined by newlines.
  std::string assembled() const;
  bool operator==(const PromptBundle&) const = default;
};

class EmptyHistory : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

std::string system_prompt(dsl::LawKind kind);
std::string format_prompt(dsl::LawKind kind);
/// Law source followed by its rendered feedback.
std::string history_block(const search::Candidate& candidate, int position);

/// `topk` is best first, as returned by the heap. Throws EmptyHistory when
/// empty and std::invalid_argument when it holds an invalid candidate.
PromptBundle build_prompt(std::span<const search::Candidate> topk, dsl::LawKind kind);

/// 64-bit FNV-1a.
std::uint64_t fnv1a(std::string_view text);
std::uint64_t prompt_hash(const PromptBundle& prompt);

}  // namespace sga::proposer
