#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

#include "sga/dsl/ast.hpp"

namespace sga::proposer {

enum class ProposalErrorKind { NoCodeBlock, Syntax, Type, UnknownIdentifier, DuplicateParam };

std::string_view to_string(ProposalErrorKind kind);

class ProposalError : public std::runtime_error {
 public:
  ProposalError(ProposalErrorKind kind, const std::string& message);
  ProposalErrorKind kind() const { return kind_; }

 private:
  ProposalErrorKind kind_;
};

struct Proposal {
  dsl::LawProgram program;
  std::string analysis_excerpt;
};

inline constexpr std::size_t kAnalysisExcerptChars = 500;

/// Body of the last fenced block after the last "### Code" heading.
std::optional<std::string> extract_code_block(std::string_view text);

/// Up to kAnalysisExcerptChars code points of the "### Analysis" section.
std::string analysis_excerpt(std::string_view text);

/// Throws ProposalError only.
Proposal parse_proposal(std::string_view text);

}  // namespace sga::proposer
