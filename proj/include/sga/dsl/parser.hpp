#pragma once

#include <string_view>

#include "sga/dsl/ast.hpp"

namespace sga::dsl {

/// Parses and typechecks a law program. Throws ParseError carrying a 1-based
/// line and column.
LawProgram parse_law(std::string_view source);

/// Canonical text: every computed node becomes its own `let`, so reparsing
/// reproduces the node order exactly.
std::string pretty_print(const LawProgram& program);

/// Shortest decimal text that reads back to the same double.
std::string format_number(double value);

}  // namespace sga::dsl
