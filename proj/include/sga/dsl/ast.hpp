#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace sga::dsl {

enum class LawKind : std::uint8_t { Elastic, Plastic };

enum class ValueType : std::uint8_t { Scalar, Matrix };

// Closed primitive set. Input and Param are the graph's leaves; every other op
// is produced by the parser from an operator or a builtin call.
enum class PrimOp : std::uint8_t {
  Input,
  Param,
  Constant,
  Dim,
  Identity,
  Add,
  Sub,
  Mul,
  Div,
  Neg,
  Matmul,
  Transpose,
  Inverse,
  Det,
  Trace,
  Scale,
  Exp,
  Log,
  Sqrt,
  Tanh,
  Sigmoid,
  Relu,
  Min,
  Max,
  Clamp,
  Pow,
  PolarR,
  PolarS,
  SymEigvals,
  SymReconstruct,
};

std::string_view op_name(PrimOp op);
int op_arity(PrimOp op);
bool is_elementwise(PrimOp op);

struct Node {
  PrimOp op = PrimOp::Constant;
  std::array<std::int32_t, 3> inputs{-1, -1, -1};
  ValueType type = ValueType::Scalar;
  double constant = 0.0;    // Constant only
  std::int32_t param = -1;  // Param only

  int arity() const { return op_arity(op); }
};

struct ExprGraph {
  // Node 0 is the input F, nodes 1..P are the parameters in declaration
  // order. Inputs always precede their users.
  std::vector<Node> nodes;
  std::int32_t output = 0;
  // Optional let-binding name per node (empty when unnamed). Cosmetic only:
  // ignored by structural equality.
  std::vector<std::string> names;
};

struct ParamDecl {
  std::string name;
  double init = 0.0;
};

struct LawProgram {
  LawKind kind = LawKind::Elastic;
  std::string name;
  std::vector<ParamDecl> params;
  ExprGraph body;
  std::string source_text;

  std::size_t param_count() const { return params.size(); }
  std::vector<double> default_theta() const;
};

/// Equality of kind, name, parameters (bitwise init) and graph structure.
/// Let-binding names and the source text are not compared.
bool structurally_equal(const LawProgram& a, const LawProgram& b);

enum class ParseErrorKind { Syntax, Type, UnknownIdentifier, DuplicateParam };

class ParseError : public std::runtime_error {
 public:
  ParseError(ParseErrorKind kind, int line, int column, const std::string& message);

  ParseErrorKind kind() const { return kind_; }
  int line() const { return line_; }
  int column() const { return column_; }
  const std::string& message() const { return message_; }

 private:
  ParseErrorKind kind_;
  int line_;
  int column_;
  std::string message_;
};

std::string_view to_string(ParseErrorKind kind);

enum class EvalErrorKind { NonFiniteResult, SingularMatrix, DegenerateDecomposition };

class EvalError : public std::runtime_error {
 public:
  EvalError(EvalErrorKind kind, int node, const std::string& message);

  EvalErrorKind kind() const { return kind_; }
  int node() const { return node_; }

 private:
  EvalErrorKind kind_;
  int node_;
};

std::string_view to_string(EvalErrorKind kind);

// Numeric thresholds shared by the evaluator and its adjoint.
inline constexpr double kSingularDetEps = 1e-12;
inline constexpr double kEigenGapEps = 1e-8;

/// Checks the graph invariants (ordering, arity, operand types). Throws
/// std::invalid_argument on violation; used on programs built outside the
/// parser.
void validate_graph(const LawProgram& program);

/// Result type of applying `op` to operands of the given types, or nothing
/// when the combination is ill-typed.
std::optional<ValueType> infer_type(PrimOp op, std::span<const ValueType> operands);

}  // namespace sga::dsl
