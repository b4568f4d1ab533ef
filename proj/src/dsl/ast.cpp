#include "sga/dsl/ast.hpp"

#include <bit>
#include <cmath>

namespace sga::dsl {

namespace {

struct OpInfo {
  PrimOp op;
  std::string_view name;
  int arity;
  bool elementwise;
};

constexpr std::array<OpInfo, 30> kOps{{
    {PrimOp::Input, "input", 0, false},
    {PrimOp::Param, "param", 0, false},
    {PrimOp::Constant, "constant", 0, false},
    {PrimOp::Dim, "dim", 0, false},
    {PrimOp::Identity, "identity", 0, false},
    {PrimOp::Add, "add", 2, true},
    {PrimOp::Sub, "sub", 2, true},
    {PrimOp::Mul, "mul", 2, true},
    {PrimOp::Div, "div", 2, true},
    {PrimOp::Neg, "neg", 1, true},
    {PrimOp::Matmul, "matmul", 2, false},
    {PrimOp::Transpose, "transpose", 1, false},
    {PrimOp::Inverse, "inverse", 1, false},
    {PrimOp::Det, "det", 1, false},
    {PrimOp::Trace, "trace", 1, false},
    {PrimOp::Scale, "scale", 2, true},
    {PrimOp::Exp, "exp", 1, true},
    {PrimOp::Log, "log", 1, true},
    {PrimOp::Sqrt, "sqrt", 1, true},
    {PrimOp::Tanh, "tanh", 1, true},
    {PrimOp::Sigmoid, "sigmoid", 1, true},
    {PrimOp::Relu, "relu", 1, true},
    {PrimOp::Min, "min", 2, true},
    {PrimOp::Max, "max", 2, true},
    {PrimOp::Clamp, "clamp", 3, true},
    {PrimOp::Pow, "pow", 2, true},
    {PrimOp::PolarR, "polar_r", 1, false},
    {PrimOp::PolarS, "polar_s", 1, false},
    {PrimOp::SymEigvals, "sym_eigvals", 1, false},
    {PrimOp::SymReconstruct, "sym_reconstruct", 2, false},
}};

const OpInfo& info(PrimOp op) { return kOps[static_cast<std::size_t>(op)]; }

}  // namespace

std::string_view op_name(PrimOp op) { return info(op).name; }
int op_arity(PrimOp op) { return info(op).arity; }
bool is_elementwise(PrimOp op) { return info(op).elementwise; }

std::vector<double> LawProgram::default_theta() const {
  std::vector<double> theta;
  theta.reserve(params.size());
  for (const auto& p : params) theta.push_back(p.init);
  return theta;
}

bool structurally_equal(const LawProgram& a, const LawProgram& b) {
  if (a.kind != b.kind || a.name != b.name) return false;
  if (a.params.size() != b.params.size()) return false;
  for (std::size_t i = 0; i < a.params.size(); ++i) {
    if (a.params[i].name != b.params[i].name) return false;
    if (std::bit_cast<std::uint64_t>(a.params[i].init) !=
        std::bit_cast<std::uint64_t>(b.params[i].init))
      return false;
  }
  const auto& na = a.body.nodes;
  const auto& nb = b.body.nodes;
  if (na.size() != nb.size() || a.body.output != b.body.output) return false;
  for (std::size_t i = 0; i < na.size(); ++i) {
    const Node& x = na[i];
    const Node& y = nb[i];
    if (x.op != y.op || x.type != y.type || x.inputs != y.inputs) return false;
    if (x.op == PrimOp::Constant && std::bit_cast<std::uint64_t>(x.constant) !=
                                        std::bit_cast<std::uint64_t>(y.constant))
      return false;
    if (x.op == PrimOp::Param && x.param != y.param) return false;
  }
  return true;
}

namespace {

std::string format_location(int line, int column, ParseErrorKind kind,
                            const std::string& message) {
  return std::to_string(line) + ":" + std::to_string(column) + ": " +
         std::string(to_string(kind)) + ": " + message;
}

}  // namespace

ParseError::ParseError(ParseErrorKind kind, int line, int column, const std::string& message)
    : std::runtime_error(format_location(line, column, kind, message)),
      kind_(kind),
      line_(line),
      column_(column),
      message_(message) {}

std::string_view to_string(ParseErrorKind kind) {
  switch (kind) {
    case ParseErrorKind::Syntax: return "syntax error";
    case ParseErrorKind::Type: return "type error";
    case ParseErrorKind::UnknownIdentifier: return "unknown identifier";
    case ParseErrorKind::DuplicateParam: return "duplicate parameter";
  }
  return "error";
}

EvalError::EvalError(EvalErrorKind kind, int node, const std::string& message)
    : std::runtime_error(std::string(to_string(kind)) + " at node " + std::to_string(node) +
                         ": " + message),
      kind_(kind),
      node_(node) {}

std::string_view to_string(EvalErrorKind kind) {
  switch (kind) {
    case EvalErrorKind::NonFiniteResult: return "non-finite result";
    case EvalErrorKind::SingularMatrix: return "singular matrix";
    case EvalErrorKind::DegenerateDecomposition: return "degenerate decomposition";
  }
  return "error";
}

std::optional<ValueType> infer_type(PrimOp op, std::span<const ValueType> operands) {
  if (static_cast<int>(operands.size()) != op_arity(op)) return std::nullopt;
  const auto is_mat = [](ValueType t) { return t == ValueType::Matrix; };
  bool any_matrix = false;
  for (ValueType t : operands) any_matrix = any_matrix || is_mat(t);

  switch (op) {
    case PrimOp::Input:
    case PrimOp::Identity:
      return ValueType::Matrix;
    case PrimOp::Param:
    case PrimOp::Constant:
    case PrimOp::Dim:
      return ValueType::Scalar;
    case PrimOp::Scale:
      // exactly one scalar and one matrix, either order
      if (is_mat(operands[0]) == is_mat(operands[1])) return std::nullopt;
      return ValueType::Matrix;
    case PrimOp::Matmul:
    case PrimOp::SymReconstruct:
      if (!is_mat(operands[0]) || !is_mat(operands[1])) return std::nullopt;
      return ValueType::Matrix;
    case PrimOp::Transpose:
    case PrimOp::Inverse:
    case PrimOp::PolarR:
    case PrimOp::PolarS:
    case PrimOp::SymEigvals:
      if (!is_mat(operands[0])) return std::nullopt;
      return ValueType::Matrix;
    case PrimOp::Det:
    case PrimOp::Trace:
      if (!is_mat(operands[0])) return std::nullopt;
      return ValueType::Scalar;
    case PrimOp::Mul:
      // mixed scalar/matrix products are Scale nodes
      if (is_mat(operands[0]) != is_mat(operands[1])) return std::nullopt;
      return operands[0];
    default:
      break;
  }
  if (is_elementwise(op)) return any_matrix ? ValueType::Matrix : ValueType::Scalar;
  return std::nullopt;
}

void validate_graph(const LawProgram& program) {
  const auto& nodes = program.body.nodes;
  const auto n_params = static_cast<std::int32_t>(program.params.size());
  if (nodes.size() < static_cast<std::size_t>(1 + n_params))
    throw std::invalid_argument("graph is missing its input or parameter nodes");
  if (nodes[0].op != PrimOp::Input || nodes[0].type != ValueType::Matrix)
    throw std::invalid_argument("node 0 must be the matrix input F");
  for (std::int32_t k = 0; k < n_params; ++k) {
    const Node& node = nodes[1 + k];
    if (node.op != PrimOp::Param || node.param != k || node.type != ValueType::Scalar)
      throw std::invalid_argument("parameter node " + std::to_string(1 + k) + " is malformed");
  }
  for (std::size_t i = 1 + n_params; i < nodes.size(); ++i) {
    const Node& node = nodes[i];
    if (node.op == PrimOp::Input || node.op == PrimOp::Param)
      throw std::invalid_argument("leaf node out of place at " + std::to_string(i));
    std::array<ValueType, 3> types{};
    for (int a = 0; a < node.arity(); ++a) {
      const auto in = node.inputs[a];
      if (in < 0 || static_cast<std::size_t>(in) >= i)
        throw std::invalid_argument("node " + std::to_string(i) + " references a later node");
      types[a] = nodes[in].type;
    }
    const auto t = infer_type(node.op, std::span(types.data(), node.arity()));
    if (!t || *t != node.type)
      throw std::invalid_argument("node " + std::to_string(i) + " is ill-typed");
    if (node.op == PrimOp::Constant && !std::isfinite(node.constant))
      throw std::invalid_argument("non-finite constant at node " + std::to_string(i));
  }
  const auto out = program.body.output;
  if (out < 0 || static_cast<std::size_t>(out) >= nodes.size() ||
      nodes[out].type != ValueType::Matrix)
    throw std::invalid_argument("output must be a matrix node");
  for (const auto& p : program.params)
    if (!std::isfinite(p.init)) throw std::invalid_argument("non-finite parameter init");
}

}  // namespace sga::dsl
