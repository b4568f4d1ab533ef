#include <charconv>
#include <unordered_set>

#include "sga/dsl/parser.hpp"

namespace sga::dsl {

std::string format_number(double value) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, value);
  return std::string(buf, res.ptr);
}

namespace {

std::string quote(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"' || c == '\\') out += '\\';
    out += c;
  }
  return out + "\"";
}

std::string_view infix(PrimOp op) {
  switch (op) {
    case PrimOp::Add: return "+";
    case PrimOp::Sub: return "-";
    case PrimOp::Mul:
    case PrimOp::Scale: return "*";
    case PrimOp::Div: return "/";
    case PrimOp::Matmul: return "@";
    default: return {};
  }
}

}  // namespace

std::string pretty_print(const LawProgram& program) {
  const auto& nodes = program.body.nodes;
  const auto& given = program.body.names;

  std::unordered_set<std::string> taken{"F"};
  for (const auto& p : program.params) taken.insert(p.name);
  for (std::size_t i = 1 + program.params.size(); i < given.size(); ++i)
    if (!given[i].empty()) taken.insert(given[i]);

  std::vector<std::string> names(nodes.size());
  names[0] = "F";
  for (std::size_t k = 0; k < program.params.size(); ++k) names[1 + k] = program.params[k].name;
  std::unordered_set<std::string> used(names.begin(), names.begin() + 1 + program.params.size());
  for (std::size_t i = 1 + program.params.size(); i < nodes.size(); ++i) {
    std::string n = i < given.size() ? given[i] : std::string{};
    if (n.empty() || used.contains(n)) {
      n = "t" + std::to_string(i);
      while (taken.contains(n) || used.contains(n)) n = "_" + n;
    }
    used.insert(n);
    names[i] = std::move(n);
  }

  std::string out = "law ";
  out += program.kind == LawKind::Elastic ? "elastic " : "plastic ";
  out += quote(program.name) + " {\n  params {";
  if (program.params.empty()) {
    out += "}\n";
  } else {
    out += "\n";
    for (const auto& p : program.params)
      out += "    " + p.name + " = " + format_number(p.init) + ";\n";
    out += "  }\n";
  }
  out += "  forward(F: mat) -> mat {\n";
  for (std::size_t i = 1 + program.params.size(); i < nodes.size(); ++i) {
    const Node& node = nodes[i];
    std::string rhs;
    if (node.op == PrimOp::Constant) {
      rhs = format_number(node.constant);
    } else if (node.op == PrimOp::Neg) {
      rhs = "-" + names[node.inputs[0]];
    } else if (const auto sym = infix(node.op); !sym.empty()) {
      rhs = names[node.inputs[0]] + " " + std::string(sym) + " " + names[node.inputs[1]];
    } else {
      rhs = std::string(op_name(node.op)) + "(";
      for (int a = 0; a < node.arity(); ++a) {
        if (a) rhs += ", ";
        rhs += names[node.inputs[a]];
      }
      rhs += ")";
    }
    out += "    let " + names[i] + " = " + rhs + ";\n";
  }
  out += "    return " + names[program.body.output] + ";\n  }\n}\n";
  return out;
}

}  // namespace sga::dsl
