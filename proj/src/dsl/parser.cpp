#include <cmath>
#include <charconv>
#include <unordered_map>
#include <unordered_set>

#include "sga/dsl/parser.hpp"

namespace sga::dsl {

namespace {

enum class Tok { Ident, Number, String, Punct, End };

struct Token {
  Tok kind = Tok::End;
  std::string text;
  double number = 0.0;
  int line = 1;
  int column = 1;
};

class Lexer {
 public:
  explicit Lexer(std::string_view src) : src_(src) {}

  std::vector<Token> run() {
    std::vector<Token> out;
    for (;;) {
      skip_space();
      Token t;
      t.line = line_;
      t.column = col_;
      if (pos_ >= src_.size()) {
        t.kind = Tok::End;
        out.push_back(t);
        return out;
      }
      const char c = src_[pos_];
      if (is_ident_start(c)) {
        t.kind = Tok::Ident;
        while (pos_ < src_.size() && is_ident_char(src_[pos_])) t.text += advance();
      } else if (is_digit(c)) {
        lex_number(t);
      } else if (c == '"') {
        lex_string(t);
      } else if (c == '-' && peek(1) == '>') {
        t.kind = Tok::Punct;
        t.text = "->";
        advance();
        advance();
      } else if (std::string_view("{}();,:=+-*/@").find(c) != std::string_view::npos) {
        t.kind = Tok::Punct;
        t.text = std::string(1, advance());
      } else {
        throw ParseError(ParseErrorKind::Syntax, line_, col_,
                         "unexpected character '" + printable(c) + "'");
      }
      out.push_back(std::move(t));
    }
  }

 private:
  static bool is_digit(char c) { return c >= '0' && c <= '9'; }
  static bool is_ident_start(char c) {
    return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || c == '_';
  }
  static bool is_ident_char(char c) { return is_ident_start(c) || is_digit(c); }

  static std::string printable(char c) {
    const auto u = static_cast<unsigned char>(c);
    if (u >= 0x20 && u < 0x7f) return std::string(1, c);
    static constexpr char kHex[] = "0123456789abcdef";
    return std::string("\\x") + kHex[u >> 4] + kHex[u & 15];
  }

  char peek(std::size_t ahead = 0) const {
    return pos_ + ahead < src_.size() ? src_[pos_ + ahead] : '\0';
  }

  char advance() {
    const char c = src_[pos_++];
    if (c == '\n') {
      ++line_;
      col_ = 1;
    } else {
      ++col_;
    }
    return c;
  }

  void skip_space() {
    while (pos_ < src_.size()) {
      const char c = src_[pos_];
      if (c == ' ' || c == '\t' || c == '\r' || c == '\n') {
        advance();
      } else if (c == '#') {
        while (pos_ < src_.size() && src_[pos_] != '\n') advance();
      } else {
        break;
      }
    }
  }

  void lex_number(Token& t) {
    t.kind = Tok::Number;
    const std::size_t start = pos_;
    while (is_digit(peek())) advance();
    if (peek() == '.' && is_digit(peek(1))) {
      advance();
      while (is_digit(peek())) advance();
    }
    if (peek() == 'e' || peek() == 'E') {
      std::size_t k = 1;
      if (peek(k) == '+' || peek(k) == '-') ++k;
      if (is_digit(peek(k))) {
        for (std::size_t i = 0; i < k; ++i) advance();
        while (is_digit(peek())) advance();
      }
    }
    t.text = std::string(src_.substr(start, pos_ - start));
    const auto res = std::from_chars(t.text.data(), t.text.data() + t.text.size(), t.number);
    if (res.ec != std::errc() || !std::isfinite(t.number))
      throw ParseError(ParseErrorKind::Syntax, t.line, t.column,
                       "numeric literal '" + t.text + "' is out of range");
  }

  void lex_string(Token& t) {
    t.kind = Tok::String;
    advance();
    for (;;) {
      if (pos_ >= src_.size() || peek() == '\n')
        throw ParseError(ParseErrorKind::Syntax, t.line, t.column, "unterminated string");
      const char c = advance();
      if (c == '"') break;
      if (c == '\\') {
        const char e = pos_ < src_.size() ? advance() : '\0';
        if (e != '"' && e != '\\')
          throw ParseError(ParseErrorKind::Syntax, line_, col_ - 1,
                           "unsupported escape in string");
        t.text += e;
      } else {
        t.text += c;
      }
    }
  }

  std::string_view src_;
  std::size_t pos_ = 0;
  int line_ = 1;
  int col_ = 1;
};

struct Builtin {
  PrimOp op;
  int arity;
};

const std::unordered_map<std::string_view, Builtin>& builtins() {
  static const std::unordered_map<std::string_view, Builtin> table{
      {"det", {PrimOp::Det, 1}},
      {"trace", {PrimOp::Trace, 1}},
      {"transpose", {PrimOp::Transpose, 1}},
      {"inverse", {PrimOp::Inverse, 1}},
      {"identity", {PrimOp::Identity, 0}},
      {"dim", {PrimOp::Dim, 0}},
      {"exp", {PrimOp::Exp, 1}},
      {"log", {PrimOp::Log, 1}},
      {"sqrt", {PrimOp::Sqrt, 1}},
      {"tanh", {PrimOp::Tanh, 1}},
      {"sigmoid", {PrimOp::Sigmoid, 1}},
      {"relu", {PrimOp::Relu, 1}},
      {"min", {PrimOp::Min, 2}},
      {"max", {PrimOp::Max, 2}},
      {"clamp", {PrimOp::Clamp, 3}},
      {"pow", {PrimOp::Pow, 2}},
      {"polar_r", {PrimOp::PolarR, 1}},
      {"polar_s", {PrimOp::PolarS, 1}},
      {"sym_eigvals", {PrimOp::SymEigvals, 1}},
      {"sym_reconstruct", {PrimOp::SymReconstruct, 2}},
  };
  return table;
}

bool is_keyword(std::string_view s) {
  static const std::unordered_set<std::string_view> kw{
      "law", "elastic", "plastic", "params", "forward", "mat", "let", "return"};
  return kw.contains(s) || builtins().contains(s);
}

std::string_view type_name(ValueType t) {
  return t == ValueType::Matrix ? "matrix" : "scalar";
}

class Parser {
 public:
  Parser(std::vector<Token> tokens, std::string_view source)
      : toks_(std::move(tokens)), source_(source) {}

  LawProgram run() {
    LawProgram prog;
    prog.source_text = std::string(source_);
    expect_word("law");
    const Token& kind = expect(Tok::Ident, "law kind");
    if (kind.text == "elastic") {
      prog.kind = LawKind::Elastic;
    } else if (kind.text == "plastic") {
      prog.kind = LawKind::Plastic;
    } else {
      fail(kind, "expected 'elastic' or 'plastic', found '" + kind.text + "'");
    }
    prog.name = expect(Tok::String, "law name string").text;
    expect_punct("{");

    parse_params(prog);
    parse_forward();

    expect_punct("}");
    if (cur().kind != Tok::End) fail(cur(), "unexpected text after the end of the law");
    prog.body = std::move(graph_);
    return prog;
  }

 private:
  [[noreturn]] void fail(const Token& at, const std::string& msg,
                         ParseErrorKind kind = ParseErrorKind::Syntax) const {
    throw ParseError(kind, at.line, at.column, msg);
  }

  const Token& cur() const { return toks_[pos_]; }
  const Token& next() { return toks_[pos_ == toks_.size() - 1 ? pos_ : pos_++]; }

  static std::string describe(const Token& t) {
    switch (t.kind) {
      case Tok::End: return "end of input";
      case Tok::String: return "string \"" + t.text + "\"";
      default: return "'" + t.text + "'";
    }
  }

  const Token& expect(Tok kind, std::string_view what) {
    if (cur().kind != kind) fail(cur(), "expected " + std::string(what) + ", found " + describe(cur()));
    return next();
  }

  bool at_punct(std::string_view p) const { return cur().kind == Tok::Punct && cur().text == p; }
  bool at_word(std::string_view w) const { return cur().kind == Tok::Ident && cur().text == w; }

  const Token& expect_punct(std::string_view p) {
    if (!at_punct(p)) fail(cur(), "expected '" + std::string(p) + "', found " + describe(cur()));
    return next();
  }

  const Token& expect_word(std::string_view w) {
    if (!at_word(w)) fail(cur(), "expected '" + std::string(w) + "', found " + describe(cur()));
    return next();
  }

  void parse_params(LawProgram& prog) {
    expect_word("params");
    expect_punct("{");
    graph_.nodes.push_back(Node{.op = PrimOp::Input, .type = ValueType::Matrix});
    graph_.names.push_back("F");
    while (!at_punct("}")) {
      const Token& name = expect(Tok::Ident, "parameter name");
      if (is_keyword(name.text) || name.text == "F")
        fail(name, "'" + name.text + "' is reserved and cannot name a parameter");
      for (const auto& p : prog.params)
        if (p.name == name.text)
          fail(name, "parameter '" + name.text + "' declared twice", ParseErrorKind::DuplicateParam);
      expect_punct("=");
      double sign = 1.0;
      if (at_punct("-")) {
        next();
        sign = -1.0;
      }
      const Token& value = expect(Tok::Number, "numeric parameter default");
      expect_punct(";");
      const auto k = static_cast<std::int32_t>(prog.params.size());
      prog.params.push_back(ParamDecl{name.text, sign * value.number});
      graph_.nodes.push_back(Node{.op = PrimOp::Param, .type = ValueType::Scalar, .param = k});
      graph_.names.push_back(name.text);
      scope_.emplace(name.text, 1 + k);
    }
    expect_punct("}");
  }

  void parse_forward() {
    expect_word("forward");
    expect_punct("(");
    const Token& arg = expect(Tok::Ident, "input name");
    if (arg.text != "F") fail(arg, "the input must be named 'F'");
    expect_punct(":");
    expect_word("mat");
    expect_punct(")");
    expect_punct("->");
    expect_word("mat");
    expect_punct("{");
    scope_.emplace("F", 0);

    while (at_word("let")) {
      next();
      const Token& name = expect(Tok::Ident, "binding name");
      if (is_keyword(name.text))
        fail(name, "'" + name.text + "' is reserved and cannot be bound");
      if (scope_.contains(name.text)) fail(name, "redefinition of '" + name.text + "'");
      expect_punct("=");
      const auto value = parse_expr();
      expect_punct(";");
      scope_.emplace(name.text, value.node);
      if (graph_.names[value.node].empty()) graph_.names[value.node] = name.text;
    }
    const Token& ret = expect_word("return");
    const auto out = parse_expr();
    expect_punct(";");
    if (graph_.nodes[out.node].type != ValueType::Matrix)
      fail(ret, "a law must return a matrix, found a scalar expression", ParseErrorKind::Type);
    graph_.output = out.node;
    expect_punct("}");
  }

  struct Ref {
    std::int32_t node;
    int line;
    int column;
  };

  ValueType type_of(const Ref& r) const { return graph_.nodes[r.node].type; }

  Ref emit(PrimOp op, std::initializer_list<Ref> args, const Token& at, std::string_view spelling) {
    std::array<ValueType, 3> types{};
    Node node{.op = op};
    int a = 0;
    for (const Ref& r : args) {
      types[a] = type_of(r);
      node.inputs[a] = r.node;
      ++a;
    }
    const auto t = infer_type(op, std::span(types.data(), a));
    if (!t) {
      std::string msg = "'" + std::string(spelling) + "' cannot be applied to (";
      for (int i = 0; i < a; ++i) {
        if (i) msg += ", ";
        msg += type_name(types[i]);
      }
      fail(at, msg + ")", ParseErrorKind::Type);
    }
    node.type = *t;
    graph_.nodes.push_back(node);
    graph_.names.emplace_back();
    return Ref{static_cast<std::int32_t>(graph_.nodes.size() - 1), at.line, at.column};
  }

  Ref constant(double v, const Token& at) {
    graph_.nodes.push_back(Node{.op = PrimOp::Constant, .type = ValueType::Scalar, .constant = v});
    graph_.names.emplace_back();
    return Ref{static_cast<std::int32_t>(graph_.nodes.size() - 1), at.line, at.column};
  }

  Ref parse_expr() {
    Ref lhs = parse_term();
    while (at_punct("+") || at_punct("-")) {
      const Token& op = next();
      const Ref rhs = parse_term();
      lhs = emit(op.text == "+" ? PrimOp::Add : PrimOp::Sub, {lhs, rhs}, op, op.text);
    }
    return lhs;
  }

  Ref parse_term() {
    Ref lhs = parse_unary();
    while (at_punct("*") || at_punct("/") || at_punct("@")) {
      const Token& op = next();
      const Ref rhs = parse_unary();
      PrimOp prim = PrimOp::Matmul;
      if (op.text == "*") {
        prim = type_of(lhs) == type_of(rhs) ? PrimOp::Mul : PrimOp::Scale;
      } else if (op.text == "/") {
        prim = PrimOp::Div;
      }
      lhs = emit(prim, {lhs, rhs}, op, op.text);
    }
    return lhs;
  }

  Ref parse_unary() {
    if (at_punct("-")) {
      const Token& minus = next();
      if (cur().kind == Tok::Number) {
        const Token& num = next();
        return constant(-num.number, minus);
      }
      const Ref operand = parse_unary();
      return emit(PrimOp::Neg, {operand}, minus, "-");
    }
    return parse_primary();
  }

  Ref parse_primary() {
    const Token& t = cur();
    if (t.kind == Tok::Number) {
      next();
      return constant(t.number, t);
    }
    if (at_punct("(")) {
      next();
      Ref inner = parse_expr();
      expect_punct(")");
      return inner;
    }
    if (t.kind != Tok::Ident) fail(t, "expected an expression, found " + describe(t));
    next();
    if (const auto it = builtins().find(t.text); it != builtins().end()) {
      if (!at_punct("(")) fail(t, "builtin '" + t.text + "' must be called");
      return parse_call(t, it->second);
    }
    if (at_punct("("))
      fail(t, "unknown function '" + t.text + "'", ParseErrorKind::UnknownIdentifier);
    if (is_keyword(t.text)) fail(t, "unexpected keyword '" + t.text + "'");
    const auto found = scope_.find(t.text);
    if (found == scope_.end())
      fail(t, "'" + t.text + "' is not defined", ParseErrorKind::UnknownIdentifier);
    return Ref{found->second, t.line, t.column};
  }

  Ref parse_call(const Token& name, const Builtin& fn) {
    expect_punct("(");
    std::vector<Ref> args;
    if (!at_punct(")")) {
      args.push_back(parse_expr());
      while (at_punct(",")) {
        next();
        args.push_back(parse_expr());
      }
    }
    expect_punct(")");
    if (static_cast<int>(args.size()) != fn.arity)
      fail(name, "'" + name.text + "' takes " + std::to_string(fn.arity) + " argument(s), got " +
                     std::to_string(args.size()));
    switch (args.size()) {
      case 0: return emit(fn.op, {}, name, name.text);
      case 1: return emit(fn.op, {args[0]}, name, name.text);
      case 2: return emit(fn.op, {args[0], args[1]}, name, name.text);
      default: return emit(fn.op, {args[0], args[1], args[2]}, name, name.text);
    }
  }

  std::vector<Token> toks_;
  std::string_view source_;
  std::size_t pos_ = 0;
  ExprGraph graph_;
  std::unordered_map<std::string, std::int32_t> scope_;
};

}  // namespace

LawProgram parse_law(std::string_view source) {
  Parser parser(Lexer(source).run(), source);
  return parser.run();
}

}  // namespace sga::dsl
