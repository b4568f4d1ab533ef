#include "sga/dsl/random_program.hpp"

#include <algorithm>
#include <cmath>

namespace sga::dsl {

namespace {

constexpr std::array kComputedOps{
    PrimOp::Constant, PrimOp::Dim,     PrimOp::Identity,   PrimOp::Add,       PrimOp::Sub,
    PrimOp::Mul,      PrimOp::Div,     PrimOp::Neg,        PrimOp::Matmul,    PrimOp::Transpose,
    PrimOp::Inverse,  PrimOp::Det,     PrimOp::Trace,      PrimOp::Scale,     PrimOp::Exp,
    PrimOp::Log,      PrimOp::Sqrt,    PrimOp::Tanh,       PrimOp::Sigmoid,   PrimOp::Relu,
    PrimOp::Min,      PrimOp::Max,     PrimOp::Clamp,      PrimOp::Pow,       PrimOp::PolarR,
    PrimOp::PolarS,   PrimOp::SymEigvals, PrimOp::SymReconstruct,
};

class Builder {
 public:
  Builder(std::mt19937_64& rng, const RandomProgramOptions& opt) : rng_(rng), opt_(opt) {
    prog_.kind = coin(0.5) ? LawKind::Elastic : LawKind::Plastic;
    prog_.name = "random";
    push(Node{.op = PrimOp::Input, .type = ValueType::Matrix});
    const int n_params = std::uniform_int_distribution<int>(0, opt.max_params)(rng_);
    for (int k = 0; k < n_params; ++k) {
      prog_.params.push_back(ParamDecl{"p" + std::to_string(k), uniform(-1.5, 1.5)});
      push(Node{.op = PrimOp::Param, .type = ValueType::Scalar, .param = k});
    }
  }

  LawProgram build() {
    const auto base = static_cast<int>(prog_.body.nodes.size());
    while (static_cast<int>(prog_.body.nodes.size()) - base < opt_.computed_nodes) step();
    auto out = static_cast<std::int32_t>(prog_.body.nodes.size() - 1);
    if (prog_.body.nodes[out].type == ValueType::Scalar) out = add(PrimOp::Scale, {out, 0});
    prog_.body.output = out;
    prog_.source_text.clear();
    return prog_;
  }

 private:
  bool coin(double p) { return std::bernoulli_distribution(p)(rng_); }
  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng_); }

  int push(const Node& node) {
    prog_.body.nodes.push_back(node);
    prog_.body.names.emplace_back();
    return static_cast<int>(prog_.body.nodes.size() - 1);
  }

  int add(PrimOp op, std::initializer_list<int> ins) {
    Node node{.op = op};
    std::array<ValueType, 3> types{};
    int a = 0;
    for (int in : ins) {
      node.inputs[a] = in;
      types[a] = prog_.body.nodes[in].type;
      ++a;
    }
    node.type = *infer_type(op, std::span(types.data(), a));
    return push(node);
  }

  int constant(double v) {
    return push(Node{.op = PrimOp::Constant, .type = ValueType::Scalar, .constant = v});
  }

  // Prefers recent nodes so the graph grows deep rather than wide.
  int pick(ValueType t) {
    std::vector<int> pool;
    const auto& nodes = prog_.body.nodes;
    for (int i = 0; i < static_cast<int>(nodes.size()); ++i)
      if (nodes[i].type == t) pool.push_back(i);
    if (pool.empty()) return constant(uniform(-2.0, 2.0));
    if (coin(0.6)) {
      const int window = std::min<int>(4, static_cast<int>(pool.size()));
      return pool[pool.size() - 1 - std::uniform_int_distribution<int>(0, window - 1)(rng_)];
    }
    return pool[std::uniform_int_distribution<std::size_t>(0, pool.size() - 1)(rng_)];
  }

  ValueType any_type() { return coin(0.5) ? ValueType::Matrix : ValueType::Scalar; }

  // (0.5, 1.5) elementwise
  int positive(int x) {
    if (!opt_.conditioned) return x;
    const int s = add(PrimOp::Sigmoid, {x});
    return add(PrimOp::Add, {s, constant(0.5)});
  }

  // 2I + 0.3 tanh(X): diagonally dominant, singular values >= 1.1
  int well_posed(int x) {
    if (!opt_.conditioned) return x;
    const int eye = add(PrimOp::Scale, {constant(2.0), add(PrimOp::Identity, {})});
    const int t = add(PrimOp::Scale, {constant(0.3), add(PrimOp::Tanh, {x})});
    return add(PrimOp::Add, {eye, t});
  }

  void step() {
    const auto op =
        kComputedOps[std::uniform_int_distribution<std::size_t>(0, kComputedOps.size() - 1)(rng_)];
    switch (op) {
      case PrimOp::Constant: constant(uniform(-5.0, 5.0)); return;
      case PrimOp::Dim:
      case PrimOp::Identity: add(op, {}); return;
      case PrimOp::Add:
      case PrimOp::Sub:
      case PrimOp::Min:
      case PrimOp::Max: {
        const int a = pick(any_type());
        add(op, {a, pick(any_type())});
        return;
      }
      case PrimOp::Mul: {
        const ValueType t = any_type();
        const int a = pick(t);
        add(op, {a, pick(t)});
        return;
      }
      case PrimOp::Scale: {
        const int s = pick(ValueType::Scalar);
        const int m = pick(ValueType::Matrix);
        if (coin(0.5)) {
          add(op, {s, m});
        } else {
          add(op, {m, s});
        }
        return;
      }
      case PrimOp::Div: {
        const int a = pick(any_type());
        add(op, {a, positive(pick(any_type()))});
        return;
      }
      case PrimOp::Pow: {
        const int base = positive(pick(any_type()));
        add(op, {base, pick(any_type())});
        return;
      }
      case PrimOp::Clamp: {
        const int x = pick(any_type());
        const int lo = pick(any_type());
        add(op, {x, lo, pick(any_type())});
        return;
      }
      case PrimOp::Exp:
        add(op, {opt_.conditioned ? add(PrimOp::Tanh, {pick(any_type())}) : pick(any_type())});
        return;
      case PrimOp::Log:
      case PrimOp::Sqrt: add(op, {positive(pick(any_type()))}); return;
      case PrimOp::Neg:
      case PrimOp::Tanh:
      case PrimOp::Sigmoid:
      case PrimOp::Relu: add(op, {pick(any_type())}); return;
      case PrimOp::Matmul: {
        const int a = pick(ValueType::Matrix);
        add(op, {a, pick(ValueType::Matrix)});
        return;
      }
      case PrimOp::Inverse:
      case PrimOp::PolarR:
      case PrimOp::PolarS: add(op, {well_posed(pick(ValueType::Matrix))}); return;
      case PrimOp::Transpose:
      case PrimOp::Det:
      case PrimOp::Trace:
      case PrimOp::SymEigvals: add(op, {pick(ValueType::Matrix)}); return;
      case PrimOp::SymReconstruct: {
        const int s = pick(ValueType::Matrix);
        add(op, {s, pick(ValueType::Matrix)});
        return;
      }
      default: return;
    }
  }

  std::mt19937_64& rng_;
  RandomProgramOptions opt_;
  LawProgram prog_;
};

template <int Dim>
bool conditioned_at(const LawProgram& program, const Mat& F, std::span<const double> theta) {
  Evaluator<Dim> ev(program);
  try {
    ev.forward(F, theta);
  } catch (const EvalError&) {
    return false;
  }
  constexpr double kMargin = 1e-3;
  constexpr double kDomain = 0.05;
  constexpr double kBound = 1e8;
  const auto& nodes = program.body.nodes;
  const auto at = [&](int node, int r, int c) {
    return ev.type(node) == ValueType::Scalar ? ev.scalar(node) : ev.matrix(node)(r, c);
  };
  for (int i = 0; i < static_cast<int>(nodes.size()); ++i) {
    const Node& n = nodes[i];
    const int cells = n.type == ValueType::Scalar ? 1 : Dim * Dim;
    for (int e = 0; e < cells; ++e) {
      const int r = e % Dim;
      const int c = e / Dim;
      if (std::abs(at(i, r, c)) > kBound) return false;
      const double x = n.arity() > 0 ? at(n.inputs[0], r, c) : 0.0;
      const double y = n.arity() > 1 ? at(n.inputs[1], r, c) : 0.0;
      const double z = n.arity() > 2 ? at(n.inputs[2], r, c) : 0.0;
      switch (n.op) {
        case PrimOp::Log:
        case PrimOp::Sqrt:
        case PrimOp::Pow:
          if (x < kDomain) return false;
          break;
        case PrimOp::Div:
          if (std::abs(y) < kDomain) return false;
          break;
        case PrimOp::Relu:
          if (std::abs(x) < kMargin) return false;
          break;
        case PrimOp::Min:
        case PrimOp::Max:
          if (std::abs(x - y) < kMargin) return false;
          break;
        case PrimOp::Clamp:
          if (std::abs(x - y) < kMargin || std::abs(std::max(x, y) - z) < kMargin) return false;
          break;
        default: break;
      }
    }
    switch (n.op) {
      case PrimOp::Inverse:
        if (std::abs(ev.matrix(n.inputs[0]).determinant()) < kDomain) return false;
        break;
      case PrimOp::PolarR:
      case PrimOp::PolarS:
        if (ev.spectrum(i).minCoeff() < kDomain) return false;
        break;
      case PrimOp::SymEigvals:
      case PrimOp::SymReconstruct: {
        const auto& lam = ev.spectrum(i);
        for (int k = 0; k + 1 < Dim; ++k)
          if (lam(k + 1) - lam(k) < kDomain) return false;
        break;
      }
      default: break;
    }
  }
  return true;
}

}  // namespace

LawProgram random_program(std::mt19937_64& rng, const RandomProgramOptions& options) {
  return Builder(rng, options).build();
}

bool well_conditioned(const LawProgram& program, const Mat& F, std::span<const double> theta) {
  return F.rows() == 2 ? conditioned_at<2>(program, F, theta) : conditioned_at<3>(program, F, theta);
}

}  // namespace sga::dsl
