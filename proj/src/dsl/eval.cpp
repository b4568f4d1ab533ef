#include "sga/dsl/eval.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace sga::dsl {

namespace {

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double apply(PrimOp op, double x, double y, double z) {
  switch (op) {
    case PrimOp::Add: return x + y;
    case PrimOp::Sub: return x - y;
    case PrimOp::Mul:
    case PrimOp::Scale: return x * y;
    case PrimOp::Div: return x / y;
    case PrimOp::Neg: return -x;
    case PrimOp::Exp: return std::exp(x);
    case PrimOp::Log: return std::log(x);
    case PrimOp::Sqrt: return std::sqrt(x);
    case PrimOp::Tanh: return std::tanh(x);
    case PrimOp::Sigmoid: return sigmoid(x);
    case PrimOp::Relu: return x > 0 ? x : 0.0;
    case PrimOp::Min: return x <= y ? x : y;
    case PrimOp::Max: return x >= y ? x : y;
    case PrimOp::Clamp: {
      const double lo = x >= y ? x : y;
      return lo <= z ? lo : z;
    }
    case PrimOp::Pow: return std::pow(x, y);
    default: break;
  }
  throw std::logic_error("not an elementwise op");
}

struct Partials {
  double dx = 0.0;
  double dy = 0.0;
  double dz = 0.0;
};

Partials partials(PrimOp op, double x, double y, double z, double out) {
  switch (op) {
    case PrimOp::Add: return {1.0, 1.0};
    case PrimOp::Sub: return {1.0, -1.0};
    case PrimOp::Mul:
    case PrimOp::Scale: return {y, x};
    case PrimOp::Div: return {1.0 / y, -out / y};
    case PrimOp::Neg: return {-1.0};
    case PrimOp::Exp: return {out};
    case PrimOp::Log: return {1.0 / x};
    case PrimOp::Sqrt: return {0.5 / out};
    case PrimOp::Tanh: return {1.0 - out * out};
    case PrimOp::Sigmoid: return {out * (1.0 - out)};
    case PrimOp::Relu: return {x > 0 ? 1.0 : 0.0};
    case PrimOp::Min: return x <= y ? Partials{1.0, 0.0} : Partials{0.0, 1.0};
    case PrimOp::Max: return x >= y ? Partials{1.0, 0.0} : Partials{0.0, 1.0};
    case PrimOp::Clamp: {
      const bool took_x = x >= y;
      const double lo = took_x ? x : y;
      if (lo <= z) return took_x ? Partials{1.0, 0.0, 0.0} : Partials{0.0, 1.0, 0.0};
      return {0.0, 0.0, 1.0};
    }
    case PrimOp::Pow: {
      const double dx = y == 0.0 ? 0.0 : y * std::pow(x, y - 1.0);
      const double dy = x > 0 ? out * std::log(x) : 0.0;
      return {dx, dy};
    }
    default: break;
  }
  throw std::logic_error("not an elementwise op");
}

// Gradient of det(A): the cofactor matrix, valid for singular A as well.
template <int Dim>
Eigen::Matrix<double, Dim, Dim> cofactor(const Eigen::Matrix<double, Dim, Dim>& a) {
  Eigen::Matrix<double, Dim, Dim> c;
  if constexpr (Dim == 2) {
    c << a(1, 1), -a(1, 0), -a(0, 1), a(0, 0);
  } else {
    const Eigen::Vector3d a0 = a.col(0), a1 = a.col(1), a2 = a.col(2);
    c.col(0) = a1.cross(a2);
    c.col(1) = a2.cross(a0);
    c.col(2) = a0.cross(a1);
  }
  return c;
}

template <class M>
bool all_finite(const M& m) {
  return m.allFinite();
}

bool all_finite(double v) { return std::isfinite(v); }

}  // namespace

template <int Dim>
Evaluator<Dim>::Evaluator(const LawProgram& program) : program_(&program) {
  const auto n = program.body.nodes.size();
  s_.assign(n, 0.0);
  m_.assign(n, Matrix::Zero());
  aux_.resize(n);
  sbar_.assign(n, 0.0);
  mbar_.assign(n, Matrix::Zero());
}

template <int Dim>
void Evaluator<Dim>::fail(EvalErrorKind kind, int node, const char* what) const {
  throw EvalError(kind, node,
                  std::string(what) + " (" +
                      std::string(op_name(program_->body.nodes[node].op)) + ")");
}

template <int Dim>
const typename Evaluator<Dim>::Matrix& Evaluator<Dim>::forward(const Matrix& F,
                                                               std::span<const double> theta) {
  if (theta.size() != program_->params.size())
    throw std::invalid_argument("theta has " + std::to_string(theta.size()) +
                                " entries, program declares " +
                                std::to_string(program_->params.size()));
  input_ = F;
  theta_ = theta;
  const int n = static_cast<int>(program_->body.nodes.size());
  for (int i = 0; i < n; ++i) forward_node(i);
  return m_[program_->body.output];
}

template <int Dim>
void Evaluator<Dim>::sym_eigen(int i, const Matrix& a) {
  const Matrix sym = 0.5 * (a + a.transpose());
  Eigen::SelfAdjointEigenSolver<Matrix> es(sym);
  if (es.info() != Eigen::Success) fail(EvalErrorKind::NonFiniteResult, i, "eigensolver failed");
  aux_[i].q = es.eigenvectors();
  aux_[i].lambda = es.eigenvalues();
}

template <int Dim>
void Evaluator<Dim>::polar(int i, const Matrix& a) {
  if (std::abs(a.determinant()) < kSingularDetEps)
    fail(EvalErrorKind::SingularMatrix, i, "polar decomposition of a singular matrix");
  const Matrix c = a.transpose() * a;
  Eigen::SelfAdjointEigenSolver<Matrix> es(c);
  if (es.info() != Eigen::Success) fail(EvalErrorKind::NonFiniteResult, i, "eigensolver failed");
  Aux& x = aux_[i];
  x.q = es.eigenvectors();
  x.lambda = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  if (x.lambda.minCoeff() <= 0.0)
    fail(EvalErrorKind::SingularMatrix, i, "polar decomposition of a singular matrix");
  x.s = x.q * x.lambda.asDiagonal() * x.q.transpose();
  x.r = a * (x.q * x.lambda.cwiseInverse().asDiagonal() * x.q.transpose());
}

template <int Dim>
void Evaluator<Dim>::elementwise_forward(int i) {
  const Node& node = program_->body.nodes[i];
  const auto& nodes = program_->body.nodes;
  const int arity = node.arity();
  const auto fetch = [&](int k, int r, int c) {
    const auto in = node.inputs[k];
    return nodes[in].type == ValueType::Scalar ? s_[in] : m_[in](r, c);
  };

  if (node.op == PrimOp::Div) {
    const Node& den = nodes[node.inputs[1]];
    if (den.op == PrimOp::Det && std::abs(s_[node.inputs[1]]) < kSingularDetEps)
      fail(EvalErrorKind::SingularMatrix, i, "division by a vanishing determinant");
  }

  if (node.type == ValueType::Scalar) {
    const double x = fetch(0, 0, 0);
    const double y = arity > 1 ? fetch(1, 0, 0) : 0.0;
    const double z = arity > 2 ? fetch(2, 0, 0) : 0.0;
    s_[i] = apply(node.op, x, y, z);
    return;
  }
  Matrix& out = m_[i];
  for (int c = 0; c < Dim; ++c) {
    for (int r = 0; r < Dim; ++r) {
      const double x = fetch(0, r, c);
      const double y = arity > 1 ? fetch(1, r, c) : 0.0;
      const double z = arity > 2 ? fetch(2, r, c) : 0.0;
      out(r, c) = apply(node.op, x, y, z);
    }
  }
}

template <int Dim>
void Evaluator<Dim>::forward_node(int i) {
  const Node& node = program_->body.nodes[i];
  const auto a = node.inputs[0];
  const auto b = node.inputs[1];
  switch (node.op) {
    case PrimOp::Input: m_[i] = input_; break;
    case PrimOp::Param: s_[i] = theta_[node.param]; break;
    case PrimOp::Constant: s_[i] = node.constant; break;
    case PrimOp::Dim: s_[i] = Dim; break;
    case PrimOp::Identity: m_[i].setIdentity(); break;
    case PrimOp::Matmul: m_[i].noalias() = m_[a] * m_[b]; break;
    case PrimOp::Transpose: m_[i] = m_[a].transpose(); break;
    case PrimOp::Inverse:
      if (std::abs(m_[a].determinant()) < kSingularDetEps)
        fail(EvalErrorKind::SingularMatrix, i, "inverse of a singular matrix");
      m_[i] = m_[a].inverse();
      break;
    case PrimOp::Det: s_[i] = m_[a].determinant(); break;
    case PrimOp::Trace: s_[i] = m_[a].trace(); break;
    case PrimOp::PolarR:
      polar(i, m_[a]);
      m_[i] = aux_[i].r;
      break;
    case PrimOp::PolarS:
      polar(i, m_[a]);
      m_[i] = aux_[i].s;
      break;
    case PrimOp::SymEigvals:
      sym_eigen(i, m_[a]);
      m_[i] = aux_[i].lambda.asDiagonal();
      break;
    case PrimOp::SymReconstruct:
      sym_eigen(i, m_[a]);
      m_[i] = aux_[i].q * m_[b].diagonal().asDiagonal() * aux_[i].q.transpose();
      break;
    default: elementwise_forward(i); break;
  }
  const bool finite = node.type == ValueType::Scalar ? all_finite(s_[i]) : all_finite(m_[i]);
  if (!finite) fail(EvalErrorKind::NonFiniteResult, i, "non-finite value");
}

template <int Dim>
void Evaluator<Dim>::elementwise_backward(int i) {
  const Node& node = program_->body.nodes[i];
  const auto& nodes = program_->body.nodes;
  const int arity = node.arity();
  const auto fetch = [&](int k, int r, int c) {
    const auto in = node.inputs[k];
    return nodes[in].type == ValueType::Scalar ? s_[in] : m_[in](r, c);
  };
  const auto scatter = [&](int k, int r, int c, double v) {
    const auto in = node.inputs[k];
    if (nodes[in].type == ValueType::Scalar) {
      sbar_[in] += v;
    } else {
      mbar_[in](r, c) += v;
    }
  };
  const auto visit = [&](int r, int c, double out, double g) {
    if (g == 0.0) return;
    const double x = fetch(0, r, c);
    const double y = arity > 1 ? fetch(1, r, c) : 0.0;
    const double z = arity > 2 ? fetch(2, r, c) : 0.0;
    const Partials p = partials(node.op, x, y, z, out);
    scatter(0, r, c, p.dx * g);
    if (arity > 1) scatter(1, r, c, p.dy * g);
    if (arity > 2) scatter(2, r, c, p.dz * g);
  };

  if (node.type == ValueType::Scalar) {
    visit(0, 0, s_[i], sbar_[i]);
    return;
  }
  for (int c = 0; c < Dim; ++c)
    for (int r = 0; r < Dim; ++r) visit(r, c, m_[i](r, c), mbar_[i](r, c));
}

template <int Dim>
void Evaluator<Dim>::backward_node(int i) {
  const Node& node = program_->body.nodes[i];
  const auto a = node.inputs[0];
  const auto b = node.inputs[1];
  const Matrix& g = mbar_[i];
  switch (node.op) {
    case PrimOp::Input:
    case PrimOp::Param:
    case PrimOp::Constant:
    case PrimOp::Dim:
    case PrimOp::Identity: break;
    case PrimOp::Matmul:
      mbar_[a].noalias() += g * m_[b].transpose();
      mbar_[b].noalias() += m_[a].transpose() * g;
      break;
    case PrimOp::Transpose: mbar_[a] += g.transpose(); break;
    case PrimOp::Inverse: {
      const Matrix yt = m_[i].transpose();
      mbar_[a].noalias() -= yt * g * yt;
      break;
    }
    case PrimOp::Det: mbar_[a] += sbar_[i] * cofactor<Dim>(m_[a]); break;
    case PrimOp::Trace: mbar_[a].diagonal().array() += sbar_[i]; break;
    case PrimOp::PolarR:
    case PrimOp::PolarS: {
      // F = R S. With M = Rᵀ dF, the rotation rate Ω = Rᵀ dR solves
      // Ω S + S Ω = M - Mᵀ, i.e. divides by σ_i + σ_j in the eigenbasis of S.
      const Aux& x = aux_[i];
      Matrix denom;
      for (int r = 0; r < Dim; ++r)
        for (int c = 0; c < Dim; ++c) denom(r, c) = x.lambda(r) + x.lambda(c);
      if (denom.minCoeff() < kEigenGapEps)
        fail(EvalErrorKind::DegenerateDecomposition, i, "vanishing singular values");
      const auto solve = [&](const Matrix& rhs) -> Matrix {
        const Matrix t = (x.q.transpose() * rhs * x.q).cwiseQuotient(denom);
        return x.q * t * x.q.transpose();
      };
      Matrix acc;
      Matrix lhs;
      if (node.op == PrimOp::PolarR) {
        lhs = x.r.transpose() * g;
        acc = solve(lhs - lhs.transpose());
      } else {
        lhs = -g * x.s;
        acc = g + solve(lhs - lhs.transpose());
      }
      mbar_[a].noalias() += x.r * acc;
      break;
    }
    case PrimOp::SymEigvals: {
      const Aux& x = aux_[i];
      mbar_[a].noalias() += x.q * g.diagonal().asDiagonal() * x.q.transpose();
      break;
    }
    case PrimOp::SymReconstruct: {
      const Aux& x = aux_[i];
      const Matrix gt = x.q.transpose() * g * x.q;
      mbar_[b].diagonal() += gt.diagonal();
      const Vector d = m_[b].diagonal();
      Matrix h = Matrix::Zero();
      for (int r = 0; r < Dim; ++r) {
        for (int c = 0; c < Dim; ++c) {
          if (r == c) continue;
          double gap = x.lambda(c) - x.lambda(r);
          // near-degenerate spectrum: clamp the gap, keeping its sign
          if (std::abs(gap) < kEigenGapEps) gap = std::signbit(gap) ? -kEigenGapEps : kEigenGapEps;
          h(r, c) = gt(r, c) * (d(c) - d(r)) / gap;
        }
      }
      const Matrix full = x.q * h * x.q.transpose();
      mbar_[a] += 0.5 * (full + full.transpose());
      break;
    }
    default: elementwise_backward(i); break;
  }
  for (int k = 0; k < node.arity(); ++k) {
    const auto in = node.inputs[k];
    const bool finite =
        program_->body.nodes[in].type == ValueType::Scalar ? all_finite(sbar_[in]) : all_finite(mbar_[in]);
    if (!finite) fail(EvalErrorKind::NonFiniteResult, i, "non-finite gradient");
  }
}

template <int Dim>
void Evaluator<Dim>::vjp(const Matrix& F, std::span<const double> theta, const Matrix& cotangent,
                         Matrix& dF, std::span<double> dtheta) {
  if (dtheta.size() != program_->params.size())
    throw std::invalid_argument("dtheta length does not match the parameter count");
  if (!cotangent.allFinite()) throw std::invalid_argument("cotangent must be finite");
  forward(F, theta);
  std::fill(sbar_.begin(), sbar_.end(), 0.0);
  for (auto& m : mbar_) m.setZero();
  mbar_[program_->body.output] = cotangent;
  const int n = static_cast<int>(program_->body.nodes.size());
  for (int i = n - 1; i >= 0; --i) backward_node(i);
  dF = mbar_[0];
  for (std::size_t k = 0; k < dtheta.size(); ++k) dtheta[k] += sbar_[1 + k];
}

template class Evaluator<2>;
template class Evaluator<3>;

namespace {

template <int Dim>
Mat forward_fixed(const LawProgram& program, const Mat& F, std::span<const double> theta) {
  Evaluator<Dim> ev(program);
  return ev.forward(F, theta);
}

template <int Dim>
Vjp vjp_fixed(const LawProgram& program, const Mat& F, std::span<const double> theta,
              const Mat& cot) {
  Evaluator<Dim> ev(program);
  typename Evaluator<Dim>::Matrix dF;
  Vjp out;
  out.dtheta.assign(program.params.size(), 0.0);
  ev.vjp(F, theta, cot, dF, out.dtheta);
  out.dF = dF;
  return out;
}

void check_square(const Mat& F) {
  if (F.rows() != F.cols() || (F.rows() != 2 && F.rows() != 3))
    throw std::invalid_argument("F must be 2x2 or 3x3");
  if (!F.allFinite()) throw std::invalid_argument("F must be finite");
}

}  // namespace

Mat eval_forward(const LawProgram& program, const Mat& F, std::span<const double> theta) {
  check_square(F);
  return F.rows() == 2 ? forward_fixed<2>(program, F, theta) : forward_fixed<3>(program, F, theta);
}

Vjp eval_vjp(const LawProgram& program, const Mat& F, std::span<const double> theta,
             const Mat& cotangent) {
  check_square(F);
  if (cotangent.rows() != F.rows() || cotangent.cols() != F.cols())
    throw std::invalid_argument("cotangent shape must match F");
  return F.rows() == 2 ? vjp_fixed<2>(program, F, theta, cotangent)
                       : vjp_fixed<3>(program, F, theta, cotangent);
}

}  // namespace sga::dsl
