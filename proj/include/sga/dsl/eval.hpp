#pragma once

#include <Eigen/Dense>
#include <span>
#include <vector>

#include "sga/dsl/ast.hpp"

namespace sga::dsl {

/// Dimension-generic matrix used at the public API boundary (D = 2 or 3).
using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::ColMajor, 3, 3>;

/// Interpreter for one program at a fixed dimension. Holds per-node scratch so
/// repeated evaluations (one per particle per substep) do not allocate.
/// Not thread-safe; use one instance per thread.
template <int Dim>
class Evaluator {
 public:
  using Matrix = Eigen::Matrix<double, Dim, Dim>;
  using Vector = Eigen::Matrix<double, Dim, 1>;

  explicit Evaluator(const LawProgram& program);

  /// Evaluates every node; returns the output. Throws EvalError.
  const Matrix& forward(const Matrix& F, std::span<const double> theta);

  /// Reverse sweep for ⟨cotangent, output⟩. Runs its own forward pass first.
  /// dF is overwritten; dtheta is accumulated into (length = param count).
  void vjp(const Matrix& F, std::span<const double> theta, const Matrix& cotangent, Matrix& dF,
           std::span<double> dtheta);

  const LawProgram& program() const { return *program_; }
  /// Output of the most recent forward pass (vjp included).
  const Matrix& output() const { return m_[program_->body.output]; }

  // Node values from the most recent forward pass.
  ValueType type(int node) const { return program_->body.nodes[node].type; }
  double scalar(int node) const { return s_[node]; }
  const Matrix& matrix(int node) const { return m_[node]; }
  /// Eigenvalues (ascending) cached by decomposition nodes: singular values
  /// for polar_r/polar_s, symmetric-part eigenvalues for the sym_* ops.
  const Vector& spectrum(int node) const { return aux_[node].lambda; }

 private:
  struct Aux {
    Matrix q;       // eigenvectors, columns
    Vector lambda;  // ascending
    Matrix r;       // polar rotation
    Matrix s;       // polar stretch
  };

  void forward_node(int i);
  void backward_node(int i);
  void elementwise_forward(int i);
  void elementwise_backward(int i);
  void polar(int i, const Matrix& a);
  void sym_eigen(int i, const Matrix& a);
  [[noreturn]] void fail(EvalErrorKind kind, int node, const char* what) const;

  const LawProgram* program_;
  Matrix input_;
  std::span<const double> theta_;
  std::vector<double> s_;
  std::vector<Matrix> m_;
  std::vector<Aux> aux_;
  std::vector<double> sbar_;
  std::vector<Matrix> mbar_;
};

extern template class Evaluator<2>;
extern template class Evaluator<3>;

/// τ for elastic laws, F_corrected for plastic laws. D is taken from F.
Mat eval_forward(const LawProgram& program, const Mat& F, std::span<const double> theta);

struct Vjp {
  Mat dF;
  std::vector<double> dtheta;
};

Vjp eval_vjp(const LawProgram& program, const Mat& F, std::span<const double> theta,
             const Mat& cotangent);

}  // namespace sga::dsl
