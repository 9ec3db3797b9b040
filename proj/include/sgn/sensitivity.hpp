#pragma once

#include "sgn/linear_solvers.hpp"
#include "sgn/problem.hpp"

namespace sgn {

/// Gauss-Newton blocks: A n_x x n_x, B n_p x n_x, C n_p x n_p.
struct GnBlocks {
  CscMatrix A;
  CscMatrix B;
  CscMatrix C;
};

// Factorizes dc/dx, translating a singular factorization into
// ErrorKind::SingularConstraintJacobian.
SparseFactorization factor_constraint_jacobian(const CscMatrix& dcdx);

/// S = dx/dp = -(dc/dx)^{-1} dc/dp, one factorization and n_p
/// back-substitutions.
DenseMatrix sensitivity_matrix(const EquilibriumProblem& prob, const Vector& x, const Vector& p);

/// df/dp through a single transposed solve.
Vector adjoint_gradient(const EquilibriumProblem& prob, const Vector& x, const Vector& p);

/// -(dc/dx)^{-T} (df/dx)^T.
Vector adjoint_multipliers(const EquilibriumProblem& prob, const Vector& x, const Vector& p);

GnBlocks gn_blocks(const EquilibriumProblem& prob, const Vector& x, const Vector& p);

struct DenseGnHessian {
  DenseMatrix hessian;
  double sensitivity_seconds = 0.0;
  double product_seconds = 0.0;
};

/// H = S^T A S + B S + S^T B^T + C, formed densely.
DenseGnHessian dense_gn_hessian_timed(const EquilibriumProblem& prob, const Vector& x,
                                      const Vector& p);
DenseMatrix dense_gn_hessian(const EquilibriumProblem& prob, const Vector& x, const Vector& p);
DenseMatrix dense_gn_hessian(const GnBlocks& blocks, const DenseMatrix& S);

/// Extended sparse system with right-hand side (0, -df/dp, 0).
KktSystem assemble_sgn(const EquilibriumProblem& prob, const Vector& x, const Vector& p,
                       const GnBlocks& blocks, const Vector& gradient);
KktSystem assemble_sgn(const EquilibriumProblem& prob, const Vector& x, const Vector& p,
                       const GnBlocks& blocks);

struct KktStep {
  Vector dx;
  Vector dp;
  Vector dlambda;
  SolveReport report;
};

KktStep split_kkt_solution(const KktSystem& k, const KktSolution& s);
KktStep solve_sgn(const KktSystem& k, const StabilizationConfig& cfg = {});

/// Block substitution for B = 0, C = 0:
///   dp = (dc/dp)^{-1} (dc/dx) A^{-1} (df/dx)^T.
Vector solve_block_gn(const EquilibriumProblem& prob, const Vector& x, const Vector& p,
                      const CscMatrix& A);

/// Generalized Gauss-Newton blocks: the partial Hessians of f.
GnBlocks ggn_blocks(const EquilibriumProblem& prob, const Vector& x, const Vector& p);

/// Newton system on the Lagrangian f + lambda^T c with right-hand side
/// -(grad_x L, grad_p L, c).
KktSystem assemble_kkt_newton(const EquilibriumProblem& prob, const Vector& x, const Vector& p,
                              const Vector& lambda);

/// Exact reduced Hessian d^2 f / dp^2 built from explicit second-order
/// sensitivities. Costs n_c constraint-Hessian evaluations and n_p^2 solves;
/// meant for small problems.
DenseMatrix dense_full_hessian(const EquilibriumProblem& prob, const Vector& x, const Vector& p);

}  // namespace sgn
