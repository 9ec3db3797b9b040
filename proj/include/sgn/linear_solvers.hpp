#pragma once

#include <memory>

#include <Eigen/Cholesky>
#include <Eigen/OrderingMethods>
#include <Eigen/SparseLU>

#include "sgn/sparse.hpp"

namespace sgn {

/// Assembled saddle-point system. Rows and columns are ordered as state
/// block (n_x), parameter block (n_p), multiplier block (n_c).
struct KktSystem {
  CscMatrix matrix;
  Vector rhs;
  Index nx = 0;
  Index np = 0;
  Index nc = 0;

  Index dimension() const { return nx + np + nc; }
  auto x_block(const Vector& v) const { return v.segment(0, nx); }
  auto p_block(const Vector& v) const { return v.segment(nx, np); }
  auto lambda_block(const Vector& v) const { return v.segment(nx + np, nc); }
};

struct StabilizationConfig {
  double eps_x = 1e-6;
  double eps_lambda = 1e-6;
  double refine_tolerance = 1e-10;  // required relative residual
  double refine_goal = 1e-14;       // pursued while refinement keeps improving
  int max_refine_iters = 50;
  // Return the best iterate instead of throwing NoConvergence.
  bool accept_unconverged = false;
};

struct SolveReport {
  double relative_residual = 0.0;
  int refine_iterations = 0;
  double factor_seconds = 0.0;
  double solve_seconds = 0.0;
  Index fill_nnz = 0;
};

/// Sparse LU with an approximate-minimum-degree column ordering. Immutable
/// once built; solves are safe to issue from several threads.
class SparseFactorization {
 public:
  static SparseFactorization factor(const CscMatrix& m);

  Vector solve(const Vector& b) const;
  DenseMatrix solve(const DenseMatrix& b) const;
  Vector solve_transpose(const Vector& b) const;

  Index dimension() const { return dim_; }
  Index fill_nnz() const { return fill_nnz_; }

 private:
  using Lu = Eigen::SparseLU<CscMatrix, Eigen::COLAMDOrdering<int>>;
  std::shared_ptr<Lu> lu_;
  Index dim_ = 0;
  Index fill_nnz_ = 0;
};

inline SparseFactorization factor_sparse(const CscMatrix& m) { return SparseFactorization::factor(m); }

/// Adds eps_x to the first n_x diagonal entries and subtracts eps_lambda from
/// the last n_c ones.
CscMatrix stabilized_matrix(const KktSystem& k, const StabilizationConfig& cfg);

struct KktSolution {
  Vector solution;
  SolveReport report;
};

/// Solves the unstabilized system by BiCGSTAB preconditioned with the
/// factorization of the stabilized matrix.
KktSolution solve_kkt_stabilized(const KktSystem& k, const Vector& rhs,
                                 const StabilizationConfig& cfg = {});
inline KktSolution solve_kkt_stabilized(const KktSystem& k, const StabilizationConfig& cfg = {}) {
  return solve_kkt_stabilized(k, k.rhs, cfg);
}

class DenseFactorization {
 public:
  Vector solve(const Vector& b) const { return llt_.solve(b); }
  Index dimension() const { return llt_.rows(); }
  const Eigen::LLT<DenseMatrix>& llt() const { return llt_; }

 private:
  friend DenseFactorization cholesky_dense(const DenseMatrix& h);
  Eigen::LLT<DenseMatrix> llt_;
};

DenseFactorization cholesky_dense(const DenseMatrix& h);

/// Matrix-free symmetric operator.
class ReducedOperator {
 public:
  virtual ~ReducedOperator() = default;
  virtual Index dimension() const = 0;
  virtual Vector apply(const Vector& y) const = 0;
};

/// y -> (S^T A S + B S + S^T B^T + C) y with S = -(dc/dx)^{-1} dc/dp applied
/// through back-substitutions against a factorization of dc/dx.
class GnReducedOperator : public ReducedOperator {
 public:
  GnReducedOperator(CscMatrix A, CscMatrix B, CscMatrix C, CscMatrix dcdp,
                    SparseFactorization dcdx_factor);
  Index dimension() const override { return C.rows(); }
  Vector apply(const Vector& y) const override;

  // S y and S^T z.
  Vector sensitivity_times(const Vector& y) const;
  Vector sensitivity_transpose_times(const Vector& z) const;

 private:
  CscMatrix A, B, C, dcdp;
  SparseFactorization dcdx_factor;
};

class DenseOperator : public ReducedOperator {
 public:
  explicit DenseOperator(DenseMatrix h) : h_(std::move(h)) {}
  Index dimension() const override { return h_.rows(); }
  Vector apply(const Vector& y) const override { return h_ * y; }

 private:
  DenseMatrix h_;
};

struct CgResult {
  Vector solution;
  SolveReport report;
  int iterations = 0;
};

/// Thrown when p^T H p <= 0 is met; carries the iterate reached so far.
class NegativeCurvatureError : public Error {
 public:
  NegativeCurvatureError(Vector last_iterate, int iteration);
  Vector last_iterate;
  int iteration;
};

/// Conjugate gradients until ||H x - rhs|| <= eta ||rhs||. max_iters <= 0
/// selects 10 * dimension.
CgResult cg_reduced(const ReducedOperator& op, const Vector& rhs, double eta = 1e-3,
                    int max_iters = 0);

}  // namespace sgn
