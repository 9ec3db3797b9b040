#include "sgn/sensitivity.hpp"

#include "sgn/timer.hpp"

namespace sgn {

namespace {

Error capability(const std::string& what) { return Error(ErrorKind::CapabilityMissing, what); }

CscMatrix weighted_gram(const CscMatrix& left, const Vector& w, const CscMatrix& right) {
  // left^T diag(w) right
  CscMatrix wr = w.asDiagonal() * right;
  CscMatrix out = CscMatrix(left.transpose()) * wr;
  out.prune(0.0);
  out.makeCompressed();
  return out;
}

void check_point(const EquilibriumProblem& prob, const Vector& x, const Vector& p) {
  require_dims(x.size() == prob.num_states(), "state vector has size " + std::to_string(x.size()) +
                                                  ", expected " + std::to_string(prob.num_states()));
  require_dims(p.size() == prob.num_params(), "parameter vector has size " +
                                                  std::to_string(p.size()) + ", expected " +
                                                  std::to_string(prob.num_params()));
}

}  // namespace

Vector EquilibriumProblem::residuals(const Vector&, const Vector&) const {
  throw capability(name() + " has no least-squares residuals");
}
Vector EquilibriumProblem::residual_weights() const {
  throw capability(name() + " has no least-squares residuals");
}
CscMatrix EquilibriumProblem::residual_jacobian_x(const Vector&, const Vector&) const {
  throw capability(name() + " has no least-squares residuals");
}
CscMatrix EquilibriumProblem::residual_jacobian_p(const Vector&, const Vector&) const {
  throw capability(name() + " has no least-squares residuals");
}

double EquilibriumProblem::objective(const Vector& x, const Vector& p) const {
  const Vector r = residuals(x, p);
  return 0.5 * (residual_weights().array() * r.array().square()).sum();
}

Vector EquilibriumProblem::objective_grad_x(const Vector& x, const Vector& p) const {
  const Vector wr = residual_weights().cwiseProduct(residuals(x, p));
  return residual_jacobian_x(x, p).transpose() * wr;
}

Vector EquilibriumProblem::objective_grad_p(const Vector& x, const Vector& p) const {
  const Vector wr = residual_weights().cwiseProduct(residuals(x, p));
  return residual_jacobian_p(x, p).transpose() * wr;
}

HessianBlocks EquilibriumProblem::objective_hessian(const Vector&, const Vector&) const {
  throw capability(name() + " provides no objective Hessian");
}

HessianBlocks EquilibriumProblem::constraint_hessian_contraction(const Vector&, const Vector&,
                                                                 const Vector&) const {
  throw capability(name() + " provides no constraint Hessian contraction");
}

SparseFactorization factor_constraint_jacobian(const CscMatrix& dcdx) {
  try {
    return SparseFactorization::factor(dcdx);
  } catch (const SingularMatrix& e) {
    throw Error(ErrorKind::SingularConstraintJacobian, e.what());
  }
}

DenseMatrix sensitivity_matrix(const EquilibriumProblem& prob, const Vector& x, const Vector& p) {
  check_point(prob, x, p);
  const SparseFactorization f = factor_constraint_jacobian(prob.constraint_jacobian_x(x, p));
  const DenseMatrix dcdp = DenseMatrix(prob.constraint_jacobian_p(x, p));
  DenseMatrix S = -f.solve(dcdp);
  if (!S.allFinite()) throw Error(ErrorKind::SingularConstraintJacobian, "non-finite sensitivities");
  return S;
}

Vector adjoint_gradient(const EquilibriumProblem& prob, const Vector& x, const Vector& p) {
  check_point(prob, x, p);
  const Vector y = adjoint_multipliers(prob, x, p);
  Vector g = prob.objective_grad_p(x, p);
  g += prob.constraint_jacobian_p(x, p).transpose() * y;
  return g;
}

Vector adjoint_multipliers(const EquilibriumProblem& prob, const Vector& x, const Vector& p) {
  check_point(prob, x, p);
  const SparseFactorization f = factor_constraint_jacobian(prob.constraint_jacobian_x(x, p));
  Vector y = -f.solve_transpose(prob.objective_grad_x(x, p));
  if (!y.allFinite()) throw Error(ErrorKind::SingularConstraintJacobian, "non-finite multipliers");
  return y;
}

GnBlocks gn_blocks(const EquilibriumProblem& prob, const Vector& x, const Vector& p) {
  check_point(prob, x, p);
  const Vector w = prob.residual_weights();
  const CscMatrix jx = prob.residual_jacobian_x(x, p);
  const CscMatrix jp = prob.residual_jacobian_p(x, p);
  require_dims(jx.rows() == w.size() && jp.rows() == w.size(),
               "residual Jacobians disagree with the weight vector");
  GnBlocks g;
  g.A = weighted_gram(jx, w, jx);
  g.B = weighted_gram(jp, w, jx);
  g.C = weighted_gram(jp, w, jp);
  return g;
}

DenseMatrix dense_gn_hessian(const GnBlocks& b, const DenseMatrix& S) {
  const DenseMatrix AS = b.A * S;
  DenseMatrix H = S.transpose() * AS;
  const DenseMatrix BS = b.B * S;
  H += BS;
  H += BS.transpose();
  H += DenseMatrix(b.C);
  // Symmetrize round-off.
  H = 0.5 * (H + H.transpose()).eval();
  return H;
}

DenseGnHessian dense_gn_hessian_timed(const EquilibriumProblem& prob, const Vector& x,
                                      const Vector& p) {
  DenseGnHessian out;
  Stopwatch clock;
  const DenseMatrix S = sensitivity_matrix(prob, x, p);
  out.sensitivity_seconds = clock.seconds();
  clock.reset();
  out.hessian = dense_gn_hessian(gn_blocks(prob, x, p), S);
  out.product_seconds = clock.seconds();
  return out;
}

DenseMatrix dense_gn_hessian(const EquilibriumProblem& prob, const Vector& x, const Vector& p) {
  return dense_gn_hessian_timed(prob, x, p).hessian;
}

KktSystem assemble_sgn(const EquilibriumProblem& prob, const Vector& x, const Vector& p,
                       const GnBlocks& blocks, const Vector& gradient) {
  check_point(prob, x, p);
  const Index nx = prob.num_states(), np = prob.num_params();
  require_dims(gradient.size() == np, "assemble_sgn: gradient size mismatch");
  require_dims(blocks.A.rows() == nx && blocks.C.rows() == np && blocks.B.rows() == np &&
                   blocks.B.cols() == nx,
               "assemble_sgn: blocks inconsistent with problem dimensions");
  KktSystem k;
  k.nx = nx;
  k.np = np;
  k.nc = nx;
  k.matrix = stack_kkt_blocks(blocks.A, blocks.B, blocks.C, prob.constraint_jacobian_x(x, p),
                              prob.constraint_jacobian_p(x, p));
  k.rhs = Vector::Zero(k.dimension());
  k.rhs.segment(nx, np) = -gradient;
  return k;
}

KktSystem assemble_sgn(const EquilibriumProblem& prob, const Vector& x, const Vector& p,
                       const GnBlocks& blocks) {
  return assemble_sgn(prob, x, p, blocks, adjoint_gradient(prob, x, p));
}

KktStep split_kkt_solution(const KktSystem& k, const KktSolution& s) {
  KktStep step;
  step.dx = k.x_block(s.solution);
  step.dp = k.p_block(s.solution);
  step.dlambda = k.lambda_block(s.solution);
  step.report = s.report;
  return step;
}

KktStep solve_sgn(const KktSystem& k, const StabilizationConfig& cfg) {
  return split_kkt_solution(k, solve_kkt_stabilized(k, cfg));
}

Vector solve_block_gn(const EquilibriumProblem& prob, const Vector& x, const Vector& p,
                      const CscMatrix& A) {
  check_point(prob, x, p);
  const Index nx = prob.num_states(), np = prob.num_params();
  if (np != prob.num_constraints())
    throw Error(ErrorKind::NonSquareParamJacobian,
                "block solve needs n_p == n_c (" + std::to_string(np) + " vs " +
                    std::to_string(prob.num_constraints()) + ")");
  require_dims(A.rows() == nx && A.cols() == nx, "solve_block_gn: A must be n_x x n_x");
  const Vector fx = prob.objective_grad_x(x, p);
  if (fx.isZero(0.0)) return Vector::Zero(np);
  const Vector dy = SparseFactorization::factor(A).solve(fx);
  const Vector rhs = prob.constraint_jacobian_x(x, p) * dy;
  Vector dp = SparseFactorization::factor(prob.constraint_jacobian_p(x, p)).solve(rhs);
  if (!dp.allFinite()) throw SingularMatrix(-1, "block solve produced non-finite values");
  return dp;
}

GnBlocks ggn_blocks(const EquilibriumProblem& prob, const Vector& x, const Vector& p) {
  check_point(prob, x, p);
  if (!prob.has_objective_hessian()) throw capability(prob.name() + " has no objective Hessian");
  HessianBlocks h = prob.objective_hessian(x, p);
  return GnBlocks{std::move(h.xx), std::move(h.px), std::move(h.pp)};
}

KktSystem assemble_kkt_newton(const EquilibriumProblem& prob, const Vector& x, const Vector& p,
                              const Vector& lambda) {
  check_point(prob, x, p);
  if (!prob.has_objective_hessian() || !prob.has_constraint_hessian())
    throw capability(prob.name() + " lacks second-order evaluators for the KKT system");
  const Index nx = prob.num_states(), np = prob.num_params();
  require_dims(lambda.size() == nx, "assemble_kkt_newton: multiplier size mismatch");
  const HessianBlocks f = prob.objective_hessian(x, p);
  const HessianBlocks c = prob.constraint_hessian_contraction(x, p, lambda);
  const CscMatrix cx = prob.constraint_jacobian_x(x, p);
  const CscMatrix cp = prob.constraint_jacobian_p(x, p);

  KktSystem k;
  k.nx = nx;
  k.np = np;
  k.nc = nx;
  k.matrix = stack_kkt_blocks(CscMatrix(f.xx + c.xx), CscMatrix(f.px + c.px),
                              CscMatrix(f.pp + c.pp), cx, cp);
  k.rhs.resize(k.dimension());
  k.rhs.segment(0, nx) = -(prob.objective_grad_x(x, p) + cx.transpose() * lambda);
  k.rhs.segment(nx, np) = -(prob.objective_grad_p(x, p) + cp.transpose() * lambda);
  k.rhs.segment(nx + np, nx) = -prob.constraints(x, p);
  return k;
}

DenseMatrix dense_full_hessian(const EquilibriumProblem& prob, const Vector& x, const Vector& p) {
  check_point(prob, x, p);
  if (!prob.has_objective_hessian() || !prob.has_constraint_hessian())
    throw capability(prob.name() + " lacks second-order evaluators for the full Hessian");
  const Index nx = prob.num_states(), np = prob.num_params();
  const SparseFactorization cx = factor_constraint_jacobian(prob.constraint_jacobian_x(x, p));
  const DenseMatrix S = -cx.solve(DenseMatrix(prob.constraint_jacobian_p(x, p)));

  const HessianBlocks f = prob.objective_hessian(x, p);
  const DenseMatrix fpx = DenseMatrix(f.px) * S;
  DenseMatrix H = S.transpose() * (DenseMatrix(f.xx) * S) + fpx + fpx.transpose() + DenseMatrix(f.pp);

  // Second total derivative of every c_k(x(p), p) = 0:
  //   T_k + (dc/dx)_k . d2x/dp2 = 0,  T_k = S^T Hxx_k S + Hpx_k S + S^T Hpx_k^T + Hpp_k.
  std::vector<DenseMatrix> T(static_cast<std::size_t>(nx));
  for (Index k = 0; k < nx; ++k) {
    const HessianBlocks ck = prob.constraint_hessian_contraction(x, p, Vector::Unit(nx, k));
    const DenseMatrix hpx_s = DenseMatrix(ck.px) * S;
    T[static_cast<std::size_t>(k)] =
        S.transpose() * (DenseMatrix(ck.xx) * S) + hpx_s + hpx_s.transpose() + DenseMatrix(ck.pp);
  }
  const Vector fx = prob.objective_grad_x(x, p);
  Vector t(nx);
  for (Index i = 0; i < np; ++i)
    for (Index j = 0; j < np; ++j) {
      for (Index k = 0; k < nx; ++k) t(k) = T[static_cast<std::size_t>(k)](i, j);
      const Vector d2x = -cx.solve(t);
      H(i, j) += fx.dot(d2x);
    }
  return H;
}

}  // namespace sgn
