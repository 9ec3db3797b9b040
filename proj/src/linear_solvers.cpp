#include "sgn/linear_solvers.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "sgn/timer.hpp"

namespace sgn {

namespace {

long parse_trailing_index(const std::string& msg) {
  auto pos = msg.find_last_not_of("0123456789");
  if (pos == std::string::npos || pos + 1 >= msg.size()) return -1;
  return std::stol(msg.substr(pos + 1));
}

bool all_finite(const Vector& v) { return v.allFinite(); }

}  // namespace

SparseFactorization SparseFactorization::factor(const CscMatrix& m) {
  require_dims(m.rows() == m.cols(), "factor_sparse: matrix must be square");
  SparseFactorization f;
  f.dim_ = m.rows();
  f.lu_ = std::make_shared<Lu>();
  if (m.rows() == 0) return f;
  CscMatrix a = m;
  a.makeCompressed();
  f.lu_->analyzePattern(a);
  f.lu_->factorize(a);
  if (f.lu_->info() != Eigen::Success) {
    // Eigen reports the failing column (1-based) at the tail of the message.
    long col = parse_trailing_index(f.lu_->lastErrorMessage());
    throw SingularMatrix(col > 0 ? col - 1 : col, f.lu_->lastErrorMessage());
  }
  f.fill_nnz_ = f.lu_->nnzL() + f.lu_->nnzU() - f.dim_;
  return f;
}

Vector SparseFactorization::solve(const Vector& b) const {
  require_dims(b.size() == dim_, "SparseFactorization::solve: rhs size mismatch");
  if (dim_ == 0) return Vector();
  Vector x = lu_->solve(b);
  return x;
}

DenseMatrix SparseFactorization::solve(const DenseMatrix& b) const {
  require_dims(b.rows() == dim_, "SparseFactorization::solve: rhs rows mismatch");
  if (dim_ == 0) return DenseMatrix(0, b.cols());
  DenseMatrix x = lu_->solve(b);
  return x;
}

Vector SparseFactorization::solve_transpose(const Vector& b) const {
  require_dims(b.size() == dim_, "SparseFactorization::solve_transpose: rhs size mismatch");
  if (dim_ == 0) return Vector();
  Vector x = lu_->transpose().solve(b);
  return x;
}

CscMatrix stabilized_matrix(const KktSystem& k, const StabilizationConfig& cfg) {
  TripletMatrix t(k.dimension(), k.dimension());
  t.reserve(static_cast<std::size_t>(k.matrix.nonZeros() + k.dimension()));
  t.add_sparse(0, 0, k.matrix);
  if (cfg.eps_x != 0.0) t.add_diagonal(0, k.nx, cfg.eps_x);
  if (cfg.eps_lambda != 0.0) t.add_diagonal(k.nx + k.np, k.nc, -cfg.eps_lambda);
  // Keep the full diagonal structurally present so the symbolic pattern does
  // not depend on the stabilization values.
  t.add_diagonal(0, k.dimension(), 0.0);
  return csc_from_triplets(t);
}

KktSolution solve_kkt_stabilized(const KktSystem& k, const Vector& rhs,
                                 const StabilizationConfig& cfg) {
  const Index n = k.dimension();
  require_dims(k.matrix.rows() == n && k.matrix.cols() == n,
               "solve_kkt_stabilized: matrix does not match block dimensions");
  require_dims(rhs.size() == n, "solve_kkt_stabilized: rhs has size " + std::to_string(rhs.size()) +
                                    ", expected " + std::to_string(n));
  if (cfg.eps_x < 0.0 || cfg.eps_lambda < 0.0)
    throw Error(ErrorKind::Config, "stabilization constants must be non-negative");

  KktSolution out;
  const double bnorm = rhs.norm();
  if (bnorm == 0.0) {
    out.solution = Vector::Zero(n);
    return out;
  }

  Stopwatch clock;
  SparseFactorization precond = SparseFactorization::factor(stabilized_matrix(k, cfg));
  out.report.factor_seconds = clock.seconds();
  out.report.fill_nnz = precond.fill_nnz();

  clock.reset();
  const CscMatrix& A = k.matrix;
  const double tol = cfg.refine_tolerance * bnorm;
  const double goal = std::min(cfg.refine_goal, cfg.refine_tolerance) * bnorm;

  Vector x = precond.solve(rhs);
  if (!all_finite(x)) throw SingularMatrix(-1, "stabilized factorization produced non-finite values");
  Vector r = rhs - A * x;
  double rnorm = r.norm();

  Vector best_x = x;
  double best = rnorm;
  int iters = 0;

  // Preconditioned BiCGSTAB. The recursive residual is re-anchored to the
  // true residual whenever it claims convergence. Past `tol` the iteration
  // keeps going toward `goal` only while restarts still pay off.
  while (rnorm > goal && iters < cfg.max_refine_iters) {
    const double before = best;
    Vector r_hat = r;
    double rho = 1.0, alpha = 1.0, omega = 1.0;
    Vector v = Vector::Zero(n), p = Vector::Zero(n);
    while (iters < cfg.max_refine_iters) {
      ++iters;
      const double rho_new = r_hat.dot(r);
      if (rho_new == 0.0 || !std::isfinite(rho_new)) break;
      const double beta = (rho_new / rho) * (alpha / omega);
      rho = rho_new;
      p = r + beta * (p - omega * v);
      Vector y = precond.solve(p);
      v = A * y;
      const double denom = r_hat.dot(v);
      if (denom == 0.0) break;
      alpha = rho / denom;
      x += alpha * y;
      Vector s = r - alpha * v;
      if (s.norm() <= goal) {
        r = s;
        break;
      }
      Vector z = precond.solve(s);
      Vector t = A * z;
      const double tt = t.squaredNorm();
      omega = tt > 0.0 ? t.dot(s) / tt : 0.0;
      x += omega * z;
      r = s - omega * t;
      if (r.norm() <= goal || omega == 0.0) break;
    }
    r = rhs - A * x;
    rnorm = r.norm();
    if (rnorm < best) {
      best = rnorm;
      best_x = x;
    }
    if (best <= tol && best > 0.5 * before) break;
    x = best_x;
    r = rhs - A * x;
    rnorm = best;
  }
  out.report.solve_seconds = clock.seconds();
  out.report.refine_iterations = iters;
  out.report.relative_residual = best / bnorm;
  if (best > tol && !cfg.accept_unconverged)
    throw NoConvergence("stabilized KKT refinement", best / bnorm, iters);
  out.solution = std::move(best_x);
  return out;
}

DenseFactorization cholesky_dense(const DenseMatrix& h) {
  require_dims(h.rows() == h.cols(), "cholesky_dense: matrix must be square");
  DenseFactorization f;
  f.llt_.compute(h);
  if (f.llt_.info() != Eigen::Success) {
    // Locate the failing pivot with an unblocked pass over the lower triangle.
    const Index n = h.rows();
    DenseMatrix l = h;
    for (Index j = 0; j < n; ++j) {
      double d = l(j, j);
      for (Index k = 0; k < j; ++k) d -= l(j, k) * l(j, k);
      if (!(d > 0.0)) throw NotPositiveDefinite(j);
      d = std::sqrt(d);
      l(j, j) = d;
      for (Index i = j + 1; i < n; ++i) {
        double s = l(i, j);
        for (Index k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
        l(i, j) = s / d;
      }
    }
    throw NotPositiveDefinite(n - 1);
  }
  return f;
}

GnReducedOperator::GnReducedOperator(CscMatrix A_, CscMatrix B_, CscMatrix C_, CscMatrix dcdp_,
                                     SparseFactorization dcdx_factor_)
    : A(std::move(A_)),
      B(std::move(B_)),
      C(std::move(C_)),
      dcdp(std::move(dcdp_)),
      dcdx_factor(std::move(dcdx_factor_)) {
  require_dims(A.rows() == dcdx_factor.dimension() && B.rows() == C.rows() &&
                   B.cols() == A.cols() && dcdp.cols() == C.cols() && dcdp.rows() == A.rows(),
               "GnReducedOperator: inconsistent block dimensions");
}

Vector GnReducedOperator::sensitivity_times(const Vector& y) const {
  return -dcdx_factor.solve(Vector(dcdp * y));
}

Vector GnReducedOperator::sensitivity_transpose_times(const Vector& z) const {
  return -(dcdp.transpose() * dcdx_factor.solve_transpose(z));
}

Vector GnReducedOperator::apply(const Vector& y) const {
  const Vector t = sensitivity_times(y);
  Vector inner = A * t;
  inner += B.transpose() * y;
  Vector out = sensitivity_transpose_times(inner);
  out += B * t;
  out += C * y;
  return out;
}

NegativeCurvatureError::NegativeCurvatureError(Vector last, int it)
    : Error(ErrorKind::NegativeCurvature, "p^T H p <= 0 at CG iteration " + std::to_string(it)),
      last_iterate(std::move(last)),
      iteration(it) {}

CgResult cg_reduced(const ReducedOperator& op, const Vector& rhs, double eta, int max_iters) {
  const Index n = op.dimension();
  require_dims(rhs.size() == n, "cg_reduced: rhs size mismatch");
  if (!(eta > 0.0)) throw Error(ErrorKind::Config, "cg_reduced: eta must be positive");
  if (max_iters <= 0) max_iters = static_cast<int>(10 * std::max<Index>(n, 1));

  CgResult out;
  Stopwatch clock;
  const double bnorm = rhs.norm();
  Vector x = Vector::Zero(n);
  if (bnorm == 0.0) {
    out.solution = x;
    return out;
  }
  const double tol2 = eta * eta * bnorm * bnorm;
  int it = 0;
  Vector r = rhs;
  double true_rel = 1.0;
  // Restarts from the true residual if the recursive one drifted.
  for (;;) {
    Vector p = r;
    double rr = r.squaredNorm();
    while (rr > tol2) {
      if (it >= max_iters) throw NoConvergence("cg_reduced", std::sqrt(rr) / bnorm, it);
      ++it;
      const Vector hp = op.apply(p);
      const double curvature = p.dot(hp);
      if (!(curvature > 0.0)) throw NegativeCurvatureError(x, it);
      const double alpha = rr / curvature;
      x += alpha * p;
      r -= alpha * hp;
      const double rr_new = r.squaredNorm();
      p = r + (rr_new / rr) * p;
      rr = rr_new;
    }
    r = rhs - op.apply(x);
    true_rel = r.norm() / bnorm;
    if (true_rel <= eta) break;
    if (it >= max_iters) throw NoConvergence("cg_reduced", true_rel, it);
  }
  out.report.solve_seconds = clock.seconds();
  out.report.refine_iterations = it;
  out.report.relative_residual = true_rel;
  out.iterations = it;
  out.solution = std::move(x);
  return out;
}

}  // namespace sgn
