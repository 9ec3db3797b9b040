#include <cmath>
#include <random>

#include "sgn/linear_solvers.hpp"
#include "sgn/problems.hpp"
#include "sgn/sensitivity.hpp"

namespace sgn {

// ---------------------------------------------------------------------------
// LinearProblem

LinearProblem::LinearProblem(CscMatrix Cx, CscMatrix Cp, Vector c0, CscMatrix Rx, CscMatrix Rp,
                             Vector r0, Vector w, Vector p_init)
    : Cx_(std::move(Cx)),
      Cp_(std::move(Cp)),
      Rx_(std::move(Rx)),
      Rp_(std::move(Rp)),
      c0_(std::move(c0)),
      r0_(std::move(r0)),
      w_(std::move(w)),
      p_init_(std::move(p_init)) {
  const Index nx = Cx_.rows();
  require_dims(Cx_.cols() == nx, "dc/dx must be square");
  require_dims(Cp_.rows() == nx && c0_.size() == nx, "constraint blocks disagree on n_c");
  require_dims(Rx_.cols() == nx && Rp_.cols() == Cp_.cols(), "residual Jacobian column mismatch");
  require_dims(Rx_.rows() == Rp_.rows() && r0_.size() == Rx_.rows() && w_.size() == Rx_.rows(),
               "residual blocks disagree on row count");
  require_dims(p_init_.size() == Cp_.cols(), "initial parameter size mismatch");
}

Vector LinearProblem::constraints(const Vector& x, const Vector& p) const {
  return Cx_ * x + Cp_ * p - c0_;
}

Vector LinearProblem::residuals(const Vector& x, const Vector& p) const {
  return Rx_ * x + Rp_ * p - r0_;
}

HessianBlocks LinearProblem::objective_hessian(const Vector& x, const Vector& p) const {
  GnBlocks g = gn_blocks(*this, x, p);
  return HessianBlocks{g.A, g.B, g.C};
}

HessianBlocks LinearProblem::constraint_hessian_contraction(const Vector&, const Vector&,
                                                            const Vector&) const {
  const Index nx = num_states(), np = num_params();
  return HessianBlocks{sparse_zero(nx, nx), sparse_zero(np, nx), sparse_zero(np, np)};
}

Vector LinearProblem::solve_equilibrium(const Vector& p, const Vector*) const {
  require_dims(p.size() == num_params(), "parameter size mismatch");
  return factor_constraint_jacobian(Cx_).solve(Vector(c0_ - Cp_ * p));
}

std::unique_ptr<LinearProblem> make_quadratic_toy(const Vector& x_star, const Vector& p_init) {
  const Index n = x_star.size();
  require_dims(p_init.size() == n, "quadratic toy: p_init must match x*");
  CscMatrix I = sparse_identity(n);
  return std::make_unique<LinearProblem>(I, CscMatrix(-I), Vector::Zero(n), I, sparse_zero(n, n), x_star,
                                         Vector::Ones(n), p_init);
}

std::unique_ptr<LinearProblem> make_random_linear_problem(unsigned seed, Index nx, Index np) {
  if (nx < 1 || np < 1) throw Error(ErrorKind::Config, "random linear problem needs nx, np >= 1");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni(-1.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double density = std::min(1.0, 3.0 / static_cast<double>(nx));

  // Strictly diagonally dominant dc/dx.
  TripletMatrix cx(nx, nx);
  for (Index i = 0; i < nx; ++i) {
    double row_sum = 0.0;
    for (Index j = 0; j < nx; ++j) {
      if (i == j || unit(rng) >= density) continue;
      const double v = uni(rng);
      cx.add(i, j, v);
      row_sum += std::abs(v);
    }
    cx.add(i, i, (unit(rng) < 0.5 ? -1.0 : 1.0) * (1.0 + row_sum + unit(rng)));
  }

  TripletMatrix cp(nx, np);
  for (Index j = 0; j < np; ++j) {
    cp.add(static_cast<Index>(rng() % static_cast<std::uint64_t>(nx)), j, uni(rng));
    for (Index i = 0; i < nx; ++i)
      if (unit(rng) < 0.2) cp.add(i, j, uni(rng));
  }

  // Residual rows: nx state-dominated rows, then np rows containing a
  // parameter regularizer so the reduced Gauss-Newton matrix is nonsingular.
  const Index m = nx + np;
  TripletMatrix rx(m, nx), rp(m, np);
  for (Index i = 0; i < nx; ++i) {
    rx.add(i, i, 1.0 + unit(rng));
    for (Index j = 0; j < nx; ++j)
      if (j != i && unit(rng) < density) rx.add(i, j, uni(rng));
    for (Index j = 0; j < np; ++j)
      if (unit(rng) < 0.1) rp.add(i, j, uni(rng));
  }
  for (Index k = 0; k < np; ++k) {
    rp.add(nx + k, k, 0.5 + unit(rng));
    if (unit(rng) < 0.3) rx.add(nx + k, static_cast<Index>(rng() % static_cast<std::uint64_t>(nx)), uni(rng));
  }

  Vector c0(nx), r0(m), w(m), p0(np);
  for (Index i = 0; i < nx; ++i) c0(i) = uni(rng);
  for (Index i = 0; i < m; ++i) r0(i) = uni(rng);
  for (Index i = 0; i < m; ++i) w(i) = 0.5 + 1.5 * unit(rng);
  for (Index i = 0; i < np; ++i) p0(i) = uni(rng);
  return std::make_unique<LinearProblem>(csc_from_triplets(cx), csc_from_triplets(cp), c0,
                                         csc_from_triplets(rx), csc_from_triplets(rp), r0, w, p0);
}

// ---------------------------------------------------------------------------
// CubicToy

namespace {
CscMatrix scalar(double v) {
  TripletMatrix t(1, 1);
  t.add(0, 0, v);
  return csc_from_triplets(t);
}
}  // namespace

Vector CubicToy::constraints(const Vector& x, const Vector& p) const {
  return Vector::Constant(1, x(0) * x(0) * x(0) - p(0));
}
CscMatrix CubicToy::constraint_jacobian_x(const Vector& x, const Vector&) const {
  return scalar(3.0 * x(0) * x(0));
}
CscMatrix CubicToy::constraint_jacobian_p(const Vector&, const Vector&) const { return scalar(-1.0); }
Vector CubicToy::residuals(const Vector& x, const Vector&) const { return Vector::Constant(1, x(0) - 2.0); }
Vector CubicToy::residual_weights() const { return Vector::Ones(1); }
CscMatrix CubicToy::residual_jacobian_x(const Vector&, const Vector&) const { return scalar(1.0); }
CscMatrix CubicToy::residual_jacobian_p(const Vector&, const Vector&) const { return sparse_zero(1, 1); }

HessianBlocks CubicToy::objective_hessian(const Vector&, const Vector&) const {
  return HessianBlocks{scalar(1.0), sparse_zero(1, 1), sparse_zero(1, 1)};
}

HessianBlocks CubicToy::constraint_hessian_contraction(const Vector& x, const Vector&,
                                                       const Vector& lambda) const {
  return HessianBlocks{scalar(6.0 * x(0) * lambda(0)), sparse_zero(1, 1), sparse_zero(1, 1)};
}

Vector CubicToy::solve_equilibrium(const Vector& p, const Vector*) const {
  return Vector::Constant(1, std::cbrt(p(0)));
}

// ---------------------------------------------------------------------------
// QuadraticConstraintToy

Vector QuadraticConstraintToy::constraints(const Vector& x, const Vector& p) const {
  Vector c(2);
  c(0) = 2.0 * x(0) + x(0) * x(0) + 0.5 * x(1) * x(1) - p(0) - 0.5 * p(0) * p(1);
  c(1) = 3.0 * x(1) + x(0) * x(1) + 0.25 * x(1) * x(1) - p(1) + 0.2 * p(0) * p(0);
  return c;
}

CscMatrix QuadraticConstraintToy::constraint_jacobian_x(const Vector& x, const Vector&) const {
  DenseMatrix j(2, 2);
  j << 2.0 + 2.0 * x(0), x(1), x(1), 3.0 + x(0) + 0.5 * x(1);
  return sparse_from_dense(j);
}

CscMatrix QuadraticConstraintToy::constraint_jacobian_p(const Vector&, const Vector& p) const {
  DenseMatrix j(2, 2);
  j << -1.0 - 0.5 * p(1), -0.5 * p(0), 0.4 * p(0), -1.0;
  return sparse_from_dense(j);
}

double QuadraticConstraintToy::objective(const Vector& x, const Vector& p) const {
  return 0.5 * (x(0) - 1.0) * (x(0) - 1.0) + 0.5 * (x(1) + 0.5) * (x(1) + 0.5) + 0.1 * p(0) * x(1) +
         0.05 * p(1) * p(1);
}

Vector QuadraticConstraintToy::objective_grad_x(const Vector& x, const Vector& p) const {
  Vector g(2);
  g << x(0) - 1.0, x(1) + 0.5 + 0.1 * p(0);
  return g;
}

Vector QuadraticConstraintToy::objective_grad_p(const Vector& x, const Vector& p) const {
  Vector g(2);
  g << 0.1 * x(1), 0.1 * p(1);
  return g;
}

HessianBlocks QuadraticConstraintToy::objective_hessian(const Vector&, const Vector&) const {
  DenseMatrix px = DenseMatrix::Zero(2, 2), pp = DenseMatrix::Zero(2, 2);
  px(0, 1) = 0.1;
  pp(1, 1) = 0.1;
  return HessianBlocks{sparse_identity(2), sparse_from_dense(px), sparse_from_dense(pp)};
}

HessianBlocks QuadraticConstraintToy::constraint_hessian_contraction(const Vector&, const Vector&,
                                                                     const Vector& l) const {
  DenseMatrix xx(2, 2), pp(2, 2);
  xx << 2.0 * l(0), l(1), l(1), l(0) + 0.5 * l(1);
  pp << 0.4 * l(1), -0.5 * l(0), -0.5 * l(0), 0.0;
  return HessianBlocks{sparse_from_dense(xx), sparse_zero(2, 2), sparse_from_dense(pp)};
}

Vector QuadraticConstraintToy::solve_equilibrium(const Vector& p, const Vector* warm_start) const {
  return newton_on_constraints(*this, p, warm_start ? *warm_start : Vector(Vector::Zero(2)));
}

// ---------------------------------------------------------------------------

Vector newton_on_constraints(const EquilibriumProblem& prob, const Vector& p, Vector x,
                             double tolerance, int max_iterations) {
  Vector c = prob.constraints(x, p);
  for (int it = 0; it < max_iterations; ++it) {
    if (c.lpNorm<Eigen::Infinity>() <= tolerance) return x;
    const DenseMatrix J = DenseMatrix(prob.constraint_jacobian_x(x, p));
    Eigen::FullPivLU<DenseMatrix> lu(J);
    if (!lu.isInvertible()) throw Error(ErrorKind::SingularConstraintJacobian, "singular dc/dx in Newton");
    const Vector dx = -lu.solve(c);
    double t = 1.0;
    const double c_norm = c.norm();
    for (int k = 0; k < 40; ++k, t *= 0.5) {
      const Vector trial = x + t * dx;
      const Vector ct = prob.constraints(trial, p);
      if (ct.allFinite() && ct.norm() < c_norm) {
        x = trial;
        c = ct;
        break;
      }
      if (k == 39) throw Error(ErrorKind::ForwardSimFailure, "Newton on constraints stalled");
    }
  }
  if (c.lpNorm<Eigen::Infinity>() <= tolerance) return x;
  throw NoConvergence("Newton on constraints", c.lpNorm<Eigen::Infinity>(), max_iterations);
}

}  // namespace sgn
