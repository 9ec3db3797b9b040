#include <doctest.h>

#include "oracles.hpp"
#include "sgn/linear_solvers.hpp"
#include "sgn/optimizers.hpp"
#include "sgn/problems.hpp"
#include "sgn/sensitivity.hpp"

using namespace sgn;

namespace {

KktSystem kkt_from(const CscMatrix& A, const CscMatrix& B, const CscMatrix& C, const CscMatrix& Jx,
                   const CscMatrix& Jp, const Vector& rhs) {
  KktSystem k;
  k.matrix = stack_kkt_blocks(A, B, C, Jx, Jp);
  k.rhs = rhs;
  k.nx = A.rows();
  k.np = C.rows();
  k.nc = Jx.rows();
  return k;
}

CscMatrix diag(std::initializer_list<double> d) {
  Vector v(static_cast<Index>(d.size()));
  Index i = 0;
  for (double x : d) v(i++) = x;
  return sparse_from_dense(DenseMatrix(v.asDiagonal()));
}

}  // namespace

TEST_CASE("factor identity") {
  const auto f = factor_sparse(sparse_identity(10));
  CHECK(f.fill_nnz() == 10);
  const Vector b = Vector::LinSpaced(10, 1, 10);
  CHECK((f.solve(b) - b).norm() == 0.0);
}

TEST_CASE("factor diagonal") {
  const Vector x = factor_sparse(diag({2, 4, 8})).solve((Vector(3) << 2, 4, 8).finished());
  CHECK((x - Vector::Ones(3)).norm() <= 1e-15);
}

TEST_CASE("factor random SPD against dense LU") {
  std::mt19937 rng(17);
  const CscMatrix J = oracle::random_sparse(rng, 50, 50, 0.1);
  const CscMatrix M = CscMatrix(CscMatrix(J.transpose()) * J) + sparse_identity(50);
  const Vector b = oracle::random_vector(rng, 50);
  const Vector ref = DenseMatrix(M).partialPivLu().solve(b);
  CHECK(oracle::rel_err(factor_sparse(M).solve(b), ref) <= 1e-10);
  CHECK(oracle::rel_err(factor_sparse(M).solve_transpose(b), ref) <= 1e-10);
}

TEST_CASE("singular matrix reports a pivot") {
  CHECK_THROWS_AS(factor_sparse(diag({1, 0, 2})), SingularMatrix);
  CHECK_THROWS_AS(factor_sparse(sparse_zero(3, 3)), SingularMatrix);
  CHECK_THROWS_AS(factor_sparse(sparse_zero(3, 2)), Error);
}

TEST_CASE("stabilized KKT solve on identity blocks matches the 6x6 dense system") {
  const auto k = kkt_from(sparse_identity(2), sparse_zero(2, 2), sparse_zero(2, 2), sparse_identity(2),
                          sparse_identity(2), (Vector(6) << 0, 0, -1, -1, 0, 0).finished());
  const auto s = solve_kkt_stabilized(k);
  const Vector ref = DenseMatrix(k.matrix).partialPivLu().solve(k.rhs);
  CHECK((s.solution - ref).norm() <= 1e-12 * ref.norm());
  CHECK(s.report.relative_residual <= 1e-10);
}

TEST_CASE("zero stabilization equals a plain factorized solve") {
  std::mt19937 rng(19);
  const CscMatrix A = sparse_identity(4);
  const CscMatrix Jx = CscMatrix(sparse_identity(4) * 3.0 + oracle::random_sparse(rng, 4, 4, 0.3));
  const CscMatrix Jp = oracle::random_sparse(rng, 4, 2, 0.6);
  const auto k = kkt_from(A, sparse_zero(2, 4), sparse_identity(2), Jx, Jp, oracle::random_vector(rng, 10));
  StabilizationConfig cfg;
  cfg.eps_x = cfg.eps_lambda = 0.0;
  const auto s = solve_kkt_stabilized(k, cfg);
  const Vector plain = factor_sparse(k.matrix).solve(k.rhs);
  CHECK((s.solution - plain).norm() <= 1e-14 * plain.norm());
  CHECK(s.report.refine_iterations == 0);
}

TEST_CASE("stabilization signs") {
  const auto k = kkt_from(sparse_identity(2), sparse_zero(1, 2), sparse_zero(1, 1), sparse_identity(2),
                          sparse_zero(2, 1), Vector::Zero(5));
  StabilizationConfig cfg;
  cfg.eps_x = 0.25;
  cfg.eps_lambda = 0.5;
  const DenseMatrix d(stabilized_matrix(k, cfg));
  CHECK(d(0, 0) == 1.25);
  CHECK(d(1, 1) == 1.25);
  CHECK(d(2, 2) == 0.0);
  CHECK(d(3, 3) == -0.5);
  CHECK(d(4, 4) == -0.5);
}

TEST_CASE("spring-bar KKT solve reaches the residual target") {
  SpringBarConfig c;
  c.nw = 11;
  c.nh = 3;
  SpringBarProblem prob(c);
  REQUIRE(prob.num_states() == 60);
  const Vector p = prob.initial_params();
  const Vector x = prob.solve_equilibrium(p);
  const auto k = assemble_sgn(prob, x, p, gn_blocks(prob, x, p));
  const auto s = solve_kkt_stabilized(k);
  CHECK(s.report.relative_residual <= 1e-10);
  CHECK(s.report.refine_iterations <= 50);
  const Vector r = DenseMatrix(k.matrix) * s.solution - k.rhs;
  CHECK(r.norm() <= 1e-10 * k.rhs.norm());
}

TEST_CASE("refinement cap raises NoConvergence unless told otherwise") {
  // A tiny cap on an ill-conditioned system cannot reach 1e-30.
  const auto k = kkt_from(sparse_identity(2), sparse_zero(2, 2), sparse_zero(2, 2), sparse_identity(2),
                          sparse_identity(2), (Vector(6) << 0, 0, -1, -1, 0, 0).finished());
  StabilizationConfig cfg;
  cfg.eps_x = cfg.eps_lambda = 0.5;
  cfg.refine_tolerance = 1e-30;
  cfg.max_refine_iters = 1;
  CHECK_THROWS_AS(solve_kkt_stabilized(k, cfg), NoConvergence);
  cfg.accept_unconverged = true;
  const auto s = solve_kkt_stabilized(k, cfg);
  CHECK(s.solution.size() == 6);
}

TEST_CASE("dense Cholesky") {
  CHECK((cholesky_dense(DenseMatrix::Identity(3, 3)).solve((Vector(3) << 1, 2, 3).finished()) -
         (Vector(3) << 1, 2, 3).finished())
            .norm() == 0.0);
  DenseMatrix d = DenseMatrix::Zero(2, 2);
  d(0, 0) = 4;
  d(1, 1) = 9;
  CHECK((cholesky_dense(d).solve((Vector(2) << 8, 27).finished()) - (Vector(2) << 2, 3).finished()).norm() <=
        1e-15);

  std::mt19937 rng(23);
  DenseMatrix J(30, 10);
  for (Index i = 0; i < 30; ++i) J.row(i) = oracle::random_vector(rng, 10).transpose();
  const DenseMatrix H = J.transpose() * J + 1e-3 * DenseMatrix::Identity(10, 10);
  const Vector b = oracle::random_vector(rng, 10);
  CHECK(oracle::rel_err(cholesky_dense(H).solve(b), H.partialPivLu().solve(b)) <= 1e-10);
}

TEST_CASE("Cholesky of an indefinite matrix names the failing pivot") {
  DenseMatrix d = DenseMatrix::Identity(3, 3);
  d(1, 1) = -1.0;
  try {
    cholesky_dense(d);
    FAIL("expected NotPositiveDefinite");
  } catch (const NotPositiveDefinite& e) {
    CHECK(e.pivot == 1);
  }
}

TEST_CASE("CG on the identity reduced operator") {
  const CscMatrix I = sparse_identity(4);
  const CscMatrix minus_I = CscMatrix(-1.0 * I);
  GnReducedOperator op(I, sparse_zero(4, 4), sparse_zero(4, 4), minus_I, factor_sparse(I));
  const Vector r = (Vector(4) << 1, -2, 3, 0.5).finished();
  const auto res = cg_reduced(op, r);
  CHECK(res.iterations == 1);
  CHECK((res.solution - r).norm() <= 1e-14);
}

TEST_CASE("CG converges to the dense solution on SPD operators") {
  std::mt19937 rng(29);
  DenseMatrix J(40, 25);
  for (Index i = 0; i < 40; ++i) J.row(i) = oracle::random_vector(rng, 25).transpose();
  const DenseMatrix H = J.transpose() * J + 0.1 * DenseMatrix::Identity(25, 25);
  const Vector b = oracle::random_vector(rng, 25);
  const auto res = cg_reduced(DenseOperator(H), b, 1e-12);
  CHECK(oracle::rel_err(res.solution, H.ldlt().solve(b)) <= 1e-9);
  const auto loose = cg_reduced(DenseOperator(H), b, 1e-3);
  CHECK((H * loose.solution - b).norm() <= 1e-3 * b.norm());
  CHECK(loose.report.relative_residual <= 1e-3);
}

TEST_CASE("CG flags negative curvature") {
  DenseMatrix H = DenseMatrix::Identity(3, 3);
  H(2, 2) = -1.0;
  CHECK_THROWS_AS(cg_reduced(DenseOperator(H), Vector::Ones(3)), NegativeCurvatureError);
}

TEST_CASE("CG iteration cap raises NoConvergence") {
  std::mt19937 rng(31);
  DenseMatrix J(30, 30);
  for (Index i = 0; i < 30; ++i) J.row(i) = oracle::random_vector(rng, 30).transpose();
  const DenseMatrix H = J.transpose() * J + 1e-6 * DenseMatrix::Identity(30, 30);
  CHECK_THROWS_AS(cg_reduced(DenseOperator(H), oracle::random_vector(rng, 30), 1e-14, 2), NoConvergence);
}

TEST_CASE("CG+GN on the spring bar matches DGN") {
  SpringBarConfig c;
  c.nw = 9;
  c.nh = 3;
  SpringBarProblem prob(c);
  Vector p = prob.initial_params();
  p(0) += 0.3;
  p(5) -= 0.2;
  const Vector x = prob.solve_equilibrium(p);
  const Vector g = adjoint_gradient(prob, x, p);
  OptimizerConfig cfg;
  cfg.cg_eta = 1e-10;
  const Vector dgn = direction_dgn(prob, x, p, g, cfg).dp;
  const Vector cg = direction_cg_gn(prob, x, p, g, cfg).dp;
  CHECK(oracle::rel_err(cg, dgn) <= 1e-8);
}
