#include <doctest.h>

#include "oracles.hpp"
#include "sgn/optimizers.hpp"
#include "sgn/problems.hpp"
#include "sgn/sensitivity.hpp"

using namespace sgn;

namespace {

// f = sum w/2 r^2 and analytic Jacobians against central differences at random points.
void check_least_squares_and_jacobians(const EquilibriumProblem& prob, const Vector& x_ref, const Vector& p_ref,
                                       double spread, unsigned seed, int points) {
  std::mt19937 rng(seed);
  for (int k = 0; k < points; ++k) {
    const Vector x = x_ref + oracle::random_vector(rng, x_ref.size(), spread);
    const Vector p = p_ref + oracle::random_vector(rng, p_ref.size(), spread);
    const Vector r = prob.residuals(x, p);
    const double f = 0.5 * (prob.residual_weights().array() * r.array().square()).sum();
    CHECK(std::abs(prob.objective(x, p) - f) <= 1e-12 * std::max(1.0, std::abs(f)));

    const double h = 1e-6;
    const auto check = [&](const CscMatrix& J, const DenseMatrix& fd) {
      CHECK((DenseMatrix(J) - fd).norm() <= 1e-6 * (1.0 + fd.norm()));
    };
    check(prob.residual_jacobian_x(x, p), oracle::fd_jacobian([&](const Vector& y) { return prob.residuals(y, p); }, x, h));
    check(prob.residual_jacobian_p(x, p), oracle::fd_jacobian([&](const Vector& q) { return prob.residuals(x, q); }, p, h));
    check(prob.constraint_jacobian_x(x, p),
          oracle::fd_jacobian([&](const Vector& y) { return prob.constraints(y, p); }, x, h));
    check(prob.constraint_jacobian_p(x, p),
          oracle::fd_jacobian([&](const Vector& q) { return prob.constraints(x, q); }, p, h));
  }
}

}  // namespace

TEST_CASE("spring bar: zero objective at the target shape") {
  SpringBarProblem bar(SpringBarConfig{});
  CHECK(bar.num_states() == 2 * 15 * 4);
  CHECK(bar.num_params() == bar.num_states());
  CHECK(bar.objective(bar.target(), bar.initial_params()) == 0.0);
}

TEST_CASE("spring bar 2x2: A is identity over n_x") {
  SpringBarConfig c;
  c.nw = 2;
  c.nh = 2;
  SpringBarProblem bar(c);
  REQUIRE(bar.num_states() == 4);
  const Vector p = bar.initial_params();
  const auto b = gn_blocks(bar, bar.solve_equilibrium(p), p);
  CHECK((DenseMatrix(b.A) - 0.25 * DenseMatrix::Identity(4, 4)).norm() <= 1e-15);
  CHECK(DenseMatrix(b.B).isZero(0.0));
  CHECK(DenseMatrix(b.C).isZero(0.0));
}

TEST_CASE("spring bar without regularizer has no direct parameter dependence") {
  SpringBarConfig c;
  c.nw = 5;
  c.nh = 3;
  SpringBarProblem bar(c);
  std::mt19937 rng(1);
  const Vector p = bar.initial_params() + oracle::random_vector(rng, bar.num_params(), 0.1);
  const Vector x = bar.solve_equilibrium(p);
  CHECK(bar.objective_grad_p(x, p).norm() == 0.0);
  const auto b = gn_blocks(bar, x, p);
  CHECK(b.B.nonZeros() == 0);
  CHECK(b.C.nonZeros() == 0);
}

TEST_CASE("spring bar evaluators") {
  SpringBarConfig c;
  c.nw = 4;
  c.nh = 3;
  c.w_R = 0.5;
  SpringBarProblem bar(c);
  const Vector p = bar.initial_params();
  check_least_squares_and_jacobians(bar, bar.solve_equilibrium(p), p, 0.05, 2, 10);
  std::mt19937 rng(3);
  const Vector q = p + oracle::random_vector(rng, p.size(), 0.05);
  CHECK(oracle::rel_err(adjoint_gradient(bar, bar.solve_equilibrium(q), q), oracle::fd_gradient(bar, q, 1e-5)) <=
        1e-4);
}

TEST_CASE("car: target equal to start with zero controls costs nothing") {
  CarConfig c;
  c.steps = 10;
  c.target_position = Vector::Zero(2);
  c.v_init = 0.0;
  CarControlProblem car(c);
  const Vector p = Vector::Zero(car.num_params());
  CHECK(car.objective(car.solve_equilibrium(p), p) == 0.0);
}

TEST_CASE("car: one step recovers the analytic speed") {
  CarConfig c;
  c.steps = 1;
  c.target_position = (Vector(2) << 0.05, 0.0).finished();
  CarControlProblem car(c);
  OptimizerConfig o;
  o.gradient_tolerance = 1e-10;
  o.max_iterations = 50;
  const OptimizerRun run = minimize(car, car.initial_params(), o);
  CHECK(run.p(0) == doctest::Approx(0.05 * 30.0).epsilon(1e-6));
  CHECK(std::abs(run.p(1)) <= 1e-6);
}

TEST_CASE("car dimensions") {
  CarConfig c;
  c.steps = 5000;
  CarControlProblem car(c);
  CHECK(car.num_states() == 15000);
  CHECK(car.num_params() == 10000);
}

TEST_CASE("car evaluators and unit-diagonal constraint Jacobian") {
  CarConfig c;
  c.steps = 6;
  CarControlProblem car(c);
  const Vector p = car.initial_params();
  const Vector x = car.solve_equilibrium(p);
  check_least_squares_and_jacobians(car, x, p, 0.1, 4, 10);
  const DenseMatrix Jx(car.constraint_jacobian_x(x, p));
  CHECK(Jx.diagonal().isOnes(0.0));
  CHECK(car.param_bounds().has_value());
  // Objective residual Jacobian touches only the last state.
  const DenseMatrix Rx(car.residual_jacobian_x(x, p));
  CHECK(Rx.leftCols(15).isZero(0.0));
}

TEST_CASE("car gradient against FD through the rollout") {
  CarConfig c;
  c.steps = 20;
  CarControlProblem car(c);
  std::mt19937 rng(5);
  const Vector p = car.initial_params() + oracle::random_vector(rng, car.num_params(), 0.1);
  CHECK(oracle::rel_err(adjoint_gradient(car, car.solve_equilibrium(p), p), oracle::fd_gradient(car, p, 1e-5)) <=
        1e-4);
}

TEST_CASE("cloth: keyframes on the uncontrolled rollout leave only regularizers") {
  ClothConfig c;
  c.side = 3;
  c.steps = 6;
  c.keyframes = {3, 6};
  ClothControlProblem base(c);
  const Vector p = base.initial_params();
  const Rollout r = base.rollout(p);
  c.targets = {r.states[2], r.states[5]};
  ClothControlProblem prob(c);
  const Vector x = prob.solve_equilibrium(p);
  const Vector res = prob.residuals(x, p);
  CHECK(res.head(2 * 27).norm() <= 1e-14);
  // Handles sit at their initial positions, so only cloth velocity remains.
  CHECK(res.segment(2 * 27, 2 * 6 * 6).norm() <= 1e-14);
}

TEST_CASE("cloth dimensions") {
  ClothConfig c;
  c.side = 10;
  c.steps = 2;
  ClothControlProblem prob(c);
  CHECK(prob.num_states() == 300 * 2);
  CHECK(prob.num_params() == 6 * 2);
}

TEST_CASE("cloth rejects keyframes outside the horizon") {
  ClothConfig c;
  c.side = 3;
  c.steps = 4;
  c.keyframes = {5};
  try {
    ClothControlProblem prob(c);
    FAIL("expected a config error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Config);
  }
  c.keyframes = {0};
  CHECK_THROWS_AS(ClothControlProblem{c}, Error);
}

TEST_CASE("cloth evaluators and gradient") {
  ClothConfig c;
  c.side = 2;
  c.steps = 3;
  ClothControlProblem prob(c);
  const Vector p = prob.initial_params();
  check_least_squares_and_jacobians(prob, prob.solve_equilibrium(p), p, 0.05, 6, 10);
  std::mt19937 rng(7);
  const Vector q = p + oracle::random_vector(rng, p.size(), 0.05);
  CHECK(oracle::rel_err(adjoint_gradient(prob, prob.solve_equilibrium(q), q), oracle::fd_gradient(prob, q, 1e-5)) <=
        1e-3);
}

TEST_CASE("least-squares identity at many random points") {
  SpringBarConfig sc;
  sc.nw = 4;
  sc.nh = 2;
  sc.w_R = 1.0;
  SpringBarProblem bar(sc);
  CarConfig cc;
  cc.steps = 8;
  CarControlProblem car(cc);
  ClothConfig kc;
  kc.side = 2;
  kc.steps = 2;
  ClothControlProblem cloth(kc);
  std::mt19937 rng(8);
  for (const EquilibriumProblem* prob : std::initializer_list<const EquilibriumProblem*>{&bar, &car, &cloth}) {
    for (int k = 0; k < 100; ++k) {
      const Vector x = oracle::random_vector(rng, prob->num_states());
      const Vector p = oracle::random_vector(rng, prob->num_params());
      const Vector r = prob->residuals(x, p);
      const double f = 0.5 * (prob->residual_weights().array() * r.array().square()).sum();
      CHECK(std::abs(prob->objective(x, p) - f) <= 1e-12 * std::max(1.0, f));
    }
  }
}

TEST_CASE("toy problems: second-order evaluators against FD") {
  QuadraticConstraintToy toy;
  const Vector x = (Vector(2) << 0.4, -0.3).finished(), p = (Vector(2) << 0.2, 0.1).finished();
  const Vector lambda = (Vector(2) << 0.7, -1.1).finished();
  const auto hc = toy.constraint_hessian_contraction(x, p, lambda);
  const auto lx = [&](const Vector& y, const Vector& q) {
    return Vector(spmv_transpose(toy.constraint_jacobian_x(y, q), lambda));
  };
  const auto lp = [&](const Vector& y, const Vector& q) {
    return Vector(spmv_transpose(toy.constraint_jacobian_p(y, q), lambda));
  };
  const DenseMatrix xx = oracle::fd_jacobian([&](const Vector& y) { return lx(y, p); }, x, 1e-6);
  const DenseMatrix px = oracle::fd_jacobian([&](const Vector& y) { return lp(y, p); }, x, 1e-6);
  const DenseMatrix pp = oracle::fd_jacobian([&](const Vector& q) { return lp(x, q); }, p, 1e-6);
  CHECK((DenseMatrix(hc.xx) - xx).norm() <= 1e-8);
  CHECK((DenseMatrix(hc.px) - px).norm() <= 1e-8);
  CHECK((DenseMatrix(hc.pp) - pp).norm() <= 1e-8);
  CHECK(toy.constraints(toy.solve_equilibrium(p), p).norm() <= 1e-12);
}
