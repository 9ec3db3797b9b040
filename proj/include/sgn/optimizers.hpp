#pragma once

#include <deque>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "sgn/sensitivity.hpp"

namespace sgn {

enum class Method { Sgn, Dgn, Bgn, CgGn, Gd, Lbfgs, LbfgsSgn, Sggn, SparseNewton, Sqp };

const std::vector<std::string>& method_names();
std::string method_name(Method m);
/// Throws ErrorKind::Config listing the valid names.
Method parse_method(const std::string& name);

enum class BoundMode { None, ProjectedDirection, LogBarrier };
std::string bound_mode_name(BoundMode m);
BoundMode parse_bound_mode(const std::string& name);

struct OptimizerConfig {
  Method method = Method::Sgn;
  int max_iterations = 100;
  double gradient_tolerance = 1e-5;
  double armijo_c1 = 1e-4;
  double backtrack_factor = 0.5;
  int max_backtracks = 60;
  int lbfgs_history = 10;
  double cg_eta = 1e-3;
  StabilizationConfig stabilization;
  BoundMode bounds = BoundMode::None;
  // Called with (x, p, grad) before each reduced-space direction; SQP skips it.
  std::function<void(const Vector&, const Vector&, const Vector&)> on_iterate;

  void validate() const;
};

struct SearchDirection {
  Vector dp;
  Vector dx;       // empty unless the method produces one
  Vector dlambda;  // empty unless the method produces one
  double seconds = 0.0;
  double assemble_seconds = 0.0;
  double factor_seconds = 0.0;
  double solve_seconds = 0.0;
  double sensitivity_seconds = 0.0;  // DGN: forming S
  double dense_factor_seconds = 0.0; // DGN: Cholesky of H
  bool has_linear_solve = false;
  SolveReport report;
  double regularization = 0.0;       // tau used by the regularized methods
};

/// L-BFGS memory of (s, y) pairs, newest last.
struct LbfgsHistory {
  std::size_t capacity = 10;
  std::deque<Vector> s, y;

  bool empty() const { return s.empty(); }
  void clear() { s.clear(); y.clear(); }
  /// Stores the pair unless s.y <= 1e-12 |s||y|; returns whether it was kept.
  bool push(const Vector& s_k, const Vector& y_k);
};

using InitialInverse = std::function<Vector(const Vector&)>;

/// Two-loop recursion returning -H g. Without `h0` the initial inverse is
/// gamma I with gamma = s.y / y.y of the newest pair (1 when empty).
Vector lbfgs_two_loop(const LbfgsHistory& history, const Vector& grad, const InitialInverse& h0 = {});

SearchDirection direction_sgn(const EquilibriumProblem& prob, const Vector& x, const Vector& p,
                              const Vector& grad, const OptimizerConfig& cfg);
SearchDirection direction_dgn(const EquilibriumProblem& prob, const Vector& x, const Vector& p,
                              const Vector& grad, const OptimizerConfig& cfg);
SearchDirection direction_bgn(const EquilibriumProblem& prob, const Vector& x, const Vector& p,
                              const Vector& grad, const OptimizerConfig& cfg);
SearchDirection direction_cg_gn(const EquilibriumProblem& prob, const Vector& x, const Vector& p,
                                const Vector& grad, const OptimizerConfig& cfg);
SearchDirection direction_gd(const Vector& grad);
SearchDirection direction_lbfgs(const LbfgsHistory& history, const Vector& grad);
/// L-BFGS whose initial inverse Hessian is one SGN solve per application.
SearchDirection direction_lbfgs_sgn(const EquilibriumProblem& prob, const Vector& x, const Vector& p,
                                    const Vector& grad, const LbfgsHistory& history,
                                    const OptimizerConfig& cfg);
/// Generalized Gauss-Newton blocks in the sparse system, with A, C shifted by
/// tau I (1e-6, 10x per retry) until the step is a descent direction.
SearchDirection direction_sggn(const EquilibriumProblem& prob, const Vector& x, const Vector& p,
                               const Vector& grad, const OptimizerConfig& cfg);
/// Full Newton through the KKT system with the adjoint multipliers.
SearchDirection direction_sparse_newton(const EquilibriumProblem& prob, const Vector& x,
                                        const Vector& p, const Vector& grad,
                                        const OptimizerConfig& cfg);

/// Zeroes components that point out of the box at active bounds. Throws
/// InfeasiblePoint if p is outside [lower, upper].
Vector project_direction_bounds(const Vector& dp, const Vector& p, const Vector& lower,
                                const Vector& upper);
Vector clamp_to_bounds(const Vector& p, const ParamBounds& b);
/// Gradient with components blocked by active bounds removed.
Vector projected_gradient(const Vector& grad, const Vector& p, const ParamBounds& b);

struct SqpStep {
  Vector dx, dp, dlambda;
  double step_length = 0.0;
  double mu = 0.0;
  double merit_before = 0.0;
  double merit_after = 0.0;
  double regularization = 0.0;
  SolveReport report;
};

double l1_merit(const EquilibriumProblem& prob, const Vector& x, const Vector& p, double mu);

/// One SQP iteration on the Lagrangian KKT system with backtracking on the
/// exact L1 merit f + mu |c|_1, mu = max(mu_prev, 1.5 |lambda + dlambda|_inf).
SqpStep sqp_step(const EquilibriumProblem& prob, const Vector& x, const Vector& p,
                 const Vector& lambda, double mu_prev, const OptimizerConfig& cfg);

enum class Termination {
  Converged,
  MaxIterations,
  LineSearchFailure,
  MeritLineSearchFailure,
};
std::string termination_name(Termination t);

struct IterationRecord {
  int iteration = 0;
  double f = 0.0;
  double grad_norm = 0.0;
  double step_length = 0.0;
  double direction_seconds = 0.0;
  double forward_seconds = 0.0;
  double elapsed_seconds = 0.0;
  double linear_relative_residual = std::numeric_limits<double>::quiet_NaN();
  int refine_iterations = 0;
  double constraint_norm = 0.0;  // SQP only
};

struct OptimizerRun {
  Method method = Method::Sgn;
  std::vector<IterationRecord> records;  // record 0 is the starting point
  Termination termination = Termination::MaxIterations;
  std::string message;
  Vector p, x, lambda;
  double f = 0.0;
  double grad_norm = 0.0;

  int iterations() const { return records.empty() ? 0 : static_cast<int>(records.size()) - 1; }
};

/// Outer loop: direction, bound filtering, monotone Armijo backtracking with
/// a fresh equilibrium solve per trial. Methods other than SQP keep x = x(p).
OptimizerRun minimize(const EquilibriumProblem& prob, const Vector& p0, const OptimizerConfig& cfg);

/// Dispatches a non-SQP, non-L-BFGS-state direction by method tag; L-BFGS
/// variants use `history`.
SearchDirection compute_direction(const EquilibriumProblem& prob, const Vector& x, const Vector& p,
                                  const Vector& grad, const OptimizerConfig& cfg,
                                  const LbfgsHistory* history = nullptr);

/// Adds f_b = -mu sum[log(p - l) + log(u - p)] to a problem's objective.
/// Residuals are forwarded, so Gauss-Newton methods see the base residuals
/// and the exact barrier gradient; the barrier curvature enters the GGN and
/// Newton blocks. Outside the open box the objective is +inf.
class LogBarrierProblem : public EquilibriumProblem {
 public:
  LogBarrierProblem(const EquilibriumProblem& base, ParamBounds bounds, double mu = 1e-4);

  std::string name() const override { return base_.name() + "+barrier"; }
  Index num_states() const override { return base_.num_states(); }
  Index num_params() const override { return base_.num_params(); }
  Vector constraints(const Vector& x, const Vector& p) const override { return base_.constraints(x, p); }
  CscMatrix constraint_jacobian_x(const Vector& x, const Vector& p) const override {
    return base_.constraint_jacobian_x(x, p);
  }
  CscMatrix constraint_jacobian_p(const Vector& x, const Vector& p) const override {
    return base_.constraint_jacobian_p(x, p);
  }
  bool has_least_squares() const override { return base_.has_least_squares(); }
  Vector residuals(const Vector& x, const Vector& p) const override { return base_.residuals(x, p); }
  Vector residual_weights() const override { return base_.residual_weights(); }
  CscMatrix residual_jacobian_x(const Vector& x, const Vector& p) const override {
    return base_.residual_jacobian_x(x, p);
  }
  CscMatrix residual_jacobian_p(const Vector& x, const Vector& p) const override {
    return base_.residual_jacobian_p(x, p);
  }
  double objective(const Vector& x, const Vector& p) const override;
  Vector objective_grad_x(const Vector& x, const Vector& p) const override {
    return base_.objective_grad_x(x, p);
  }
  Vector objective_grad_p(const Vector& x, const Vector& p) const override;
  bool has_objective_hessian() const override { return base_.has_objective_hessian(); }
  HessianBlocks objective_hessian(const Vector& x, const Vector& p) const override;
  bool has_constraint_hessian() const override { return base_.has_constraint_hessian(); }
  HessianBlocks constraint_hessian_contraction(const Vector& x, const Vector& p,
                                               const Vector& lambda) const override {
    return base_.constraint_hessian_contraction(x, p, lambda);
  }
  Vector solve_equilibrium(const Vector& p, const Vector* warm_start = nullptr) const override {
    return base_.solve_equilibrium(p, warm_start);
  }
  Vector initial_params() const override { return base_.initial_params(); }

 private:
  const EquilibriumProblem& base_;
  ParamBounds bounds_;
  double mu_;
};

}  // namespace sgn
