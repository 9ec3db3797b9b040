#pragma once

#include <optional>
#include <string>

#include "sgn/sparse.hpp"

namespace sgn {

struct ParamBounds {
  Vector lower;
  Vector upper;
};

/// Second-derivative blocks. `px` is n_p x n_x (rows indexed by parameters).
struct HessianBlocks {
  CscMatrix xx;
  CscMatrix px;
  CscMatrix pp;
};

/// min_{x,p} f(x, p) subject to c(x, p) = 0 with as many constraints as
/// states. Evaluators must be re-entrant; an instance is an immutable
/// description of the problem.
class EquilibriumProblem {
 public:
  virtual ~EquilibriumProblem() = default;

  virtual std::string name() const = 0;
  virtual Index num_states() const = 0;
  virtual Index num_params() const = 0;
  Index num_constraints() const { return num_states(); }

  virtual Vector constraints(const Vector& x, const Vector& p) const = 0;
  virtual CscMatrix constraint_jacobian_x(const Vector& x, const Vector& p) const = 0;
  virtual CscMatrix constraint_jacobian_p(const Vector& x, const Vector& p) const = 0;

  // Least-squares objective f = sum_i w_i/2 r_i^2.
  virtual bool has_least_squares() const { return true; }
  virtual Vector residuals(const Vector& x, const Vector& p) const;
  virtual Vector residual_weights() const;
  virtual CscMatrix residual_jacobian_x(const Vector& x, const Vector& p) const;
  virtual CscMatrix residual_jacobian_p(const Vector& x, const Vector& p) const;

  // Defaults evaluate the least-squares form.
  virtual double objective(const Vector& x, const Vector& p) const;
  virtual Vector objective_grad_x(const Vector& x, const Vector& p) const;
  virtual Vector objective_grad_p(const Vector& x, const Vector& p) const;

  virtual bool has_objective_hessian() const { return false; }
  virtual HessianBlocks objective_hessian(const Vector& x, const Vector& p) const;

  // sum_k lambda_k * Hessian(c_k).
  virtual bool has_constraint_hessian() const { return false; }
  virtual HessianBlocks constraint_hessian_contraction(const Vector& x, const Vector& p,
                                                       const Vector& lambda) const;

  /// Forward simulation: returns x with c(x, p) = 0. Throws
  /// ErrorKind::ForwardSimFailure when the equilibrium solve fails.
  virtual Vector solve_equilibrium(const Vector& p, const Vector* warm_start = nullptr) const = 0;

  virtual Vector initial_params() const = 0;
  virtual std::optional<ParamBounds> param_bounds() const { return std::nullopt; }
};

}  // namespace sgn
