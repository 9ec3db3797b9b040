#pragma once

#include <memory>
#include <set>
#include <vector>

#include "sgn/forward_sim.hpp"
#include "sgn/problem.hpp"

namespace sgn {

// ---------------------------------------------------------------------------
// Spring bar: gravity compensation on a 2D mass-spring lattice clamped at its
// left edge. Parameters are rest positions of the free vertices, so n_p = n_x.

struct SpringBarConfig {
  int nw = 16;
  int nh = 4;
  double spacing = 1.0;
  double stiffness = 1e3;
  double mass = 0.2;
  double gravity = 9.81;
  double w_R = 0.0;  // rest-length change regularizer; 0 disables it
};

class SpringBarProblem : public EquilibriumProblem {
 public:
  explicit SpringBarProblem(const SpringBarConfig& cfg);

  std::string name() const override { return "spring_bar"; }
  Index num_states() const override { return 2 * static_cast<Index>(free_.size()); }
  Index num_params() const override { return num_states(); }

  Vector constraints(const Vector& x, const Vector& p) const override;
  CscMatrix constraint_jacobian_x(const Vector& x, const Vector& p) const override;
  CscMatrix constraint_jacobian_p(const Vector& x, const Vector& p) const override;

  Vector residuals(const Vector& x, const Vector& p) const override;
  Vector residual_weights() const override;
  CscMatrix residual_jacobian_x(const Vector& x, const Vector& p) const override;
  CscMatrix residual_jacobian_p(const Vector& x, const Vector& p) const override;

  bool has_objective_hessian() const override { return true; }
  HessianBlocks objective_hessian(const Vector& x, const Vector& p) const override;
  bool has_constraint_hessian() const override { return true; }
  HessianBlocks constraint_hessian_contraction(const Vector& x, const Vector& p,
                                               const Vector& lambda) const override;

  Vector solve_equilibrium(const Vector& p, const Vector* warm_start = nullptr) const override;
  Vector initial_params() const override { return target_; }

  double energy(const Vector& x, const Vector& p) const;
  const Vector& target() const { return target_; }
  const SpringBarConfig& config() const { return cfg_; }
  Index num_springs() const { return static_cast<Index>(springs_.size()); }

 private:
  // Full 2V position vector from free coordinates plus clamped vertices.
  Vector full_positions(const Vector& free_coords) const;
  Index dof(int vertex) const { return dof_[static_cast<std::size_t>(vertex)]; }

  SpringBarConfig cfg_;
  Vector grid_;                // 2V rest grid (also the clamped positions)
  std::vector<Spring> springs_;
  std::vector<int> free_;      // free vertex ids
  std::vector<Index> dof_;     // vertex -> first state index, -1 if clamped
  Vector target_;              // grid positions of free vertices
  Vector initial_lengths_;     // rest lengths of the initial parameters
};

// ---------------------------------------------------------------------------
// Car control with explicit Euler.

struct CarConfig {
  int steps = 100;
  double h = 1.0 / 30.0;
  Vector start = Vector::Zero(3);
  Vector target_position = (Vector(2) << 3.0, 1.0).finished();
  double target_angle = 0.0;
  double w_pos = 1.0;
  double w_dir = 0.1;
  double w_smooth = 1e-2;
  double v_max = 2.0;
  double s_max = 0.5;
  double v_init = 0.5;
  double s_init = 0.0;
};

class CarControlProblem : public EquilibriumProblem {
 public:
  explicit CarControlProblem(const CarConfig& cfg);

  std::string name() const override { return "car"; }
  Index num_states() const override { return 3 * cfg_.steps; }
  Index num_params() const override { return 2 * cfg_.steps; }

  Vector constraints(const Vector& x, const Vector& p) const override;
  CscMatrix constraint_jacobian_x(const Vector& x, const Vector& p) const override;
  CscMatrix constraint_jacobian_p(const Vector& x, const Vector& p) const override;

  Vector residuals(const Vector& x, const Vector& p) const override;
  Vector residual_weights() const override;
  CscMatrix residual_jacobian_x(const Vector& x, const Vector& p) const override;
  CscMatrix residual_jacobian_p(const Vector& x, const Vector& p) const override;

  bool has_objective_hessian() const override { return true; }
  HessianBlocks objective_hessian(const Vector& x, const Vector& p) const override;
  bool has_constraint_hessian() const override { return true; }
  HessianBlocks constraint_hessian_contraction(const Vector& x, const Vector& p,
                                               const Vector& lambda) const override;

  Vector solve_equilibrium(const Vector& p, const Vector* warm_start = nullptr) const override;
  Vector initial_params() const override;
  std::optional<ParamBounds> param_bounds() const override;

  Rollout rollout(const Vector& p) const;
  const CarConfig& config() const { return cfg_; }

 private:
  CarConfig cfg_;
};

// ---------------------------------------------------------------------------
// Cloth control: two corner handles of an implicit-Euler mass-spring sheet.

struct ClothConfig {
  int side = 5;
  int steps = 10;
  double total_time = 0.8;
  double spacing = 0.25;
  double stiffness = 1e3;
  double gravity = 9.81;
  std::set<int> keyframes;  // 1-based step indices; empty selects {steps}
  Vector target_offset = (Vector(3) << 0.0, 0.3, 0.2).finished();
  std::vector<Vector> targets;  // optional explicit keyframe targets (3V each)
  double w_handle = 1e-2;
  double w_handle_velocity = 1e-2;
  double w_cloth_velocity = 1e-2;
};

class ClothControlProblem : public EquilibriumProblem {
 public:
  explicit ClothControlProblem(const ClothConfig& cfg);

  std::string name() const override { return "cloth"; }
  Index num_states() const override { return dofs_ * cfg_.steps; }
  Index num_params() const override { return model_.handle_dofs() * cfg_.steps; }

  Vector constraints(const Vector& x, const Vector& p) const override;
  CscMatrix constraint_jacobian_x(const Vector& x, const Vector& p) const override;
  CscMatrix constraint_jacobian_p(const Vector& x, const Vector& p) const override;

  Vector residuals(const Vector& x, const Vector& p) const override;
  Vector residual_weights() const override;
  CscMatrix residual_jacobian_x(const Vector& x, const Vector& p) const override;
  CscMatrix residual_jacobian_p(const Vector& x, const Vector& p) const override;

  bool has_objective_hessian() const override { return true; }
  HessianBlocks objective_hessian(const Vector& x, const Vector& p) const override;
  bool has_constraint_hessian() const override { return true; }
  HessianBlocks constraint_hessian_contraction(const Vector& x, const Vector& p,
                                               const Vector& lambda) const override;

  Vector solve_equilibrium(const Vector& p, const Vector* warm_start = nullptr) const override;
  Vector initial_params() const override;

  Rollout rollout(const Vector& p) const;
  double step_size() const { return h_; }
  const ClothModel& model() const { return model_; }
  const std::vector<int>& keyframes() const { return keyframes_; }
  const std::vector<Vector>& targets() const { return targets_; }

 private:
  ClothConfig cfg_;
  ClothModel model_;
  Index dofs_ = 0;
  double h_ = 0.0;
  Vector x0_, v0_;
  Vector handle_init_;
  std::vector<int> keyframes_;
  std::vector<Vector> targets_;
};

// ---------------------------------------------------------------------------
// Small analytic problems.

/// Linear constraints c = Cx x + Cp p - c0 and linear residuals
/// r = Rx x + Rp p - r0 with weights w. Gauss-Newton is exact here.
class LinearProblem : public EquilibriumProblem {
 public:
  LinearProblem(CscMatrix Cx, CscMatrix Cp, Vector c0, CscMatrix Rx, CscMatrix Rp, Vector r0,
                Vector w, Vector p_init);

  std::string name() const override { return "linear"; }
  Index num_states() const override { return Cx_.rows(); }
  Index num_params() const override { return Cp_.cols(); }

  Vector constraints(const Vector& x, const Vector& p) const override;
  CscMatrix constraint_jacobian_x(const Vector&, const Vector&) const override { return Cx_; }
  CscMatrix constraint_jacobian_p(const Vector&, const Vector&) const override { return Cp_; }

  Vector residuals(const Vector& x, const Vector& p) const override;
  Vector residual_weights() const override { return w_; }
  CscMatrix residual_jacobian_x(const Vector&, const Vector&) const override { return Rx_; }
  CscMatrix residual_jacobian_p(const Vector&, const Vector&) const override { return Rp_; }

  bool has_objective_hessian() const override { return true; }
  HessianBlocks objective_hessian(const Vector& x, const Vector& p) const override;
  bool has_constraint_hessian() const override { return true; }
  HessianBlocks constraint_hessian_contraction(const Vector& x, const Vector& p,
                                               const Vector& lambda) const override;

  Vector solve_equilibrium(const Vector& p, const Vector* warm_start = nullptr) const override;
  Vector initial_params() const override { return p_init_; }

 private:
  CscMatrix Cx_, Cp_, Rx_, Rp_;
  Vector c0_, r0_, w_, p_init_;
};

/// c = x - p, f = 1/2 |x - x*|^2.
std::unique_ptr<LinearProblem> make_quadratic_toy(const Vector& x_star, const Vector& p_init);

/// Seeded random instance with sparse well-conditioned dc/dx.
std::unique_ptr<LinearProblem> make_random_linear_problem(unsigned seed, Index nx, Index np);

/// Scalar c = x^3 - p, f = 1/2 (x - 2)^2.
class CubicToy : public EquilibriumProblem {
 public:
  std::string name() const override { return "cubic_toy"; }
  Index num_states() const override { return 1; }
  Index num_params() const override { return 1; }
  Vector constraints(const Vector& x, const Vector& p) const override;
  CscMatrix constraint_jacobian_x(const Vector& x, const Vector& p) const override;
  CscMatrix constraint_jacobian_p(const Vector& x, const Vector& p) const override;
  Vector residuals(const Vector& x, const Vector& p) const override;
  Vector residual_weights() const override;
  CscMatrix residual_jacobian_x(const Vector& x, const Vector& p) const override;
  CscMatrix residual_jacobian_p(const Vector& x, const Vector& p) const override;
  bool has_objective_hessian() const override { return true; }
  HessianBlocks objective_hessian(const Vector& x, const Vector& p) const override;
  bool has_constraint_hessian() const override { return true; }
  HessianBlocks constraint_hessian_contraction(const Vector& x, const Vector& p,
                                               const Vector& lambda) const override;
  Vector solve_equilibrium(const Vector& p, const Vector* warm_start = nullptr) const override;
  Vector initial_params() const override { return Vector::Constant(1, 1.0); }
};

/// Two states, two parameters, quadratic constraints and a general (not
/// least-squares) quadratic objective with an x-p coupling term.
class QuadraticConstraintToy : public EquilibriumProblem {
 public:
  std::string name() const override { return "quadratic_toy"; }
  Index num_states() const override { return 2; }
  Index num_params() const override { return 2; }
  Vector constraints(const Vector& x, const Vector& p) const override;
  CscMatrix constraint_jacobian_x(const Vector& x, const Vector& p) const override;
  CscMatrix constraint_jacobian_p(const Vector& x, const Vector& p) const override;
  bool has_least_squares() const override { return false; }
  double objective(const Vector& x, const Vector& p) const override;
  Vector objective_grad_x(const Vector& x, const Vector& p) const override;
  Vector objective_grad_p(const Vector& x, const Vector& p) const override;
  bool has_objective_hessian() const override { return true; }
  HessianBlocks objective_hessian(const Vector& x, const Vector& p) const override;
  bool has_constraint_hessian() const override { return true; }
  HessianBlocks constraint_hessian_contraction(const Vector& x, const Vector& p,
                                               const Vector& lambda) const override;
  Vector solve_equilibrium(const Vector& p, const Vector* warm_start = nullptr) const override;
  Vector initial_params() const override { return Vector::Zero(2); }
};

/// Damped Newton on c(x, p) = 0 with dense Jacobians; for small problems.
Vector newton_on_constraints(const EquilibriumProblem& prob, const Vector& p, Vector x,
                             double tolerance = 1e-13, int max_iterations = 100);

}  // namespace sgn
