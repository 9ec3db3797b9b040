#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "sgn/sparse.hpp"

namespace sgn {

// ---------------------------------------------------------------------------
// Static equilibrium

/// Energy E(x, p) minimized over x for fixed p. Its gradient is the residual
/// force c(x, p) = dE/dx.
class StaticEquilibrium {
 public:
  virtual ~StaticEquilibrium() = default;
  virtual Index dimension() const = 0;
  virtual double energy(const Vector& x, const Vector& p) const = 0;
  virtual Vector gradient(const Vector& x, const Vector& p) const = 0;
  virtual CscMatrix hessian(const Vector& x, const Vector& p) const = 0;

  std::vector<Index> fixed;  // Dirichlet indices, held at their initial value
  double tolerance = 1e-10;  // on ||dE/dx||_inf
  int max_iterations = 200;
};

struct StaticSolveReport {
  int iterations = 0;
  double residual = 0.0;
  std::vector<double> energies;  // one entry per accepted iterate, initial first
};

/// Newton's method with backtracking on the energy. Indefinite stiffness is
/// shifted by tau*I, tau = 1e-6 * trace/n, growing 10x until the step is a
/// descent direction.
Vector solve_static(const StaticEquilibrium& prob, const Vector& p, const Vector& x_init,
                    StaticSolveReport* report = nullptr);

// ---------------------------------------------------------------------------
// Mass-spring helpers

struct Spring {
  int a = 0;
  int b = 0;
  double rest_length = 0.0;
  double stiffness = 1e3;
};

/// E = k/2 (|d| - L)^2 for d = x_a - x_b, with `dim` coordinates per vertex.
double spring_energy(const Spring& s, const Vector& pos, int dim);
/// Hessian block H with d2E/dx_a2 = H, d2E/dx_a dx_b = -H.
DenseMatrix spring_hessian_block(const Spring& s, const Vector& pos, int dim);
/// dE/dx_a (dE/dx_b is its negative).
Vector spring_gradient(const Spring& s, const Vector& pos, int dim);

/// Second derivatives of phi = mu . dE/dd for one spring, with d the current
/// edge vector and e the rest edge vector (rest length |e|):
///   dd: d2phi/dd2, de: d2phi/dd de, ee: d2phi/de2.
struct SpringContraction {
  DenseMatrix dd, de, ee;
};
SpringContraction spring_contraction(const Vector& d, const Vector& e, double stiffness,
                                     const Vector& mu);

std::vector<Spring> grid_springs(int nw, int nh, const Vector& rest_pos, int dim, double stiffness);

// ---------------------------------------------------------------------------
// Rollouts

enum class Integrator { Explicit, Implicit };

struct Rollout {
  Integrator integrator = Integrator::Explicit;
  int steps = 0;
  double h = 0.0;
  Vector x0;                    // initial state (not part of the unknowns)
  std::vector<Vector> states;   // x^1 .. x^N
  std::vector<Vector> controls; // p^1 .. p^N
  std::vector<int> newton_iterations;

  Vector stacked_states() const;
};

void write_rollout_csv(std::ostream& out, const Rollout& r);

/// Kinematic car, state (px, py, theta), control (v, s):
///   xdot = (v cos theta, v sin theta, v tan s).
struct CarDynamics {
  static Vector velocity(const Vector& x, const Vector& u);
  static DenseMatrix velocity_dx(const Vector& x, const Vector& u);  // 3x3
  static DenseMatrix velocity_du(const Vector& x, const Vector& u);  // 3x2
};

/// x^i = x^{i-1} + h * xdot(x^{i-1}, p^i). Throws NumericalBlowup when a
/// state is non-finite or exceeds 1e8 in magnitude.
Rollout rollout_explicit(const Vector& x0, const std::vector<Vector>& controls, double h, int steps);

/// Stacked car constraints c^i = x^i - x^{i-1} - h xdot(x^{i-1}, p^i) and
/// their Jacobians with respect to all states and all controls.
struct StackedConstraints {
  Vector c;
  CscMatrix dcdx;
  CscMatrix dcdp;
};
StackedConstraints stacked_constraints(const Rollout& rollout);
StackedConstraints car_constraints(const Vector& x0, const Vector& states, const Vector& controls,
                                   double h);

/// Cloth: mass-spring sheet integrated with implicit Euler. Two handle
/// vertices are pulled toward control positions by stiff springs.
struct ClothModel {
  int side = 5;
  int num_vertices() const { return side * side; }
  Vector rest_positions;        // 3V
  std::vector<Spring> springs;
  double mass = 1.0;
  double handle_stiffness = 1e4;
  Vector gravity = Vector::Zero(3);
  std::vector<int> handles;     // vertex ids driven by controls, 3 coords each

  static ClothModel grid(int side, double spacing, double stiffness);
  Index handle_dofs() const { return 3 * static_cast<Index>(handles.size()); }

  double potential(const Vector& x, const Vector& handle_targets) const;  // springs + handles + gravity
  Vector potential_gradient(const Vector& x, const Vector& handle_targets) const;
  CscMatrix potential_hessian(const Vector& x) const;

  /// c = M (x - 2 x_prev + x_prev2) - h^2 F(x, p).
  Vector step_residual(const Vector& x, const Vector& x_prev, const Vector& x_prev2,
                       const Vector& handle_targets, double h) const;
};

/// Each step solves M(x^i - x^{i-1} - h v^i) = 0, v^i = v^{i-1} + h M^{-1} F(x^i, p^i).
Rollout rollout_implicit(const ClothModel& cloth, const Vector& x0, const Vector& v0,
                         const std::vector<Vector>& controls, double h, int steps,
                         double tolerance = 1e-10);

StackedConstraints cloth_constraints(const ClothModel& cloth, const Vector& x0, const Vector& v0,
                                     const Vector& states, const Vector& controls, double h);

}  // namespace sgn
