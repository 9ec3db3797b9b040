#pragma once

// Reference computations shared by the unit tests and the acceptance run.

#include <cmath>
#include <functional>
#include <random>

#include "sgn/problems.hpp"
#include "sgn/sensitivity.hpp"

namespace oracle {

using sgn::CscMatrix;
using sgn::DenseMatrix;
using sgn::Index;
using sgn::Vector;

inline CscMatrix random_sparse(std::mt19937& rng, Index rows, Index cols, double density) {
  std::uniform_real_distribution<double> val(-1.0, 1.0), unit(0.0, 1.0);
  sgn::TripletMatrix t(rows, cols);
  for (Index j = 0; j < cols; ++j)
    for (Index i = 0; i < rows; ++i)
      if (unit(rng) < density) t.add(i, j, val(rng));
  return sgn::csc_from_triplets(t);
}

inline Vector random_vector(std::mt19937& rng, Index n, double scale = 1.0) {
  std::uniform_real_distribution<double> val(-scale, scale);
  Vector v(n);
  for (Index i = 0; i < n; ++i) v(i) = val(rng);
  return v;
}

inline double rel_err(const Vector& a, const Vector& b) { return (a - b).norm() / b.norm(); }

/// Central differences of a vector function, column by column.
inline DenseMatrix fd_jacobian(const std::function<Vector(const Vector&)>& fn, const Vector& at, double h) {
  const Vector f0 = fn(at);
  DenseMatrix J(f0.size(), at.size());
  for (Index j = 0; j < at.size(); ++j) {
    Vector a = at, b = at;
    a(j) += h;
    b(j) -= h;
    J.col(j) = (fn(a) - fn(b)) / (2.0 * h);
  }
  return J;
}

/// df/dp by central differences through the forward simulation.
inline Vector fd_gradient(const sgn::EquilibriumProblem& prob, const Vector& p, double h) {
  Vector g(p.size());
  for (Index i = 0; i < p.size(); ++i) {
    Vector a = p, b = p;
    a(i) += h;
    b(i) -= h;
    g(i) = (prob.objective(prob.solve_equilibrium(a), a) - prob.objective(prob.solve_equilibrium(b), b)) /
           (2.0 * h);
  }
  return g;
}

/// Car objective from an extended-precision explicit Euler rollout. Its
/// rounding floor sits far below the FD truncation error at small steps.
inline long double car_objective_extended(const sgn::CarConfig& c, const Vector& p) {
  using L = long double;
  L px = c.start(0), py = c.start(1), th = c.start(2);
  const L h = c.h;
  for (int i = 0; i < c.steps; ++i) {
    const L v = p(2 * i), st = p(2 * i + 1);
    const L nx = px + h * v * std::cos(th), ny = py + h * v * std::sin(th), nt = th + h * v * std::tan(st);
    px = nx;
    py = ny;
    th = nt;
  }
  const L ex = px - c.target_position(0), ey = py - c.target_position(1);
  const L dc = std::cos(th) - std::cos(static_cast<L>(c.target_angle));
  const L ds = std::sin(th) - std::sin(static_cast<L>(c.target_angle));
  L f = 0.5L * c.w_pos * (ex * ex + ey * ey) + 0.5L * c.w_dir * (dc * dc + ds * ds);
  for (int i = 1; i < c.steps; ++i)
    for (int k = 0; k < 2; ++k) {
      const L d = static_cast<L>(p(2 * i + k)) - static_cast<L>(p(2 * (i - 1) + k));
      f += 0.5L * c.w_smooth * d * d;
    }
  return f;
}

inline Vector car_fd_gradient_extended(const sgn::CarConfig& c, const Vector& p, double h) {
  Vector g(p.size());
  for (Index i = 0; i < p.size(); ++i) {
    Vector a = p, b = p;
    a(i) += h;
    b(i) -= h;
    // Use the actual perturbation so the rounding of p +- h does not enter.
    const long double step = static_cast<long double>(a(i)) - static_cast<long double>(b(i));
    g(i) = static_cast<double>((car_objective_extended(c, a) - car_objective_extended(c, b)) / step);
  }
  return g;
}

/// Cloth states with the implicit steps solved to `tolerance`.
inline Vector cloth_states(const sgn::ClothControlProblem& prob, const Vector& p, double tolerance) {
  const sgn::ClothModel& m = prob.model();
  const Index dofs = m.handle_dofs();
  const int steps = static_cast<int>(p.size() / dofs);
  std::vector<Vector> controls;
  for (int i = 0; i < steps; ++i) controls.emplace_back(p.segment(i * dofs, dofs));
  return sgn::rollout_implicit(m, m.rest_positions, Vector::Zero(m.rest_positions.size()), controls,
                               prob.step_size(), steps, tolerance)
      .stacked_states();
}

inline Vector cloth_fd_gradient(const sgn::ClothControlProblem& prob, const Vector& p, double h,
                                double tolerance) {
  Vector g(p.size());
  for (Index i = 0; i < p.size(); ++i) {
    Vector a = p, b = p;
    a(i) += h;
    b(i) -= h;
    g(i) = (prob.objective(cloth_states(prob, a, tolerance), a) - prob.objective(cloth_states(prob, b, tolerance), b)) /
           (a(i) - b(i));
  }
  return g;
}

/// Stacked residual Jacobians, densely: H_GN = J^T W J with J = Rx S + Rp.
inline DenseMatrix gn_hessian_sandwich(const sgn::EquilibriumProblem& prob, const Vector& x, const Vector& p) {
  const DenseMatrix S = sgn::sensitivity_matrix(prob, x, p);
  const DenseMatrix J = DenseMatrix(prob.residual_jacobian_x(x, p)) * S + DenseMatrix(prob.residual_jacobian_p(x, p));
  return J.transpose() * prob.residual_weights().asDiagonal() * J;
}

/// Gauss-Newton step solved densely: -H^{-1} g.
inline Vector dense_gn_step(const sgn::EquilibriumProblem& prob, const Vector& x, const Vector& p) {
  const DenseMatrix H = gn_hessian_sandwich(prob, x, p);
  return -H.ldlt().solve(sgn::adjoint_gradient(prob, x, p));
}

}  // namespace oracle
