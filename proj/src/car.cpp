#include <cmath>

#include "sgn/problems.hpp"

namespace sgn {

namespace {

std::vector<Vector> split_controls(const Vector& p, int steps) {
  std::vector<Vector> u;
  u.reserve(static_cast<std::size_t>(steps));
  for (int i = 0; i < steps; ++i) u.emplace_back(p.segment(2 * i, 2));
  return u;
}

}  // namespace

CarControlProblem::CarControlProblem(const CarConfig& cfg) : cfg_(cfg) {
  if (cfg.steps < 1) throw Error(ErrorKind::Config, "car needs at least one step");
  if (!(cfg.h > 0.0)) throw Error(ErrorKind::Config, "car step size must be positive");
  require_dims(cfg.start.size() == 3, "car start state has three components");
  require_dims(cfg.target_position.size() == 2, "car target position has two components");
}

Rollout CarControlProblem::rollout(const Vector& p) const {
  require_dims(p.size() == num_params(), "car control vector size mismatch");
  return rollout_explicit(cfg_.start, split_controls(p, cfg_.steps), cfg_.h, cfg_.steps);
}

Vector CarControlProblem::solve_equilibrium(const Vector& p, const Vector*) const {
  return rollout(p).stacked_states();
}

Vector CarControlProblem::constraints(const Vector& x, const Vector& p) const {
  return car_constraints(cfg_.start, x, p, cfg_.h).c;
}

CscMatrix CarControlProblem::constraint_jacobian_x(const Vector& x, const Vector& p) const {
  return car_constraints(cfg_.start, x, p, cfg_.h).dcdx;
}

CscMatrix CarControlProblem::constraint_jacobian_p(const Vector& x, const Vector& p) const {
  return car_constraints(cfg_.start, x, p, cfg_.h).dcdp;
}

// Rows: final position (2), final heading vs target heading (2),
// consecutive control differences (2 per step after the first).
Vector CarControlProblem::residuals(const Vector& x, const Vector& p) const {
  const Index n = cfg_.steps;
  Vector r(4 + 2 * (n - 1));
  const Vector xN = x.segment(3 * (n - 1), 3);
  r.segment(0, 2) = xN.head(2) - cfg_.target_position;
  r(2) = std::cos(xN(2)) - std::cos(cfg_.target_angle);
  r(3) = std::sin(xN(2)) - std::sin(cfg_.target_angle);
  for (Index i = 1; i < n; ++i) r.segment(4 + 2 * (i - 1), 2) = p.segment(2 * i, 2) - p.segment(2 * (i - 1), 2);
  return r;
}

Vector CarControlProblem::residual_weights() const {
  Vector w(4 + 2 * (cfg_.steps - 1));
  w.segment(0, 2).setConstant(cfg_.w_pos);
  w.segment(2, 2).setConstant(cfg_.w_dir);
  w.tail(w.size() - 4).setConstant(cfg_.w_smooth);
  return w;
}

CscMatrix CarControlProblem::residual_jacobian_x(const Vector& x, const Vector&) const {
  const Index n = cfg_.steps;
  const Index base = 3 * (n - 1);
  TripletMatrix t(4 + 2 * (n - 1), 3 * n);
  t.add(0, base, 1.0);
  t.add(1, base + 1, 1.0);
  t.add(2, base + 2, -std::sin(x(base + 2)));
  t.add(3, base + 2, std::cos(x(base + 2)));
  return csc_from_triplets(t);
}

CscMatrix CarControlProblem::residual_jacobian_p(const Vector&, const Vector&) const {
  const Index n = cfg_.steps;
  TripletMatrix t(4 + 2 * (n - 1), 2 * n);
  for (Index i = 1; i < n; ++i)
    for (Index k = 0; k < 2; ++k) {
      t.add(4 + 2 * (i - 1) + k, 2 * i + k, 1.0);
      t.add(4 + 2 * (i - 1) + k, 2 * (i - 1) + k, -1.0);
    }
  return csc_from_triplets(t);
}

HessianBlocks CarControlProblem::objective_hessian(const Vector& x, const Vector&) const {
  const Index n = cfg_.steps;
  const Index base = 3 * (n - 1);
  TripletMatrix xx(3 * n, 3 * n), pp(2 * n, 2 * n);
  xx.add(base, base, cfg_.w_pos);
  xx.add(base + 1, base + 1, cfg_.w_pos);
  // w_dir * (1 - cos(theta - theta_target))
  xx.add(base + 2, base + 2, cfg_.w_dir * std::cos(x(base + 2) - cfg_.target_angle));
  for (Index i = 1; i < n; ++i)
    for (Index k = 0; k < 2; ++k) {
      const Index a = 2 * (i - 1) + k, b = 2 * i + k;
      pp.add(a, a, cfg_.w_smooth);
      pp.add(b, b, cfg_.w_smooth);
      pp.add(a, b, -cfg_.w_smooth);
      pp.add(b, a, -cfg_.w_smooth);
    }
  return HessianBlocks{csc_from_triplets(xx), sparse_zero(2 * n, 3 * n), csc_from_triplets(pp)};
}

HessianBlocks CarControlProblem::constraint_hessian_contraction(const Vector& x, const Vector& p,
                                                                const Vector& lambda) const {
  require_dims(lambda.size() == num_states(), "multiplier size mismatch");
  const Index n = cfg_.steps;
  const double h = cfg_.h;
  TripletMatrix xx(3 * n, 3 * n), px(2 * n, 3 * n), pp(2 * n, 2 * n);
  for (Index i = 0; i < n; ++i) {
    // -h * lambda^i . xdot(x^{i-1}, u^i)
    const double l0 = lambda(3 * i), l1 = lambda(3 * i + 1), l2 = lambda(3 * i + 2);
    const double theta = i == 0 ? cfg_.start(2) : x(3 * (i - 1) + 2);
    const double v = p(2 * i), s = p(2 * i + 1);
    const double ct = std::cos(theta), st = std::sin(theta);
    const double sec2 = 1.0 / (std::cos(s) * std::cos(s));
    const Index iv = 2 * i, is = 2 * i + 1;
    pp.add(iv, is, -h * l2 * sec2);
    pp.add(is, iv, -h * l2 * sec2);
    pp.add(is, is, -h * l2 * v * 2.0 * sec2 * std::tan(s));
    if (i > 0) {
      const Index it = 3 * (i - 1) + 2;
      xx.add(it, it, -h * (-l0 * v * ct - l1 * v * st));
      px.add(iv, it, -h * (-l0 * st + l1 * ct));
    }
  }
  return HessianBlocks{csc_from_triplets(xx), csc_from_triplets(px), csc_from_triplets(pp)};
}

Vector CarControlProblem::initial_params() const {
  Vector p(num_params());
  for (Index i = 0; i < cfg_.steps; ++i) {
    p(2 * i) = cfg_.v_init;
    p(2 * i + 1) = cfg_.s_init;
  }
  return p;
}

std::optional<ParamBounds> CarControlProblem::param_bounds() const {
  ParamBounds b;
  b.lower.resize(num_params());
  b.upper.resize(num_params());
  for (Index i = 0; i < cfg_.steps; ++i) {
    b.lower(2 * i) = -cfg_.v_max;
    b.upper(2 * i) = cfg_.v_max;
    b.lower(2 * i + 1) = -cfg_.s_max;
    b.upper(2 * i + 1) = cfg_.s_max;
  }
  return b;
}

}  // namespace sgn
