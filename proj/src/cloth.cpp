#include "sgn/problems.hpp"
#include "sgn/sensitivity.hpp"

namespace sgn {

ClothControlProblem::ClothControlProblem(const ClothConfig& cfg)
    : cfg_(cfg), model_(ClothModel::grid(cfg.side, cfg.spacing, cfg.stiffness)) {
  if (cfg.steps < 2) throw Error(ErrorKind::Config, "cloth needs at least two steps");
  if (!(cfg.total_time > 0.0)) throw Error(ErrorKind::Config, "cloth total time must be positive");
  model_.gravity(2) = -cfg.gravity;
  dofs_ = 3 * static_cast<Index>(model_.num_vertices());
  h_ = cfg.total_time / cfg.steps;
  x0_ = model_.rest_positions;
  v0_ = Vector::Zero(dofs_);
  handle_init_.resize(model_.handle_dofs());
  for (std::size_t k = 0; k < model_.handles.size(); ++k)
    handle_init_.segment(3 * static_cast<Index>(k), 3) = x0_.segment(3 * model_.handles[k], 3);

  if (cfg.keyframes.empty()) {
    keyframes_ = {cfg.steps};
  } else {
    for (int j : cfg.keyframes) {
      if (j < 1 || j > cfg.steps)
        throw Error(ErrorKind::Config, "keyframe " + std::to_string(j) + " outside 1.." +
                                           std::to_string(cfg.steps));
      keyframes_.push_back(j);
    }
  }
  if (!cfg.targets.empty()) {
    require_dims(cfg.targets.size() == keyframes_.size(), "one target per keyframe required");
    for (const Vector& t : cfg.targets) require_dims(t.size() == dofs_, "keyframe target size mismatch");
    targets_ = cfg.targets;
  } else {
    require_dims(cfg.target_offset.size() == 3, "target offset has three components");
    Vector shifted = x0_;
    for (int v = 0; v < model_.num_vertices(); ++v) shifted.segment(3 * v, 3) += cfg.target_offset;
    targets_.assign(keyframes_.size(), shifted);
  }
}

Vector ClothControlProblem::initial_params() const {
  Vector p(num_params());
  const Index m = model_.handle_dofs();
  for (int i = 0; i < cfg_.steps; ++i) p.segment(i * m, m) = handle_init_;
  return p;
}

Rollout ClothControlProblem::rollout(const Vector& p) const {
  require_dims(p.size() == num_params(), "cloth control vector size mismatch");
  const Index m = model_.handle_dofs();
  std::vector<Vector> controls;
  for (int i = 0; i < cfg_.steps; ++i) controls.emplace_back(p.segment(i * m, m));
  return rollout_implicit(model_, x0_, v0_, controls, h_, cfg_.steps);
}

Vector ClothControlProblem::solve_equilibrium(const Vector& p, const Vector*) const {
  return rollout(p).stacked_states();
}

Vector ClothControlProblem::constraints(const Vector& x, const Vector& p) const {
  return cloth_constraints(model_, x0_, v0_, x, p, h_).c;
}

CscMatrix ClothControlProblem::constraint_jacobian_x(const Vector& x, const Vector& p) const {
  return cloth_constraints(model_, x0_, v0_, x, p, h_).dcdx;
}

CscMatrix ClothControlProblem::constraint_jacobian_p(const Vector& x, const Vector& p) const {
  return cloth_constraints(model_, x0_, v0_, x, p, h_).dcdp;
}

// Row layout: keyframe errors (3V each), handle deviation (6N),
// handle velocity (6N), cloth velocity (3VN).
Vector ClothControlProblem::residuals(const Vector& x, const Vector& p) const {
  const Index d = dofs_, m = model_.handle_dofs(), n = cfg_.steps;
  const Index nk = static_cast<Index>(keyframes_.size());
  Vector r(nk * d + 2 * m * n + d * n);
  for (Index k = 0; k < nk; ++k)
    r.segment(k * d, d) = x.segment((keyframes_[static_cast<std::size_t>(k)] - 1) * d, d) -
                          targets_[static_cast<std::size_t>(k)];
  Index row = nk * d;
  for (Index i = 0; i < n; ++i) r.segment(row + i * m, m) = p.segment(i * m, m) - handle_init_;
  row += m * n;
  for (Index i = 0; i < n; ++i) {
    const Vector prev = i == 0 ? handle_init_ : Vector(p.segment((i - 1) * m, m));
    r.segment(row + i * m, m) = (p.segment(i * m, m) - prev) / h_;
  }
  row += m * n;
  for (Index i = 0; i < n; ++i) {
    const Vector prev = i == 0 ? x0_ : Vector(x.segment((i - 1) * d, d));
    r.segment(row + i * d, d) = (x.segment(i * d, d) - prev) / h_;
  }
  return r;
}

Vector ClothControlProblem::residual_weights() const {
  const Index d = dofs_, m = model_.handle_dofs(), n = cfg_.steps;
  const Index nk = static_cast<Index>(keyframes_.size());
  Vector w(nk * d + 2 * m * n + d * n);
  w.head(nk * d).setOnes();
  w.segment(nk * d, m * n).setConstant(cfg_.w_handle);
  w.segment(nk * d + m * n, m * n).setConstant(cfg_.w_handle_velocity);
  w.tail(d * n).setConstant(cfg_.w_cloth_velocity);
  return w;
}

CscMatrix ClothControlProblem::residual_jacobian_x(const Vector&, const Vector&) const {
  const Index d = dofs_, m = model_.handle_dofs(), n = cfg_.steps;
  const Index nk = static_cast<Index>(keyframes_.size());
  TripletMatrix t(nk * d + 2 * m * n + d * n, d * n);
  for (Index k = 0; k < nk; ++k)
    t.add_diagonal(k * d, (keyframes_[static_cast<std::size_t>(k)] - 1) * d, d, 1.0);
  const Index row = nk * d + 2 * m * n;
  for (Index i = 0; i < n; ++i) {
    t.add_diagonal(row + i * d, i * d, d, 1.0 / h_);
    if (i > 0) t.add_diagonal(row + i * d, (i - 1) * d, d, -1.0 / h_);
  }
  return csc_from_triplets(t);
}

CscMatrix ClothControlProblem::residual_jacobian_p(const Vector&, const Vector&) const {
  const Index d = dofs_, m = model_.handle_dofs(), n = cfg_.steps;
  const Index nk = static_cast<Index>(keyframes_.size());
  TripletMatrix t(nk * d + 2 * m * n + d * n, m * n);
  const Index row = nk * d;
  t.add_diagonal(row, 0, m * n, 1.0);
  for (Index i = 0; i < n; ++i) {
    t.add_diagonal(row + m * n + i * m, i * m, m, 1.0 / h_);
    if (i > 0) t.add_diagonal(row + m * n + i * m, (i - 1) * m, m, -1.0 / h_);
  }
  return csc_from_triplets(t);
}

HessianBlocks ClothControlProblem::objective_hessian(const Vector& x, const Vector& p) const {
  // All residuals are linear, so the Gauss-Newton blocks are exact.
  GnBlocks g = gn_blocks(*this, x, p);
  return HessianBlocks{g.A, g.B, g.C};
}

HessianBlocks ClothControlProblem::constraint_hessian_contraction(const Vector& x, const Vector&,
                                                                  const Vector& lambda) const {
  require_dims(lambda.size() == num_states(), "multiplier size mismatch");
  const Index d = dofs_, n = cfg_.steps;
  TripletMatrix xx(d * n, d * n);
  const double h2 = h_ * h_;
  for (Index i = 0; i < n; ++i) {
    const Vector xi = x.segment(i * d, d);
    const Vector li = lambda.segment(i * d, d);
    for (const Spring& s : model_.springs) {
      const Vector mu = li.segment(3 * s.a, 3) - li.segment(3 * s.b, 3);
      if (mu.isZero(0.0)) continue;
      const Vector dvec = xi.segment(3 * s.a, 3) - xi.segment(3 * s.b, 3);
      Vector e = Vector::Zero(3);
      e(0) = s.rest_length;
      const DenseMatrix H = h2 * spring_contraction(dvec, e, s.stiffness, mu).dd;
      const Index a = i * d + 3 * s.a, b = i * d + 3 * s.b;
      xx.add_block(a, a, H);
      xx.add_block(b, b, H);
      xx.add_block(a, b, -H);
      xx.add_block(b, a, -H);
    }
  }
  const Index np = num_params();
  return HessianBlocks{csc_from_triplets(xx), sparse_zero(np, d * n), sparse_zero(np, np)};
}

}  // namespace sgn
