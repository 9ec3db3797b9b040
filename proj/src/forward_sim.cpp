#include "sgn/forward_sim.hpp"

#include <cmath>
#include <iomanip>
#include <ostream>

#include <Eigen/SparseCholesky>

namespace sgn {

// ---------------------------------------------------------------------------
// Static equilibrium

namespace {

double inf_norm_free(const Vector& g, const std::vector<char>& is_fixed) {
  double m = 0.0;
  for (Index i = 0; i < g.size(); ++i)
    if (!is_fixed[static_cast<std::size_t>(i)]) m = std::max(m, std::abs(g(i)));
  return m;
}

}  // namespace

Vector solve_static(const StaticEquilibrium& prob, const Vector& p, const Vector& x_init,
                    StaticSolveReport* report) {
  const Index n = prob.dimension();
  require_dims(x_init.size() == n, "solve_static: initial state has wrong size");
  std::vector<char> is_fixed(static_cast<std::size_t>(n), 0);
  for (Index i : prob.fixed) {
    if (i < 0 || i >= n) throw Error(ErrorKind::IndexOutOfBounds, "fixed index out of range");
    is_fixed[static_cast<std::size_t>(i)] = 1;
  }

  Vector x = x_init;
  double e = prob.energy(x, p);
  Vector g = prob.gradient(x, p);
  for (Index i : prob.fixed) g(i) = 0.0;
  double res = inf_norm_free(g, is_fixed);

  StaticSolveReport local;
  StaticSolveReport& rep = report ? *report : local;
  rep = StaticSolveReport{};
  rep.energies.push_back(e);

  int it = 0;
  while (res > prob.tolerance) {
    if (it >= prob.max_iterations)
      throw Error(ErrorKind::ForwardSimFailure,
                  "static Newton did not converge, residual " + format_number(res));
    ++it;

    CscMatrix K = prob.hessian(x, p);
    // Dirichlet rows/columns become identity.
    if (!prob.fixed.empty()) {
      for (Index k = 0; k < K.outerSize(); ++k)
        for (CscMatrix::InnerIterator itr(K, k); itr; ++itr)
          if (is_fixed[static_cast<std::size_t>(itr.row())] || is_fixed[static_cast<std::size_t>(itr.col())])
            itr.valueRef() = itr.row() == itr.col() ? 1.0 : 0.0;
    }
    double tau = 0.0;
    const double base_tau = std::max(1e-12, 1e-6 * std::abs(K.diagonal().sum()) / std::max<Index>(n, 1));
    Vector d;
    for (int attempt = 0;; ++attempt) {
      if (attempt > 40) throw Error(ErrorKind::ForwardSimFailure, "could not regularize stiffness");
      CscMatrix Kr = K;
      if (tau > 0.0)
        for (Index i = 0; i < n; ++i) Kr.coeffRef(i, i) += tau;
      Eigen::SimplicialLDLT<CscMatrix> ldlt(Kr);
      bool ok = ldlt.info() == Eigen::Success && (ldlt.vectorD().array() > 0.0).all();
      if (ok) {
        d = ldlt.solve(Vector(-g));
        ok = d.allFinite() && d.dot(g) < 0.0;
      }
      if (ok) break;
      tau = tau == 0.0 ? base_tau : 10.0 * tau;
    }

    const double slope = d.dot(g);
    double alpha = 1.0;
    Vector x_new;
    double e_new = 0.0;
    bool accepted = false;
    for (int bt = 0; bt < 60; ++bt) {
      x_new = x + alpha * d;
      e_new = prob.energy(x_new, p);
      // Round-off slack lets the final quadratic Newton steps through.
      if (std::isfinite(e_new) && e_new <= e + 1e-4 * alpha * slope + 1e-14 * std::abs(e)) {
        accepted = true;
        break;
      }
      alpha *= 0.5;
    }
    if (!accepted) throw Error(ErrorKind::ForwardSimFailure, "static line search failed");
    x = std::move(x_new);
    e = e_new;
    g = prob.gradient(x, p);
    for (Index i : prob.fixed) g(i) = 0.0;
    res = inf_norm_free(g, is_fixed);
    rep.energies.push_back(e);
    if (!x.allFinite()) throw Error(ErrorKind::ForwardSimFailure, "non-finite state");
    // A full step at round-off scale means the force tolerance is below what
    // the arithmetic can resolve.
    if (alpha == 1.0 && d.lpNorm<Eigen::Infinity>() <= 1e-13 * (1.0 + x.lpNorm<Eigen::Infinity>())) break;
  }
  rep.iterations = it;
  rep.residual = res;
  return x;
}

// ---------------------------------------------------------------------------
// Springs

namespace {
Vector segment_of(const Vector& pos, int v, int dim) { return pos.segment(static_cast<Index>(v) * dim, dim); }
}  // namespace

double spring_energy(const Spring& s, const Vector& pos, int dim) {
  const double l = (segment_of(pos, s.a, dim) - segment_of(pos, s.b, dim)).norm();
  const double e = l - s.rest_length;
  return 0.5 * s.stiffness * e * e;
}

Vector spring_gradient(const Spring& s, const Vector& pos, int dim) {
  const Vector d = segment_of(pos, s.a, dim) - segment_of(pos, s.b, dim);
  const double l = d.norm();
  if (l == 0.0) return Vector::Zero(dim);
  return s.stiffness * (l - s.rest_length) / l * d;
}

DenseMatrix spring_hessian_block(const Spring& s, const Vector& pos, int dim) {
  const Vector d = segment_of(pos, s.a, dim) - segment_of(pos, s.b, dim);
  const double l = d.norm();
  const DenseMatrix I = DenseMatrix::Identity(dim, dim);
  if (l == 0.0) return s.stiffness * I;
  const Vector u = d / l;
  const DenseMatrix uu = u * u.transpose();
  return s.stiffness * (uu + (l - s.rest_length) / l * (I - uu));
}

SpringContraction spring_contraction(const Vector& d, const Vector& e, double k, const Vector& mu) {
  const Index dim = d.size();
  const DenseMatrix I = DenseMatrix::Identity(dim, dim);
  const double l = d.norm();
  const double L = e.norm();
  const double psi = d.dot(mu);
  const double l3 = l * l * l;
  SpringContraction out;
  out.dd = k * (L / l3 * (mu * d.transpose() + d * mu.transpose() + psi * I) -
                3.0 * L * psi / (l3 * l * l) * d * d.transpose());
  const Vector nu = e / L;
  out.de = k * (-mu / l + psi / l3 * d) * nu.transpose();
  out.ee = -k * psi / (l * L) * (I - nu * nu.transpose());
  return out;
}

std::vector<Spring> grid_springs(int nw, int nh, const Vector& rest_pos, int dim, double stiffness) {
  std::vector<Spring> out;
  auto id = [nw](int r, int c) { return r * nw + c; };
  auto add = [&](int a, int b) {
    Spring s;
    s.a = a;
    s.b = b;
    s.stiffness = stiffness;
    s.rest_length = (segment_of(rest_pos, a, dim) - segment_of(rest_pos, b, dim)).norm();
    out.push_back(s);
  };
  for (int r = 0; r < nh; ++r)
    for (int c = 0; c < nw; ++c) {
      if (c + 1 < nw) add(id(r, c), id(r, c + 1));
      if (r + 1 < nh) add(id(r, c), id(r + 1, c));
      if (c + 1 < nw && r + 1 < nh) {
        add(id(r, c), id(r + 1, c + 1));
        add(id(r, c + 1), id(r + 1, c));
      }
    }
  return out;
}

// ---------------------------------------------------------------------------
// Rollouts

Vector Rollout::stacked_states() const {
  if (states.empty()) return Vector();
  const Index d = states.front().size();
  Vector out(d * static_cast<Index>(states.size()));
  for (std::size_t i = 0; i < states.size(); ++i) out.segment(static_cast<Index>(i) * d, d) = states[i];
  return out;
}

void write_rollout_csv(std::ostream& out, const Rollout& r) {
  const Index d = r.x0.size();
  out << "step";
  for (Index k = 0; k < d; ++k) out << ",x" << k;
  out << "\n" << std::setprecision(17);
  auto row = [&](int step, const Vector& x) {
    out << step;
    for (Index k = 0; k < x.size(); ++k) out << "," << x(k);
    out << "\n";
  };
  row(0, r.x0);
  for (std::size_t i = 0; i < r.states.size(); ++i) row(static_cast<int>(i) + 1, r.states[i]);
}

Vector CarDynamics::velocity(const Vector& x, const Vector& u) {
  Vector v(3);
  v << u(0) * std::cos(x(2)), u(0) * std::sin(x(2)), u(0) * std::tan(u(1));
  return v;
}

DenseMatrix CarDynamics::velocity_dx(const Vector& x, const Vector& u) {
  DenseMatrix j = DenseMatrix::Zero(3, 3);
  j(0, 2) = -u(0) * std::sin(x(2));
  j(1, 2) = u(0) * std::cos(x(2));
  return j;
}

DenseMatrix CarDynamics::velocity_du(const Vector& x, const Vector& u) {
  DenseMatrix j = DenseMatrix::Zero(3, 2);
  const double c = std::cos(u(1));
  j(0, 0) = std::cos(x(2));
  j(1, 0) = std::sin(x(2));
  j(2, 0) = std::tan(u(1));
  j(2, 1) = u(0) / (c * c);
  return j;
}

Rollout rollout_explicit(const Vector& x0, const std::vector<Vector>& controls, double h, int steps) {
  if (steps < 1) throw Error(ErrorKind::Config, "rollout needs at least one step");
  if (!(h > 0.0)) throw Error(ErrorKind::Config, "step size must be positive");
  require_dims(controls.size() == static_cast<std::size_t>(steps), "one control per step required");
  require_dims(x0.size() == 3, "car state has three components");
  Rollout r;
  r.integrator = Integrator::Explicit;
  r.steps = steps;
  r.h = h;
  r.x0 = x0;
  r.controls = controls;
  r.states.reserve(static_cast<std::size_t>(steps));
  Vector x = x0;
  for (int i = 0; i < steps; ++i) {
    x = x + h * CarDynamics::velocity(x, controls[static_cast<std::size_t>(i)]);
    if (!x.allFinite() || x.cwiseAbs().maxCoeff() > 1e8) throw NumericalBlowup(i + 1);
    r.states.push_back(x);
  }
  return r;
}

StackedConstraints car_constraints(const Vector& x0, const Vector& states, const Vector& controls,
                                   double h) {
  const Index n = states.size() / 3;
  require_dims(states.size() == 3 * n && controls.size() == 2 * n, "car_constraints: sizes");
  StackedConstraints out;
  out.c.resize(3 * n);
  TripletMatrix jx(3 * n, 3 * n), jp(3 * n, 2 * n);
  jx.reserve(static_cast<std::size_t>(3 * n + 5 * n));
  jp.reserve(static_cast<std::size_t>(4 * n));
  for (Index i = 0; i < n; ++i) {
    const Vector prev = i == 0 ? x0 : Vector(states.segment(3 * (i - 1), 3));
    const Vector u = controls.segment(2 * i, 2);
    out.c.segment(3 * i, 3) = states.segment(3 * i, 3) - prev - h * CarDynamics::velocity(prev, u);
    jx.add_diagonal(3 * i, 3, 1.0);
    if (i > 0) {
      DenseMatrix sub = -(DenseMatrix::Identity(3, 3) + h * CarDynamics::velocity_dx(prev, u));
      jx.add_block(3 * i, 3 * (i - 1), sub);
    }
    jp.add_block(3 * i, 2 * i, -h * CarDynamics::velocity_du(prev, u));
  }
  out.dcdx = csc_from_triplets(jx);
  out.dcdp = csc_from_triplets(jp);
  return out;
}

StackedConstraints stacked_constraints(const Rollout& rollout) {
  const Index n = rollout.steps;
  Vector controls(2 * n);
  for (Index i = 0; i < n; ++i) controls.segment(2 * i, 2) = rollout.controls[static_cast<std::size_t>(i)];
  if (rollout.integrator == Integrator::Explicit)
    return car_constraints(rollout.x0, rollout.stacked_states(), controls, rollout.h);
  throw Error(ErrorKind::CapabilityMissing,
              "implicit rollouts need their cloth model; use cloth_constraints");
}

// ---------------------------------------------------------------------------
// Cloth

ClothModel ClothModel::grid(int side, double spacing, double stiffness) {
  if (side < 2) throw Error(ErrorKind::Config, "cloth side must be >= 2");
  ClothModel m;
  m.side = side;
  const int V = side * side;
  m.rest_positions.resize(3 * V);
  // Vertical sheet in the x-z plane; row 0 is the top edge.
  for (int r = 0; r < side; ++r)
    for (int c = 0; c < side; ++c) {
      const int v = r * side + c;
      m.rest_positions.segment(3 * v, 3) << c * spacing, 0.0, -r * spacing;
    }
  m.springs = grid_springs(side, side, m.rest_positions, 3, stiffness);
  m.gravity = Vector::Zero(3);
  m.gravity(2) = -9.81;
  m.handles = {0, side - 1};
  return m;
}

double ClothModel::potential(const Vector& x, const Vector& targets) const {
  double e = 0.0;
  for (const Spring& s : springs) e += spring_energy(s, x, 3);
  for (std::size_t k = 0; k < handles.size(); ++k) {
    const Vector d = x.segment(3 * handles[k], 3) - targets.segment(3 * static_cast<Index>(k), 3);
    e += 0.5 * handle_stiffness * d.squaredNorm();
  }
  for (int v = 0; v < num_vertices(); ++v) e -= mass * gravity.dot(x.segment(3 * v, 3));
  return e;
}

Vector ClothModel::potential_gradient(const Vector& x, const Vector& targets) const {
  Vector g = Vector::Zero(x.size());
  for (const Spring& s : springs) {
    const Vector f = spring_gradient(s, x, 3);
    g.segment(3 * s.a, 3) += f;
    g.segment(3 * s.b, 3) -= f;
  }
  for (std::size_t k = 0; k < handles.size(); ++k)
    g.segment(3 * handles[k], 3) +=
        handle_stiffness * (x.segment(3 * handles[k], 3) - targets.segment(3 * static_cast<Index>(k), 3));
  for (int v = 0; v < num_vertices(); ++v) g.segment(3 * v, 3) -= mass * gravity;
  return g;
}

CscMatrix ClothModel::potential_hessian(const Vector& x) const {
  const Index n = x.size();
  TripletMatrix t(n, n);
  t.reserve(springs.size() * 36 + 6);
  for (const Spring& s : springs) {
    const DenseMatrix H = spring_hessian_block(s, x, 3);
    t.add_block(3 * s.a, 3 * s.a, H);
    t.add_block(3 * s.b, 3 * s.b, H);
    t.add_block(3 * s.a, 3 * s.b, -H);
    t.add_block(3 * s.b, 3 * s.a, -H);
  }
  for (int hv : handles) t.add_diagonal(3 * hv, 3, handle_stiffness);
  return csc_from_triplets(t);
}

Vector ClothModel::step_residual(const Vector& x, const Vector& x_prev, const Vector& x_prev2,
                                 const Vector& targets, double h) const {
  return mass * (x - 2.0 * x_prev + x_prev2) + h * h * potential_gradient(x, targets);
}

namespace {

/// Incremental potential 1/2 (x - y)^T M (x - y) + h^2 U(x, p), y = 2 x_prev - x_prev2.
class ImplicitStep : public StaticEquilibrium {
 public:
  ImplicitStep(const ClothModel& cloth, Vector y, double h) : cloth_(cloth), y_(std::move(y)), h_(h) {}
  Index dimension() const override { return y_.size(); }
  double energy(const Vector& x, const Vector& p) const override {
    return 0.5 * cloth_.mass * (x - y_).squaredNorm() + h_ * h_ * cloth_.potential(x, p);
  }
  Vector gradient(const Vector& x, const Vector& p) const override {
    return cloth_.mass * (x - y_) + h_ * h_ * cloth_.potential_gradient(x, p);
  }
  CscMatrix hessian(const Vector& x, const Vector&) const override {
    CscMatrix H = h_ * h_ * cloth_.potential_hessian(x);
    for (Index i = 0; i < H.rows(); ++i) H.coeffRef(i, i) += cloth_.mass;
    return H;
  }

 private:
  const ClothModel& cloth_;
  Vector y_;
  double h_;
};

}  // namespace

Rollout rollout_implicit(const ClothModel& cloth, const Vector& x0, const Vector& v0,
                         const std::vector<Vector>& controls, double h, int steps, double tolerance) {
  if (steps < 1) throw Error(ErrorKind::Config, "rollout needs at least one step");
  if (!(h > 0.0)) throw Error(ErrorKind::Config, "step size must be positive");
  require_dims(controls.size() == static_cast<std::size_t>(steps), "one control per step required");
  require_dims(x0.size() == 3 * cloth.num_vertices() && v0.size() == x0.size(),
               "cloth initial state size mismatch");
  Rollout r;
  r.integrator = Integrator::Implicit;
  r.steps = steps;
  r.h = h;
  r.x0 = x0;
  r.controls = controls;
  Vector prev2 = x0 - h * v0;
  Vector prev = x0;
  for (int i = 0; i < steps; ++i) {
    const Vector& u = controls[static_cast<std::size_t>(i)];
    require_dims(u.size() == cloth.handle_dofs(), "cloth control size mismatch");
    ImplicitStep step(cloth, 2.0 * prev - prev2, h);
    step.tolerance = tolerance;
    StaticSolveReport rep;
    Vector x;
    try {
      // Constant-velocity prediction as the initial guess.
      x = solve_static(step, u, 2.0 * prev - prev2, &rep);
    } catch (const Error& e) {
      throw Error(ErrorKind::NoConvergence, "implicit step " + std::to_string(i + 1) + ": " + e.what());
    }
    r.newton_iterations.push_back(rep.iterations);
    r.states.push_back(x);
    prev2 = std::move(prev);
    prev = std::move(x);
  }
  return r;
}

StackedConstraints cloth_constraints(const ClothModel& cloth, const Vector& x0, const Vector& v0,
                                     const Vector& states, const Vector& controls, double h) {
  const Index d = x0.size();
  const Index m = cloth.handle_dofs();
  const Index n = states.size() / d;
  require_dims(states.size() == n * d && controls.size() == n * m, "cloth_constraints: sizes");
  StackedConstraints out;
  out.c.resize(n * d);
  TripletMatrix jx(n * d, n * d), jp(n * d, n * m);
  const Vector xm1 = x0 - h * v0;
  for (Index i = 0; i < n; ++i) {
    const Vector x = states.segment(i * d, d);
    const Vector prev = i == 0 ? x0 : Vector(states.segment((i - 1) * d, d));
    const Vector prev2 = i == 0 ? xm1 : (i == 1 ? x0 : Vector(states.segment((i - 2) * d, d)));
    const Vector u = controls.segment(i * m, m);
    out.c.segment(i * d, d) = cloth.step_residual(x, prev, prev2, u, h);
    jx.add_sparse(i * d, i * d, cloth.potential_hessian(x), false, h * h);
    jx.add_diagonal(i * d, d, cloth.mass);
    if (i >= 1)
      for (Index k = 0; k < d; ++k) jx.add(i * d + k, (i - 1) * d + k, -2.0 * cloth.mass);
    if (i >= 2)
      for (Index k = 0; k < d; ++k) jx.add(i * d + k, (i - 2) * d + k, cloth.mass);
    for (std::size_t hk = 0; hk < cloth.handles.size(); ++hk)
      for (Index k = 0; k < 3; ++k)
        jp.add(i * d + 3 * cloth.handles[hk] + k, i * m + 3 * static_cast<Index>(hk) + k,
               -h * h * cloth.handle_stiffness);
  }
  out.dcdx = csc_from_triplets(jx);
  out.dcdp = csc_from_triplets(jp);
  return out;
}

}  // namespace sgn
