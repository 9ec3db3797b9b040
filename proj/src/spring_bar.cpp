#include "sgn/problems.hpp"

namespace sgn {

namespace {

class SpringBarStatics : public StaticEquilibrium {
 public:
  explicit SpringBarStatics(const SpringBarProblem& bar) : bar_(bar) {}
  Index dimension() const override { return bar_.num_states(); }
  double energy(const Vector& x, const Vector& p) const override { return bar_.energy(x, p); }
  Vector gradient(const Vector& x, const Vector& p) const override { return bar_.constraints(x, p); }
  CscMatrix hessian(const Vector& x, const Vector& p) const override {
    return bar_.constraint_jacobian_x(x, p);
  }

 private:
  const SpringBarProblem& bar_;
};

template <typename Fn>
void scatter_pairs(TripletMatrix& t, Index ra, Index rb, Index ca, Index cb, const DenseMatrix& H,
                   Fn sign_of) {
  // sign_of(row_is_a, col_is_a) -> +1 / -1
  const Index rows[2] = {ra, rb};
  const Index cols[2] = {ca, cb};
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) {
      if (rows[i] < 0 || cols[j] < 0) continue;
      const double s = sign_of(i == 0, j == 0);
      for (Index r = 0; r < H.rows(); ++r)
        for (Index c = 0; c < H.cols(); ++c)
          if (H(r, c) != 0.0) t.add(rows[i] + r, cols[j] + c, s * H(r, c));
    }
}

double same_sign(bool a, bool b) { return a == b ? 1.0 : -1.0; }
double opposite_sign(bool a, bool b) { return a == b ? -1.0 : 1.0; }

}  // namespace

SpringBarProblem::SpringBarProblem(const SpringBarConfig& cfg) : cfg_(cfg) {
  if (cfg.nw < 2 || cfg.nh < 2) throw Error(ErrorKind::Config, "spring bar needs nw >= 2 and nh >= 2");
  const int V = cfg.nw * cfg.nh;
  grid_.resize(2 * V);
  for (int r = 0; r < cfg.nh; ++r)
    for (int c = 0; c < cfg.nw; ++c) {
      const int v = r * cfg.nw + c;
      grid_(2 * v) = c * cfg.spacing;
      grid_(2 * v + 1) = (cfg.nh - 1 - r) * cfg.spacing;
    }
  springs_ = grid_springs(cfg.nw, cfg.nh, grid_, 2, cfg.stiffness);
  dof_.assign(static_cast<std::size_t>(V), -1);
  for (int v = 0; v < V; ++v)
    if (v % cfg.nw != 0) {
      dof_[static_cast<std::size_t>(v)] = 2 * static_cast<Index>(free_.size());
      free_.push_back(v);
    }
  target_.resize(2 * static_cast<Index>(free_.size()));
  for (std::size_t i = 0; i < free_.size(); ++i)
    target_.segment(2 * static_cast<Index>(i), 2) = grid_.segment(2 * free_[i], 2);
  initial_lengths_.resize(static_cast<Index>(springs_.size()));
  for (std::size_t s = 0; s < springs_.size(); ++s)
    initial_lengths_(static_cast<Index>(s)) = springs_[s].rest_length;
}

Vector SpringBarProblem::full_positions(const Vector& free_coords) const {
  Vector full = grid_;
  for (std::size_t i = 0; i < free_.size(); ++i)
    full.segment(2 * free_[i], 2) = free_coords.segment(2 * static_cast<Index>(i), 2);
  return full;
}

double SpringBarProblem::energy(const Vector& x, const Vector& p) const {
  const Vector X = full_positions(x), Q = full_positions(p);
  double e = 0.0;
  for (const Spring& s : springs_) {
    Spring cur = s;
    cur.rest_length = (Q.segment(2 * s.a, 2) - Q.segment(2 * s.b, 2)).norm();
    e += spring_energy(cur, X, 2);
  }
  for (std::size_t i = 0; i < free_.size(); ++i)
    e += cfg_.mass * cfg_.gravity * x(2 * static_cast<Index>(i) + 1);
  return e;
}

Vector SpringBarProblem::constraints(const Vector& x, const Vector& p) const {
  const Vector X = full_positions(x), Q = full_positions(p);
  Vector c = Vector::Zero(num_states());
  for (const Spring& s : springs_) {
    Spring cur = s;
    cur.rest_length = (Q.segment(2 * s.a, 2) - Q.segment(2 * s.b, 2)).norm();
    const Vector f = spring_gradient(cur, X, 2);
    if (dof(s.a) >= 0) c.segment(dof(s.a), 2) += f;
    if (dof(s.b) >= 0) c.segment(dof(s.b), 2) -= f;
  }
  for (std::size_t i = 0; i < free_.size(); ++i) c(2 * static_cast<Index>(i) + 1) += cfg_.mass * cfg_.gravity;
  return c;
}

CscMatrix SpringBarProblem::constraint_jacobian_x(const Vector& x, const Vector& p) const {
  const Vector X = full_positions(x), Q = full_positions(p);
  TripletMatrix t(num_states(), num_states());
  t.reserve(springs_.size() * 16);
  for (const Spring& s : springs_) {
    Spring cur = s;
    cur.rest_length = (Q.segment(2 * s.a, 2) - Q.segment(2 * s.b, 2)).norm();
    scatter_pairs(t, dof(s.a), dof(s.b), dof(s.a), dof(s.b), spring_hessian_block(cur, X, 2), same_sign);
  }
  return csc_from_triplets(t);
}

CscMatrix SpringBarProblem::constraint_jacobian_p(const Vector& x, const Vector& p) const {
  const Vector X = full_positions(x), Q = full_positions(p);
  TripletMatrix t(num_states(), num_params());
  t.reserve(springs_.size() * 16);
  for (const Spring& s : springs_) {
    const Vector d = X.segment(2 * s.a, 2) - X.segment(2 * s.b, 2);
    const Vector e = Q.segment(2 * s.a, 2) - Q.segment(2 * s.b, 2);
    const DenseMatrix M = s.stiffness * (d / d.norm()) * (e / e.norm()).transpose();
    // dc_a/dq_a = -M, dc_a/dq_b = +M, dc_b/dq_a = +M, dc_b/dq_b = -M.
    scatter_pairs(t, dof(s.a), dof(s.b), dof(s.a), dof(s.b), M, opposite_sign);
  }
  return csc_from_triplets(t);
}

Vector SpringBarProblem::residuals(const Vector& x, const Vector& p) const {
  const Index nx = num_states();
  const Index ns = cfg_.w_R > 0.0 ? num_springs() : 0;
  Vector r(nx + ns);
  r.head(nx) = x - target_;
  if (ns > 0) {
    const Vector Q = full_positions(p);
    for (Index s = 0; s < ns; ++s) {
      const Spring& sp = springs_[static_cast<std::size_t>(s)];
      r(nx + s) = (Q.segment(2 * sp.a, 2) - Q.segment(2 * sp.b, 2)).norm() - initial_lengths_(s);
    }
  }
  return r;
}

Vector SpringBarProblem::residual_weights() const {
  const Index nx = num_states();
  const Index ns = cfg_.w_R > 0.0 ? num_springs() : 0;
  Vector w(nx + ns);
  w.head(nx).setConstant(1.0 / static_cast<double>(nx));
  w.tail(ns).setConstant(cfg_.w_R);
  return w;
}

CscMatrix SpringBarProblem::residual_jacobian_x(const Vector&, const Vector&) const {
  const Index nx = num_states();
  const Index ns = cfg_.w_R > 0.0 ? num_springs() : 0;
  TripletMatrix t(nx + ns, nx);
  t.add_diagonal(0, nx, 1.0);
  return csc_from_triplets(t);
}

CscMatrix SpringBarProblem::residual_jacobian_p(const Vector&, const Vector& p) const {
  const Index nx = num_states();
  const Index ns = cfg_.w_R > 0.0 ? num_springs() : 0;
  TripletMatrix t(nx + ns, num_params());
  if (ns > 0) {
    const Vector Q = full_positions(p);
    for (Index s = 0; s < ns; ++s) {
      const Spring& sp = springs_[static_cast<std::size_t>(s)];
      const Vector e = Q.segment(2 * sp.a, 2) - Q.segment(2 * sp.b, 2);
      const Vector nu = e / e.norm();
      for (Index k = 0; k < 2; ++k) {
        if (dof(sp.a) >= 0) t.add(nx + s, dof(sp.a) + k, nu(k));
        if (dof(sp.b) >= 0) t.add(nx + s, dof(sp.b) + k, -nu(k));
      }
    }
  }
  return csc_from_triplets(t);
}

HessianBlocks SpringBarProblem::objective_hessian(const Vector& x, const Vector& p) const {
  const Index nx = num_states(), np = num_params();
  HessianBlocks h;
  TripletMatrix xx(nx, nx);
  xx.add_diagonal(0, nx, 1.0 / static_cast<double>(nx));
  h.xx = csc_from_triplets(xx);
  h.px = sparse_zero(np, nx);
  TripletMatrix pp(np, np);
  if (cfg_.w_R > 0.0) {
    const Vector r = residuals(x, p);
    const Vector Q = full_positions(p);
    for (Index s = 0; s < num_springs(); ++s) {
      const Spring& sp = springs_[static_cast<std::size_t>(s)];
      const Vector e = Q.segment(2 * sp.a, 2) - Q.segment(2 * sp.b, 2);
      const double L = e.norm();
      const Vector nu = e / L;
      const DenseMatrix block =
          cfg_.w_R * (nu * nu.transpose() + r(nx + s) / L * (DenseMatrix::Identity(2, 2) - nu * nu.transpose()));
      scatter_pairs(pp, dof(sp.a), dof(sp.b), dof(sp.a), dof(sp.b), block, same_sign);
    }
  }
  h.pp = csc_from_triplets(pp);
  return h;
}

HessianBlocks SpringBarProblem::constraint_hessian_contraction(const Vector& x, const Vector& p,
                                                               const Vector& lambda) const {
  require_dims(lambda.size() == num_states(), "multiplier size mismatch");
  const Vector X = full_positions(x), Q = full_positions(p);
  const Index nx = num_states(), np = num_params();
  TripletMatrix xx(nx, nx), px(np, nx), pp(np, np);
  auto mult = [&](int v) -> Vector {
    return dof(v) >= 0 ? Vector(lambda.segment(dof(v), 2)) : Vector(Vector::Zero(2));
  };
  for (const Spring& s : springs_) {
    const Vector mu = mult(s.a) - mult(s.b);
    if (mu.isZero(0.0)) continue;
    const Vector d = X.segment(2 * s.a, 2) - X.segment(2 * s.b, 2);
    const Vector e = Q.segment(2 * s.a, 2) - Q.segment(2 * s.b, 2);
    const SpringContraction sc = spring_contraction(d, e, s.stiffness, mu);
    scatter_pairs(xx, dof(s.a), dof(s.b), dof(s.a), dof(s.b), sc.dd, same_sign);
    scatter_pairs(px, dof(s.a), dof(s.b), dof(s.a), dof(s.b), DenseMatrix(sc.de.transpose()), same_sign);
    scatter_pairs(pp, dof(s.a), dof(s.b), dof(s.a), dof(s.b), sc.ee, same_sign);
  }
  return HessianBlocks{csc_from_triplets(xx), csc_from_triplets(px), csc_from_triplets(pp)};
}

Vector SpringBarProblem::solve_equilibrium(const Vector& p, const Vector* warm_start) const {
  require_dims(p.size() == num_params(), "spring bar parameter size mismatch");
  SpringBarStatics statics(*this);
  const Vector x0 = warm_start ? *warm_start : p;
  return solve_static(statics, p, x0);
}

}  // namespace sgn
