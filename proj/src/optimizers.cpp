#include "sgn/optimizers.hpp"

#include <algorithm>
#include <cmath>

#include "sgn/timer.hpp"

namespace sgn {

// ---------------------------------------------------------------------------
// Names

const std::vector<std::string>& method_names() {
  static const std::vector<std::string> names = {"sgn", "dgn",       "bgn",  "cg_gn",   "gd",
                                                 "lbfgs", "lbfgs_sgn", "sggn", "snewton", "sqp"};
  return names;
}

std::string method_name(Method m) { return method_names()[static_cast<std::size_t>(m)]; }

Method parse_method(const std::string& name) {
  const auto& names = method_names();
  for (std::size_t i = 0; i < names.size(); ++i)
    if (names[i] == name) return static_cast<Method>(i);
  std::string valid;
  for (const auto& n : names) valid += (valid.empty() ? "" : ", ") + n;
  throw Error(ErrorKind::Config, "unknown method '" + name + "'; valid methods: " + valid);
}

std::string bound_mode_name(BoundMode m) {
  switch (m) {
    case BoundMode::None: return "none";
    case BoundMode::ProjectedDirection: return "projected";
    case BoundMode::LogBarrier: return "log_barrier";
  }
  return "none";
}

BoundMode parse_bound_mode(const std::string& name) {
  if (name == "none") return BoundMode::None;
  if (name == "projected") return BoundMode::ProjectedDirection;
  if (name == "log_barrier") return BoundMode::LogBarrier;
  throw Error(ErrorKind::Config, "unknown bound mode '" + name + "'; valid: none, projected, log_barrier");
}

std::string termination_name(Termination t) {
  switch (t) {
    case Termination::Converged: return "converged";
    case Termination::MaxIterations: return "max_iterations";
    case Termination::LineSearchFailure: return "line_search_failure";
    case Termination::MeritLineSearchFailure: return "merit_line_search_failure";
  }
  return "unknown";
}

void OptimizerConfig::validate() const {
  auto bad = [](const std::string& m) { throw Error(ErrorKind::Config, m); };
  if (max_iterations < 0) bad("max_iterations must be >= 0");
  if (!(gradient_tolerance > 0.0)) bad("gradient tolerance must be positive");
  if (!(armijo_c1 > 0.0 && armijo_c1 < 1.0)) bad("sufficient-decrease constant must be in (0, 1)");
  if (!(backtrack_factor > 0.0 && backtrack_factor < 1.0)) bad("backtrack factor must be in (0, 1)");
  if (max_backtracks < 1) bad("max_backtracks must be >= 1");
  if (lbfgs_history < 1) bad("L-BFGS history must be >= 1");
  if (!(cg_eta > 0.0)) bad("CG eta must be positive");
  if (!(stabilization.refine_tolerance > 0.0)) bad("refine tolerance must be positive");
  if (!(stabilization.refine_goal >= 0.0)) bad("refine goal must be non-negative");
  if (stabilization.eps_x < 0.0 || stabilization.eps_lambda < 0.0) bad("stabilization must be >= 0");
}

// ---------------------------------------------------------------------------
// L-BFGS

bool LbfgsHistory::push(const Vector& s_k, const Vector& y_k) {
  const double sy = s_k.dot(y_k);
  if (!(sy > 1e-12 * s_k.norm() * y_k.norm())) return false;
  s.push_back(s_k);
  y.push_back(y_k);
  while (s.size() > capacity) {
    s.pop_front();
    y.pop_front();
  }
  return true;
}

Vector lbfgs_two_loop(const LbfgsHistory& h, const Vector& grad, const InitialInverse& h0) {
  const std::size_t m = h.s.size();
  std::vector<double> alpha(m), rho(m);
  Vector q = grad;
  for (std::size_t k = m; k-- > 0;) {
    rho[k] = 1.0 / h.y[k].dot(h.s[k]);
    alpha[k] = rho[k] * h.s[k].dot(q);
    q -= alpha[k] * h.y[k];
  }
  Vector r;
  if (h0) {
    r = h0(q);
  } else {
    const double gamma = m == 0 ? 1.0 : h.s.back().dot(h.y.back()) / h.y.back().squaredNorm();
    r = gamma * q;
  }
  for (std::size_t k = 0; k < m; ++k) {
    const double beta = rho[k] * h.y[k].dot(r);
    r += (alpha[k] - beta) * h.s[k];
  }
  return -r;
}

// ---------------------------------------------------------------------------
// Directions

namespace {

void absorb(SearchDirection& d, const SolveReport& rep) {
  d.has_linear_solve = true;
  d.report = rep;
  d.factor_seconds += rep.factor_seconds;
  d.solve_seconds += rep.solve_seconds;
}

KktSystem shifted(const KktSystem& k, double tau) {
  if (tau == 0.0) return k;
  KktSystem out = k;
  TripletMatrix t(k.dimension(), k.dimension());
  t.add_diagonal(0, k.nx + k.np, tau);
  out.matrix = CscMatrix(k.matrix + csc_from_triplets(t));
  return out;
}

SearchDirection sparse_direction_regularized(const KktSystem& k, const Vector& grad,
                                             const OptimizerConfig& cfg, double assemble_s) {
  SearchDirection d;
  d.assemble_seconds = assemble_s;
  if (grad.isZero(0.0)) {
    d.dp = Vector::Zero(grad.size());
    return d;
  }
  double tau = 0.0;
  for (int attempt = 0; attempt < 14; ++attempt) {
    try {
      const KktStep step = split_kkt_solution(k, solve_kkt_stabilized(shifted(k, tau), k.rhs,
                                                                      cfg.stabilization));
      absorb(d, step.report);
      if (grad.dot(step.dp) < 0.0) {
        d.dp = step.dp;
        d.dx = step.dx;
        d.dlambda = step.dlambda;
        d.regularization = tau;
        return d;
      }
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::NoConvergence && e.kind() != ErrorKind::SingularMatrix) throw;
    }
    tau = tau == 0.0 ? 1e-6 : 10.0 * tau;
  }
  d.dp = -grad;
  d.regularization = std::numeric_limits<double>::infinity();
  return d;
}

}  // namespace

SearchDirection direction_sgn(const EquilibriumProblem& prob, const Vector& x, const Vector& p,
                              const Vector& grad, const OptimizerConfig& cfg) {
  Stopwatch total;
  SearchDirection d;
  Stopwatch clock;
  const KktSystem k = assemble_sgn(prob, x, p, gn_blocks(prob, x, p), grad);
  d.assemble_seconds = clock.seconds();
  const KktStep step = solve_sgn(k, cfg.stabilization);
  absorb(d, step.report);
  d.dp = step.dp;
  d.dx = step.dx;
  d.dlambda = step.dlambda;
  d.seconds = total.seconds();
  return d;
}

SearchDirection direction_dgn(const EquilibriumProblem& prob, const Vector& x, const Vector& p,
                              const Vector& grad, const OptimizerConfig&) {
  Stopwatch total;
  SearchDirection d;
  const DenseGnHessian h = dense_gn_hessian_timed(prob, x, p);
  d.sensitivity_seconds = h.sensitivity_seconds;
  d.assemble_seconds = h.product_seconds;
  Stopwatch clock;
  const DenseFactorization f = cholesky_dense(h.hessian);
  d.dense_factor_seconds = clock.seconds();
  clock.reset();
  d.dp = -f.solve(grad);
  d.solve_seconds = clock.seconds();
  d.factor_seconds = d.dense_factor_seconds;
  d.seconds = total.seconds();
  return d;
}

SearchDirection direction_bgn(const EquilibriumProblem& prob, const Vector& x, const Vector& p,
                              const Vector&, const OptimizerConfig&) {
  Stopwatch total;
  SearchDirection d;
  Stopwatch clock;
  const GnBlocks b = gn_blocks(prob, x, p);
  d.assemble_seconds = clock.seconds();
  if (b.B.nonZeros() != 0 || b.C.nonZeros() != 0)
    throw Error(ErrorKind::CapabilityMissing,
                "block solve needs an objective independent of p (B = 0, C = 0)");
  clock.reset();
  d.dp = solve_block_gn(prob, x, p, b.A);
  d.solve_seconds = clock.seconds();
  d.seconds = total.seconds();
  return d;
}

SearchDirection direction_cg_gn(const EquilibriumProblem& prob, const Vector& x, const Vector& p,
                                const Vector& grad, const OptimizerConfig& cfg) {
  Stopwatch total;
  SearchDirection d;
  Stopwatch clock;
  GnBlocks b = gn_blocks(prob, x, p);
  d.assemble_seconds = clock.seconds();
  clock.reset();
  SparseFactorization cx = factor_constraint_jacobian(prob.constraint_jacobian_x(x, p));
  d.factor_seconds = clock.seconds();
  const GnReducedOperator op(std::move(b.A), std::move(b.B), std::move(b.C), prob.constraint_jacobian_p(x, p),
                             std::move(cx));
  clock.reset();
  try {
    const CgResult r = cg_reduced(op, -grad, cfg.cg_eta);
    d.dp = r.solution;
    d.report = r.report;
  } catch (const NegativeCurvatureError& e) {
    d.dp = e.last_iterate.isZero(0.0) ? Vector(-grad) : e.last_iterate;
    d.report.refine_iterations = e.iteration;
    d.report.relative_residual = (op.apply(d.dp) + grad).norm() / std::max(grad.norm(), 1e-300);
  }
  d.has_linear_solve = true;
  d.report.factor_seconds = d.factor_seconds;
  d.solve_seconds = clock.seconds();
  d.seconds = total.seconds();
  return d;
}

SearchDirection direction_gd(const Vector& grad) {
  SearchDirection d;
  d.dp = -grad;
  return d;
}

SearchDirection direction_lbfgs(const LbfgsHistory& history, const Vector& grad) {
  Stopwatch total;
  SearchDirection d;
  d.dp = lbfgs_two_loop(history, grad);
  d.seconds = total.seconds();
  return d;
}

SearchDirection direction_lbfgs_sgn(const EquilibriumProblem& prob, const Vector& x, const Vector& p,
                                    const Vector& grad, const LbfgsHistory& history,
                                    const OptimizerConfig& cfg) {
  Stopwatch total;
  SearchDirection d;
  Stopwatch clock;
  const KktSystem k = assemble_sgn(prob, x, p, gn_blocks(prob, x, p), grad);
  d.assemble_seconds = clock.seconds();
  // H0 q = -(SGN step for gradient q). Only a scaling guess, so a stalled
  // refinement still yields a usable direction; the report keeps the residual.
  StabilizationConfig stab = cfg.stabilization;
  stab.accept_unconverged = true;
  auto h0 = [&](const Vector& q) -> Vector {
    Vector rhs = Vector::Zero(k.dimension());
    rhs.segment(k.nx, k.np) = -q;
    const KktSolution s = solve_kkt_stabilized(k, rhs, stab);
    absorb(d, s.report);
    return -Vector(k.p_block(s.solution));
  };
  d.dp = lbfgs_two_loop(history, grad, h0);
  d.seconds = total.seconds();
  return d;
}

SearchDirection direction_sggn(const EquilibriumProblem& prob, const Vector& x, const Vector& p,
                               const Vector& grad, const OptimizerConfig& cfg) {
  Stopwatch total;
  Stopwatch clock;
  const KktSystem k = assemble_sgn(prob, x, p, ggn_blocks(prob, x, p), grad);
  SearchDirection d = sparse_direction_regularized(k, grad, cfg, clock.seconds());
  d.seconds = total.seconds();
  return d;
}

SearchDirection direction_sparse_newton(const EquilibriumProblem& prob, const Vector& x,
                                        const Vector& p, const Vector& grad,
                                        const OptimizerConfig& cfg) {
  Stopwatch total;
  Stopwatch clock;
  const Vector lambda = adjoint_multipliers(prob, x, p);
  const KktSystem k = assemble_kkt_newton(prob, x, p, lambda);
  SearchDirection d = sparse_direction_regularized(k, grad, cfg, clock.seconds());
  d.seconds = total.seconds();
  return d;
}

SearchDirection compute_direction(const EquilibriumProblem& prob, const Vector& x, const Vector& p,
                                  const Vector& grad, const OptimizerConfig& cfg,
                                  const LbfgsHistory* history) {
  static const LbfgsHistory empty;
  const LbfgsHistory& h = history ? *history : empty;
  switch (cfg.method) {
    case Method::Sgn: return direction_sgn(prob, x, p, grad, cfg);
    case Method::Dgn: return direction_dgn(prob, x, p, grad, cfg);
    case Method::Bgn: return direction_bgn(prob, x, p, grad, cfg);
    case Method::CgGn: return direction_cg_gn(prob, x, p, grad, cfg);
    case Method::Gd: return direction_gd(grad);
    case Method::Lbfgs: return direction_lbfgs(h, grad);
    case Method::LbfgsSgn: return direction_lbfgs_sgn(prob, x, p, grad, h, cfg);
    case Method::Sggn: return direction_sggn(prob, x, p, grad, cfg);
    case Method::SparseNewton: return direction_sparse_newton(prob, x, p, grad, cfg);
    case Method::Sqp: break;
  }
  throw Error(ErrorKind::Config, "sqp has no reduced-space direction; use minimize");
}

// ---------------------------------------------------------------------------
// Bounds

namespace {
void check_bounds_shape(const Vector& p, const Vector& lower, const Vector& upper) {
  require_dims(lower.size() == p.size() && upper.size() == p.size(), "bounds size mismatch");
}
void check_feasible(const Vector& p, const Vector& lower, const Vector& upper) {
  check_bounds_shape(p, lower, upper);
  for (Index i = 0; i < p.size(); ++i)
    if (!(p(i) >= lower(i) && p(i) <= upper(i)))
      throw Error(ErrorKind::InfeasiblePoint, "parameter " + std::to_string(i) + " = " +
                                                  std::to_string(p(i)) + " outside [" +
                                                  std::to_string(lower(i)) + ", " +
                                                  std::to_string(upper(i)) + "]");
}
}  // namespace

Vector project_direction_bounds(const Vector& dp, const Vector& p, const Vector& lower,
                                const Vector& upper) {
  check_feasible(p, lower, upper);
  require_dims(dp.size() == p.size(), "direction size mismatch");
  Vector out = dp;
  for (Index i = 0; i < p.size(); ++i)
    if ((p(i) >= upper(i) && dp(i) > 0.0) || (p(i) <= lower(i) && dp(i) < 0.0)) out(i) = 0.0;
  return out;
}

Vector clamp_to_bounds(const Vector& p, const ParamBounds& b) {
  check_bounds_shape(p, b.lower, b.upper);
  return p.cwiseMax(b.lower).cwiseMin(b.upper);
}

Vector projected_gradient(const Vector& grad, const Vector& p, const ParamBounds& b) {
  return -project_direction_bounds(-grad, p, b.lower, b.upper);
}

// ---------------------------------------------------------------------------
// SQP

double l1_merit(const EquilibriumProblem& prob, const Vector& x, const Vector& p, double mu) {
  return prob.objective(x, p) + mu * prob.constraints(x, p).lpNorm<1>();
}

SqpStep sqp_step(const EquilibriumProblem& prob, const Vector& x, const Vector& p,
                 const Vector& lambda, double mu_prev, const OptimizerConfig& cfg) {
  const KktSystem k = assemble_kkt_newton(prob, x, p, lambda);
  SqpStep out;
  out.mu = mu_prev;
  out.merit_before = l1_merit(prob, x, p, mu_prev);
  if (k.rhs.isZero(0.0)) {
    out.dx = Vector::Zero(k.nx);
    out.dp = Vector::Zero(k.np);
    out.dlambda = Vector::Zero(k.nc);
    out.step_length = 1.0;
    out.merit_after = out.merit_before;
    return out;
  }
  const Vector fx = prob.objective_grad_x(x, p);
  const Vector fp = prob.objective_grad_p(x, p);
  const double c1 = prob.constraints(x, p).lpNorm<1>();

  double tau = 0.0, slope = 0.0;
  bool found = false;
  for (int attempt = 0; attempt < 14 && !found; ++attempt) {
    try {
      const KktStep s = split_kkt_solution(k, solve_kkt_stabilized(shifted(k, tau), k.rhs, cfg.stabilization));
      out.dx = s.dx;
      out.dp = s.dp;
      out.dlambda = s.dlambda;
      out.report = s.report;
      out.mu = std::max(mu_prev, 1.5 * (lambda + s.dlambda).lpNorm<Eigen::Infinity>());
      slope = fx.dot(s.dx) + fp.dot(s.dp) - out.mu * c1;
      // Curvature of the unshifted Lagrangian Hessian along (dx, dp).
      Vector d = Vector::Zero(k.dimension());
      d.head(k.nx) = s.dx;
      d.segment(k.nx, k.np) = s.dp;
      const Vector wd = k.matrix * d;
      const double curvature = d.head(k.nx + k.np).dot(wd.head(k.nx + k.np));
      found = slope < 0.0 && curvature > 1e-10 * d.squaredNorm();
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::NoConvergence && e.kind() != ErrorKind::SingularMatrix) throw;
    }
    if (!found) tau = tau == 0.0 ? 1e-6 : 10.0 * tau;
  }
  out.regularization = tau;
  if (!found) throw Error(ErrorKind::MeritLineSearchFailure, "no merit descent direction");

  out.merit_before = l1_merit(prob, x, p, out.mu);
  double alpha = 1.0;
  for (int bt = 0; bt < cfg.max_backtracks; ++bt, alpha *= cfg.backtrack_factor) {
    const double phi = l1_merit(prob, x + alpha * out.dx, p + alpha * out.dp, out.mu);
    if (std::isfinite(phi) && phi <= out.merit_before + cfg.armijo_c1 * alpha * slope) {
      out.step_length = alpha;
      out.merit_after = phi;
      return out;
    }
  }
  throw Error(ErrorKind::MeritLineSearchFailure,
              "no sufficient merit decrease after " + std::to_string(cfg.max_backtracks) + " backtracks");
}

// ---------------------------------------------------------------------------
// Outer loops

namespace {

CscMatrix select_columns(const CscMatrix& m, const std::vector<Index>& cols) {
  TripletMatrix t(m.rows(), static_cast<Index>(cols.size()));
  for (std::size_t j = 0; j < cols.size(); ++j)
    for (CscMatrix::InnerIterator it(m, cols[j]); it; ++it) t.add(it.row(), static_cast<Index>(j), it.value());
  return csc_from_triplets(t);
}

CscMatrix select_rows(const CscMatrix& m, const std::vector<Index>& rows, Index total) {
  std::vector<Index> where(static_cast<std::size_t>(total), -1);
  for (std::size_t i = 0; i < rows.size(); ++i) where[static_cast<std::size_t>(rows[i])] = static_cast<Index>(i);
  TripletMatrix t(static_cast<Index>(rows.size()), m.cols());
  for (Index k = 0; k < m.outerSize(); ++k)
    for (CscMatrix::InnerIterator it(m, k); it; ++it)
      if (where[static_cast<std::size_t>(it.row())] >= 0)
        t.add(where[static_cast<std::size_t>(it.row())], it.col(), it.value());
  return csc_from_triplets(t);
}

/// The problem restricted to a subset of parameters; the others stay frozen
/// at their current values.
class FreeParamView : public EquilibriumProblem {
 public:
  FreeParamView(const EquilibriumProblem& base, Vector p_full, std::vector<Index> free)
      : base_(base), p_full_(std::move(p_full)), free_(std::move(free)) {}

  Vector restrict(const Vector& v) const {
    Vector out(static_cast<Index>(free_.size()));
    for (std::size_t i = 0; i < free_.size(); ++i) out(static_cast<Index>(i)) = v(free_[i]);
    return out;
  }
  Vector embed(const Vector& v) const {
    Vector out = Vector::Zero(p_full_.size());
    for (std::size_t i = 0; i < free_.size(); ++i) out(free_[i]) = v(static_cast<Index>(i));
    return out;
  }

  std::string name() const override { return base_.name(); }
  Index num_states() const override { return base_.num_states(); }
  Index num_params() const override { return static_cast<Index>(free_.size()); }
  Vector constraints(const Vector& x, const Vector& p) const override { return base_.constraints(x, full(p)); }
  CscMatrix constraint_jacobian_x(const Vector& x, const Vector& p) const override {
    return base_.constraint_jacobian_x(x, full(p));
  }
  CscMatrix constraint_jacobian_p(const Vector& x, const Vector& p) const override {
    return select_columns(base_.constraint_jacobian_p(x, full(p)), free_);
  }
  bool has_least_squares() const override { return base_.has_least_squares(); }
  Vector residuals(const Vector& x, const Vector& p) const override { return base_.residuals(x, full(p)); }
  Vector residual_weights() const override { return base_.residual_weights(); }
  CscMatrix residual_jacobian_x(const Vector& x, const Vector& p) const override {
    return base_.residual_jacobian_x(x, full(p));
  }
  CscMatrix residual_jacobian_p(const Vector& x, const Vector& p) const override {
    return select_columns(base_.residual_jacobian_p(x, full(p)), free_);
  }
  double objective(const Vector& x, const Vector& p) const override { return base_.objective(x, full(p)); }
  Vector objective_grad_x(const Vector& x, const Vector& p) const override {
    return base_.objective_grad_x(x, full(p));
  }
  Vector objective_grad_p(const Vector& x, const Vector& p) const override {
    return restrict(base_.objective_grad_p(x, full(p)));
  }
  bool has_objective_hessian() const override { return base_.has_objective_hessian(); }
  HessianBlocks objective_hessian(const Vector& x, const Vector& p) const override {
    return reduce(base_.objective_hessian(x, full(p)));
  }
  bool has_constraint_hessian() const override { return base_.has_constraint_hessian(); }
  HessianBlocks constraint_hessian_contraction(const Vector& x, const Vector& p,
                                               const Vector& lambda) const override {
    return reduce(base_.constraint_hessian_contraction(x, full(p), lambda));
  }
  Vector solve_equilibrium(const Vector& p, const Vector* warm_start) const override {
    return base_.solve_equilibrium(full(p), warm_start);
  }
  Vector initial_params() const override { return restrict(p_full_); }

 private:
  Vector full(const Vector& p) const {
    Vector out = p_full_;
    for (std::size_t i = 0; i < free_.size(); ++i) out(free_[i]) = p(static_cast<Index>(i));
    return out;
  }
  HessianBlocks reduce(HessianBlocks h) const {
    const Index np = p_full_.size();
    h.px = select_rows(h.px, free_, np);
    h.pp = select_rows(select_columns(h.pp, free_), free_, np);
    return h;
  }

  const EquilibriumProblem& base_;
  Vector p_full_;
  std::vector<Index> free_;
};

/// Indices not held at a bound by the gradient.
std::vector<Index> free_indices(const Vector& grad, const Vector& p, const ParamBounds& b) {
  std::vector<Index> free;
  for (Index i = 0; i < p.size(); ++i) {
    const bool blocked = (p(i) >= b.upper(i) && grad(i) < 0.0) || (p(i) <= b.lower(i) && grad(i) > 0.0);
    if (!blocked) free.push_back(i);
  }
  return free;
}

bool reducible(Method m) {
  return m == Method::Sgn || m == Method::Dgn || m == Method::CgGn || m == Method::Gd ||
         m == Method::Sggn || m == Method::SparseNewton || m == Method::LbfgsSgn;
}

/// Direction with bound-blocked parameters frozen. L-BFGS keeps its
/// full-space history; the hybrid variant only restricts its initial inverse.
SearchDirection bounded_direction(const EquilibriumProblem& prob, const Vector& x, const Vector& p,
                                  const Vector& g, const OptimizerConfig& cfg, const LbfgsHistory& history,
                                  const ParamBounds& box) {
  std::vector<Index> free = free_indices(g, p, box);
  if (static_cast<Index>(free.size()) == p.size() || !reducible(cfg.method))
    return compute_direction(prob, x, p, g, cfg, &history);
  if (free.empty()) {
    SearchDirection d;
    d.dp = Vector::Zero(p.size());
    return d;
  }
  const FreeParamView view(prob, p, std::move(free));
  const Vector pr = view.initial_params();
  const Vector gr = view.restrict(g);
  if (cfg.method != Method::LbfgsSgn) {
    SearchDirection d = compute_direction(view, x, pr, gr, cfg);
    d.dp = view.embed(d.dp);
    return d;
  }
  Stopwatch total;
  SearchDirection d;
  const KktSystem k = assemble_sgn(view, x, pr, gn_blocks(view, x, pr), gr);
  auto h0 = [&](const Vector& q) -> Vector {
    Vector rhs = Vector::Zero(k.dimension());
    rhs.segment(k.nx, k.np) = -view.restrict(q);
    const KktSolution s = solve_kkt_stabilized(k, rhs, cfg.stabilization);
    absorb(d, s.report);
    return -view.embed(Vector(k.p_block(s.solution)));
  };
  d.dp = lbfgs_two_loop(history, g, h0);
  d.seconds = total.seconds();
  return d;
}

Vector forward(const EquilibriumProblem& prob, const Vector& p, const Vector* warm) {
  try {
    return prob.solve_equilibrium(p, warm);
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::ForwardSimFailure) throw;
    throw Error(ErrorKind::ForwardSimFailure, e.what());
  }
}

double kkt_norm(const EquilibriumProblem& prob, const Vector& x, const Vector& p, const Vector& lambda,
                double* constraint_norm) {
  const Vector c = prob.constraints(x, p);
  const Vector lx = prob.objective_grad_x(x, p) + prob.constraint_jacobian_x(x, p).transpose() * lambda;
  const Vector lp = prob.objective_grad_p(x, p) + prob.constraint_jacobian_p(x, p).transpose() * lambda;
  if (constraint_norm) *constraint_norm = c.norm();
  return std::sqrt(c.squaredNorm() + lx.squaredNorm() + lp.squaredNorm());
}

OptimizerRun minimize_sqp(const EquilibriumProblem& prob, const Vector& p0, const OptimizerConfig& cfg) {
  OptimizerRun run;
  run.method = Method::Sqp;
  Stopwatch elapsed;
  Stopwatch clock;
  Vector p = p0;
  Vector x = forward(prob, p, nullptr);
  const double fwd0 = clock.seconds();
  Vector lambda = adjoint_multipliers(prob, x, p);
  double mu = 0.0;

  IterationRecord rec;
  rec.f = prob.objective(x, p);
  rec.grad_norm = kkt_norm(prob, x, p, lambda, &rec.constraint_norm);
  rec.forward_seconds = fwd0;
  rec.elapsed_seconds = elapsed.seconds();
  run.records.push_back(rec);

  run.termination = Termination::MaxIterations;
  for (int it = 1; it <= cfg.max_iterations; ++it) {
    if (run.records.back().grad_norm <= cfg.gradient_tolerance) {
      run.termination = Termination::Converged;
      break;
    }
    clock.reset();
    SqpStep s;
    try {
      s = sqp_step(prob, x, p, lambda, mu, cfg);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::MeritLineSearchFailure) throw;
      run.termination = Termination::MeritLineSearchFailure;
      run.message = e.what();
      break;
    }
    x += s.step_length * s.dx;
    p += s.step_length * s.dp;
    lambda += s.step_length * s.dlambda;
    mu = s.mu;

    IterationRecord r;
    r.iteration = it;
    r.f = prob.objective(x, p);
    r.grad_norm = kkt_norm(prob, x, p, lambda, &r.constraint_norm);
    r.step_length = s.step_length;
    r.direction_seconds = clock.seconds();
    r.elapsed_seconds = elapsed.seconds();
    r.linear_relative_residual = s.report.relative_residual;
    r.refine_iterations = s.report.refine_iterations;
    run.records.push_back(r);
  }
  if (run.termination == Termination::MaxIterations &&
      run.records.back().grad_norm <= cfg.gradient_tolerance)
    run.termination = Termination::Converged;
  run.p = p;
  run.x = x;
  run.lambda = lambda;
  run.f = run.records.back().f;
  run.grad_norm = run.records.back().grad_norm;
  return run;
}

OptimizerRun minimize_reduced(const EquilibriumProblem& prob, const Vector& p0, const OptimizerConfig& cfg,
                              const std::optional<ParamBounds>& box) {
  OptimizerRun run;
  run.method = cfg.method;
  Stopwatch elapsed;
  Stopwatch clock;

  Vector p = p0;
  if (box) check_feasible(p, box->lower, box->upper);
  Vector x = forward(prob, p, nullptr);
  const double fwd0 = clock.seconds();
  double f = prob.objective(x, p);
  Vector g = adjoint_gradient(prob, x, p);
  auto stationarity = [&](const Vector& grad, const Vector& at) {
    return box ? projected_gradient(grad, at, *box).norm() : grad.norm();
  };

  IterationRecord rec;
  rec.f = f;
  rec.grad_norm = stationarity(g, p);
  rec.forward_seconds = fwd0;
  rec.elapsed_seconds = elapsed.seconds();
  run.records.push_back(rec);

  LbfgsHistory history;
  history.capacity = static_cast<std::size_t>(cfg.lbfgs_history);
  const bool quasi_newton = cfg.method == Method::Lbfgs || cfg.method == Method::LbfgsSgn;

  run.termination = Termination::MaxIterations;
  for (int it = 1; it <= cfg.max_iterations; ++it) {
    if (run.records.back().grad_norm <= cfg.gradient_tolerance) {
      run.termination = Termination::Converged;
      break;
    }
    if (cfg.on_iterate) cfg.on_iterate(x, p, g);
    clock.reset();
    auto filtered = [&](SearchDirection& d) {
      if (box) d.dp = project_direction_bounds(d.dp, p, box->lower, box->upper);
      return g.dot(d.dp) < 0.0;
    };
    auto direction = [&]() {
      return box ? bounded_direction(prob, x, p, g, cfg, history, *box)
                 : compute_direction(prob, x, p, g, cfg, &history);
    };
    SearchDirection d = direction();
    if (!filtered(d) && quasi_newton && !history.empty()) {
      history.clear();
      d = direction();
    }
    if (!filtered(d)) {
      d.dp = box ? Vector(-projected_gradient(g, p, *box)) : Vector(-g);
    }
    const double dir_s = clock.seconds();

    clock.reset();
    double alpha = 1.0;
    bool accepted = false;
    Vector p_t, x_t;
    double f_t = 0.0;
    for (int bt = 0; bt < cfg.max_backtracks; ++bt, alpha *= cfg.backtrack_factor) {
      p_t = p + alpha * d.dp;
      if (box) p_t = clamp_to_bounds(p_t, *box);
      try {
        x_t = forward(prob, p_t, &x);
        f_t = prob.objective(x_t, p_t);
      } catch (const Error&) {
        continue;
      }
      if (std::isfinite(f_t) && f_t < f && f_t <= f + cfg.armijo_c1 * g.dot(p_t - p)) {
        accepted = true;
        break;
      }
    }
    const double fwd_s = clock.seconds();
    if (!accepted) {
      run.termination = Termination::LineSearchFailure;
      run.message = "no sufficient decrease after " + std::to_string(cfg.max_backtracks) + " backtracks";
      break;
    }
    const Vector g_t = adjoint_gradient(prob, x_t, p_t);
    if (quasi_newton) history.push(p_t - p, g_t - g);
    p = std::move(p_t);
    x = std::move(x_t);
    f = f_t;
    g = g_t;

    IterationRecord r;
    r.iteration = it;
    r.f = f;
    r.grad_norm = stationarity(g, p);
    r.step_length = alpha;
    r.direction_seconds = dir_s;
    r.forward_seconds = fwd_s;
    r.elapsed_seconds = elapsed.seconds();
    if (d.has_linear_solve) {
      r.linear_relative_residual = d.report.relative_residual;
      r.refine_iterations = d.report.refine_iterations;
    }
    run.records.push_back(r);
  }
  if (run.termination == Termination::MaxIterations &&
      run.records.back().grad_norm <= cfg.gradient_tolerance)
    run.termination = Termination::Converged;
  run.p = p;
  run.x = x;
  run.f = f;
  run.grad_norm = run.records.back().grad_norm;
  return run;
}

}  // namespace

OptimizerRun minimize(const EquilibriumProblem& prob, const Vector& p0, const OptimizerConfig& cfg) {
  cfg.validate();
  require_dims(p0.size() == prob.num_params(), "initial parameters have the wrong size");
  const std::optional<ParamBounds> bounds = prob.param_bounds();
  if (cfg.method == Method::Sqp) return minimize_sqp(prob, p0, cfg);
  if (cfg.bounds == BoundMode::LogBarrier && bounds) {
    for (Index i = 0; i < p0.size(); ++i)
      if (!(p0(i) > bounds->lower(i) && p0(i) < bounds->upper(i)))
        throw Error(ErrorKind::InfeasiblePoint, "log-barrier start must be strictly inside the bounds");
    const LogBarrierProblem barrier(prob, *bounds);
    return minimize_reduced(barrier, p0, cfg, std::nullopt);
  }
  if (cfg.bounds == BoundMode::ProjectedDirection && bounds) return minimize_reduced(prob, p0, cfg, bounds);
  return minimize_reduced(prob, p0, cfg, std::nullopt);
}

// ---------------------------------------------------------------------------
// Log barrier

LogBarrierProblem::LogBarrierProblem(const EquilibriumProblem& base, ParamBounds bounds, double mu)
    : base_(base), bounds_(std::move(bounds)), mu_(mu) {
  require_dims(bounds_.lower.size() == base.num_params() && bounds_.upper.size() == base.num_params(),
               "barrier bounds size mismatch");
  if (!(mu > 0.0)) throw Error(ErrorKind::Config, "barrier weight must be positive");
}

double LogBarrierProblem::objective(const Vector& x, const Vector& p) const {
  double fb = 0.0;
  for (Index i = 0; i < p.size(); ++i) {
    const double a = p(i) - bounds_.lower(i), b = bounds_.upper(i) - p(i);
    if (!(a > 0.0 && b > 0.0)) return std::numeric_limits<double>::infinity();
    fb -= std::log(a) + std::log(b);
  }
  return base_.objective(x, p) + mu_ * fb;
}

Vector LogBarrierProblem::objective_grad_p(const Vector& x, const Vector& p) const {
  Vector g = base_.objective_grad_p(x, p);
  for (Index i = 0; i < p.size(); ++i)
    g(i) -= mu_ * (1.0 / (p(i) - bounds_.lower(i)) - 1.0 / (bounds_.upper(i) - p(i)));
  return g;
}

HessianBlocks LogBarrierProblem::objective_hessian(const Vector& x, const Vector& p) const {
  HessianBlocks h = base_.objective_hessian(x, p);
  TripletMatrix t(p.size(), p.size());
  for (Index i = 0; i < p.size(); ++i) {
    const double a = p(i) - bounds_.lower(i), b = bounds_.upper(i) - p(i);
    t.add(i, i, mu_ * (1.0 / (a * a) + 1.0 / (b * b)));
  }
  h.pp = CscMatrix(h.pp + csc_from_triplets(t));
  return h;
}

}  // namespace sgn
