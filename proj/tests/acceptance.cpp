// Acceptance run: one PASS/FAIL line per criterion, tolerances fixed below.

#include <algorithm>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "sgn/bench.hpp"
#include "sgn/optimizers.hpp"
#include "sgn/problems.hpp"
#include "sgn/timer.hpp"

using namespace sgn;

namespace {

constexpr double kTheorem1Tol = 1e-6;
constexpr double kBlockTol = 1e-8;
constexpr double kTheorem2Tol = 1e-6;
constexpr double kFdTol = 1e-4;
constexpr double kFdTolCloth = 1e-3;
constexpr double kFdStep = 1e-5;
constexpr double kClothInnerTol = 1e-13;
constexpr double kFdRatioLow = 3.0, kFdRatioHigh = 5.0;
constexpr double kGradTol = 1e-5;
constexpr double kGdFloor = 1e-4;
constexpr double kSensShare = 0.5;
constexpr double kKktResidual = 1e-10;
constexpr int kKktRefine = 50;
constexpr double kCgEta = 1e-3;
constexpr double kCgTightEta = 1e-10;
constexpr double kCgMatchTol = 1e-8;
constexpr double kCarPositionTol = 1e-2;
constexpr double kHybridTol = 1e-14;

struct KktLog {
  double worst_residual = 0.0;
  int worst_refine = 0;
  long solves = 0;
  void add(const SolveReport& r) {
    worst_residual = std::max(worst_residual, r.relative_residual);
    worst_refine = std::max(worst_refine, r.refine_iterations);
    ++solves;
  }
  void add(const SearchDirection& d) {
    if (d.has_linear_solve) add(d.report);
  }
};
KktLog kkt_log;

int failures = 0;

void report(int id, bool pass, const std::string& what, double seconds, double budget) {
  const bool in_time = seconds <= budget;
  if (!(pass && in_time)) ++failures;
  std::printf("criterion %2d: %s  %s  [%.1f s, budget %.0f s]\n", id, pass && in_time ? "PASS" : "FAIL",
              what.c_str(), seconds, budget);
  std::fflush(stdout);
}

std::string fmt(const char* f, double a, double b = 0.0, double c = 0.0, double d = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c, d);
  return buf;
}

// Benchmarks at the settings used throughout.
SpringBarProblem spring_bar() {
  SpringBarConfig c;
  c.nw = 16;
  c.nh = 4;
  c.w_R = 0.0;
  return SpringBarProblem(c);
}

CarConfig car_config() {
  CarConfig c;
  c.steps = 500;
  c.target_position = (Vector(2) << 3.0, 1.0).finished();
  c.v_max = 0.2;
  c.s_max = 0.5;
  c.v_init = 0.1;
  return c;
}

ClothControlProblem cloth(int steps = 20) {
  ClothConfig c;
  c.side = 5;
  c.steps = steps;
  return ClothControlProblem(c);
}

OptimizerConfig sgn_config(const EquilibriumProblem& prob) {
  OptimizerConfig o;
  o.method = Method::Sgn;
  if (prob.param_bounds()) o.bounds = BoundMode::ProjectedDirection;
  return o;
}

// First `count` SGN iterates of a run from the default start.
void for_iterates(const EquilibriumProblem& prob, int count,
                  const std::function<void(const Vector&, const Vector&, const Vector&)>& visit) {
  OptimizerConfig o = sgn_config(prob);
  o.max_iterations = count;
  o.gradient_tolerance = 1e-300;
  int seen = 0;
  o.on_iterate = [&](const Vector& x, const Vector& p, const Vector& g) {
    if (seen++ < count) visit(x, p, g);
  };
  minimize(prob, prob.initial_params(), o);
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

void criterion1() {
  Stopwatch clock;
  std::mt19937 rng(20240);
  std::uniform_int_distribution<int> nx_d(5, 50), np_d(2, 30);
  double worst = 0.0, worst_oracle = 0.0;
  int cases = 0;
  std::string detail;
  OptimizerConfig o;
  for (int k = 0; k < 100; ++k) {
    const int nx = nx_d(rng), np = np_d(rng);
    auto prob = make_random_linear_problem(static_cast<unsigned>(1000 + k), nx, np);
    const Vector p = prob->initial_params();
    const Vector x = prob->solve_equilibrium(p);
    const Vector g = adjoint_gradient(*prob, x, p);
    const SearchDirection s = direction_sgn(*prob, x, p, g, o);
    kkt_log.add(s);
    const Vector d = direction_dgn(*prob, x, p, g, o).dp;
    worst = std::max(worst, (s.dp - d).norm() / (1.0 + d.norm()));
    const Vector ref = oracle::dense_gn_step(*prob, x, p);
    worst_oracle = std::max(worst_oracle, (s.dp - ref).norm() / (1.0 + ref.norm()));
    ++cases;
  }
  const auto bar = spring_bar();
  const CarControlProblem car(car_config());
  const auto cl = cloth();
  for (const EquilibriumProblem* prob : {static_cast<const EquilibriumProblem*>(&bar),
                                         static_cast<const EquilibriumProblem*>(&car),
                                         static_cast<const EquilibriumProblem*>(&cl)}) {
    double worst_here = 0.0;
    for_iterates(*prob, 5, [&](const Vector& x, const Vector& p, const Vector& g) {
      const SearchDirection s = direction_sgn(*prob, x, p, g, o);
      kkt_log.add(s);
      const Vector d = direction_dgn(*prob, x, p, g, o).dp;
      worst_here = std::max(worst_here, (s.dp - d).norm() / (1.0 + d.norm()));
      ++cases;
    });
    worst = std::max(worst, worst_here);
    detail += "; " + prob->name() + fmt(" %.2e", worst_here);
  }
  report(1, worst <= kTheorem1Tol && worst_oracle <= kTheorem1Tol,
         fmt("SGN vs DGN over %.0f cases: worst %.2e (dense oracle %.2e), tol %.0e", cases, worst, worst_oracle,
             kTheorem1Tol) +
             detail,
         clock.seconds(), 30);
}

void criterion2() {
  Stopwatch clock;
  const auto bar = spring_bar();
  OptimizerConfig o;
  double worst = 0.0;
  int cases = 0;
  for_iterates(bar, 5, [&](const Vector& x, const Vector& p, const Vector& g) {
    const SearchDirection s = direction_sgn(bar, x, p, g, o);
    kkt_log.add(s);
    const Vector b = direction_bgn(bar, x, p, g, o).dp;
    worst = std::max(worst, oracle::rel_err(b, s.dp));
    ++cases;
  });
  report(2, cases == 5 && worst <= kBlockTol,
         fmt("BGN vs SGN on %.0f spring-bar iterates: worst %.2e, tol %.0e", cases, worst, kBlockTol),
         clock.seconds(), 10);
}

void criterion3() {
  Stopwatch clock;
  std::mt19937 rng(33);
  double worst = 0.0;
  const CubicToy cubic;
  const QuadraticConstraintToy quad;
  std::uniform_real_distribution<double> pc(0.3, 8.0), pq(-0.5, 0.5);
  auto check = [&](const EquilibriumProblem& prob, const Vector& p) {
    const Vector x = prob.solve_equilibrium(p);
    const KktSystem k = assemble_kkt_newton(prob, x, p, adjoint_multipliers(prob, x, p));
    const KktSolution s = solve_kkt_stabilized(k);
    kkt_log.add(s.report);
    const Vector kkt_dp = k.p_block(s.solution);
    // Reduced Newton step from explicit second-order sensitivities.
    const Vector ref = -dense_full_hessian(prob, x, p).partialPivLu().solve(adjoint_gradient(prob, x, p));
    worst = std::max(worst, oracle::rel_err(kkt_dp, ref));
  };
  for (int i = 0; i < 20; ++i) check(cubic, Vector::Constant(1, pc(rng)));
  for (int i = 0; i < 20; ++i) check(quad, (Vector(2) << pq(rng), pq(rng)).finished());
  report(3, worst <= kTheorem2Tol,
         fmt("KKT step with adjoint multipliers vs full-Hessian step, 40 points: worst %.2e, tol %.0e", worst,
             kTheorem2Tol),
         clock.seconds(), 5);
}

void criterion4() {
  Stopwatch clock;
  std::mt19937 rng(44);
  const auto bar = spring_bar();
  const CarConfig car_cfg = car_config();
  const CarControlProblem car(car_cfg);
  const auto cl = cloth();
  struct Case {
    const EquilibriumProblem* prob;
    double spread, tol;
    const char* name;
    std::function<Vector(const Vector&, double)> fd;
  };
  auto through_sim = [](const EquilibriumProblem& prob) {
    return [&prob](const Vector& p, double h) { return oracle::fd_gradient(prob, p, h); };
  };
  const std::vector<Case> cases{
      {&bar, 0.05, kFdTol, "spring_bar", through_sim(bar)},
      {&car, 0.05, kFdTol, "car",
       [&](const Vector& p, double h) { return oracle::car_fd_gradient_extended(car_cfg, p, h); }},
      {&cl, 0.02, kFdTolCloth, "cloth",
       [&](const Vector& p, double h) { return oracle::cloth_fd_gradient(cl, p, h, kClothInnerTol); }}};
  bool pass = true;
  std::string detail;
  double worst_model = 0.0;
  for (const Case& c : cases) {
    double worst = 0.0, ratio_lo = 1e300, ratio_hi = 0.0;
    for (int k = 0; k < 5; ++k) {
      const Vector p = c.prob->initial_params() + oracle::random_vector(rng, c.prob->num_params(), c.spread);
      const Vector x = c.prob == &cl ? oracle::cloth_states(cl, p, kClothInnerTol) : c.prob->solve_equilibrium(p);
      const Vector g = adjoint_gradient(*c.prob, x, p);
      worst = std::max(worst, oracle::rel_err(c.fd(p, kFdStep), g));
      if (c.prob == &car) {
        const double f = c.prob->objective(x, p);
        worst_model = std::max(worst_model, std::abs(f - static_cast<double>(oracle::car_objective_extended(car_cfg, p))) / f);
      }
      if (k > 0) continue;
      // Second-order convergence of the full FD gradient.
      double prev = oracle::rel_err(c.fd(p, 1e-4), g);
      for (double h : {5e-5, 2.5e-5}) {
        const double e = oracle::rel_err(c.fd(p, h), g);
        ratio_lo = std::min(ratio_lo, prev / e);
        ratio_hi = std::max(ratio_hi, prev / e);
        prev = e;
      }
    }
    const bool ok = worst <= c.tol && ratio_lo >= kFdRatioLow && ratio_hi <= kFdRatioHigh;
    pass = pass && ok;
    detail += std::string("; ") + c.name +
              fmt(" err %.1e (tol %.0e) halving ratios [%.2f, %.2f]", worst, c.tol, ratio_lo, ratio_hi);
  }
  // The extended-precision car reference must agree with the library objective.
  pass = pass && worst_model <= 1e-12;
  report(4, pass, "adjoint vs central FD" + detail, clock.seconds(), 60);
}

void criterion5() {
  Stopwatch clock;
  const auto bar = spring_bar();
  OptimizerConfig o;
  o.method = Method::Sgn;
  o.max_iterations = 50;
  o.gradient_tolerance = kGradTol;
  const OptimizerRun sgn_run = minimize(bar, bar.initial_params(), o);
  bool monotone = true;
  for (std::size_t i = 1; i < sgn_run.records.size(); ++i) {
    monotone = monotone && sgn_run.records[i].f < sgn_run.records[i - 1].f;
    if (!std::isnan(sgn_run.records[i].linear_relative_residual)) {
      SolveReport r;
      r.relative_residual = sgn_run.records[i].linear_relative_residual;
      r.refine_iterations = sgn_run.records[i].refine_iterations;
      kkt_log.add(r);
    }
  }
  o.method = Method::Gd;
  o.gradient_tolerance = 1e-300;
  const OptimizerRun gd = minimize(bar, bar.initial_params(), o);
  const double gd_at_sgn = gd.records[std::min<std::size_t>(gd.records.size() - 1, sgn_run.iterations())].grad_norm;
  const bool pass = sgn_run.termination == Termination::Converged && sgn_run.grad_norm <= kGradTol &&
                    sgn_run.iterations() <= 50 && monotone && gd.grad_norm > kGdFloor && gd_at_sgn > kGdFloor;
  report(5, pass,
         fmt("SGN |g| %.2e in %.0f iterations (monotone %.0f); GD |g| %.2e after 50", sgn_run.grad_norm,
             sgn_run.iterations(), monotone, gd.grad_norm),
         clock.seconds(), 60);
}

void criterion6() {
  Stopwatch clock;
  const std::vector<int> sizes{32, 128, 512, 2048};
  std::vector<double> ratio;
  double sgn_last = 0.0, dgn_last = 0.0;
  std::string detail;
  OptimizerConfig o;
  for (int n : sizes) {
    const SpringBarProblem bar(bench::spring_bar_for_params(n));
    const Vector p = bar.initial_params();
    const Vector x = bar.solve_equilibrium(p);
    const Vector g = adjoint_gradient(bar, x, p);
    std::vector<double> ts, td;
    for (int r = 0; r < 5; ++r) {
      const SearchDirection s = direction_sgn(bar, x, p, g, o);
      kkt_log.add(s);
      ts.push_back(s.seconds);
      td.push_back(direction_dgn(bar, x, p, g, o).seconds);
    }
    sgn_last = median(ts);
    dgn_last = median(td);
    ratio.push_back(dgn_last / sgn_last);
    detail += fmt(" %.0f:%.2f", n, ratio.back());
  }
  bool monotone = true;
  for (std::size_t i = 2; i < ratio.size(); ++i) monotone = monotone && ratio[i] > ratio[i - 1];
  report(6, sgn_last < dgn_last && monotone,
         fmt("n_p=2048 SGN %.3f s vs DGN %.3f s; DGN/SGN by n_p", sgn_last, dgn_last) + detail, clock.seconds(),
         600);
}

void criterion7() {
  Stopwatch clock;
  std::string detail;
  double share = 0.0;
  OptimizerConfig o;
  for (int n : {10, 20, 40}) {
    const auto cl = cloth(n);
    const Vector p = cl.initial_params();
    const Vector x = cl.solve_equilibrium(p);
    const Vector g = adjoint_gradient(cl, x, p);
    std::vector<double> total, sens;
    for (int r = 0; r < 5; ++r) {
      const SearchDirection d = direction_dgn(cl, x, p, g, o);
      total.push_back(d.seconds);
      sens.push_back(d.sensitivity_seconds);
    }
    share = median(sens) / median(total);
    detail += fmt(" N=%.0f:%.0f%%", n, 100.0 * share);
  }
  report(7, share > kSensShare, "sensitivity-matrix share of DGN time" + detail, clock.seconds(), 300);
}

void criterion8() {
  report(8, kkt_log.worst_residual <= kKktResidual && kkt_log.worst_refine <= kKktRefine,
         fmt("%.0f KKT solves: worst relative residual %.2e (tol %.0e), worst refinement %.0f iterations",
             kkt_log.solves, kkt_log.worst_residual, kKktResidual, kkt_log.worst_refine),
         0.0, 1);
}

void criterion9() {
  Stopwatch clock;
  const CarControlProblem car(car_config());
  const Vector p = car.initial_params();
  const Vector x = car.solve_equilibrium(p);
  const Vector g = adjoint_gradient(car, x, p);
  const DenseMatrix H = oracle::gn_hessian_sandwich(car, x, p);
  OptimizerConfig o;
  o.cg_eta = kCgEta;
  const Vector loose = direction_cg_gn(car, x, p, g, o).dp;
  const double residual = (H * loose + g).norm() / g.norm();
  o.cg_eta = kCgTightEta;
  const Vector tight = direction_cg_gn(car, x, p, g, o).dp;
  const Vector dgn = direction_dgn(car, x, p, g, o).dp;
  const double match = oracle::rel_err(tight, dgn);
  report(9, residual <= kCgEta && match <= kCgMatchTol,
         fmt("car N=500: eta=1e-3 residual %.2e; eta=1e-10 vs DGN %.2e (tol %.0e)", residual, match, kCgMatchTol),
         clock.seconds(), 60);
}

void criterion10() {
  Stopwatch clock;
  const CarConfig cfg = car_config();
  const CarControlProblem car(cfg);
  OptimizerConfig o = sgn_config(car);
  o.max_iterations = 200;
  bool in_bounds = true;
  auto check_bounds = [&](const Vector& p) {
    for (Index i = 0; i < cfg.steps; ++i)
      in_bounds = in_bounds && std::abs(p(2 * i)) <= cfg.v_max && std::abs(p(2 * i + 1)) <= cfg.s_max;
  };
  o.on_iterate = [&](const Vector&, const Vector& p, const Vector&) { check_bounds(p); };
  const OptimizerRun run = minimize(car, car.initial_params(), o);
  check_bounds(run.p);
  bool monotone = true;
  for (std::size_t i = 1; i < run.records.size(); ++i) monotone = monotone && run.records[i].f < run.records[i - 1].f;
  const Vector end = run.x.segment(3 * (cfg.steps - 1), 2);
  const double err = (end - cfg.target_position).norm();
  const bool terminated = run.termination == Termination::Converged;
  report(10, terminated && err <= kCarPositionTol && in_bounds && monotone,
         fmt("car N=500: %.0f iterations, position error %.2e (tol %.0e), bounds held %.0f", run.iterations(), err,
             kCarPositionTol, in_bounds) +
             " monotone " + (monotone ? "1" : "0") + " termination " + termination_name(run.termination),
         clock.seconds(), 120);
}

void criterion11() {
  Stopwatch clock;
  const auto bar = spring_bar();
  const CarControlProblem car(car_config());
  const auto cl = cloth();
  double worst = 0.0;
  OptimizerConfig o;
  for (const EquilibriumProblem* prob : {static_cast<const EquilibriumProblem*>(&bar),
                                         static_cast<const EquilibriumProblem*>(&car),
                                         static_cast<const EquilibriumProblem*>(&cl)}) {
    const Vector p = prob->initial_params();
    const Vector x = prob->solve_equilibrium(p);
    const Vector g = adjoint_gradient(*prob, x, p);
    const Vector plain = direction_sgn(*prob, x, p, g, o).dp;
    const Vector hybrid = direction_lbfgs_sgn(*prob, x, p, g, LbfgsHistory{}, o).dp;
    worst = std::max(worst, oracle::rel_err(hybrid, plain));
  }
  report(11, worst <= kHybridTol,
         fmt("empty-history hybrid L-BFGS vs SGN: worst %.2e (tol %.0e)", worst, kHybridTol), clock.seconds(), 10);
}

}  // namespace

int main() {
  const std::vector<std::function<void()>> criteria{criterion1, criterion2, criterion3, criterion4,
                                                    criterion5, criterion6, criterion7, criterion8,
                                                    criterion9, criterion10, criterion11};
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    try {
      criteria[i]();
    } catch (const std::exception& e) {
      ++failures;
      std::printf("criterion %2zu: FAIL  error: %s\n", i + 1, e.what());
    }
  }
  std::printf("%d of %zu criteria failed\n", failures, criteria.size());
  return failures == 0 ? 0 : 1;
}
