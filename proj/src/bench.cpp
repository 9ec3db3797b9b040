#include "sgn/bench.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <mutex>
#include <ostream>
#include <random>
#include <set>
#include <sstream>
#include <thread>

#include "sgn/sensitivity.hpp"
#include "sgn/timer.hpp"

namespace sgn::bench {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Config reading

namespace {

[[noreturn]] void field_error(const std::string& path, const std::string& what) {
  throw Error(ErrorKind::Config, "field '" + path + "': " + what);
}

void convert(const Json& v, const std::string& path, double& out) {
  if (!v.is_number()) field_error(path, "expected a number");
  out = v.get<double>();
}

void convert(const Json& v, const std::string& path, int& out) {
  if (!v.is_number_integer()) field_error(path, "expected an integer");
  const auto wide = v.get<long long>();
  if (wide < std::numeric_limits<int>::min() || wide > std::numeric_limits<int>::max())
    field_error(path, "integer out of range");
  out = static_cast<int>(wide);
}

void convert(const Json& v, const std::string& path, unsigned& out) {
  if (!v.is_number_integer() || v.get<long long>() < 0) field_error(path, "expected a non-negative integer");
  out = static_cast<unsigned>(v.get<unsigned long long>());
}

void convert(const Json& v, const std::string& path, std::string& out) {
  if (!v.is_string()) field_error(path, "expected a string");
  out = v.get<std::string>();
}

void convert(const Json& v, const std::string& path, Vector& out) {
  if (!v.is_array()) field_error(path, "expected an array of numbers");
  out.resize(static_cast<Index>(v.size()));
  for (std::size_t i = 0; i < v.size(); ++i) convert(v[i], path + "[" + std::to_string(i) + "]", out(static_cast<Index>(i)));
}

void convert(const Json& v, const std::string& path, std::vector<int>& out) {
  if (!v.is_array()) field_error(path, "expected an array of integers");
  out.resize(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) convert(v[i], path + "[" + std::to_string(i) + "]", out[i]);
}

void convert(const Json& v, const std::string& path, std::vector<std::string>& out) {
  if (!v.is_array()) field_error(path, "expected an array of strings");
  out.resize(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) convert(v[i], path + "[" + std::to_string(i) + "]", out[i]);
}

void convert(const Json& v, const std::string& path, std::set<int>& out) {
  std::vector<int> list;
  convert(v, path, list);
  out = std::set<int>(list.begin(), list.end());
}

void convert(const Json& v, const std::string& path, std::vector<Vector>& out) {
  if (!v.is_array()) field_error(path, "expected an array of arrays");
  out.resize(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) convert(v[i], path + "[" + std::to_string(i) + "]", out[i]);
}

// Reads the fields of one JSON object and rejects keys nobody asked for.
class Section {
 public:
  Section(const Json& obj, std::string path) : obj_(obj), path_(std::move(path)) {
    if (!obj_.is_object()) field_error(path_, "expected an object");
  }

  template <class T>
  bool get(const std::string& key, T& out) {
    seen_.insert(key);
    auto it = obj_.find(key);
    if (it == obj_.end()) return false;
    convert(*it, child(key), out);
    return true;
  }

  bool has(const std::string& key) const { return obj_.contains(key); }
  const Json& raw(const std::string& key) {
    seen_.insert(key);
    return obj_.at(key);
  }
  std::string child(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  void finish() const {
    for (auto it = obj_.begin(); it != obj_.end(); ++it)
      if (!seen_.count(it.key())) field_error(child(it.key()), "unknown field");
  }

 private:
  const Json& obj_;
  std::string path_;
  std::set<std::string> seen_;
};

SpringBarConfig read_spring_bar(const Json& j) {
  SpringBarConfig c;
  Section s(j, "problem");
  std::string type;
  s.get("type", type);
  s.get("nw", c.nw);
  s.get("nh", c.nh);
  s.get("spacing", c.spacing);
  s.get("stiffness", c.stiffness);
  s.get("mass", c.mass);
  s.get("gravity", c.gravity);
  s.get("w_R", c.w_R);
  s.finish();
  if (c.nw < 2 || c.nh < 2) field_error("problem.nw", "spring bar needs nw >= 2 and nh >= 2");
  return c;
}

CarConfig read_car(const Json& j) {
  CarConfig c;
  Section s(j, "problem");
  std::string type;
  s.get("type", type);
  s.get("steps", c.steps);
  s.get("h", c.h);
  if (s.get("start", c.start) && c.start.size() != 3) field_error("problem.start", "expected 3 values");
  if (s.get("target_position", c.target_position) && c.target_position.size() != 2)
    field_error("problem.target_position", "expected 2 values");
  s.get("target_angle", c.target_angle);
  s.get("w_pos", c.w_pos);
  s.get("w_dir", c.w_dir);
  s.get("w_smooth", c.w_smooth);
  s.get("v_max", c.v_max);
  s.get("s_max", c.s_max);
  s.get("v_init", c.v_init);
  s.get("s_init", c.s_init);
  s.finish();
  if (c.steps < 1) field_error("problem.steps", "car needs at least one step");
  return c;
}

ClothConfig read_cloth(const Json& j) {
  ClothConfig c;
  Section s(j, "problem");
  std::string type;
  s.get("type", type);
  s.get("side", c.side);
  s.get("steps", c.steps);
  s.get("total_time", c.total_time);
  s.get("spacing", c.spacing);
  s.get("stiffness", c.stiffness);
  s.get("gravity", c.gravity);
  s.get("keyframes", c.keyframes);
  if (s.get("target_offset", c.target_offset) && c.target_offset.size() != 3)
    field_error("problem.target_offset", "expected 3 values");
  s.get("targets", c.targets);
  s.get("w_handle", c.w_handle);
  s.get("w_handle_velocity", c.w_handle_velocity);
  s.get("w_cloth_velocity", c.w_cloth_velocity);
  s.finish();
  if (c.side < 2) field_error("problem.side", "cloth side must be >= 2");
  if (c.steps < 2) field_error("problem.steps", "cloth needs at least two steps");
  for (int k : c.keyframes)
    if (k < 1 || k > c.steps)
      field_error("problem.keyframes", "keyframe " + std::to_string(k) + " outside 1.." + std::to_string(c.steps));
  return c;
}

struct QuadraticToyConfig {
  Vector x_star = (Vector(3) << 1.0, -2.0, 0.5).finished();
  Vector p_init;
};

QuadraticToyConfig read_quadratic_toy(const Json& j) {
  QuadraticToyConfig c;
  Section s(j, "problem");
  std::string type;
  s.get("type", type);
  s.get("x_star", c.x_star);
  const bool has_init = s.get("p_init", c.p_init);
  s.finish();
  if (!has_init) c.p_init = Vector::Zero(c.x_star.size());
  if (c.p_init.size() != c.x_star.size()) field_error("problem.p_init", "must match x_star in length");
  return c;
}

std::pair<int, int> read_random_linear(const Json& j) {
  int nx = 20, np = 10;
  Section s(j, "problem");
  std::string type;
  s.get("type", type);
  s.get("nx", nx);
  s.get("np", np);
  s.finish();
  if (nx < 1 || np < 1) field_error("problem.nx", "random linear problem needs nx, np >= 1");
  return {nx, np};
}

void read_no_params(const Json& j) {
  Section s(j, "problem");
  std::string type;
  s.get("type", type);
  s.finish();
}

void read_optimizer(const Json& j, OptimizerConfig& o, bool& bounds_given) {
  Section s(j, "optimizer");
  s.get("max_iterations", o.max_iterations);
  s.get("gradient_tolerance", o.gradient_tolerance);
  s.get("armijo_c1", o.armijo_c1);
  s.get("backtrack_factor", o.backtrack_factor);
  s.get("max_backtracks", o.max_backtracks);
  s.get("lbfgs_history", o.lbfgs_history);
  s.get("cg_eta", o.cg_eta);
  s.get("eps_x", o.stabilization.eps_x);
  s.get("eps_lambda", o.stabilization.eps_lambda);
  s.get("refine_tolerance", o.stabilization.refine_tolerance);
  s.get("refine_goal", o.stabilization.refine_goal);
  s.get("max_refine_iters", o.stabilization.max_refine_iters);
  std::string bounds;
  bounds_given = s.get("bounds", bounds);
  if (bounds_given) {
    try {
      o.bounds = parse_bound_mode(bounds);
    } catch (const Error& e) {
      field_error("optimizer.bounds", e.detail());
    }
  }
  s.finish();
  try {
    o.validate();
  } catch (const Error& e) {
    field_error("optimizer", e.detail());
  }
}

}  // namespace

const std::vector<std::string>& problem_types() {
  static const std::vector<std::string> types{"spring_bar", "car", "cloth", "quadratic_toy",
                                              "random_linear", "cubic_toy", "quadratic_constraint_toy"};
  return types;
}

SpringBarConfig spring_bar_for_params(int n_params) {
  // n_p = 2 (n_w - 1) n_h, aiming for n_w - 1 = 4 n_h.
  const int nh = static_cast<int>(std::lround(std::sqrt(n_params / 8.0)));
  if (nh < 2 || n_params % (2 * nh) != 0)
    throw Error(ErrorKind::Config, "no 4:1 spring-bar grid has " + std::to_string(n_params) +
                                       " parameters (use 8 k^2, k >= 2)");
  SpringBarConfig c;
  c.nh = nh;
  c.nw = n_params / (2 * nh) + 1;
  return c;
}

std::unique_ptr<EquilibriumProblem> build_problem(const std::string& type, const Json& params,
                                                  unsigned seed, int size) {
  const Json obj = params.is_null() ? Json::object() : params;
  if (type == "spring_bar") {
    SpringBarConfig c = read_spring_bar(obj);
    if (size >= 0) {
      const SpringBarConfig dims = spring_bar_for_params(size);
      c.nw = dims.nw;
      c.nh = dims.nh;
    }
    return std::make_unique<SpringBarProblem>(c);
  }
  if (type == "car") {
    CarConfig c = read_car(obj);
    if (size >= 0) c.steps = size;
    return std::make_unique<CarControlProblem>(c);
  }
  if (type == "cloth") {
    ClothConfig c = read_cloth(obj);
    if (size >= 0) {
      // Keyframes keep their position in time as the horizon is resampled.
      std::set<int> scaled;
      for (int k : c.keyframes)
        scaled.insert(std::clamp(static_cast<int>(std::lround(static_cast<double>(k) * size / c.steps)), 1, size));
      c.keyframes = std::move(scaled);
      c.steps = size;
    }
    return std::make_unique<ClothControlProblem>(c);
  }
  if (type == "quadratic_toy") {
    const QuadraticToyConfig c = read_quadratic_toy(obj);
    return make_quadratic_toy(c.x_star, c.p_init);
  }
  if (type == "random_linear") {
    auto [nx, np] = read_random_linear(obj);
    if (size >= 0) nx = np = size;
    return make_random_linear_problem(seed, nx, np);
  }
  if (type == "cubic_toy") {
    read_no_params(obj);
    return std::make_unique<CubicToy>();
  }
  if (type == "quadratic_constraint_toy") {
    read_no_params(obj);
    return std::make_unique<QuadraticConstraintToy>();
  }
  std::string valid;
  for (const auto& t : problem_types()) valid += (valid.empty() ? "" : ", ") + t;
  field_error("problem.type", "unknown problem '" + type + "' (valid: " + valid + ")");
}

BenchSpec parse_spec(const std::string& text, const std::string& source) {
  Json doc;
  try {
    doc = Json::parse(text);
  } catch (const Json::parse_error& e) {
    throw Error(ErrorKind::Config, source + ": " + e.what());
  }
  try {
    BenchSpec spec;
    Section top(doc, "");
    if (!top.has("problem")) field_error("problem", "missing");
    {
      const Json& prob = top.raw("problem");
      Section ps(prob, "problem");
      if (!ps.get("type", spec.problem_type)) field_error("problem.type", "missing");
      spec.problem = prob;
      // Validate eagerly so errors surface before any work starts.
      if (spec.problem_type == "spring_bar") read_spring_bar(prob);
      else if (spec.problem_type == "car") read_car(prob);
      else if (spec.problem_type == "cloth") read_cloth(prob);
      else if (spec.problem_type == "quadratic_toy") read_quadratic_toy(prob);
      else if (spec.problem_type == "random_linear") read_random_linear(prob);
      else if (spec.problem_type == "cubic_toy" || spec.problem_type == "quadratic_constraint_toy")
        read_no_params(prob);
      else build_problem(spec.problem_type, prob, 0);
    }
    std::vector<std::string> names;
    if (top.get("methods", names)) {
      if (names.empty()) field_error("methods", "at least one method required");
      spec.methods.clear();
      for (std::size_t i = 0; i < names.size(); ++i) {
        try {
          spec.methods.push_back(parse_method(names[i]));
        } catch (const Error& e) {
          field_error("methods[" + std::to_string(i) + "]", e.detail());
        }
      }
    }
    bool bounds_given = false;
    if (top.has("optimizer")) read_optimizer(top.raw("optimizer"), spec.optimizer, bounds_given);
    if (!bounds_given && spec.problem_type == "car") spec.optimizer.bounds = BoundMode::ProjectedDirection;
    if (top.has("scaling")) {
      Section s(top.raw("scaling"), "scaling");
      s.get("sizes", spec.sizes);
      s.get("repetitions", spec.repetitions);
      s.finish();
      if (spec.repetitions < 1) field_error("scaling.repetitions", "must be >= 1");
      for (int n : spec.sizes)
        if (n < 1) field_error("scaling.sizes", "sizes must be positive");
    }
    if (top.has("verify")) {
      Section s(top.raw("verify"), "verify");
      s.get("random_instances", spec.random_instances);
      s.get("iterates", spec.iterates);
      s.get("mutation", spec.mutation);
      s.finish();
      if (spec.random_instances < 0) field_error("verify.random_instances", "must be >= 0");
      if (spec.iterates < 1) field_error("verify.iterates", "must be >= 1");
      if (spec.mutation != "none" && spec.mutation != "sgn_sign")
        field_error("verify.mutation", "expected 'none' or 'sgn_sign'");
    }
    top.get("seed", spec.seed);
    top.get("jobs", spec.jobs);
    if (spec.jobs < 1) field_error("jobs", "must be >= 1");
    top.finish();
    return spec;
  } catch (const Json::exception& e) {
    throw Error(ErrorKind::Config, source + ": " + e.what());
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::Config) throw;
    throw Error(ErrorKind::Config, source + ": " + e.detail());
  }
}

BenchSpec load_spec(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Config, "cannot open config '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_spec(buf.str(), path);
}

// ---------------------------------------------------------------------------
// Output helpers

namespace {

std::string num(double v) {
  if (std::isnan(v)) return "nan";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string secs(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.6e", v);
  return buf;
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(ErrorKind::Io, "cannot create '" + dir + "': " + ec.message());
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::Io, "cannot write '" + path.string() + "'");
  return out;
}

double median(std::vector<double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// Runs task(i) for i in [0, n) on up to `jobs` threads.
template <class Task>
void parallel_for(int n, int jobs, Task task) {
  const int workers = std::max(1, std::min(jobs, n));
  if (workers == 1) {
    for (int i = 0; i < n; ++i) task(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::thread> pool;
  for (int w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (int i = next++; i < n; i = next++) task(i);
    });
  for (auto& t : pool) t.join();
}

}  // namespace

std::string format_csv_row(const IterationRecord& r) {
  std::ostringstream s;
  s << r.iteration << ',' << num(r.f) << ',' << num(r.grad_norm) << ',' << num(r.step_length) << ','
    << secs(r.direction_seconds) << ',' << secs(r.forward_seconds) << ',' << secs(r.elapsed_seconds) << ','
    << num(r.linear_relative_residual);
  return s.str();
}

void write_convergence_csv(std::ostream& out, const OptimizerRun& run) {
  out << "iter,f,grad_norm,step_len,dir_time_s,fwd_time_s,elapsed_s,lin_rel_residual\n";
  for (const IterationRecord& r : run.records) out << format_csv_row(r) << '\n';
}

// ---------------------------------------------------------------------------
// optimize

int cmd_optimize(const BenchSpec& spec, std::ostream& log) {
  const auto prob = build_problem(spec.problem_type, spec.problem, spec.seed);
  const Vector p0 = prob->initial_params();
  const int n = static_cast<int>(spec.methods.size());
  std::vector<OptimizerRun> runs(static_cast<std::size_t>(n));
  std::vector<std::string> errors(static_cast<std::size_t>(n));

  parallel_for(n, spec.jobs, [&](int i) {
    OptimizerConfig cfg = spec.optimizer;
    cfg.method = spec.methods[static_cast<std::size_t>(i)];
    try {
      runs[static_cast<std::size_t>(i)] = minimize(*prob, p0, cfg);
    } catch (const Error& e) {
      errors[static_cast<std::size_t>(i)] = e.what();
    }
  });

  ensure_dir(spec.out_dir);
  auto feasible = [](const OptimizerRun& run, const IterationRecord& r) {
    return run.method != Method::Sqp || r.constraint_norm <= 1e-8;
  };
  double f_min = std::numeric_limits<double>::infinity();
  for (int i = 0; i < n; ++i)
    if (errors[static_cast<std::size_t>(i)].empty())
      for (const auto& r : runs[static_cast<std::size_t>(i)].records)
        if (feasible(runs[static_cast<std::size_t>(i)], r)) f_min = std::min(f_min, r.f);

  Json summary;
  summary["problem"] = prob->name();
  summary["n_x"] = prob->num_states();
  summary["n_p"] = prob->num_params();
  summary["seed"] = spec.seed;
  summary["f_min"] = std::isfinite(f_min) ? Json(f_min) : Json(nullptr);
  summary["methods"] = Json::object();

  for (int i = 0; i < n; ++i) {
    const std::string name = method_name(spec.methods[static_cast<std::size_t>(i)]);
    Json entry;
    if (!errors[static_cast<std::size_t>(i)].empty()) {
      entry["error"] = errors[static_cast<std::size_t>(i)];
      log << name << ": " << errors[static_cast<std::size_t>(i)] << '\n';
      summary["methods"][name] = entry;
      continue;
    }
    const OptimizerRun& run = runs[static_cast<std::size_t>(i)];
    const fs::path dir = fs::path(spec.out_dir) / name;
    ensure_dir(dir.string());
    std::ofstream csv = open_out(dir / "convergence.csv");
    write_convergence_csv(csv, run);

    double dir_s = 0.0, fwd_s = 0.0;
    Json subopt = Json::array();
    double best = std::numeric_limits<double>::infinity();
    for (const auto& r : run.records) {
      dir_s += r.direction_seconds;
      fwd_s += r.forward_seconds;
      if (feasible(run, r)) best = std::min(best, r.f);
      subopt.push_back(std::isfinite(best) ? Json(std::max(0.0, best - f_min)) : Json(nullptr));
    }
    entry["termination"] = termination_name(run.termination);
    if (!run.message.empty()) entry["message"] = run.message;
    entry["iterations"] = run.iterations();
    entry["final_f"] = run.f;
    entry["final_grad_norm"] = run.grad_norm;
    entry["direction_seconds"] = dir_s;
    entry["forward_seconds"] = fwd_s;
    entry["total_seconds"] = run.records.empty() ? 0.0 : run.records.back().elapsed_seconds;
    entry["suboptimality"] = subopt;
    summary["methods"][name] = entry;
    log << std::left << std::setw(10) << name << " " << std::setw(22) << termination_name(run.termination)
        << " iters " << std::setw(4) << run.iterations() << " f " << num(run.f) << " |g| "
        << num(run.grad_norm) << '\n';
  }
  std::ofstream js = open_out(fs::path(spec.out_dir) / "summary.json");
  js << summary.dump(2) << '\n';
  return Success;
}

// ---------------------------------------------------------------------------
// scaling

int cmd_scaling(const BenchSpec& spec, std::ostream& log) {
  if (spec.sizes.empty()) throw Error(ErrorKind::Config, "field 'scaling.sizes': sweep needs at least one size");
  if (spec.jobs > 1) log << "note: timing cells run on one worker regardless of --jobs\n";

  ensure_dir(spec.out_dir);
  std::ofstream csv = open_out(fs::path(spec.out_dir) / "scaling.csv");
  csv << "problem,method,n_x,n_p,direction_time_median_s,assemble_s,factor_s,solve_s,sens_matrix_s,"
         "dense_factor_s,lin_rel_residual,error\n";

  for (int size : spec.sizes) {
    std::unique_ptr<EquilibriumProblem> prob;
    Vector x, p, g;
    std::string setup_error;
    try {
      prob = build_problem(spec.problem_type, spec.problem, spec.seed, size);
      p = prob->initial_params();
      x = prob->solve_equilibrium(p);
      g = adjoint_gradient(*prob, x, p);
    } catch (const Error& e) {
      setup_error = e.what();
    }
    for (Method m : spec.methods) {
      std::ostringstream row;
      row << spec.problem_type << ',' << method_name(m) << ',';
      if (!setup_error.empty()) {
        row << ",," << std::string(7, ',') << '"' << setup_error << '"';
        csv << row.str() << '\n';
        log << "size " << size << " " << method_name(m) << ": " << setup_error << '\n';
        continue;
      }
      row << prob->num_states() << ',' << prob->num_params() << ',';
      OptimizerConfig cfg = spec.optimizer;
      cfg.method = m;
      std::vector<double> total, assemble, factor, solve, sens, dense;
      double residual = std::numeric_limits<double>::quiet_NaN();
      std::string error;
      try {
        if (m == Method::Sqp || m == Method::Lbfgs || m == Method::LbfgsSgn)
          throw Error(ErrorKind::CapabilityMissing,
                      "scaling times single directions; '" + method_name(m) + "' has no stateless direction");
        for (int r = 0; r < spec.repetitions; ++r) {
          const SearchDirection d = compute_direction(*prob, x, p, g, cfg);
          total.push_back(d.seconds);
          assemble.push_back(d.assemble_seconds);
          factor.push_back(d.factor_seconds);
          solve.push_back(d.solve_seconds);
          sens.push_back(d.sensitivity_seconds);
          dense.push_back(d.dense_factor_seconds);
          if (d.has_linear_solve) residual = d.report.relative_residual;
        }
      } catch (const Error& e) {
        error = e.what();
      }
      if (!error.empty()) {
        row << std::string(7, ',') << '"' << error << '"';
        log << "size " << size << " " << method_name(m) << ": " << error << '\n';
      } else {
        row << secs(median(total)) << ',' << secs(median(assemble)) << ',' << secs(median(factor)) << ','
            << secs(median(solve)) << ',' << secs(median(sens)) << ',' << secs(median(dense)) << ','
            << num(residual) << ',';
        log << std::left << std::setw(8) << method_name(m) << " n_p " << std::setw(6) << prob->num_params()
            << " median " << secs(median(total)) << " s\n";
      }
      csv << row.str() << '\n';
      csv.flush();
    }
  }
  return Success;
}

// ---------------------------------------------------------------------------
// verify

KktStep sgn_step(const EquilibriumProblem& prob, const Vector& x, const Vector& p, const Vector& grad,
                 const StabilizationConfig& cfg, const std::string& mutation) {
  KktSystem k = assemble_sgn(prob, x, p, gn_blocks(prob, x, p), grad);
  if (mutation == "sgn_sign") {
    // Flip dc/dp in both off-diagonal positions; symmetry survives, the step does not.
    const Index lo = k.nx, hi = k.nx + k.np, mult = k.nx + k.np;
    for (Index j = 0; j < k.matrix.outerSize(); ++j)
      for (CscMatrix::InnerIterator it(k.matrix, j); it; ++it) {
        const bool p_col = it.col() >= lo && it.col() < hi && it.row() >= mult;
        const bool p_row = it.row() >= lo && it.row() < hi && it.col() >= mult;
        if (p_col || p_row) it.valueRef() = -it.value();
      }
  } else if (mutation != "none") {
    throw Error(ErrorKind::Config, "unknown mutation '" + mutation + "'");
  }
  return solve_sgn(k, cfg);
}

namespace {

double rel(const Vector& a, const Vector& b) { return (a - b).norm() / (1.0 + b.norm()); }

struct Tracker {
  CheckResult r;
  Tracker(std::string name, double tol) {
    r.name = std::move(name);
    r.tolerance = tol;
  }
  void add(double err, const std::string& where) {
    ++r.cases;
    if (!(err <= r.worst) || std::isnan(err)) {
      r.worst = std::isnan(err) ? std::numeric_limits<double>::infinity() : err;
      r.note = where;
    }
    if (!(err <= r.tolerance)) r.passed = false;
  }
  void fail(const std::string& why) {
    r.passed = false;
    r.worst = std::numeric_limits<double>::infinity();
    r.note = why;
  }
};

struct Benchmark {
  std::string label;
  std::unique_ptr<EquilibriumProblem> prob;
};

std::vector<Benchmark> benchmark_set() {
  std::vector<Benchmark> out;
  SpringBarConfig bar;
  bar.nw = 8;
  bar.nh = 4;
  out.push_back({"spring_bar 8x4", std::make_unique<SpringBarProblem>(bar)});
  CarConfig car;
  car.steps = 100;
  out.push_back({"car N=100", std::make_unique<CarControlProblem>(car)});
  ClothConfig cloth;
  cloth.side = 3;
  cloth.steps = 10;
  out.push_back({"cloth 3x3 N=10", std::make_unique<ClothControlProblem>(cloth)});
  return out;
}

// Visits the first `count` SGN iterates (x, p, grad).
template <class Visit>
void visit_iterates(const EquilibriumProblem& prob, int count, Visit visit) {
  OptimizerConfig cfg;
  cfg.method = Method::Sgn;
  cfg.max_iterations = count;
  cfg.gradient_tolerance = 1e-300;
  if (prob.param_bounds()) cfg.bounds = BoundMode::ProjectedDirection;
  int seen = 0;
  cfg.on_iterate = [&](const Vector& x, const Vector& p, const Vector& g) {
    if (seen++ < count) visit(x, p, g);
  };
  minimize(prob, prob.initial_params(), cfg);
}

Vector fd_gradient(const EquilibriumProblem& prob, const Vector& p, double h) {
  Vector g(p.size());
  for (Index i = 0; i < p.size(); ++i) {
    Vector a = p, b = p;
    a(i) += h;
    b(i) -= h;
    const double fa = prob.objective(prob.solve_equilibrium(a), a);
    const double fb = prob.objective(prob.solve_equilibrium(b), b);
    g(i) = (fa - fb) / (2.0 * h);
  }
  return g;
}

}  // namespace

std::vector<CheckResult> run_checks(const BenchSpec& spec) {
  const StabilizationConfig& stab = spec.optimizer.stabilization;
  const OptimizerConfig& ocfg = spec.optimizer;
  Tracker kkt("kkt_relative_residual", stab.refine_tolerance);
  Tracker refine("kkt_refine_iterations", stab.max_refine_iters);
  auto track_solve = [&](const SolveReport& rep, const std::string& where) {
    kkt.add(rep.relative_residual, where);
    refine.add(rep.refine_iterations, where);
  };

  Tracker t1_random("sgn_vs_dgn_random", 1e-6);
  std::mt19937 rng(spec.seed);
  std::uniform_int_distribution<int> nx_dist(5, 50), np_dist(2, 30);
  for (int i = 0; i < spec.random_instances; ++i) {
    const int nx = nx_dist(rng), np = np_dist(rng);
    const unsigned inst_seed = spec.seed * 1000u + static_cast<unsigned>(i);
    const std::string where = "instance " + std::to_string(i) + " (nx " + std::to_string(nx) + ", np " +
                              std::to_string(np) + ")";
    try {
      const auto prob = make_random_linear_problem(inst_seed, nx, np);
      const Vector p = prob->initial_params();
      const Vector x = prob->solve_equilibrium(p);
      const Vector g = adjoint_gradient(*prob, x, p);
      const KktStep s = sgn_step(*prob, x, p, g, stab, spec.mutation);
      if (spec.mutation == "none") track_solve(s.report, where);
      const SearchDirection d = direction_dgn(*prob, x, p, g, ocfg);
      t1_random.add(rel(s.dp, d.dp), where);
    } catch (const Error& e) {
      t1_random.fail(where + ": " + e.what());
    }
  }

  Tracker t1_bench("sgn_vs_dgn_benchmarks", 1e-6);
  Tracker lbfgs("lbfgs_sgn_empty_history", 1e-14);
  Tracker fd("adjoint_vs_fd", 1e-4);
  Tracker fd_cloth("adjoint_vs_fd_cloth", 1e-3);
  std::vector<Benchmark> set = benchmark_set();
  for (const Benchmark& b : set) {
    try {
      int k = 0;
      visit_iterates(*b.prob, spec.iterates, [&](const Vector& x, const Vector& p, const Vector& g) {
        const std::string where = b.label + " iterate " + std::to_string(k++);
        const KktStep s = sgn_step(*b.prob, x, p, g, stab, spec.mutation);
        if (spec.mutation == "none") track_solve(s.report, where);
        t1_bench.add(rel(s.dp, direction_dgn(*b.prob, x, p, g, ocfg).dp), where);
        if (k == 1) {
          const SearchDirection plain = direction_sgn(*b.prob, x, p, g, ocfg);
          const SearchDirection hybrid = direction_lbfgs_sgn(*b.prob, x, p, g, LbfgsHistory{}, ocfg);
          lbfgs.add((hybrid.dp - plain.dp).norm() / (1e-300 + plain.dp.norm()), where);
        }
      });
    } catch (const Error& e) {
      t1_bench.fail(b.label + ": " + e.what());
    }

    try {
      std::mt19937 prng(spec.seed + 17u);
      std::uniform_real_distribution<double> jitter(-0.05, 0.05);
      Tracker& t = b.prob->name() == "cloth" ? fd_cloth : fd;
      Vector p = b.prob->initial_params();
      for (Index i = 0; i < p.size(); ++i) p(i) += jitter(prng);
      const Vector x = b.prob->solve_equilibrium(p);
      const Vector g = adjoint_gradient(*b.prob, x, p);
      t.add((fd_gradient(*b.prob, p, 1e-5) - g).norm() / g.norm(), b.label);
    } catch (const Error& e) {
      (b.prob->name() == "cloth" ? fd_cloth : fd).fail(b.label + ": " + e.what());
    }
  }

  Tracker bgn("bgn_vs_sgn_spring_bar", 1e-8);
  try {
    const Benchmark& bar = set.front();
    int k = 0;
    visit_iterates(*bar.prob, spec.iterates, [&](const Vector& x, const Vector& p, const Vector& g) {
      const SearchDirection block = direction_bgn(*bar.prob, x, p, g, ocfg);
      const KktStep s = sgn_step(*bar.prob, x, p, g, stab, spec.mutation);
      bgn.add((block.dp - s.dp).norm() / s.dp.norm(), "iterate " + std::to_string(k++));
    });
  } catch (const Error& e) {
    bgn.fail(e.what());
  }

  Tracker t2("kkt_adjoint_vs_full_hessian", 1e-6);
  {
    CubicToy cubic;
    QuadraticConstraintToy quad;
    std::mt19937 trng(spec.seed + 101u);
    std::uniform_real_distribution<double> pc(0.5, 8.0), pq(-0.5, 0.5);
    for (int i = 0; i < 20; ++i) {
      for (int which = 0; which < 2; ++which) {
        const EquilibriumProblem& prob = which == 0 ? static_cast<const EquilibriumProblem&>(cubic) : quad;
        Vector p(prob.num_params());
        for (Index j = 0; j < p.size(); ++j) p(j) = which == 0 ? pc(trng) : pq(trng);
        const std::string where = prob.name() + " point " + std::to_string(i);
        try {
          const Vector x = prob.solve_equilibrium(p);
          const Vector lambda = adjoint_multipliers(prob, x, p);
          const KktSystem k = assemble_kkt_newton(prob, x, p, lambda);
          const Vector sol = DenseMatrix(k.matrix).fullPivLu().solve(k.rhs);
          const Vector dp_kkt = k.p_block(sol);
          const DenseMatrix H = dense_full_hessian(prob, x, p);
          const Vector dp_full = -H.fullPivLu().solve(adjoint_gradient(prob, x, p));
          t2.add((dp_kkt - dp_full).norm() / (1e-300 + dp_full.norm()), where);
        } catch (const Error& e) {
          t2.fail(where + ": " + e.what());
        }
      }
    }
  }

  return {t1_random.r, t1_bench.r, bgn.r, t2.r, fd.r, fd_cloth.r, lbfgs.r, kkt.r, refine.r};
}

int cmd_verify(const BenchSpec& spec, std::ostream& log) {
  const std::vector<CheckResult> results = run_checks(spec);
  bool ok = true;
  log << std::left << std::setw(30) << "check" << std::setw(7) << "cases" << std::setw(12) << "worst"
      << std::setw(12) << "tolerance" << "result\n";
  for (const CheckResult& c : results) {
    log << std::left << std::setw(30) << c.name << std::setw(7) << c.cases << std::setw(12)
        << format_number(c.worst) << std::setw(12) << format_number(c.tolerance) << (c.passed ? "pass" : "FAIL")
        << '\n';
    ok = ok && c.passed;
  }
  for (const CheckResult& c : results)
    if (!c.passed) log << "worst " << c.name << ": " << format_number(c.worst) << " at " << c.note << '\n';

  if (!spec.out_dir.empty()) {
    ensure_dir(spec.out_dir);
    Json report = Json::array();
    for (const CheckResult& c : results)
      report.push_back({{"name", c.name},
                        {"cases", c.cases},
                        {"worst", std::isfinite(c.worst) ? Json(c.worst) : Json(nullptr)},
                        {"tolerance", c.tolerance},
                        {"passed", c.passed},
                        {"note", c.note}});
    std::ofstream out = open_out(fs::path(spec.out_dir) / "verify.json");
    out << report.dump(2) << '\n';
  }
  return ok ? Success : VerificationFailure;
}

// ---------------------------------------------------------------------------
// kkt-dump

int cmd_kkt_dump(const BenchSpec& spec, std::ostream& log) {
  const auto prob = build_problem(spec.problem_type, spec.problem, spec.seed);
  const Vector p = prob->initial_params();
  const Vector x = prob->solve_equilibrium(p);
  const Vector g = adjoint_gradient(*prob, x, p);
  const KktSystem k = assemble_sgn(*prob, x, p, gn_blocks(*prob, x, p), g);
  const SparseFactorization f = factor_sparse(stabilized_matrix(k, spec.optimizer.stabilization));

  ensure_dir(spec.out_dir);
  std::ofstream mtx = open_out(fs::path(spec.out_dir) / "kkt.mtx");
  write_matrix_market(mtx, k.matrix);

  Json stats;
  stats["problem"] = prob->name();
  stats["n_x"] = k.nx;
  stats["n_p"] = k.np;
  stats["n_c"] = k.nc;
  stats["dimension"] = k.dimension();
  stats["nnz"] = k.matrix.nonZeros();
  stats["factor_fill_nnz"] = f.fill_nnz();
  stats["n_p_squared"] = k.np * k.np;
  stats["symmetry_defect"] = symmetry_defect(k.matrix);
  std::ofstream js = open_out(fs::path(spec.out_dir) / "stats.json");
  js << stats.dump(2) << '\n';
  log << "dimension " << k.dimension() << ", nnz " << k.matrix.nonZeros() << ", factor nnz " << f.fill_nnz()
      << '\n';
  return Success;
}

}  // namespace sgn::bench
