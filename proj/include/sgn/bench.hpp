#pragma once

#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "sgn/optimizers.hpp"
#include "sgn/problems.hpp"

namespace sgn::bench {

using Json = nlohmann::json;

enum ExitCode { Success = 0, VerificationFailure = 1, UsageError = 2 };

struct BenchSpec {
  std::string problem_type = "spring_bar";
  Json problem = Json::object();  // type-specific fields
  std::vector<Method> methods{Method::Sgn};
  OptimizerConfig optimizer;
  std::vector<int> sizes;         // scaling sweep: n_p for spring_bar/random_linear, N otherwise
  int repetitions = 5;
  int random_instances = 100;
  int iterates = 5;
  std::string mutation = "none";  // verify only: "none" or "sgn_sign"
  std::string out_dir;
  unsigned seed = 0;
  int jobs = 1;
};

/// Parses a config document. Syntax errors report the line and column, schema
/// errors the dotted field path. Both throw ErrorKind::Config.
BenchSpec parse_spec(const std::string& text, const std::string& source = "<config>");
BenchSpec load_spec(const std::string& path);

const std::vector<std::string>& problem_types();

/// Builds the configured problem. `size` overrides the sweep dimension when
/// non-negative.
std::unique_ptr<EquilibriumProblem> build_problem(const std::string& type, const Json& params,
                                                  unsigned seed, int size = -1);

/// Spring-bar grid with n_w = 4 n_h + 1 holding exactly n_p parameters.
SpringBarConfig spring_bar_for_params(int n_params);

std::string format_csv_row(const IterationRecord& r);
void write_convergence_csv(std::ostream& out, const OptimizerRun& run);

int cmd_optimize(const BenchSpec& spec, std::ostream& log);
int cmd_scaling(const BenchSpec& spec, std::ostream& log);
int cmd_verify(const BenchSpec& spec, std::ostream& log);
int cmd_kkt_dump(const BenchSpec& spec, std::ostream& log);

struct CheckResult {
  std::string name;
  double worst = 0.0;      // largest normalized discrepancy
  double tolerance = 0.0;
  int cases = 0;
  bool passed = true;
  std::string note;
};

/// The equivalence and finite-difference suite run by `verify`.
std::vector<CheckResult> run_checks(const BenchSpec& spec);

/// SGN step whose KKT assembly can carry a deliberate fault.
KktStep sgn_step(const EquilibriumProblem& prob, const Vector& x, const Vector& p, const Vector& grad,
                 const StabilizationConfig& cfg, const std::string& mutation = "none");

}  // namespace sgn::bench
