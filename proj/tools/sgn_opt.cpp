#include <iostream>

#include <CLI11.hpp>

#include "sgn/bench.hpp"

namespace bench = sgn::bench;

int main(int argc, char** argv) {
  CLI::App app{"Sparse Gauss-Newton benchmark driver"};
  app.require_subcommand(1);

  std::string config, out;
  unsigned seed = 0;
  int jobs = 1;
  auto add_common = [&](CLI::App* sub, bool needs_config, bool needs_out) {
    auto* c = sub->add_option("--config", config, "problem/bench JSON file")->check(CLI::ExistingFile);
    if (needs_config) c->required();
    auto* o = sub->add_option("--out", out, "output directory");
    if (needs_out) o->required();
    sub->add_option("--seed", seed, "seed for random instances");
    sub->add_option("--jobs", jobs, "parallel optimizer runs")->check(CLI::PositiveNumber);
  };
  CLI::App* optimize = app.add_subcommand("optimize", "run each configured method, write convergence.csv");
  CLI::App* scaling = app.add_subcommand("scaling", "time search directions over a size sweep");
  CLI::App* verify = app.add_subcommand("verify", "equivalence and gradient checks");
  CLI::App* dump = app.add_subcommand("kkt-dump", "write the first-iterate KKT matrix");
  add_common(optimize, true, true);
  add_common(scaling, true, true);
  add_common(verify, false, false);
  add_common(dump, true, true);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return bench::UsageError;
  }

  try {
    bench::BenchSpec spec = config.empty() ? bench::BenchSpec{} : bench::load_spec(config);
    spec.out_dir = out;
    for (auto* sub : {optimize, scaling, verify, dump}) {
      if (!sub->parsed()) continue;
      if (sub->count("--seed")) spec.seed = seed;
      if (sub->count("--jobs")) spec.jobs = jobs;
    }
    if (optimize->parsed()) return bench::cmd_optimize(spec, std::cout);
    if (scaling->parsed()) return bench::cmd_scaling(spec, std::cout);
    if (verify->parsed()) return bench::cmd_verify(spec, std::cout);
    return bench::cmd_kkt_dump(spec, std::cout);
  } catch (const sgn::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return e.kind() == sgn::ErrorKind::Config ? bench::UsageError : bench::VerificationFailure;
  }
}
