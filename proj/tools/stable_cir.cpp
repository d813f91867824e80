// stable-cir <mode> --config <file> [--seed S] [--out DIR] [--reps R] [--n N1,N2,...]
#include <CLI11.hpp>
#include <cmath>
#include <cstdio>
#include <iostream>

#include "stable_cir/errors.hpp"
#include "stable_cir/harness.hpp"

using namespace stable_cir;

namespace {

void print_summary(const McSummary& summary) {
  std::printf("%6s %-6s %5s %12s %12s %12s %12s %9s %9s\n", "n", "param", "count", "bias",
              "median|err|", "rmse", "std", "slope", "coverage");
  for (const auto& s : summary) {
    std::printf("%6d %-6s %5d %12.5g %12.5g %12.5g %12.5g %9.4f %9.3f\n", s.n, s.parameter.c_str(),
                s.count, s.bias, s.median_error, s.rmse, s.std, s.rate_slope, s.coverage);
  }
}

int run(Mode mode, ExperimentConfig cfg) {
  const int threads = resolve_threads();
  switch (mode) {
    case Mode::simulate: {
      const auto files = cmd_simulate(cfg);
      std::printf("wrote %zu path files to %s\n", files.size(), cfg.out_dir.string().c_str());
      return kExitOk;
    }
    case Mode::estimate: {
      const auto results = cmd_estimate(cfg, threads);
      for (const auto& r : results) {
        std::printf("seed=%llu n=%d  a=%.6g b=%.6g delta=%.6g alpha=%.6g  (se %.3g %.3g %.3g %.3g)\n",
                    static_cast<unsigned long long>(r.seed), r.n, r.theta_onestep.a,
                    r.theta_onestep.b, r.theta_onestep.delta, r.theta_onestep.alpha, r.stderr_(0),
                    r.stderr_(1), r.stderr_(2), r.stderr_(3));
      }
      return kExitOk;
    }
    case Mode::mc: {
      const McRun mc = cmd_mc(cfg, threads);
      print_summary(mc.summary);
      if (!mc.failures.empty()) std::printf("%zu replications failed\n", mc.failures.size());
      return kExitOk;
    }
    case Mode::diagnose: {
      const DiagnoseReport d = cmd_diagnose(cfg);
      for (const auto& f : d.fits) {
        std::printf("p=%.2f slope=%.4f expected=%.4f\n", f.p, f.slope, f.expected_slope);
      }
      std::printf("inverse moment max/min ratio across n: %.4f\n", d.inverse_moment_ratio);
      return kExitOk;
    }
    case Mode::check: {
      const CheckReport rep = cmd_check(cfg);
      for (const auto& e : rep.entries) {
        std::printf("%-4s %-28s %12.4g  tol %.3g\n", e.pass ? "PASS" : "FAIL", e.name.c_str(),
                    e.measured, e.tolerance);
      }
      return rep.all_pass() ? kExitOk : kExitCheck;
    }
    case Mode::density_table:
      cmd_density_table(cfg);
      std::printf("wrote %s\n", (cfg.out_dir / "density_table.csv").string().c_str());
      return kExitOk;
  }
  return kExitConfig;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Simulation and estimation for the stable CIR process"};
  std::string mode_arg, config_file, out_dir, n_list;
  std::uint64_t seed = 0;
  int reps = 0;
  app.add_option("mode", mode_arg, "simulate | estimate | mc | diagnose | check | density-table")
      ->required();
  app.add_option("--config", config_file, "key=value configuration file")->required();
  auto* seed_opt = app.add_option("--seed", seed, "override master_seed");
  app.add_option("--out", out_dir, "override out_dir");
  app.add_option("--reps", reps, "override reps");
  app.add_option("--n", n_list, "override n_grid, comma separated");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kExitOk : kExitConfig;
  }

  try {
    const Mode mode = parse_mode(mode_arg);
    ExperimentConfig cfg = parse_config_file(config_file);
    if (!cfg.mode.empty() && cfg.mode != mode_arg) {
      std::cerr << "note: config mode '" << cfg.mode << "' overridden by command line\n";
    }
    cfg.mode = mode_arg;
    if (*seed_opt) cfg.master_seed = seed;
    if (!out_dir.empty()) cfg.out_dir = out_dir;
    if (reps != 0) cfg.reps = reps;
    if (!n_list.empty()) {
      cfg.n_grid = parse_config_text("n_grid=" + n_list).n_grid;
    }
    return run(mode, cfg);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const DomainError& e) {
    std::cerr << "invalid input: " << e.what() << '\n';
    return kExitConfig;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitNumerical;
  }
}
