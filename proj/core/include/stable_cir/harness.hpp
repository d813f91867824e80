#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "stable_cir/cir_process.hpp"
#include "stable_cir/estimators.hpp"

namespace stable_cir {

// CLI exit status contract.
enum ExitCode : int { kExitOk = 0, kExitConfig = 1, kExitNumerical = 2, kExitCheck = 3 };

enum class Mode { simulate, estimate, mc, diagnose, check, density_table };

Mode parse_mode(const std::string& name);
std::string mode_name(Mode mode);

// Line-based key=value configuration. Keys match the field names below.
struct ExperimentConfig {
  std::optional<Theta> theta0;
  std::vector<int> n_grid;
  int reps = 1;
  int substeps = 16;
  std::uint64_t master_seed = 1;
  std::filesystem::path out_dir = "out";
  std::string mode;

  double x0 = 1.0;
  std::filesystem::path input;  // estimate: fit this path file instead of simulating
  double p = 0.5;               // power-variation order for the preliminary estimators
  Curvature curvature = Curvature::expected;  // one-step curvature: observed | expected
  int onestep_steps = 1;        // Newton corrections after the preliminary fit
  double tol_scale = 1.0;       // check: multiplier on the deterministic tolerances
  double x_min = -10.0;         // density-table range and resolution
  double x_max = 50.0;
  int points = 241;
};

ExperimentConfig parse_config_text(const std::string& text);
ExperimentConfig parse_config_file(const std::filesystem::path& file);

// Throws ConfigError when `cfg` cannot drive `mode`.
void validate_config(const ExperimentConfig& cfg, Mode mode);

// Replication seed, independent of scheduling order.
std::uint64_t replication_seed(std::uint64_t master, int n, int rep);

// Worker count: hardware concurrency, capped by STABLE_CIR_THREADS when set.
int resolve_threads();

// Runs fn(worker, index) for index in [0, count) on `threads` workers.
// Exceptions stay with their index; the first one (by index) is rethrown.
void parallel_for(std::size_t count, int threads,
                  const std::function<void(int worker, std::size_t index)>& fn);

// Writes path_<seed>_<n>.csv for every (n, rep).
std::vector<std::filesystem::path> cmd_simulate(const ExperimentConfig& cfg);

struct ReplicationFailure {
  std::uint64_t seed = 0;
  int n = 0;
  std::string message;
};

struct SummaryRow {
  int n = 0;
  std::string parameter;  // a, b, delta, alpha
  int count = 0;
  double bias = 0.0;
  double median_error = 0.0;  // median of |estimate - truth|
  double rmse = 0.0;
  double std = 0.0;
  double rate_slope = 0.0;    // log std vs log n over the whole grid; NaN with one n
  double coverage = 0.0;      // fraction with |estimate - truth| <= 1.96 se
  double rmse_prelim = 0.0;   // same RMSE for the preliminary estimate
};

using McSummary = std::vector<SummaryRow>;

struct McRun {
  std::vector<EstimationResult> results;  // ordered by (n, rep)
  std::vector<ReplicationFailure> failures;
  McSummary summary;
};

// Deterministic fold over the results (order of `results` does not matter
// beyond grouping by n).
McSummary summarize(const std::vector<EstimationResult>& results, const Theta& theta0);

// I(theta_hat)^{1/2} u_n(theta0)^{-1} (theta_hat - theta0)
Vec4 standardized_error(const EstimationResult& r, const Theta& theta0);

// Simulate and estimate every (n, rep) in parallel. Failures are recorded;
// more than 10% of them throws NumericalError after the files are written.
McRun cmd_mc(const ExperimentConfig& cfg, int threads);

// Fits the input path, or when no input is configured simulates and fits
// every (n, rep). Writes estimates.csv and estimates.jsonl.
std::vector<EstimationResult> cmd_estimate(const ExperimentConfig& cfg, int threads);

struct DiagnoseReport {
  std::vector<IncrementDiagnostics> fits;  // p = 0.5 and p = 1
  std::vector<int> n_values;
  std::vector<double> inverse_moments;     // mean of X^{-2} over left endpoints
  double inverse_moment_ratio = 0.0;       // max / min across n
};

DiagnoseReport cmd_diagnose(const ExperimentConfig& cfg);

// Worst componentwise relative error of the score against a central-difference
// gradient of L_n, and of the Hessian against a central-difference Jacobian of
// the score, both in u_n-preconditioned coordinates (step 1e-4).
struct FdConsistency {
  double score = 0.0;
  double hessian = 0.0;
};

FdConsistency fd_consistency(const PathGrid& path, const Theta& theta, LawCache& laws);

struct CheckEntry {
  std::string name;
  double measured = 0.0;
  double tolerance = 0.0;
  bool pass = false;
};

struct CheckReport {
  std::vector<CheckEntry> entries;
  bool all_pass() const;
};

// Test seam: replaces the closed-form m_p(alpha) inside the fractional-moment check.
struct CheckHooks {
  std::function<double(double p, double alpha)> frac_moment;
};

// Runs the invariant suite and writes check.json to out_dir.
CheckReport cmd_check(const ExperimentConfig& cfg, const CheckHooks& hooks = {});

// CSV with columns x,phi,h,k,f for alpha = theta0.alpha.
void cmd_density_table(const ExperimentConfig& cfg);

// Per-replication CSV in the estimates format, parsed back.
std::vector<EstimationResult> read_results_csv(const std::filesystem::path& file);

}  // namespace stable_cir
