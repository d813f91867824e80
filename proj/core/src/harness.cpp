#include "stable_cir/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include "stable_cir/errors.hpp"
#include "stable_cir/rng.hpp"
#include "stable_cir/stable_dist.hpp"

namespace stable_cir {

namespace fs = std::filesystem;

namespace {

constexpr const char* kParamNames[4] = {"a", "b", "delta", "alpha"};

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string g17(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': not a number: '" + v + "'");
  }
}

long long to_int(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const long long d = std::stoll(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': not an integer: '" + v + "'");
  }
}

std::vector<int> to_int_list(const std::string& key, const std::string& v) {
  std::vector<int> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) continue;
    out.push_back(static_cast<int>(to_int(key, item)));
  }
  return out;
}

Vec4 as_vec(const Theta& t) { return Vec4(t.a, t.b, t.delta, t.alpha); }

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) {
    throw ConfigError("out_dir '" + dir.string() + "' is not writable");
  }
}

std::ofstream open_out(const fs::path& file) {
  std::ofstream os(file);
  if (!os) throw ConfigError("cannot write " + file.string());
  return os;
}

double median(std::vector<double> v) {
  if (v.empty()) return NAN;
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

struct Job {
  int n;
  int rep;
  std::uint64_t seed;
};

std::vector<Job> make_jobs(const ExperimentConfig& cfg) {
  std::vector<Job> jobs;
  for (int n : cfg.n_grid) {
    for (int r = 0; r < cfg.reps; ++r) jobs.push_back({n, r, replication_seed(cfg.master_seed, n, r)});
  }
  return jobs;
}

void write_results(const std::vector<EstimationResult>& results, const fs::path& csv,
                   const fs::path& jsonl) {
  auto os = open_out(csv);
  os << result_csv_header() << '\n';
  for (const auto& r : results) os << result_csv_row(r) << '\n';
  auto js = open_out(jsonl);
  for (const auto& r : results) js << result_json_line(r) << '\n';
}

}  // namespace

Mode parse_mode(const std::string& name) {
  if (name == "simulate") return Mode::simulate;
  if (name == "estimate") return Mode::estimate;
  if (name == "mc") return Mode::mc;
  if (name == "diagnose") return Mode::diagnose;
  if (name == "check") return Mode::check;
  if (name == "density-table") return Mode::density_table;
  throw ConfigError("unknown mode '" + name + "'");
}

std::string mode_name(Mode mode) {
  switch (mode) {
    case Mode::simulate: return "simulate";
    case Mode::estimate: return "estimate";
    case Mode::mc: return "mc";
    case Mode::diagnose: return "diagnose";
    case Mode::check: return "check";
    case Mode::density_table: return "density-table";
  }
  return "?";
}

ExperimentConfig parse_config_text(const std::string& text) {
  ExperimentConfig cfg;
  std::set<std::string> seen;
  std::stringstream ss(text);
  std::string line;
  int lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(lineno) + ": expected key=value");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string val = trim(line.substr(eq + 1));
    if (!seen.insert(key).second) throw ConfigError("config key '" + key + "' given twice");

    if (key == "theta0") {
      cfg.theta0 = parse_theta(val);
    } else if (key == "n_grid") {
      cfg.n_grid = to_int_list(key, val);
    } else if (key == "reps") {
      cfg.reps = static_cast<int>(to_int(key, val));
    } else if (key == "substeps") {
      cfg.substeps = static_cast<int>(to_int(key, val));
    } else if (key == "master_seed") {
      try {
        cfg.master_seed = std::stoull(val);
      } catch (const std::exception&) {
        throw ConfigError("config key 'master_seed': not an unsigned integer");
      }
    } else if (key == "out_dir") {
      cfg.out_dir = val;
    } else if (key == "mode") {
      parse_mode(val);
      cfg.mode = val;
    } else if (key == "x0") {
      cfg.x0 = to_double(key, val);
    } else if (key == "input") {
      cfg.input = val;
    } else if (key == "p") {
      cfg.p = to_double(key, val);
    } else if (key == "curvature") {
      if (val == "observed") cfg.curvature = Curvature::observed;
      else if (val == "expected") cfg.curvature = Curvature::expected;
      else throw ConfigError("curvature must be 'observed' or 'expected'");
    } else if (key == "onestep_steps") {
      cfg.onestep_steps = static_cast<int>(to_int(key, val));
    } else if (key == "tol_scale") {
      cfg.tol_scale = to_double(key, val);
    } else if (key == "x_min") {
      cfg.x_min = to_double(key, val);
    } else if (key == "x_max") {
      cfg.x_max = to_double(key, val);
    } else if (key == "points") {
      cfg.points = static_cast<int>(to_int(key, val));
    } else {
      throw ConfigError("unknown config key '" + key + "'");
    }
  }
  return cfg;
}

ExperimentConfig parse_config_file(const fs::path& file) {
  std::ifstream is(file);
  if (!is) throw ConfigError("cannot open config file " + file.string());
  std::stringstream buf;
  buf << is.rdbuf();
  return parse_config_text(buf.str());
}

void validate_config(const ExperimentConfig& cfg, Mode mode) {
  const bool needs_theta = mode != Mode::estimate || cfg.input.empty();
  if (needs_theta) {
    if (!cfg.theta0) throw ConfigError("theta0 is required for mode " + mode_name(mode));
    try {
      cfg.theta0->validate();
    } catch (const DomainError& e) {
      throw ConfigError(e.what());
    }
  }
  if (cfg.reps < 1) throw ConfigError("reps must be >= 1");
  if (cfg.substeps < 1) throw ConfigError("substeps must be >= 1");
  if (!(cfg.x0 > 0.0)) throw ConfigError("x0 must be positive");
  if (!(cfg.p > 0.0 && cfg.p < 1.0)) throw ConfigError("p must lie in (0, 1)");
  if (!(cfg.tol_scale > 0.0)) throw ConfigError("tol_scale must be positive");
  if (cfg.onestep_steps < 1) throw ConfigError("onestep_steps must be >= 1");
  const bool needs_grid = mode == Mode::simulate || mode == Mode::mc || mode == Mode::diagnose ||
                          (mode == Mode::estimate && cfg.input.empty());
  if (needs_grid && cfg.n_grid.empty()) throw ConfigError("n_grid is empty");
  for (int n : cfg.n_grid) {
    if (n < 8) throw ConfigError("n_grid entries must be >= 8");
  }
  if (mode == Mode::diagnose && cfg.n_grid.size() < 2) {
    throw ConfigError("diagnose needs at least two n_grid entries");
  }
  if (mode == Mode::density_table && !(cfg.x_min < cfg.x_max && cfg.points >= 2)) {
    throw ConfigError("density-table needs x_min < x_max and points >= 2");
  }
}

std::uint64_t replication_seed(std::uint64_t master, int n, int rep) {
  return stream_seed(stream_seed(master, static_cast<std::uint64_t>(n)),
                     static_cast<std::uint64_t>(rep));
}

int resolve_threads() {
  int hw = static_cast<int>(std::thread::hardware_concurrency());
  if (hw < 1) hw = 1;
  if (const char* env = std::getenv("STABLE_CIR_THREADS")) {
    const int cap = std::atoi(env);
    if (cap >= 1) hw = std::min(hw, cap);
  }
  return hw;
}

void parallel_for(std::size_t count, int threads,
                  const std::function<void(int, std::size_t)>& fn) {
  threads = std::max(1, std::min<int>(threads, static_cast<int>(std::max<std::size_t>(count, 1))));
  std::vector<std::exception_ptr> errors(count);
  std::atomic<std::size_t> next{0};
  auto worker = [&](int w) {
    for (std::size_t i = next++; i < count; i = next++) {
      try {
        fn(w, i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  if (threads == 1) {
    worker(0);
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < threads; ++w) pool.emplace_back(worker, w);
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

std::vector<fs::path> cmd_simulate(const ExperimentConfig& cfg) {
  validate_config(cfg, Mode::simulate);
  ensure_dir(cfg.out_dir);
  std::vector<fs::path> files;
  for (const Job& job : make_jobs(cfg)) {
    PathGrid path;
    try {
      path = simulate_path(*cfg.theta0, cfg.x0, job.n, cfg.substeps, job.seed);
    } catch (const Error& e) {
      throw NumericalError("replication " + std::to_string(job.rep) + " (n=" +
                           std::to_string(job.n) + "): " + e.what());
    }
    const fs::path file =
        cfg.out_dir / ("path_" + std::to_string(job.seed) + "_" + std::to_string(job.n) + ".csv");
    write_path_csv(path, file);
    files.push_back(file);
  }
  return files;
}

McSummary summarize(const std::vector<EstimationResult>& results, const Theta& theta0) {
  std::map<int, std::vector<const EstimationResult*>> by_n;
  for (const auto& r : results) by_n[r.n].push_back(&r);
  const Vec4 truth = as_vec(theta0);

  McSummary out;
  for (const auto& [n, rows] : by_n) {
    for (int k = 0; k < 4; ++k) {
      SummaryRow s;
      s.n = n;
      s.parameter = kParamNames[k];
      s.count = static_cast<int>(rows.size());
      std::vector<double> abs_err;
      double sum = 0, sum2 = 0, sum2_pre = 0;
      int covered = 0;
      for (const auto* r : rows) {
        const double e = as_vec(r->theta_onestep)(k) - truth(k);
        const double ep = as_vec(r->theta_prelim)(k) - truth(k);
        sum += e;
        sum2 += e * e;
        sum2_pre += ep * ep;
        abs_err.push_back(std::abs(e));
        if (std::abs(e) <= 1.96 * r->stderr_(k)) ++covered;
      }
      const double m = s.count;
      s.bias = sum / m;
      s.rmse = std::sqrt(sum2 / m);
      s.rmse_prelim = std::sqrt(sum2_pre / m);
      s.median_error = median(abs_err);
      double ss = 0;
      for (const auto* r : rows) {
        const double d = as_vec(r->theta_onestep)(k) - truth(k) - s.bias;
        ss += d * d;
      }
      s.std = s.count > 1 ? std::sqrt(ss / (m - 1)) : NAN;
      s.coverage = covered / m;
      s.rate_slope = NAN;
      out.push_back(s);
    }
  }
  if (by_n.size() >= 2) {
    for (int k = 0; k < 4; ++k) {
      std::vector<double> lx, ly;
      for (const auto& s : out) {
        if (s.parameter == kParamNames[k] && s.std > 0.0) {
          lx.push_back(std::log(static_cast<double>(s.n)));
          ly.push_back(std::log(s.std));
        }
      }
      if (lx.size() < 2) continue;
      const double slope = fit_line(lx, ly)[0];
      for (auto& s : out) {
        if (s.parameter == kParamNames[k]) s.rate_slope = slope;
      }
    }
  }
  return out;
}

Vec4 standardized_error(const EstimationResult& r, const Theta& theta0) {
  const Mat4 u = rate_matrix(r.n, theta0);
  const Vec4 scaled = u.inverse() * (as_vec(r.theta_onestep) - as_vec(theta0));
  return sym_sqrt(r.info) * scaled;
}

namespace {

struct Batch {
  std::vector<EstimationResult> results;
  std::vector<ReplicationFailure> failures;
};

Batch run_batch(const ExperimentConfig& cfg, int threads) {
  const std::vector<Job> jobs = make_jobs(cfg);
  std::vector<std::optional<EstimationResult>> slots(jobs.size());
  std::vector<std::string> errors(jobs.size());
  std::vector<LawCache> caches(static_cast<std::size_t>(std::max(1, threads)));
  EstimationConfig ec;
  ec.p = cfg.p;
  ec.curvature = cfg.curvature;
  ec.steps = cfg.onestep_steps;
  parallel_for(jobs.size(), threads, [&](int w, std::size_t i) {
    const Job& job = jobs[i];
    try {
      const PathGrid path = simulate_path(*cfg.theta0, cfg.x0, job.n, cfg.substeps, job.seed);
      slots[i] = estimate_full(path, ec, caches[static_cast<std::size_t>(w)]);
    } catch (const DomainError& e) {
      errors[i] = std::string("domain: ") + e.what();
    } catch (const Error& e) {
      errors[i] = e.what();
    }
  });
  Batch b;
  for (std::size_t i = 0; i < jobs.size(); ++i) {
    if (slots[i]) {
      b.results.push_back(*slots[i]);
    } else {
      b.failures.push_back({jobs[i].seed, jobs[i].n, errors[i]});
    }
  }
  return b;
}

void write_failures(const std::vector<ReplicationFailure>& failures, const fs::path& file) {
  auto os = open_out(file);
  os << "seed,n,message\n";
  for (const auto& f : failures) {
    std::string msg = f.message;
    std::replace(msg.begin(), msg.end(), ',', ';');
    std::replace(msg.begin(), msg.end(), '\n', ' ');
    os << f.seed << ',' << f.n << ',' << msg << '\n';
  }
}

}  // namespace

McRun cmd_mc(const ExperimentConfig& cfg, int threads) {
  validate_config(cfg, Mode::mc);
  ensure_dir(cfg.out_dir);
  Batch b = run_batch(cfg, threads);
  McRun run;
  run.results = std::move(b.results);
  run.failures = std::move(b.failures);
  run.summary = summarize(run.results, *cfg.theta0);

  write_results(run.results, cfg.out_dir / "replications.csv", cfg.out_dir / "replications.jsonl");
  write_failures(run.failures, cfg.out_dir / "failures.csv");
  {
    auto os = open_out(cfg.out_dir / "standardized.csv");
    os << "seed,n,s_a,s_b,s_delta,s_alpha\n";
    for (const auto& r : run.results) {
      const Vec4 s = standardized_error(r, *cfg.theta0);
      os << r.seed << ',' << r.n;
      for (int k = 0; k < 4; ++k) os << ',' << g17(s(k));
      os << '\n';
    }
  }
  {
    auto os = open_out(cfg.out_dir / "summary.csv");
    os << "n,parameter,count,bias,median_error,rmse,std,rate_slope,coverage,rmse_prelim\n";
    for (const auto& s : run.summary) {
      os << s.n << ',' << s.parameter << ',' << s.count << ',' << g17(s.bias) << ','
         << g17(s.median_error) << ',' << g17(s.rmse) << ',' << g17(s.std) << ','
         << g17(s.rate_slope) << ',' << g17(s.coverage) << ',' << g17(s.rmse_prelim) << '\n';
    }
  }
  const std::size_t total = run.results.size() + run.failures.size();
  if (run.failures.size() * 10 > total) {
    throw NumericalError(std::to_string(run.failures.size()) + " of " + std::to_string(total) +
                         " replications failed");
  }
  return run;
}

std::vector<EstimationResult> cmd_estimate(const ExperimentConfig& cfg, int threads) {
  validate_config(cfg, Mode::estimate);
  ensure_dir(cfg.out_dir);
  std::vector<EstimationResult> results;
  if (!cfg.input.empty()) {
    const PathGrid path = read_path_csv(cfg.input);
    LawCache laws;
    EstimationConfig ec;
    ec.p = cfg.p;
    ec.curvature = cfg.curvature;
    ec.steps = cfg.onestep_steps;
    results.push_back(estimate_full(path, ec, laws));
  } else {
    Batch b = run_batch(cfg, threads);
    write_failures(b.failures, cfg.out_dir / "failures.csv");
    if (!b.failures.empty()) {
      write_results(b.results, cfg.out_dir / "estimates.csv", cfg.out_dir / "estimates.jsonl");
      throw NumericalError(b.failures.front().message);
    }
    results = std::move(b.results);
  }
  write_results(results, cfg.out_dir / "estimates.csv", cfg.out_dir / "estimates.jsonl");
  return results;
}

DiagnoseReport cmd_diagnose(const ExperimentConfig& cfg) {
  validate_config(cfg, Mode::diagnose);
  ensure_dir(cfg.out_dir);
  std::vector<PathGrid> paths;
  for (const Job& job : make_jobs(cfg)) {
    paths.push_back(simulate_path(*cfg.theta0, cfg.x0, job.n, cfg.substeps, job.seed));
  }
  DiagnoseReport rep;
  for (double p : {0.5, 1.0}) rep.fits.push_back(increment_diagnostics(paths, p, 2.0));
  rep.n_values = rep.fits.front().n_values;
  rep.inverse_moments = rep.fits.front().mean_inverse_moment;
  const auto [lo, hi] = std::minmax_element(rep.inverse_moments.begin(), rep.inverse_moments.end());
  rep.inverse_moment_ratio = *hi / *lo;

  auto os = open_out(cfg.out_dir / "diagnostics.csv");
  os << "p,n,mean_abs_increment_p,slope,expected_slope\n";
  for (const auto& fit : rep.fits) {
    for (std::size_t i = 0; i < fit.n_values.size(); ++i) {
      os << g17(fit.p) << ',' << fit.n_values[i] << ',' << g17(fit.mean_abs_increment_p[i]) << ','
         << g17(fit.slope) << ',' << g17(fit.expected_slope) << '\n';
    }
  }
  auto is = open_out(cfg.out_dir / "inverse_moments.csv");
  is << "n,q,mean_inverse_moment\n";
  for (std::size_t i = 0; i < rep.n_values.size(); ++i) {
    is << rep.n_values[i] << ",2," << g17(rep.inverse_moments[i]) << '\n';
  }
  return rep;
}

bool CheckReport::all_pass() const {
  return std::all_of(entries.begin(), entries.end(), [](const CheckEntry& e) { return e.pass; });
}

namespace {

// Componentwise relative error with a floor at 1% of the largest component.
double rel_error(const Eigen::MatrixXd& got, const Eigen::MatrixXd& want) {
  const double floor = std::max(1e-300, 1e-2 * want.cwiseAbs().maxCoeff());
  double worst = 0.0;
  for (Eigen::Index i = 0; i < want.size(); ++i) {
    const double d = std::abs(got(i) - want(i));
    worst = std::max(worst, d / std::max(std::abs(want(i)), floor));
  }
  return worst;
}

}  // namespace

FdConsistency fd_consistency(const PathGrid& path, const Theta& theta, LawCache& laws) {
  const Mat4 u = rate_matrix(path.n, theta);
  const ScoreReport base = evaluate_quasi_likelihood(path, theta, laws);
  const double eps = 1e-4;
  Vec4 fd_grad;
  Mat4 fd_jac;
  for (int j = 0; j < 4; ++j) {
    const Vec4 shift = u.col(j) * eps;
    const Theta plus = Theta::from_array({theta.a + shift(0), theta.b + shift(1),
                                          theta.delta + shift(2), theta.alpha + shift(3)});
    const Theta minus = Theta::from_array({theta.a - shift(0), theta.b - shift(1),
                                           theta.delta - shift(2), theta.alpha - shift(3)});
    LikelihoodOptions o;
    o.with_hessian = false;
    const ScoreReport rp = evaluate_quasi_likelihood(path, plus, laws, o);
    const ScoreReport rm = evaluate_quasi_likelihood(path, minus, laws, o);
    fd_grad(j) = -(rp.loglik - rm.loglik) / (2 * eps);
    fd_jac.col(j) = u.transpose() * (rp.g - rm.g) / (2 * eps);
  }
  const Vec4 g = u.transpose() * base.g;
  const Mat4 jp = u.transpose() * base.j * u;
  return {rel_error(g, fd_grad), rel_error(jp, fd_jac)};
}

CheckReport cmd_check(const ExperimentConfig& cfg, const CheckHooks& hooks) {
  validate_config(cfg, Mode::check);
  ensure_dir(cfg.out_dir);
  const double s = cfg.tol_scale;
  CheckReport rep;
  auto add = [&](std::string name, double measured, double tol) {
    rep.entries.push_back({std::move(name), measured, tol, std::abs(measured) <= tol});
  };

  for (double al : {1.2, 1.5, 1.8}) {
    char tag[16];
    std::snprintf(tag, sizeof tag, "_a%.1f", al);
    const StableLaw law(al);
    const StableMoments m = stable_moments(law);
    add(std::string("normalization") + tag, m.one - 1.0, 1e-6 * s);
    add(std::string("mean_h") + tag, m.h, 1e-4 * s);
    add(std::string("mean_k") + tag, m.k, 1e-4 * s);
    add(std::string("mean_f") + tag, m.f, 1e-4 * s);
    add(std::string("identity_dh") + tag, m.dh + m.h2, 1e-4 * s);
    add(std::string("identity_df") + tag, m.df + m.fh, 1e-4 * s);
    add(std::string("identity_dalpha_f") + tag, m.dalpha_f + m.f2, 1e-4 * s);
    add(std::string("identity_dk") + tag, m.dk + m.hk, 1e-4 * s);
    add(std::string("identity_x_df") + tag, m.x_df + m.fk, 1e-4 * s);
    add(std::string("identity_x_dk") + tag, m.x_dk + m.k2, 1e-4 * s);
  }

  // Fractional moment against the sampler, in standard errors (not scaled).
  {
    const double al = cfg.theta0->alpha;
    const double p = 0.5;
    RngStream rng(stream_seed(cfg.master_seed, 0xF0));
    const int pairs = 200000;
    double sum = 0, sum2 = 0;
    for (int i = 0; i < pairs; ++i) {
      const double v = std::pow(std::abs(sample_stable(al, rng) - sample_stable(al, rng)), p);
      sum += v;
      sum2 += v * v;
    }
    const double mean = sum / pairs;
    const double se = std::sqrt((sum2 / pairs - mean * mean) / pairs);
    const double mp = hooks.frac_moment ? hooks.frac_moment(p, al) : frac_moment_m(p, al);
    add("frac_moment_sampler_se", (mean - mp) / se, 3.0);
  }

  // v_t solves dv/dt = -R(v).
  {
    const Theta& th = *cfg.theta0;
    double worst = 0.0;
    for (double u : {0.5, 1.0, 2.0}) {
      for (double t : {0.25, 0.5, 0.75}) {
        const double h = 1e-5;
        const double dv = (v_t(th, u, t + h) - v_t(th, u, t - h)) / (2 * h);
        const double r = branching_mechanism(th, v_t(th, u, t));
        worst = std::max(worst, std::abs(dv + r) / (1.0 + std::abs(r)));
      }
    }
    add("vt_ode_residual", worst, 1e-6 * s);
  }

  // Laplace transform oracle at t = 1, u = 1, in standard errors.
  {
    const int paths = 20000;
    double sum = 0, sum2 = 0;
    for (int i = 0; i < paths; ++i) {
      const PathGrid pg = simulate_path(*cfg.theta0, cfg.x0, 8, cfg.substeps,
                                        stream_seed(cfg.master_seed, 0x1000 + static_cast<unsigned>(i)));
      const double v = std::exp(-pg.obs.back());
      sum += v;
      sum2 += v * v;
    }
    const double mean = sum / paths;
    const double se = std::sqrt((sum2 / paths - mean * mean) / paths);
    add("laplace_oracle_se", (mean - laplace_transform(*cfg.theta0, cfg.x0, 1.0, 1.0)) / se, 3.0);
  }

  // Score and Hessian against finite differences on a seeded path.
  {
    const PathGrid path = simulate_path(*cfg.theta0, cfg.x0, 500, cfg.substeps,
                                        stream_seed(cfg.master_seed, 0xA11));
    LawCache laws;
    const FdConsistency fd = fd_consistency(path, *cfg.theta0, laws);
    add("score_vs_fd_gradient", fd.score, 1e-3 * s);
    add("hessian_vs_fd_jacobian", fd.hessian, 1e-3 * s);
  }

  nlohmann::ordered_json j;
  j["all_pass"] = rep.all_pass();
  j["tol_scale"] = s;
  j["checks"] = nlohmann::json::array();
  for (const auto& e : rep.entries) {
    j["checks"].push_back({{"name", e.name},
                           {"measured", e.measured},
                           {"tolerance", e.tolerance},
                           {"pass", e.pass}});
  }
  auto os = open_out(cfg.out_dir / "check.json");
  os << j.dump(2) << '\n';
  return rep;
}

void cmd_density_table(const ExperimentConfig& cfg) {
  validate_config(cfg, Mode::density_table);
  ensure_dir(cfg.out_dir);
  const StableLaw law(cfg.theta0->alpha);
  auto os = open_out(cfg.out_dir / "density_table.csv");
  os << "x,phi,h,k,f\n";
  for (int i = 0; i < cfg.points; ++i) {
    const double x = cfg.x_min + (cfg.x_max - cfg.x_min) * i / (cfg.points - 1);
    if (x < law.left_floor()) continue;
    const KernelJet jt = law.jet(x);
    os << g17(x) << ',' << g17(std::exp(jt.log_phi)) << ',' << g17(jt.h) << ',' << g17(jt.k) << ','
       << g17(jt.f) << '\n';
  }
}

std::vector<EstimationResult> read_results_csv(const fs::path& file) {
  std::ifstream is(file);
  if (!is) throw ConfigError("cannot open " + file.string());
  std::string line;
  if (!std::getline(is, line) || trim(line) != result_csv_header()) {
    throw ConfigError(file.string() + ": unexpected header");
  }
  std::vector<EstimationResult> out;
  while (std::getline(is, line)) {
    line = trim(line);
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string item;
    while (std::getline(ss, item, ',')) f.push_back(item);
    if (f.size() != 16) throw ConfigError(file.string() + ": expected 16 columns");
    EstimationResult r;
    r.seed = std::stoull(f[0]);
    r.n = std::stoi(f[1]);
    std::array<double, 12> v{};
    for (int k = 0; k < 12; ++k) v[static_cast<std::size_t>(k)] = to_double("csv", f[static_cast<std::size_t>(k) + 2]);
    r.theta_onestep = Theta{v[0], v[1], v[2], v[3]};
    r.theta_prelim = Theta{v[4], v[5], v[6], v[7]};
    r.stderr_ = Vec4(v[8], v[9], v[10], v[11]);
    r.clamps = std::stoi(f[14]);
    r.iters = std::stoi(f[15]);
    out.push_back(r);
  }
  return out;
}

}  // namespace stable_cir
