#include "stable_cir/cir_process.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numbers>
#include <sstream>

#include "stable_cir/errors.hpp"
#include "stable_cir/rng.hpp"
#include "stable_cir/stable_dist.hpp"

namespace stable_cir {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kOverflow = 1e12;

std::string fmt_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double parse_double(const std::string& s, const std::string& what) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("cannot parse " + what + " from '" + s + "'");
  }
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

void Theta::validate() const {
  if (!(a > 0.0) || !std::isfinite(a)) throw DomainError("theta: a must be positive");
  if (!std::isfinite(b)) throw DomainError("theta: b must be finite");
  if (!(delta > 0.0) || !std::isfinite(delta)) throw DomainError("theta: delta must be positive");
  if (!(alpha > 1.0 && alpha < 2.0)) throw DomainError("theta: alpha must lie in (1, 2)");
}

Theta parse_theta(const std::string& text) {
  std::array<double, 4> v{};
  std::stringstream ss(text);
  std::string item;
  std::size_t k = 0;
  while (std::getline(ss, item, ',')) {
    if (k == 4) throw ConfigError("theta needs exactly four values a,b,delta,alpha");
    v[k++] = parse_double(trim(item), "theta component");
  }
  if (k != 4) throw ConfigError("theta needs exactly four values a,b,delta,alpha");
  return Theta::from_array(v);
}

std::string format_theta(const Theta& theta) {
  return fmt_double(theta.a) + "," + fmt_double(theta.b) + "," + fmt_double(theta.delta) + "," +
         fmt_double(theta.alpha);
}

double delta_bar(const Theta& theta) {
  const double al = theta.alpha;
  return theta.delta * std::pow(al / std::abs(std::cos(0.5 * kPi * al)), 1.0 / al);
}

double branching_mechanism(const Theta& theta, double z) {
  const double db = delta_bar(theta);
  return std::pow(db, theta.alpha) / theta.alpha * std::pow(z, theta.alpha) + theta.b * z;
}

double laplace_u0(const Theta& theta) {
  if (theta.b >= 0.0) return 0.0;
  const double db = delta_bar(theta);
  return std::pow(theta.alpha * std::abs(theta.b) / std::pow(db, theta.alpha),
                  1.0 / (theta.alpha - 1.0));
}

double v_t(const Theta& theta, double u, double t) {
  if (!(u >= 0.0) || !(t >= 0.0)) throw DomainError("v_t needs u >= 0 and t >= 0");
  if (u == 0.0 || t == 0.0) return u;
  const double al = theta.alpha;
  const double coef = std::pow(delta_bar(theta), al) / al;
  const double up = std::pow(u, al - 1.0);
  if (theta.b == 0.0) {
    return u * std::pow(al / (al + (al - 1.0) * al * coef * up * t), 1.0 / (al - 1.0));
  }
  const double b = theta.b;
  // (1 - exp(-(alpha-1) b t)) / b, stable for tiny b
  const double ratio = -std::expm1(-(al - 1.0) * b * t) / b;
  const double bracket = 1.0 + coef * up * ratio;
  if (!(bracket > 0.0)) throw DomainError("v_t: bracket is not positive");
  return u * std::exp(-b * t) / std::pow(bracket, 1.0 / (al - 1.0));
}

double laplace_transform(const Theta& theta, double x0, double t, double u,
                         const QuadConfig& quad) {
  if (!(x0 > 0.0)) throw DomainError("laplace_transform needs x0 > 0");
  if (!(t >= 0.0 && t <= 1.0)) throw DomainError("laplace_transform needs t in [0, 1]");
  if (u == 0.0) return 1.0;
  const double v = v_t(theta, u, t);
  if (v == u) return std::exp(-u * x0);
  const double al = theta.alpha;
  const double coef = std::pow(delta_bar(theta), al) / al;
  // F(z)/R(z) = a / (coef z^{alpha-1} + b)
  auto integrand = [&](double z) { return theta.a / (coef * std::pow(z, al - 1.0) + theta.b); };
  const double lo = std::min(v, u);
  const double hi = std::max(v, u);
  double integral = integrate_scalar(integrand, lo, hi, quad);
  if (v > u) integral = -integral;
  return std::exp(-x0 * v - integral);
}

PathGrid simulate_path(const Theta& theta, double x0, int n, int substeps, std::uint64_t seed) {
  if (!(theta.a > 0.0)) throw DomainError("simulate_path: a must be positive");
  if (!(theta.delta >= 0.0)) throw DomainError("simulate_path: delta must be non-negative");
  if (!(theta.alpha > 1.0 && theta.alpha < 2.0)) {
    throw DomainError("simulate_path: alpha must lie in (1, 2)");
  }
  if (!(x0 > 0.0)) throw DomainError("simulate_path: x0 must be positive");
  if (n < 4) throw DomainError("simulate_path: n must be at least 4");
  if (substeps < 1) throw DomainError("simulate_path: substeps must be at least 1");

  PathGrid path;
  path.x0 = x0;
  path.n = n;
  path.substeps = substeps;
  path.seed = seed;
  path.theta = theta;
  path.obs.resize(static_cast<std::size_t>(n) + 1);
  path.obs[0] = x0;

  RngStream rng(seed);
  const double h = 1.0 / (static_cast<double>(n) * substeps);
  const double inv_alpha = 1.0 / theta.alpha;
  const double noise_scale = theta.delta * std::pow(h, inv_alpha);
  double x = x0;
  for (int i = 1; i <= n; ++i) {
    for (int s = 0; s < substeps; ++s) {
      const double jump = theta.delta > 0.0
                              ? noise_scale * std::pow(x, inv_alpha) * sample_stable(theta.alpha, rng)
                              : 0.0;
      x += (theta.a - theta.b * x) * h + jump;
      if (x < 0.0) {
        x = 0.0;
        ++path.floor_events;
      }
      if (!(x < kOverflow)) {
        throw OverflowError("simulated path exceeded 1e12 at step " + std::to_string(i));
      }
    }
    path.obs[static_cast<std::size_t>(i)] = x;
  }
  return path;
}

std::array<double, 2> fit_line(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw DomainError("fit_line needs >= 2 points");
  const double m = static_cast<double>(x.size());
  double sx = 0, sy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sx += x[i];
    sy += y[i];
  }
  const double mx = sx / m, my = sy / m;
  double sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  if (sxx == 0.0) throw DomainError("fit_line: x values are all equal");
  const double slope = sxy / sxx;
  return {slope, my - slope * mx};
}

IncrementDiagnostics increment_diagnostics(const std::vector<PathGrid>& paths, double p,
                                           double inverse_q) {
  if (paths.empty()) throw DomainError("increment_diagnostics: no paths");
  const double alpha = paths.front().theta.alpha;
  if (!(p > 0.0 && p < alpha)) throw DomainError("increment_diagnostics: p must lie in (0, alpha)");

  struct Acc {
    double sum_p = 0, cnt_p = 0, sum_inv = 0, cnt_inv = 0;
  };
  std::map<int, Acc> by_n;
  for (const auto& path : paths) {
    Acc& acc = by_n[path.n];
    for (int i = 1; i <= path.n; ++i) {
      const double prev = path.obs[static_cast<std::size_t>(i - 1)];
      acc.sum_p += std::pow(std::abs(path.obs[static_cast<std::size_t>(i)] - prev), p);
      acc.cnt_p += 1;
      if (prev > 0.0) {
        acc.sum_inv += std::pow(prev, -inverse_q);
        acc.cnt_inv += 1;
      }
    }
  }
  IncrementDiagnostics out;
  out.p = p;
  out.expected_slope = -p / alpha;
  std::vector<double> lx, ly;
  for (const auto& [n, acc] : by_n) {
    out.n_values.push_back(n);
    const double mean = acc.sum_p / acc.cnt_p;
    out.mean_abs_increment_p.push_back(mean);
    out.mean_inverse_moment.push_back(acc.cnt_inv > 0 ? acc.sum_inv / acc.cnt_inv : INFINITY);
    lx.push_back(std::log(static_cast<double>(n)));
    ly.push_back(std::log(mean));
  }
  if (lx.size() >= 2) {
    const auto [slope, icpt] = fit_line(lx, ly);
    out.slope = slope;
    out.intercept = icpt;
  }
  return out;
}

void write_path_csv(const PathGrid& path, const std::filesystem::path& file) {
  std::ofstream os(file);
  if (!os) throw Error("cannot open " + file.string() + " for writing");
  os << "i,t,x\n";
  for (int i = 0; i <= path.n; ++i) {
    os << i << ',' << fmt_double(path.t(i)) << ',' << fmt_double(path.obs[static_cast<std::size_t>(i)])
       << '\n';
  }
  if (!os) throw Error("write failed for " + file.string());
  auto meta_file = file;
  meta_file.replace_extension(".meta");
  std::ofstream ms(meta_file);
  if (!ms) throw Error("cannot open " + meta_file.string() + " for writing");
  ms << "theta=" << format_theta(path.theta) << '\n'
     << "x0=" << fmt_double(path.x0) << '\n'
     << "n=" << path.n << '\n'
     << "substeps=" << path.substeps << '\n'
     << "seed=" << path.seed << '\n'
     << "floor_events=" << path.floor_events << '\n';
}

PathGrid read_path_csv(const std::filesystem::path& file) {
  std::ifstream is(file);
  if (!is) throw ConfigError("cannot open path file " + file.string());
  std::string line;
  if (!std::getline(is, line) || trim(line) != "i,t,x") {
    throw ConfigError(file.string() + ": expected header i,t,x");
  }
  PathGrid path;
  int expected = 0;
  while (std::getline(is, line)) {
    line = trim(line);
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string si, st, sx;
    if (!std::getline(ss, si, ',') || !std::getline(ss, st, ',') || !std::getline(ss, sx, ',')) {
      throw ConfigError(file.string() + ": malformed row '" + line + "'");
    }
    if (std::stoi(si) != expected) throw ConfigError(file.string() + ": rows out of order");
    ++expected;
    path.obs.push_back(parse_double(trim(sx), "observation"));
  }
  if (path.obs.size() < 2) throw ConfigError(file.string() + ": needs at least two rows");
  path.n = static_cast<int>(path.obs.size()) - 1;
  path.x0 = path.obs.front();

  auto meta_file = file;
  meta_file.replace_extension(".meta");
  std::ifstream ms(meta_file);
  while (ms && std::getline(ms, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    const std::string key = trim(line.substr(0, eq));
    const std::string val = trim(line.substr(eq + 1));
    if (key == "theta") path.theta = parse_theta(val);
    else if (key == "substeps") path.substeps = std::stoi(val);
    else if (key == "seed") path.seed = std::stoull(val);
    else if (key == "floor_events") path.floor_events = std::stoull(val);
  }
  return path;
}

}  // namespace stable_cir
