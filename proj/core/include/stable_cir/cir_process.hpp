#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "stable_cir/quadrature.hpp"

namespace stable_cir {

// Parameters of dX = (a - bX) dt + delta X^{1/alpha} dL.
struct Theta {
  double a = 0.0;
  double b = 0.0;
  double delta = 0.0;
  double alpha = 0.0;

  // a > 0, delta > 0, 1 < alpha < 2; throws DomainError otherwise.
  void validate() const;

  std::array<double, 4> as_array() const { return {a, b, delta, alpha}; }
  static Theta from_array(const std::array<double, 4>& v) { return {v[0], v[1], v[2], v[3]}; }
  bool operator==(const Theta&) const = default;
};

// Comma-separated "a,b,delta,alpha".
Theta parse_theta(const std::string& text);
std::string format_theta(const Theta& theta);

// Observations X_{i/n}, i = 0..n, on [0, 1] plus how they were produced.
struct PathGrid {
  double x0 = 0.0;
  int n = 0;
  std::vector<double> obs;
  int substeps = 1;
  std::uint64_t seed = 0;
  Theta theta{};
  std::size_t floor_events = 0;  // fine-grid steps that had to be floored at 0

  double t(int i) const { return static_cast<double>(i) / static_cast<double>(n); }
  bool operator==(const PathGrid&) const = default;
};

// delta * (alpha / |cos(pi alpha / 2)|)^{1/alpha}
double delta_bar(const Theta& theta);

// Branching mechanism R(z) = (delta_bar^alpha / alpha) z^alpha + b z.
double branching_mechanism(const Theta& theta, double z);

// Threshold below which t -> v_t(u) is increasing (only nonzero when b < 0).
double laplace_u0(const Theta& theta);

// Solution of d/dt v = -R(v), v_0 = u.
double v_t(const Theta& theta, double u, double t);

// E exp(-u X_t) for the process started at x0.
double laplace_transform(const Theta& theta, double x0, double t, double u,
                         const QuadConfig& quad = {});

// Euler scheme on n * substeps fine steps with exact stable increments and
// the state floored at zero. delta = 0 is accepted here (deterministic ODE).
PathGrid simulate_path(const Theta& theta, double x0, int n, int substeps, std::uint64_t seed);

// Fitted log-log slope of the mean p-th absolute increment against n.
struct IncrementDiagnostics {
  double p = 0.0;
  std::vector<int> n_values;
  std::vector<double> mean_abs_increment_p;  // per n
  std::vector<double> mean_inverse_moment;   // E[1/X^q] per n, left endpoints
  double slope = 0.0;
  double intercept = 0.0;
  double expected_slope = 0.0;  // -p/alpha of the paths' theta
};

IncrementDiagnostics increment_diagnostics(const std::vector<PathGrid>& paths, double p,
                                           double inverse_q = 2.0);

// Least-squares slope and intercept of y on x.
std::array<double, 2> fit_line(const std::vector<double>& x, const std::vector<double>& y);

// CSV with header `i,t,x` plus a `<basename>.meta` sidecar of key=value lines.
void write_path_csv(const PathGrid& path, const std::filesystem::path& file);
PathGrid read_path_csv(const std::filesystem::path& file);

}  // namespace stable_cir
