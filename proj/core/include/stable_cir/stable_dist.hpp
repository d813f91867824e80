#pragma once

#include <array>
#include <complex>
#include <cstddef>
#include <functional>
#include <vector>

#include "stable_cir/quadrature.hpp"
#include "stable_cir/rng.hpp"

namespace stable_cir {

// Below this density value the score kernels are not evaluated.
inline constexpr double kDensityFloor = 1e-300;

// Logarithmic derivatives of the stable density at one point.
struct ScoreKernels {
  double h = 0.0;  // phi' / phi
  double k = 0.0;  // 1 + x h
  double f = 0.0;  // d_alpha phi / phi
};

// Everything the quasi-likelihood, its score and its Hessian need at a point.
struct KernelJet {
  double x = 0.0;
  double log_phi = 0.0;
  double h = 0.0;
  double dh = 0.0;        // h'
  double k = 0.0;
  double dk = 0.0;        // k' = h + x h'
  double f = 0.0;
  double df = 0.0;        // f' = d_alpha h
  double d2f = 0.0;       // f''
  double dalpha_f = 0.0;  // d_alpha f
  double dalpha_f_dx = 0.0;

  ScoreKernels kernels() const { return {h, k, f}; }
};

struct StableLawOptions {
  QuadConfig quad{};
  bool tabulate = true;
  double grid_step = 0.02;     // spacing of the table in asinh(x - mode)
  double table_right = 1e6;    // right end of the table; direct evaluation beyond
};

// Spectrally positive strictly alpha-stable law with characteristic function
//   E exp(iuL) = exp(-|u|^alpha (1 - i tan(pi alpha / 2) sgn u)),  1 < alpha < 2.
//
// The density and its x/alpha derivatives are Bromwich integrals of
// exp(s x + c s^alpha), c = -1/cos(pi alpha/2), taken along a ray in the left
// half-plane for x >= -c/2 and along the steepest-descent path through the
// real saddle point further left. The left-tail representation factors out
// the saddle value, so log-densities stay accurate long after the density
// underflows.
//
// Construction is eager (mode, left floor, optional table); the object is
// immutable afterwards and safe to share across threads.
class StableLaw {
 public:
  explicit StableLaw(double alpha, StableLawOptions opts = {});

  double alpha() const noexcept { return alpha_; }
  const StableLawOptions& options() const noexcept { return opts_; }

  std::complex<double> char_fn(double u) const;

  double density(double x) const;
  double log_density(double x) const;
  double density_dx(double x) const;
  double density_dalpha(double x) const;

  // h, k, f at x. Throws TailUnderflowError below the left floor.
  ScoreKernels kernels(double x) const { return jet(x).kernels(); }
  KernelJet jet(double x) const;

  // Same as jet() but always integrates, bypassing the table.
  KernelJet jet_direct(double x) const;

  // Point where the density equals kDensityFloor; kernels are defined above it.
  double left_floor() const noexcept { return floor_x_; }
  double mode() const noexcept { return mode_; }

  bool tabulated() const noexcept { return !table_x_.empty(); }
  double table_right() const noexcept { return tabulated() ? table_x_.back() : floor_x_; }
  const std::vector<double>& table_nodes() const noexcept { return table_x_; }

 private:
  struct Raw {
    double log_scale = 0.0;
    // phi, phi_x, phi_xx, phi_a, phi_ax, phi_axx, phi_aa, phi_aax, all times exp(-log_scale)
    std::array<double, 8> m{};
  };

  Raw integrate_raw(double x) const;
  KernelJet jet_from_raw(double x, const Raw& raw) const;
  KernelJet interpolate(double x) const;
  void locate_mode();
  void locate_floor();
  void build_table();

  double alpha_;
  StableLawOptions opts_;
  double c0_, c1_, c2_;   // c(alpha) and its first two alpha-derivatives
  double ray_angle_;
  double mode_ = 0.0;
  double floor_x_ = 0.0;

  double w_lo_ = 0.0;
  std::vector<double> table_x_;
  std::vector<std::array<double, 8>> table_v_;  // log_phi,h,dh,f,df,d2f,g,dg
};

// Characteristic function of L_1 for exponent alpha.
std::complex<double> char_fn(const StableLaw& law, double u);

// Constant of the Levy measure C_alpha / z^{1+alpha} on (0, inf).
double levy_constant(double alpha);

// E|L - L'|^p for an independent copy L'.
double frac_moment_m(double p, double alpha);

// One draw of L_1 (Chambers-Mallows-Stuck, totally skewed to the right).
double sample(const StableLaw& law, RngStream& rng);
double sample_stable(double alpha, RngStream& rng);

// Integral of g against the density, split at the mode and carried out in
// asinh(x). `tail_order_hint` is the power-law growth order of g on the right
// tail (must be < alpha) and sets the extrapolation beyond the grid.
double expectation(const StableLaw& law, const std::function<double(double)>& g,
                   double tail_order_hint = 0.0);

// The stable expectations that enter the information matrix, plus the
// right-hand sides of the connection identities.
struct StableMoments {
  double h2 = 0, hk = 0, k2 = 0, fh = 0, fk = 0, f2 = 0;
  double h = 0, k = 0, f = 0, one = 0;
  double dh = 0, df = 0, dalpha_f = 0, dk = 0, x_df = 0, x_dk = 0;
};

StableMoments stable_moments(const StableLaw& law);

}  // namespace stable_cir
