#include "stable_cir/stable_dist.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "stable_cir/errors.hpp"

namespace stable_cir {

namespace {

using cplx = std::complex<double>;
constexpr double kPi = std::numbers::pi;

// Integrands are cut where exp(Re E) has dropped by this many e-folds.
constexpr double kTruncation = 60.0;

// From here on the ray integrand is split to avoid right-tail cancellation.
constexpr double kSubtractFrom = 4.0;

void require_alpha(double alpha) {
  if (!(alpha > 1.0 && alpha < 2.0)) {
    throw DomainError("stable exponent must lie in (1, 2), got " + std::to_string(alpha));
  }
}

// Quintic Hermite on [0, 1] with value/first/second derivative at both ends
// (derivatives already scaled to the unit cell). Returns q, q', q''.
std::array<double, 3> quintic(double t, double p0, double d0, double s0, double p1, double d1,
                              double s1) {
  const double dp = p1 - p0;
  const double c3 = 10.0 * dp - 6.0 * d0 - 4.0 * d1 - 1.5 * s0 + 0.5 * s1;
  const double c4 = -15.0 * dp + 8.0 * d0 + 7.0 * d1 + 1.5 * s0 - s1;
  const double c5 = 6.0 * dp - 3.0 * (d0 + d1) - 0.5 * (s0 - s1);
  const double c2 = 0.5 * s0;
  const double v = p0 + t * (d0 + t * (c2 + t * (c3 + t * (c4 + t * c5))));
  const double dv = d0 + t * (2.0 * c2 + t * (3.0 * c3 + t * (4.0 * c4 + t * 5.0 * c5)));
  const double ddv = 2.0 * c2 + t * (6.0 * c3 + t * (12.0 * c4 + t * 20.0 * c5));
  return {v, dv, ddv};
}

std::array<double, 2> cubic(double t, double p0, double d0, double p1, double d1) {
  const double dp = p1 - p0;
  const double c2 = 3.0 * dp - 2.0 * d0 - d1;
  const double c3 = -2.0 * dp + d0 + d1;
  return {p0 + t * (d0 + t * (c2 + t * c3)), d0 + t * (2.0 * c2 + t * 3.0 * c3)};
}

}  // namespace

StableLaw::StableLaw(double alpha, StableLawOptions opts) : alpha_(alpha), opts_(opts) {
  require_alpha(alpha);
  const double half = 0.5 * kPi * alpha;
  const double cs = std::cos(half);
  const double sn = std::sin(half);
  c0_ = -1.0 / cs;
  c1_ = -0.5 * kPi * sn / (cs * cs);
  c2_ = -0.25 * kPi * kPi * (1.0 + sn * sn) / (cs * cs * cs);
  // Halfway between pi/alpha (where c s^alpha is real) and the last angle at
  // which s^alpha still decays, capped below the branch cut.
  const double theta_max = std::min(1.5 * kPi / alpha, kPi);
  ray_angle_ = 0.5 * (kPi / alpha + theta_max);

  locate_mode();
  locate_floor();
  if (opts_.tabulate) build_table();
}

std::complex<double> StableLaw::char_fn(double u) const {
  if (u == 0.0) return {1.0, 0.0};
  const double sgn = u > 0 ? 1.0 : -1.0;
  const double mag = std::pow(std::abs(u), alpha_);
  const double tn = std::tan(0.5 * kPi * alpha_);
  return std::exp(cplx(-mag, mag * tn * sgn));
}

std::complex<double> char_fn(const StableLaw& law, double u) { return law.char_fn(u); }

StableLaw::Raw StableLaw::integrate_raw(double x) const {
  const double a = alpha_;
  const double c0 = c0_, c1 = c1_, c2 = c2_;
  Raw raw;

  // Common integrand: m_j(s) exp(s x + c s^alpha - shift). With `subtract`,
  // the components whose multiplier is a plain power of s use
  // exp(s x) expm1(c s^alpha) instead: along the ray the dropped part
  // integrates to zero, and what is left no longer cancels in the right tail.
  auto kernel = [&](cplx s, cplx ls, double shift, cplx weight, bool subtract) {
    const cplx sa = std::exp(a * ls);
    const cplx e = std::exp(s * x + c0 * sa - shift) * weight;
    cplx ep = e;
    if (subtract) {
      const cplx z = c0 * sa;
      const double sh = std::sin(0.5 * z.imag());
      const cplx em1(std::expm1(z.real()) * std::cos(z.imag()) - 2.0 * sh * sh,
                     std::exp(z.real()) * std::sin(z.imag()));
      ep = std::exp(s * x) * em1 * weight;
    }
    const cplx A = sa * (c1 + c0 * ls);
    const cplx B = sa * (c2 + 2.0 * c1 * ls + c0 * ls * ls);
    const cplx AB = A * A + B;
    return std::array<cplx, 8>{ep, s * ep, s * s * ep, A * e, s * A * e, s * s * A * e, AB * e,
                               s * AB * e};
  };

  VecTolerance tol;
  tol.abs_tol = 0.0;
  tol.rel_tol = std::min(opts_.quad.rel_tol, 1e-10);
  tol.reference = 0;
  tol.max_intervals = opts_.quad.max_intervals;

  // The ray also serves moderately negative x: there c |cos(alpha th)| r^alpha
  // still dominates |x cos th| r, while the saddle sigma underflows as alpha -> 1.
  if (x >= -0.5 * c0) {
    const double th = ray_angle_;
    const cplx dir = std::polar(1.0, th);
    const double decay_x = std::max(x, 0.0) * std::abs(std::cos(th));
    const double decay_s = c0 * std::abs(std::cos(a * th));
    const bool subtract = x >= kSubtractFrom;
    double r_max = std::pow(kTruncation / decay_s, 1.0 / a);
    if (subtract) {
      r_max = kTruncation / decay_x;
    } else if (decay_x > 0.0) {
      r_max = std::min(r_max, kTruncation / decay_x);
    }
    auto f = [&](double r) {
      const cplx s = r * dir;
      const cplx ls(std::log(r), th);
      const auto v = kernel(s, ls, 0.0, dir, subtract);
      std::array<double, 8> out{};
      for (int j = 0; j < 8; ++j) out[j] = v[j].imag() / kPi;
      return out;
    };
    const auto res = integrate<8>(f, 0.0, r_max, tol);
    raw.log_scale = 0.0;
    raw.m = res.value;
    return raw;
  }

  // Further left: steepest-descent path through the real saddle sigma of s x + c s^alpha.
  // On s = r(phi) e^{i phi}, phi in [0, pi/alpha), the exponent is real:
  //   r = sigma (sinc phi / sinc(alpha phi))^{1/(alpha-1)},
  //   E - E(sigma) = x (alpha-1)/alpha [r sinc((alpha-1) phi) / sinc(alpha phi) - sigma].
  const double am1 = a - 1.0;
  const double log_sigma = std::log(-x / (c0 * a)) / am1;
  const double sigma = std::exp(log_sigma);
  const double shift = x * sigma * am1 / a;
  auto sinc = [](double t) { return t == 0.0 ? 1.0 : std::sin(t) / t; };
  // (cot(phi) - alpha cot(alpha phi)) / (alpha - 1), free of the 1/(alpha-1)
  // cancellation: a power series near 0 (coefficients 2 zeta(2n) / pi^{2n}),
  // and an exact rearrangement of the numerator further out.
  auto cot_gap = [&](double phi) {
    if (phi < 0.5) {
      static constexpr std::array<double, 18> kCot{
          0.33333333333333333333,  0.022222222222222222222,  0.0021164021164021164021,
          0.00021164021164021164021, 2.1377799155576933355e-5, 2.1644042808063972085e-6,
          2.19259478518737778e-7,  2.2214608789979679076e-8, 2.2507846516808992854e-9,
          2.2805151204592182866e-10, 2.3106432599002624097e-11, 2.3411706819824883959e-12,
          2.3721017400233654295e-13, 2.4034415333307706179e-14, 2.4351954029183368731e-15,
          2.4673688045172074706e-16, 2.499967277122080898e-17, 2.5329964357406348315e-18};
      // sum_n kCot[n] (1 + a + ... + a^{2n+1}) phi^{2n+1}
      double sum = 0.0, geo = 1.0 + a, apow = a * a, ppow = phi;
      const double p2 = phi * phi;
      for (double c : kCot) {
        sum += c * geo * ppow;
        geo += apow * (1.0 + a);
        apow *= a * a;
        ppow *= p2;
      }
      return sum;
    }
    return (phi * sinc(am1 * phi) - std::sin(phi) * std::cos(a * phi)) /
           (std::sin(phi) * std::sin(a * phi));
  };
  auto log_r = [&](double phi) {
    return log_sigma + (std::log(sinc(phi)) - std::log(sinc(a * phi))) / am1;
  };
  auto rel_exponent = [&](double phi) {
    const double r = std::exp(log_r(phi));
    return x * am1 / a * (r * sinc(am1 * phi) / sinc(a * phi) - sigma);
  };
  const double phi_end = kPi / a;
  double lo = 0.0, hi = phi_end;
  for (int it = 0; it < 100; ++it) {
    const double mid = 0.5 * (lo + hi);
    (rel_exponent(mid) > -kTruncation - 20.0 ? lo : hi) = mid;
  }
  const double phi_max = hi;
  auto f = [&](double phi) {
    const double lr = log_r(phi);
    const double r = std::exp(lr);
    const cplx ls(lr, phi);
    const cplx s = std::polar(r, phi);
    const cplx ds = s * cplx(cot_gap(phi), 1.0);
    const double e = std::exp(rel_exponent(phi));
    const cplx sa = std::exp(a * ls);
    const cplx A = sa * (c1 + c0 * ls);
    const cplx B = sa * (c2 + 2.0 * c1 * ls + c0 * ls * ls);
    const cplx AB = A * A + B;
    const cplx w = ds * e;
    const std::array<cplx, 8> v{w, s * w, s * s * w, A * w, s * A * w, s * s * A * w, AB * w,
                                s * AB * w};
    std::array<double, 8> out{};
    for (int j = 0; j < 8; ++j) out[j] = v[j].imag() / kPi;
    return out;
  };
  const auto res = integrate<8>(f, 0.0, phi_max, tol);
  raw.log_scale = shift;
  raw.m = res.value;
  return raw;
}

KernelJet StableLaw::jet_from_raw(double x, const Raw& raw) const {
  const auto& m = raw.m;
  if (!(m[0] > 0.0)) {
    throw QuadratureError("stable density integral lost positivity at x=" + std::to_string(x));
  }
  KernelJet j;
  j.x = x;
  j.log_phi = raw.log_scale + std::log(m[0]);
  const double inv = 1.0 / m[0];
  j.h = m[1] * inv;
  j.dh = m[2] * inv - j.h * j.h;
  j.f = m[3] * inv;
  const double rax = m[4] * inv;
  j.df = rax - j.f * j.h;
  j.d2f = m[5] * inv - rax * j.h - j.df * j.h - j.f * j.dh;
  const double raa = m[6] * inv;
  j.dalpha_f = raa - j.f * j.f;
  j.dalpha_f_dx = m[7] * inv - raa * j.h - 2.0 * j.f * j.df;
  j.k = 1.0 + x * j.h;
  j.dk = j.h + x * j.dh;
  return j;
}

KernelJet StableLaw::jet_direct(double x) const {
  if (!std::isfinite(x)) throw DomainError("stable density evaluated at a non-finite point");
  return jet_from_raw(x, integrate_raw(x));
}

KernelJet StableLaw::jet(double x) const {
  if (!std::isfinite(x)) throw DomainError("stable density evaluated at a non-finite point");
  if (x < floor_x_) {
    throw TailUnderflowError("stable density below floor at x=" + std::to_string(x), x);
  }
  if (tabulated() && x <= table_x_.back()) return interpolate(x);
  return jet_direct(x);
}

KernelJet StableLaw::interpolate(double x) const {
  const double step = opts_.grid_step;
  const std::size_t last = table_x_.size() - 1;
  std::size_t i = static_cast<std::size_t>(std::max(0.0, std::floor((std::asinh(x - mode_) - w_lo_) / step)));
  if (i >= last) i = last - 1;
  // asinh rounding can put x one cell off.
  while (i > 0 && x < table_x_[i]) --i;
  while (i + 1 < last && x > table_x_[i + 1]) ++i;
  const double x0 = table_x_[i];
  const double width = table_x_[i + 1] - x0;
  const double t = (x - x0) / width;
  const auto& a = table_v_[i];
  const auto& b = table_v_[i + 1];
  const double w2 = width * width;
  // a/b: log_phi, h, dh, f, df, d2f, g, dg
  const auto lp = quintic(t, a[0], a[1] * width, a[2] * w2, b[0], b[1] * width, b[2] * w2);
  const auto fq = quintic(t, a[3], a[4] * width, a[5] * w2, b[3], b[4] * width, b[5] * w2);
  const auto gq = cubic(t, a[6], a[7] * width, b[6], b[7] * width);
  KernelJet j;
  j.x = x;
  j.log_phi = lp[0];
  j.h = lp[1] / width;
  j.dh = lp[2] / w2;
  j.f = fq[0];
  j.df = fq[1] / width;
  j.d2f = fq[2] / w2;
  j.dalpha_f = gq[0];
  j.dalpha_f_dx = gq[1] / width;
  j.k = 1.0 + x * j.h;
  j.dk = j.h + x * j.dh;
  return j;
}

void StableLaw::locate_mode() {
  // h > 0 to the left of the mode, h < 0 to the right. Near alpha = 1 the
  // mode approaches -c, so the bracket starts there and grows slowly: the left
  // tail steepens too fast to probe far into it.
  double step = 0.5;
  double lo = -c0_ - step, hi = -c0_ + step;
  while (jet_direct(lo).h <= 0.0) lo -= (step *= 1.5);
  step = 0.5;
  while (jet_direct(hi).h >= 0.0) hi += (step *= 1.5);
  for (int it = 0; it < 200 && hi - lo > 1e-14; ++it) {
    const double mid = 0.5 * (lo + hi);
    (jet_direct(mid).h > 0.0 ? lo : hi) = mid;
  }
  mode_ = 0.5 * (lo + hi);
}

void StableLaw::locate_floor() {
  const double target = std::log(kDensityFloor);
  // Saddle value of the left tail: log phi ~ -(alpha-1)/alpha |x| (|x|/(c alpha))^{1/(alpha-1)}.
  const double a = alpha_;
  const double guess =
      -std::pow(-target * a / (a - 1.0), (a - 1.0) / a) * std::pow(c0_ * a, 1.0 / a);
  const double gap = std::max(mode_ - guess, 1.0);
  double hi = std::min(guess + 0.2 * gap, mode_ - 0.1);
  double lo = guess - 0.2 * gap;
  while (jet_direct(hi).log_phi < target) hi = 0.5 * (hi + mode_);
  while (jet_direct(lo).log_phi > target) lo -= gap;
  for (int it = 0; it < 200 && hi - lo > 1e-13 * std::abs(lo); ++it) {
    const double mid = 0.5 * (lo + hi);
    (jet_direct(mid).log_phi > target ? hi : lo) = mid;
  }
  // Keep the floor point itself inside the admissible set.
  floor_x_ = hi;
}

void StableLaw::build_table() {
  const double step = opts_.grid_step;
  // Centred on the mode: as alpha -> 1 the law sits near -c with O(1) width.
  w_lo_ = std::asinh(floor_x_ - mode_);
  const double w_hi = std::asinh(opts_.table_right - mode_);
  const auto count = static_cast<std::size_t>(std::ceil((w_hi - w_lo_) / step)) + 1;
  table_x_.resize(count);
  table_v_.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    const double x = i == 0 ? floor_x_ : mode_ + std::sinh(w_lo_ + step * static_cast<double>(i));
    const KernelJet j = jet_direct(x);
    table_x_[i] = x;
    table_v_[i] = {j.log_phi, j.h, j.dh, j.f, j.df, j.d2f, j.dalpha_f, j.dalpha_f_dx};
  }
}

double StableLaw::log_density(double x) const {
  if (x >= floor_x_ && tabulated() && x <= table_x_.back()) return interpolate(x).log_phi;
  return jet_direct(x).log_phi;
}

double StableLaw::density(double x) const { return std::exp(log_density(x)); }

double StableLaw::density_dx(double x) const {
  const KernelJet j = x >= floor_x_ ? jet(x) : jet_direct(x);
  return std::exp(j.log_phi) * j.h;
}

double StableLaw::density_dalpha(double x) const {
  const KernelJet j = x >= floor_x_ ? jet(x) : jet_direct(x);
  return std::exp(j.log_phi) * j.f;
}

double levy_constant(double alpha) {
  require_alpha(alpha);
  return -alpha * (alpha - 1.0) / (std::tgamma(2.0 - alpha) * std::cos(0.5 * kPi * alpha));
}

double frac_moment_m(double p, double alpha) {
  require_alpha(alpha);
  if (!(p > 0.0 && p < alpha)) {
    throw DomainError("fractional moment order must lie in (0, alpha)");
  }
  return std::pow(2.0, p / alpha) * std::pow(2.0, p) * std::tgamma(0.5 * (p + 1.0)) *
         std::tgamma(1.0 - p / alpha) / (std::sqrt(kPi) * std::tgamma(1.0 - 0.5 * p));
}

double sample_stable(double alpha, RngStream& rng) {
  // beta = 1: B = arctan(tan(pi a/2))/a = pi/2 - pi/a, S = |sec(pi a/2)|^{1/a}.
  const double b = 0.5 * kPi - kPi / alpha;
  const double s = std::pow(-1.0 / std::cos(0.5 * kPi * alpha), 1.0 / alpha);
  const double v = kPi * (rng.uniform() - 0.5);
  const double w = rng.exponential();
  const double av = alpha * (v + b);
  return s * std::sin(av) / std::pow(std::cos(v), 1.0 / alpha) *
         std::pow(std::cos(v - av) / w, (1.0 - alpha) / alpha);
}

double sample(const StableLaw& law, RngStream& rng) { return sample_stable(law.alpha(), rng); }

namespace {

// Integral of g(x) phi(x) over the real line in the variable w = asinh(x - mode).
template <std::size_t N, class G>
std::array<double, N> integrate_density(const StableLaw& law, G&& g, double tail_order_hint) {
  const double alpha = law.alpha();
  if (!(tail_order_hint < alpha)) {
    throw DomainError("tail order hint must be below alpha for the expectation to exist");
  }
  const double x_right = law.tabulated() ? law.table_right() : law.options().table_right;
  const QuadConfig& q = law.options().quad;
  VecTolerance tol;
  tol.abs_tol = q.abs_tol * 1e-2;
  tol.rel_tol = q.rel_tol * 1e-2;
  tol.max_intervals = q.max_intervals;

  auto integrand = [&](double w) {
    const double x = law.mode() + std::sinh(w);
    const KernelJet j = law.jet(x);
    const double weight = std::exp(j.log_phi) * std::cosh(w);
    std::array<double, N> v = g(j);
    for (auto& e : v) e *= weight;
    return v;
  };
  const double w_floor = std::asinh(law.left_floor() - law.mode());
  const double w_right = std::asinh(x_right - law.mode());
  std::array<double, N> total{};
  for (const auto& [lo, hi] : {std::pair{w_floor, 0.0}, std::pair{0.0, std::min(2.0, w_right)},
                               std::pair{std::min(2.0, w_right), w_right}}) {
    if (hi <= lo) continue;
    const auto r = integrate<N>(integrand, lo, hi, tol);
    for (std::size_t k = 0; k < N; ++k) total[k] += r.value[k];
  }
  // Power-law tail beyond the grid: g phi ~ x^{-1-alpha+q}.
  const KernelJet j = law.jet(x_right);
  const std::array<double, N> edge = g(j);
  const double tail = std::exp(j.log_phi) * x_right / (alpha - tail_order_hint);
  for (std::size_t k = 0; k < N; ++k) total[k] += edge[k] * tail;
  return total;
}

}  // namespace

double expectation(const StableLaw& law, const std::function<double(double)>& g,
                   double tail_order_hint) {
  auto wrapped = [&](const KernelJet& j) { return std::array<double, 1>{g(j.x)}; };
  return integrate_density<1>(law, wrapped, tail_order_hint)[0];
}

StableMoments stable_moments(const StableLaw& law) {
  auto g = [](const KernelJet& j) {
    return std::array<double, 16>{j.h * j.h, j.h * j.k, j.k * j.k, j.f * j.h, j.f * j.k,
                                  j.f * j.f, j.h,       j.k,       j.f,       1.0,
                                  j.dh,      j.df,      j.dalpha_f, j.dk,     j.x * j.df,
                                  j.x * j.dk};
  };
  const auto v = integrate_density<16>(law, g, 0.0);
  StableMoments m;
  m.h2 = v[0];
  m.hk = v[1];
  m.k2 = v[2];
  m.fh = v[3];
  m.fk = v[4];
  m.f2 = v[5];
  m.h = v[6];
  m.k = v[7];
  m.f = v[8];
  m.one = v[9];
  m.dh = v[10];
  m.df = v[11];
  m.dalpha_f = v[12];
  m.dk = v[13];
  m.x_df = v[14];
  m.x_dk = v[15];
  return m;
}

}  // namespace stable_cir
