#include "stable_cir/estimators.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <json.hpp>

#include "stable_cir/errors.hpp"

namespace stable_cir {

const StableLaw& LawCache::get(double alpha) {
  for (auto it = laws_.begin(); it != laws_.end(); ++it) {
    if ((*it)->alpha() == alpha) {
      auto law = *it;
      laws_.erase(it);
      laws_.push_back(law);
      return *laws_.back();
    }
  }
  laws_.push_back(std::make_shared<const StableLaw>(alpha, opts_));
  ++builds_;
  if (laws_.size() > capacity_) laws_.erase(laws_.begin());
  return *laws_.back();
}

PowerVarStats power_variations(const PathGrid& path, double p) {
  if (!(p > 0.0)) throw DomainError("power variation order p must be positive");
  if (path.n < 4) throw DomainError("power variation needs n >= 4");
  const auto& x = path.obs;
  auto d = [&](int i) { return x[static_cast<std::size_t>(i)] - x[static_cast<std::size_t>(i - 1)]; };
  PowerVarStats s;
  s.p = p;
  s.n = path.n;
  for (int i = 2; i <= path.n; ++i) s.v1 += std::pow(std::abs(d(i) - d(i - 1)), p);
  for (int i = 4; i <= path.n; ++i) {
    s.v2 += std::pow(std::abs(d(i) - d(i - 1) + d(i - 2) - d(i - 3)), p);
  }
  return s;
}

double power_variation(const PathGrid& path, double p, int order) {
  if (order != 1 && order != 2) throw DomainError("power variation order must be 1 or 2");
  const PowerVarStats s = power_variations(path, p);
  return order == 1 ? s.v1 : s.v2;
}

AlphaEstimate estimate_alpha(const PathGrid& path, double p) {
  if (!(p > 0.0 && p < 1.0)) throw DomainError("estimate_alpha: p must lie in (0, 1)");
  const PowerVarStats s = power_variations(path, p);
  if (s.v1 == 0.0 || s.v2 == 0.0 || s.v1 == s.v2) {
    throw DegeneratePathError("estimate_alpha: degenerate power variations (constant or linear path)");
  }
  AlphaEstimate est;
  est.raw = p * std::log(2.0) / std::log(s.v2 / s.v1);
  est.value = std::clamp(est.raw, kAlphaLo, kAlphaHi);
  // NaN-safe: a negative or non-finite raw value also ends up clamped.
  if (!std::isfinite(est.raw)) est.value = est.raw > 0 ? kAlphaHi : kAlphaLo;
  est.clamped = est.value != est.raw;
  return est;
}

DeltaEstimate estimate_delta(const PathGrid& path, double alpha_tilde, double p) {
  if (!(alpha_tilde > 1.0 && alpha_tilde < 2.0)) {
    throw DomainError("estimate_delta: alpha estimate must lie in (1, 2)");
  }
  if (path.n < 4) throw DomainError("estimate_delta needs n >= 4");
  const auto& x = path.obs;
  const double n = path.n;
  const double q = p / alpha_tilde;
  DeltaEstimate est;
  double sum = 0.0;
  for (int i = 2; i <= path.n; ++i) {
    const double base = x[static_cast<std::size_t>(i - 2)];
    if (!(base > 0.0)) {
      ++est.skipped;
      continue;
    }
    const double dd = x[static_cast<std::size_t>(i)] - 2.0 * x[static_cast<std::size_t>(i - 1)] + base;
    sum += std::pow(std::abs(dd), p) / std::pow(base, q);
  }
  if (est.skipped > 0.01 * (path.n - 1)) {
    throw NumericalError("estimate_delta: too many zero observations in the denominators");
  }
  est.root = std::pow(n, q) * sum / (n * frac_moment_m(p, alpha_tilde));
  est.value = std::pow(est.root, 1.0 / p);
  return est;
}

double rescaled_increment(const Theta& theta, double x_prev, double x_next, int n) {
  if (!(x_prev > 0.0)) throw DomainError("rescaled_increment needs x_prev > 0");
  const double nn = n;
  const double ia = 1.0 / theta.alpha;
  return std::pow(nn, ia) * (x_next - x_prev - theta.a / nn + theta.b * x_prev / nn) /
         (theta.delta * std::pow(x_prev, ia));
}

ScoreReport evaluate_quasi_likelihood(const PathGrid& path, const Theta& theta, LawCache& laws,
                                      const LikelihoodOptions& opts) {
  theta.validate();
  if (path.n < 1 || path.obs.size() != static_cast<std::size_t>(path.n) + 1) {
    throw DomainError("quasi-likelihood: malformed path");
  }
  const StableLaw& law = laws.get(theta.alpha);
  const double n = path.n;
  const double al = theta.alpha;
  const double ia = 1.0 / al;
  const double dl = theta.delta;
  const double log_n = std::log(n);
  const double n_ia = std::pow(n, ia);
  const double floor_x = law.left_floor();

  ScoreReport rep;
  double g1 = 0, g2 = 0, g3 = 0, g4 = 0;
  double j11 = 0, j12 = 0, j22 = 0, j31 = 0, j32 = 0, j41 = 0, j42 = 0, j33 = 0, j43 = 0, j44 = 0;
  double loglik = 0.0;
  for (int i = 1; i <= path.n; ++i) {
    const double xp = path.obs[static_cast<std::size_t>(i - 1)];
    const double xn = path.obs[static_cast<std::size_t>(i)];
    if (!(xp > 0.0)) throw DomainError("quasi-likelihood needs positive left endpoints");
    const double xpa = std::pow(xp, ia);
    const double w = n_ia / (n * dl * xpa);
    double z = n * w * (xn - xp - theta.a / n + theta.b * xp / n);
    const double lam = (log_n - std::log(xp)) / (al * al);

    KernelJet jt;
    if (z < floor_x) {
      ++rep.tail_clamps;
      z = floor_x;
      jt = law.jet(z);
      // z is pinned: only the direct alpha-dependence of log phi survives.
      jt.h = jt.dh = jt.dk = jt.df = 0.0;
      jt.k = 1.0;
    } else {
      jt = law.jet(z);
    }

    loglik += ia * log_n - std::log(dl) - ia * std::log(xp) + jt.log_phi;
    g1 += w * jt.h;
    g2 -= w * xp * jt.h;
    g3 += jt.k / dl;
    g4 += lam * jt.k - jt.f;
    if (opts.with_hessian) {
      const double w2 = w * w;
      j11 -= w2 * jt.dh;
      j12 += w2 * xp * jt.dh;
      j22 -= w2 * xp * xp * jt.dh;
      j31 -= w * jt.dk / dl;
      j32 += w * xp * jt.dk / dl;
      const double mix = lam * jt.dk - jt.df;
      j41 -= w * mix;
      j42 += w * xp * mix;
      j33 -= (jt.k + z * jt.dk) / (dl * dl);
      j43 += z * (jt.df - lam * jt.dk) / dl;
      j44 += -2.0 * lam * jt.k / al - lam * lam * z * jt.dk + 2.0 * lam * z * jt.df - jt.dalpha_f;
    }
  }
  if (rep.tail_clamps > opts.max_clamp_fraction * n) {
    throw TailUnderflowError("quasi-likelihood: too many observations below the density floor",
                             floor_x);
  }
  rep.loglik = loglik;
  rep.g << g1, g2, g3, g4;
  if (opts.with_hessian) {
    rep.j << j11, j12, j31, j41,  //
        j12, j22, j32, j42,       //
        j31, j32, j33, j43,       //
        j41, j42, j43, j44;
  }
  return rep;
}

double quasi_loglik(const PathGrid& path, const Theta& theta, LawCache& laws) {
  LikelihoodOptions o;
  o.with_hessian = false;
  return evaluate_quasi_likelihood(path, theta, laws, o).loglik;
}

Vec4 score(const PathGrid& path, const Theta& theta, LawCache& laws) {
  LikelihoodOptions o;
  o.with_hessian = false;
  return evaluate_quasi_likelihood(path, theta, laws, o).g;
}

Mat4 hessian(const PathGrid& path, const Theta& theta, LawCache& laws) {
  return evaluate_quasi_likelihood(path, theta, laws).j;
}

Eigen::Matrix2d rate_r(int n, const Theta& theta) {
  Eigen::Matrix2d r;
  r << 1.0 / theta.delta, std::log(static_cast<double>(n)) / (theta.alpha * theta.alpha), 0.0, 1.0;
  return r;
}

Mat4 rate_matrix(int n, const Theta& theta) {
  if (n < 2) throw DomainError("rate_matrix needs n >= 2");
  const double nn = n;
  Mat4 u = Mat4::Zero();
  const double drift = std::pow(nn, -(1.0 / theta.alpha - 0.5));
  u(0, 0) = drift;
  u(1, 1) = drift;
  // v_n = r_n^{-1} = [[delta, -delta ln n / alpha^2], [0, 1]]
  const double root = 1.0 / std::sqrt(nn);
  u(2, 2) = root * theta.delta;
  u(2, 3) = -root * theta.delta * std::log(nn) / (theta.alpha * theta.alpha);
  u(3, 3) = root;
  return u;
}

namespace {

double condition_number(const Eigen::MatrixXd& m) {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(m);
  const auto& sv = svd.singularValues();
  const double smin = sv(sv.size() - 1);
  if (!(smin > 0.0)) return INFINITY;
  return sv(0) / smin;
}

}  // namespace

DriftSolution solve_drift(const PathGrid& path, double delta_est, double alpha_est, LawCache& laws,
                          const DriftOptions& opts) {
  if (!(delta_est > 0.0)) throw DomainError("solve_drift: delta estimate must be positive");
  if (!(alpha_est > 1.0 && alpha_est < 2.0)) {
    throw DomainError("solve_drift: alpha estimate must lie in (1, 2)");
  }
  const Eigen::Vector2d lo(kDriftALo, -kDriftBAbs);
  const Eigen::Vector2d hi(kDriftAHi, kDriftBAbs);
  Eigen::Vector2d x(std::clamp(opts.a_init, lo(0), hi(0)), std::clamp(opts.b_init, lo(1), hi(1)));
  const double scale = std::pow(static_cast<double>(path.n), 1.0 / alpha_est - 1.0);
  auto at = [&](const Eigen::Vector2d& v) { return Theta{v(0), v(1), delta_est, alpha_est}; };

  // Projected Newton on the box: a coordinate sitting on a bound with the
  // ascent direction -G pointing outward is frozen for the iteration.
  ScoreReport cur = evaluate_quasi_likelihood(path, at(x), laws);
  DriftSolution sol;
  for (int it = 0; it <= opts.max_iterations; ++it) {
    const Eigen::Vector2d g = cur.g.head<2>();
    bool active[2];
    for (int k = 0; k < 2; ++k) {
      active[k] = (x(k) <= lo(k) && g(k) > 0.0) || (x(k) >= hi(k) && g(k) < 0.0);
    }
    Eigen::Vector2d gf = g;
    for (int k = 0; k < 2; ++k) {
      if (active[k]) gf(k) = 0.0;
    }
    const double tol = 1e-8 * scale * (1.0 + x.norm());
    sol.residual = gf.norm();
    if (sol.residual < tol) {
      sol.a = x(0);
      sol.b = x(1);
      sol.iterations = it;
      sol.tail_clamps = cur.tail_clamps;
      sol.at_bound = active[0] || active[1];
      return sol;
    }
    if (it == opts.max_iterations) break;

    const Eigen::Matrix2d jd = cur.j.topLeftCorner<2, 2>();
    Eigen::Vector2d step = Eigen::Vector2d::Zero();
    if (!active[0] && !active[1]) {
      if (condition_number(jd) > opts.max_condition) {
        throw SingularMatrixError("solve_drift: drift Hessian block is ill-conditioned");
      }
      step = -jd.partialPivLu().solve(g);
    } else {
      const int k = active[0] ? 1 : 0;
      step(k) = -g(k) / std::abs(jd(k, k));
    }
    // The maximizer has J_dd positive definite; elsewhere fall back to ascent.
    if (gf.dot(step) > 0.0) step = -gf / jd.norm();

    double lambda = 1.0;
    bool accepted = false;
    const double slack = 1e-12 * (1.0 + std::abs(cur.loglik));
    for (int half = 0; half < 60; ++half, lambda *= 0.5) {
      const Eigen::Vector2d trial = (x + lambda * step).cwiseMax(lo).cwiseMin(hi);
      ScoreReport next;
      try {
        next = evaluate_quasi_likelihood(path, at(trial), laws);
      } catch (const TailUnderflowError&) {
        continue;
      }
      if (next.loglik >= cur.loglik - slack) {
        x = trial;
        cur = next;
        accepted = true;
        break;
      }
    }
    if (!accepted) break;
  }
  throw ConvergenceError("solve_drift: no convergence within " +
                         std::to_string(opts.max_iterations) + " iterations");
}

OneStepResult one_step(const PathGrid& path, const Theta& theta0_hat, LawCache& laws,
                       double max_condition, Curvature curvature) {
  theta0_hat.validate();
  LikelihoodOptions lo;
  lo.with_hessian = curvature == Curvature::observed;
  const ScoreReport rep = evaluate_quasi_likelihood(path, theta0_hat, laws, lo);
  const Mat4 u = rate_matrix(path.n, theta0_hat);
  const Mat4 jp = curvature == Curvature::observed ? Mat4(u.transpose() * rep.j * u)
                                                   : info_matrix(path, theta0_hat, laws);
  const Vec4 gp = u.transpose() * rep.g;
  if (condition_number(jp) > max_condition) {
    throw SingularMatrixError("one_step: preconditioned Hessian is ill-conditioned");
  }
  const Vec4 w = -jp.colPivHouseholderQr().solve(gp);
  OneStepResult out;
  out.step = u * w;
  const Vec4 raw = Vec4(theta0_hat.a, theta0_hat.b, theta0_hat.delta, theta0_hat.alpha) + out.step;
  Theta t{std::clamp(raw(0), kDriftALo, kDriftAHi), std::clamp(raw(1), -kDriftBAbs, kDriftBAbs),
          std::max(raw(2), kDeltaLo), std::clamp(raw(3), kAlphaLo, kAlphaHi)};
  out.clamped = t.a != raw(0) || t.b != raw(1) || t.delta != raw(2) || t.alpha != raw(3);
  out.theta = t;
  return out;
}

PathIntegrals path_integrals(const PathGrid& path, double alpha) {
  PathIntegrals pi;
  const double ia = 1.0 / alpha;
  for (int i = 0; i < path.n; ++i) {
    const double x = path.obs[static_cast<std::size_t>(i)];
    if (!(x > 0.0)) throw DomainError("path integrals need a positive path");
    const double lx = std::log(x);
    const double xa = std::pow(x, -ia);
    const double x2a = xa * xa;
    pi.inv_x2a += x2a;
    pi.x_inv_x2a += x * x2a;
    pi.x2_inv_x2a += x * x * x2a;
    pi.inv_xa += xa;
    pi.x_inv_xa += x * xa;
    pi.log_inv_xa += lx * xa;
    pi.log_x_inv_xa += lx * x * xa;
    pi.log_x += lx;
    pi.log_x2 += lx * lx;
  }
  const double inv_n = 1.0 / path.n;
  for (double* v : {&pi.inv_x2a, &pi.x_inv_x2a, &pi.x2_inv_x2a, &pi.inv_xa, &pi.x_inv_xa,
                    &pi.log_inv_xa, &pi.log_x_inv_xa, &pi.log_x, &pi.log_x2}) {
    *v *= inv_n;
  }
  return pi;
}

Mat4 info_matrix_from(const PathIntegrals& pi, const StableMoments& sm, const Theta& theta) {
  const double d = theta.delta;
  const double a2 = theta.alpha * theta.alpha;
  Mat4 m = Mat4::Zero();
  // drift block
  m(0, 0) = pi.inv_x2a * sm.h2 / (d * d);
  m(1, 0) = -pi.x_inv_x2a * sm.h2 / (d * d);
  m(1, 1) = pi.x2_inv_x2a * sm.h2 / (d * d);
  // cross block, rows (delta, alpha), columns (a, b)
  m(2, 0) = pi.inv_xa * sm.hk / d;
  m(2, 1) = -pi.x_inv_xa * sm.hk / d;
  m(3, 0) = -pi.log_inv_xa * sm.hk / (d * a2) - pi.inv_xa * sm.fh / d;
  m(3, 1) = pi.log_x_inv_xa * sm.hk / (d * a2) + pi.x_inv_xa * sm.fh / d;
  // scale/activity block
  m(2, 2) = sm.k2;
  m(3, 2) = -pi.log_x * sm.k2 / a2 - sm.fk;
  m(3, 3) = pi.log_x2 * sm.k2 / (a2 * a2) + 2.0 * pi.log_x * sm.fk / a2 + sm.f2;
  for (int r = 0; r < 4; ++r) {
    for (int c = r + 1; c < 4; ++c) m(r, c) = m(c, r);
  }
  return m;
}

Mat4 info_matrix(const PathGrid& path, const Theta& theta, LawCache& laws) {
  theta.validate();
  const StableMoments sm = stable_moments(laws.get(theta.alpha));
  const Mat4 m = info_matrix_from(path_integrals(path, theta.alpha), sm, theta);
  Eigen::SelfAdjointEigenSolver<Mat4> es(m);
  if (!(es.eigenvalues()(0) > 0.0)) {
    throw NumericalError("information matrix is not positive definite");
  }
  return m;
}

Mat4 sym_sqrt(const Mat4& m) {
  Eigen::SelfAdjointEigenSolver<Mat4> es(m);
  const Vec4 ev = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

EstimationResult estimate_full(const PathGrid& path, const EstimationConfig& config,
                               LawCache& laws) {
  if (path.n < 8) throw DomainError("estimate_full needs n >= 8");
  if (config.steps < 1) throw DomainError("estimate_full needs at least one correction step");
  EstimationResult res;
  res.seed = path.seed;
  res.n = path.n;
  auto stage = [](const char* name, auto&& fn) {
    try {
      return fn();
    } catch (const DomainError&) {
      throw;
    } catch (const Error& e) {
      throw StageError(name, e.what());
    }
  };

  const AlphaEstimate al = stage("alpha", [&] { return estimate_alpha(path, config.p); });
  res.alpha_clamped = al.clamped;
  const DeltaEstimate dl = stage("delta", [&] { return estimate_delta(path, al.value, config.p); });
  const DriftSolution dr =
      stage("drift", [&] { return solve_drift(path, dl.value, al.value, laws, config.drift); });
  res.iters = dr.iterations;
  res.theta_prelim = Theta{dr.a, dr.b, dl.value, al.value};

  res.theta_onestep = res.theta_prelim;
  for (int s = 0; s < config.steps; ++s) {
    const OneStepResult os = stage("one_step", [&] {
      return one_step(path, res.theta_onestep, laws, config.max_condition, config.curvature);
    });
    res.theta_onestep = os.theta;
    res.onestep_clamped = res.onestep_clamped || os.clamped;
  }

  stage("information", [&] {
    res.info = info_matrix(path, res.theta_onestep, laws);
    res.rates = rate_matrix(path.n, res.theta_onestep);
    const Mat4 cov = res.rates * res.info.inverse() * res.rates.transpose();
    res.stderr_ = cov.diagonal().cwiseMax(0.0).cwiseSqrt();
    // Diagnostic only: report the clamp count instead of rejecting the estimate.
    LikelihoodOptions o;
    o.with_hessian = false;
    o.max_clamp_fraction = 1.0;
    res.clamps = evaluate_quasi_likelihood(path, res.theta_onestep, laws, o).tail_clamps;
    return 0;
  });
  return res;
}

namespace {

std::string g17(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

std::string result_csv_header() {
  return "seed,n,a_hat,b_hat,delta_hat,alpha_hat,a_pre,b_pre,delta_pre,alpha_pre,se_a,se_b,"
         "se_delta,se_alpha,clamps,iters";
}

std::string result_csv_row(const EstimationResult& r) {
  std::string s = std::to_string(r.seed) + "," + std::to_string(r.n);
  for (double v : {r.theta_onestep.a, r.theta_onestep.b, r.theta_onestep.delta, r.theta_onestep.alpha,
                   r.theta_prelim.a, r.theta_prelim.b, r.theta_prelim.delta, r.theta_prelim.alpha,
                   r.stderr_(0), r.stderr_(1), r.stderr_(2), r.stderr_(3)}) {
    s += "," + g17(v);
  }
  s += "," + std::to_string(r.clamps) + "," + std::to_string(r.iters);
  return s;
}

std::string result_json_line(const EstimationResult& r) {
  nlohmann::ordered_json j;
  j["seed"] = r.seed;
  j["n"] = r.n;
  j["a_hat"] = r.theta_onestep.a;
  j["b_hat"] = r.theta_onestep.b;
  j["delta_hat"] = r.theta_onestep.delta;
  j["alpha_hat"] = r.theta_onestep.alpha;
  j["a_pre"] = r.theta_prelim.a;
  j["b_pre"] = r.theta_prelim.b;
  j["delta_pre"] = r.theta_prelim.delta;
  j["alpha_pre"] = r.theta_prelim.alpha;
  j["se_a"] = r.stderr_(0);
  j["se_b"] = r.stderr_(1);
  j["se_delta"] = r.stderr_(2);
  j["se_alpha"] = r.stderr_(3);
  j["clamps"] = r.clamps;
  j["iters"] = r.iters;
  return j.dump();
}

}  // namespace stable_cir
