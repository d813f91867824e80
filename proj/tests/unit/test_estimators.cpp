#include <gtest/gtest.h>

#include <cmath>
#include <nlohmann/json.hpp>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "stable_cir/cir_process.hpp"
#include "stable_cir/errors.hpp"
#include "stable_cir/estimators.hpp"
#include "stable_cir/rng.hpp"

using namespace stable_cir;

namespace {

const Theta kTheta0{2.0, 1.0, 0.5, 1.5};

PathGrid make_path(std::vector<double> obs) {
  PathGrid p;
  p.n = static_cast<int>(obs.size()) - 1;
  p.x0 = obs.front();
  p.obs = std::move(obs);
  return p;
}

// Path whose rescaled increments all equal z under theta.
PathGrid constant_z_path(const Theta& th, double x0, int n, double z) {
  std::vector<double> obs{x0};
  const double nn = n;
  for (int i = 0; i < n; ++i) {
    const double x = obs.back();
    obs.push_back(x + th.a / nn - th.b * x / nn +
                  z * th.delta * std::pow(x, 1 / th.alpha) / std::pow(nn, 1 / th.alpha));
  }
  return make_path(obs);
}

Vec4 to_vec(const Theta& t) { return {t.a, t.b, t.delta, t.alpha}; }
Theta to_theta(const Vec4& v) { return {v(0), v(1), v(2), v(3)}; }

double rel(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  return (a - b).norm() / std::max(b.norm(), 1e-2);
}

}  // namespace

TEST(PowerVariation, HandEnumeration) {
  const PathGrid p = make_path({0, 1, 0, 1, 0});
  const PowerVarStats s = power_variations(p, 2.0);
  EXPECT_DOUBLE_EQ(s.v1, 12.0);
  EXPECT_DOUBLE_EQ(s.v2, 16.0);
  EXPECT_DOUBLE_EQ(power_variation(p, 2.0, 1), 12.0);
  EXPECT_DOUBLE_EQ(power_variation(p, 2.0, 2), 16.0);
  EXPECT_THROW(power_variation(p, 2.0, 3), DomainError);
  EXPECT_THROW(power_variations(make_path({0, 1, 0, 1}), 2.0), DomainError);
}

TEST(PowerVariation, ConstantAndLinearPaths) {
  const PathGrid c = make_path(std::vector<double>(11, 2.0));
  EXPECT_EQ(power_variations(c, 0.5).v1, 0.0);
  EXPECT_EQ(power_variations(c, 0.5).v2, 0.0);
  std::vector<double> lin;
  for (int i = 0; i <= 10; ++i) lin.push_back(1.0 + i / 8.0);
  EXPECT_EQ(power_variations(make_path(lin), 0.5).v1, 0.0);
  EXPECT_THROW(estimate_alpha(c, 0.5), DegeneratePathError);
  EXPECT_THROW(estimate_alpha(make_path(lin), 0.5), DegeneratePathError);
}

TEST(AlphaEstimate, FormulaAndClamping) {
  const PathGrid p = simulate_path(kTheta0, 1.0, 4000, 4, 11);
  const PowerVarStats s = power_variations(p, 0.5);
  const AlphaEstimate a = estimate_alpha(p, 0.5);
  EXPECT_DOUBLE_EQ(a.raw, 0.5 * std::log(2.0) / std::log(s.v2 / s.v1));
  EXPECT_NEAR(a.value, 1.5, 0.15);

  // Increments +,+,-,- nearly cancel in the second-order sum, so V2 < V1 and
  // the raw estimate is negative.
  std::vector<double> zig{1.0};
  for (int i = 0; i < 200; ++i) zig.push_back(zig.back() + ((i / 2) % 2 ? -0.01 : 0.01) + (i % 2 ? 1e-4 : -1e-4));
  const AlphaEstimate z = estimate_alpha(make_path(zig), 0.5);
  EXPECT_TRUE(z.clamped);
  EXPECT_LT(z.raw, 0.0);
  EXPECT_EQ(z.value, kAlphaLo);
  EXPECT_THROW(estimate_alpha(p, 1.0), DomainError);
}

TEST(DeltaEstimate, Homogeneity) {
  const PathGrid p = simulate_path(kTheta0, 1.0, 1000, 4, 12);
  PathGrid q = p;
  const double c = 3.7;
  for (double& x : q.obs) x *= c;
  const double at = 1.43;
  const DeltaEstimate dp = estimate_delta(p, at, 0.5);
  const DeltaEstimate dq = estimate_delta(q, at, 0.5);
  EXPECT_NEAR(dq.root / dp.root, std::pow(c, 0.5 * (1 - 1 / at)), 1e-12);
  EXPECT_NEAR(dp.value, dp.root * dp.root, 1e-15);
  EXPECT_EQ(dp.skipped, 0);
}

TEST(DeltaEstimate, TooManyZeroDenominators) {
  // 299 terms: two zero denominators are within 1%, three are not.
  std::vector<double> obs(301, 1.0);
  for (int i = 0; i < 300; i += 2) obs[static_cast<std::size_t>(i)] = 0.5;
  obs[10] = obs[20] = obs[30] = 0.0;
  EXPECT_THROW(estimate_delta(make_path(obs), 1.5, 0.5), NumericalError);
  obs[30] = 0.5;
  const DeltaEstimate d = estimate_delta(make_path(obs), 1.5, 0.5);
  EXPECT_EQ(d.skipped, 2);
  EXPECT_THROW(estimate_delta(make_path(obs), 2.0, 0.5), DomainError);
}

TEST(RescaledIncrement, Values) {
  // 100^(2/3) * 0.18 = 3.87798
  EXPECT_NEAR(rescaled_increment(kTheta0, 1.0, 1.1, 100), 3.8780, 1e-4);
  EXPECT_NEAR(rescaled_increment(kTheta0, 1.0, 1.1, 100), std::pow(100.0, 2.0 / 3) * 0.18, 1e-12);
  EXPECT_NEAR(rescaled_increment(kTheta0, 1.3, 1.3 + 2.0 / 50 - 1.3 / 50, 50), 0.0, 1e-14);
  const Theta d2{2, 1, 1.0, 1.5};
  EXPECT_DOUBLE_EQ(rescaled_increment(d2, 1.0, 1.1, 100),
                   0.5 * rescaled_increment(kTheta0, 1.0, 1.1, 100));
  EXPECT_THROW(rescaled_increment(kTheta0, 0.0, 1.0, 10), DomainError);
}

TEST(RateMatrix, BlocksAndInverse) {
  const Theta th{2, 1, 1.0, 1.5};
  const Mat4 u = rate_matrix(100, th);
  const double drift = std::pow(100.0, -(2.0 / 3 - 0.5));
  EXPECT_NEAR(u(0, 0), drift, 1e-15);
  EXPECT_NEAR(u(1, 1), drift, 1e-15);
  EXPECT_EQ(u(0, 1), 0.0);
  EXPECT_EQ((u.block<2, 2>(0, 2).norm()), 0.0);
  EXPECT_EQ((u.block<2, 2>(2, 0).norm()), 0.0);
  const Eigen::Matrix2d r = rate_r(100, th);
  EXPECT_NEAR(r(0, 1), std::log(100.0) / 2.25, 1e-15);
  EXPECT_DOUBLE_EQ(r.determinant(), 1.0);
  const Eigen::Matrix2d v = u.block<2, 2>(2, 2) * std::sqrt(100.0);
  EXPECT_LT((r * v - Eigen::Matrix2d::Identity()).norm(), 1e-15);
  EXPECT_THROW(rate_matrix(1, th), DomainError);
}

TEST(QuasiLikelihood, ScoreAndHessianMatchFiniteDifferences) {
  const PathGrid p = simulate_path(kTheta0, 1.0, 500, 16, 13);
  LawCache laws;
  const ScoreReport rep = evaluate_quasi_likelihood(p, kTheta0, laws);
  const Mat4 u = rate_matrix(p.n, kTheta0);
  const double eps = 1e-4;
  Vec4 fd_g;
  Mat4 fd_j;
  for (int k = 0; k < 4; ++k) {
    const Theta plus = to_theta(to_vec(kTheta0) + eps * u.col(k));
    const Theta minus = to_theta(to_vec(kTheta0) - eps * u.col(k));
    fd_g(k) = -(quasi_loglik(p, plus, laws) - quasi_loglik(p, minus, laws)) / (2 * eps);
    fd_j.col(k) = u.transpose() * (score(p, plus, laws) - score(p, minus, laws)) / (2 * eps);
  }
  EXPECT_LT(rel(u.transpose() * rep.g, fd_g), 1e-3);
  EXPECT_LT(rel(u.transpose() * rep.j * u, fd_j), 1e-3);
  EXPECT_LT((rep.j - rep.j.transpose()).norm(), 1e-9 * rep.j.norm());
  EXPECT_EQ(rep.loglik, quasi_loglik(p, kTheta0, laws));
  EXPECT_EQ(rep.g, score(p, kTheta0, laws));
  EXPECT_EQ(rep.j, hessian(p, kTheta0, laws));
}

TEST(QuasiLikelihood, SingleTerm) {
  const Theta th{1.5, 0.5, 0.8, 1.6};
  LawCache laws;
  const StableLaw& law = laws.get(th.alpha);
  const double x = 1.7;
  const PathGrid p = constant_z_path(th, x, 1, law.mode());
  const double expect = std::log(1.0 / (th.delta * std::pow(x, 1 / th.alpha))) +
                        law.log_density(law.mode());
  EXPECT_NEAR(quasi_loglik(p, th, laws), expect, 1e-10);
}

TEST(QuasiLikelihood, DriftScoreVanishesOnModePath) {
  const Theta th{2, 1, 0.5, 1.5};
  LawCache laws;
  const PathGrid p = constant_z_path(th, 1.0, 400, laws.get(1.5).mode());
  const Vec4 g = score(p, th, laws);
  const Mat4 u = rate_matrix(p.n, th);
  const Vec4 gn = u.transpose() * g;
  EXPECT_LT(std::abs(gn(0)), 1e-8);
  EXPECT_LT(std::abs(gn(1)), 1e-8);
  EXPECT_GT(std::abs(gn(2)), 1.0);
}

TEST(QuasiLikelihood, ScalingChangesLikelihoodByAConstant) {
  const PathGrid p = simulate_path(kTheta0, 1.0, 300, 8, 17);
  const double c = 2.5;
  PathGrid q = p;
  q.x0 *= c;
  for (double& x : q.obs) x *= c;
  const Theta th{1.7, 0.6, 0.45, 1.55};
  const Theta ts{c * th.a, th.b, std::pow(c, 1 - 1 / th.alpha) * th.delta, th.alpha};
  for (int i = 1; i <= p.n; i += 37) {
    EXPECT_NEAR(rescaled_increment(ts, q.obs[i - 1], q.obs[i], q.n),
                rescaled_increment(th, p.obs[i - 1], p.obs[i], p.n), 1e-9);
  }
  LawCache laws;
  EXPECT_NEAR(quasi_loglik(q, ts, laws), quasi_loglik(p, th, laws) - p.n * std::log(c), 1e-8);

  const Theta ds{2, 1, 0.5, 1.5};
  const double ds_delta = std::pow(c, 1 - 1 / ds.alpha) * ds.delta;
  const DriftSolution d1 = solve_drift(p, ds.delta, ds.alpha, laws);
  const DriftSolution d2 = solve_drift(q, ds_delta, ds.alpha, laws, {.a_init = c, .b_init = 0.0});
  ASSERT_FALSE(d1.at_bound);
  EXPECT_NEAR(d2.a, c * d1.a, 1e-6 * (1 + c * std::abs(d1.a)));
  EXPECT_NEAR(d2.b, d1.b, 1e-6 * (1 + std::abs(d1.b)));
}

TEST(QuasiLikelihood, TailClampCountAndAbort) {
  // Every other step collapses the state: those increments sit far below the floor.
  std::vector<double> obs;
  for (int i = 0; i <= 100; ++i) obs.push_back(i % 2 ? 0.1 : 1.0);
  const PathGrid p = make_path(obs);
  const Theta th{2, 1, 0.1, 1.5};
  LawCache laws;
  EXPECT_THROW(quasi_loglik(p, th, laws), TailUnderflowError);
  LikelihoodOptions o;
  o.max_clamp_fraction = 1.0;
  const ScoreReport rep = evaluate_quasi_likelihood(p, th, laws, o);
  EXPECT_EQ(rep.tail_clamps, 50);
  EXPECT_TRUE(std::isfinite(rep.loglik));
}

TEST(QuasiLikelihood, ContrastAtTruthMatchesLocalAsymptotics) {
  // With b held fixed, L(theta0) - L(theta0 + d e_a) ~ N(d^2 I_aa / 2, d^2 I_aa),
  // so theta0 wins with probability Phi(d sqrt(I_aa) / 2).
  LawCache laws;
  const int reps = 200, n = 2000;
  const double d = 0.5;
  const Theta moved{kTheta0.a + d, kTheta0.b, kTheta0.delta, kTheta0.alpha};
  int wins = 0;
  double predicted = 0.0;
  for (int r = 0; r < reps; ++r) {
    const PathGrid p = simulate_path(kTheta0, 1.0, n, 16, stream_seed(15, r));
    if (quasi_loglik(p, kTheta0, laws) > quasi_loglik(p, moved, laws)) ++wins;
    const double i_aa = info_matrix(p, kTheta0, laws)(0, 0) * std::pow(n, 2 / kTheta0.alpha - 1);
    predicted += 0.5 * std::erfc(-d * std::sqrt(i_aa) / (2 * std::sqrt(2.0)));
  }
  predicted /= reps;
  const double frac = static_cast<double>(wins) / reps;
  EXPECT_GT(predicted, 0.5);
  EXPECT_NEAR(frac, predicted, 3 * std::sqrt(predicted * (1 - predicted) / reps));
}

namespace {

// Mean and standard error of u_n^T G_n(theta0) over simulated paths.
std::pair<Vec4, Vec4> normalized_score_mean(int n, int substeps, int reps) {
  LawCache laws;
  Vec4 s = Vec4::Zero(), s2 = Vec4::Zero();
  for (int r = 0; r < reps; ++r) {
    const PathGrid p = simulate_path(kTheta0, 1.0, n, substeps, stream_seed(16, r));
    const Vec4 g = rate_matrix(p.n, kTheta0).transpose() * score(p, kTheta0, laws);
    s += g;
    s2 += g.cwiseProduct(g);
  }
  const Vec4 m = s / reps;
  const Vec4 se = ((s2 / reps - m.cwiseProduct(m)) / reps).cwiseSqrt();
  return {m, se};
}

}  // namespace

TEST(QuasiLikelihood, NormalizedScoreIsCentred) {
  // One Euler step per observation: the z_i are exactly iid stable draws.
  const auto [m, se] = normalized_score_mean(500, 1, 200);
  for (int k = 0; k < 4; ++k) EXPECT_LT(std::abs(m(k)), 3 * se(k)) << "component " << k;
}

TEST(QuasiLikelihood, NormalizedScoreBiasIsSmallOnFinePaths) {
  // On the continuous-time path the frozen-coefficient increments leave a
  // finite-n bias that decays slowly; it stays well inside one standard deviation.
  const int reps = 200;
  const auto [m, se] = normalized_score_mean(500, 16, reps);
  for (int k = 0; k < 4; ++k) {
    EXPECT_LT(std::abs(m(k)), 0.5 * se(k) * std::sqrt(reps)) << "component " << k;
  }
}

TEST(QuasiLikelihood, NormalizedHessianApproachesInformation) {
  LawCache laws;
  Mat4 j = Mat4::Zero(), info = Mat4::Zero();
  const int reps = 50;
  for (int r = 0; r < reps; ++r) {
    const PathGrid p = simulate_path(kTheta0, 1.0, 2000, 4, stream_seed(17, r));
    const Mat4 u = rate_matrix(p.n, kTheta0);
    j += u.transpose() * hessian(p, kTheta0, laws) * u;
    info += info_matrix(p, kTheta0, laws);
  }
  j /= reps;
  info /= reps;
  const double op = Eigen::JacobiSVD<Mat4>(j - info).singularValues()(0);
  EXPECT_LT(op, 0.1 * Eigen::JacobiSVD<Mat4>(info).singularValues()(0));
}

TEST(SolveDrift, RecoversSyntheticRoot) {
  for (const Theta& th : {Theta{2, 0, 0.5, 1.5}, Theta{1.2, 2.5, 0.3, 1.7}}) {
    LawCache laws;
    const PathGrid p = constant_z_path(th, 1.0, 300, laws.get(th.alpha).mode());
    const DriftSolution d = solve_drift(p, th.delta, th.alpha, laws);
    EXPECT_NEAR(d.a, th.a, 1e-6);
    EXPECT_NEAR(d.b, th.b, 1e-6);
    EXPECT_FALSE(d.at_bound);
    const Vec4 g = score(p, {d.a, d.b, th.delta, th.alpha}, laws);
    EXPECT_LT(g.head<2>().norm(), 1e-8 * std::pow(300.0, 1 / th.alpha - 1) * (1 + std::hypot(d.a, d.b)));
  }
}

TEST(SolveDrift, RejectsBadInputs) {
  LawCache laws;
  const PathGrid p = simulate_path(kTheta0, 1.0, 100, 4, 18);
  EXPECT_THROW(solve_drift(p, 0.0, 1.5, laws), DomainError);
  EXPECT_THROW(solve_drift(p, 0.5, 2.0, laws), DomainError);
}

TEST(OneStep, PreconditioningDoesNotChangeTheStep) {
  LawCache laws;
  const PathGrid p = simulate_path(kTheta0, 1.0, 1000, 8, 19);
  const Theta start{2.2, 0.8, 0.52, 1.48};
  const OneStepResult os = one_step(p, start, laws, 1e12, Curvature::observed);
  const ScoreReport rep = evaluate_quasi_likelihood(p, start, laws);
  const Vec4 plain = to_vec(start) - rep.j.fullPivLu().solve(rep.g);
  ASSERT_FALSE(os.clamped);
  EXPECT_LT((to_vec(os.theta) - plain).cwiseAbs().maxCoeff(), 1e-8 * (1 + plain.norm()));
}

TEST(OneStep, FixedPointAtARoot) {
  LawCache laws;
  const PathGrid p = simulate_path(kTheta0, 1.0, 2000, 8, 20);
  // Fisher scoring from the truth converges linearly to a root of G_n.
  Theta th = kTheta0;
  for (int it = 0; it < 14; ++it) th = one_step(p, th, laws, 1e12, Curvature::expected).theta;
  const Mat4 u = rate_matrix(p.n, th);
  ASSERT_LT((u.transpose() * score(p, th, laws)).norm(), 1e-6);
  const OneStepResult os = one_step(p, th, laws, 1e12, Curvature::observed);
  EXPECT_LT((u.inverse() * os.step).norm(), 1e-6);
  const OneStepResult ex = one_step(p, th, laws, 1e12, Curvature::expected);
  EXPECT_LT((u.inverse() * ex.step).norm(), 1e-5);
}

TEST(Information, PositiveSemidefiniteOnProbes) {
  LawCache laws;
  const PathGrid p = simulate_path(kTheta0, 1.0, 1000, 4, 21);
  const Mat4 info = info_matrix(p, kTheta0, laws);
  EXPECT_LT((info - info.transpose()).norm(), 1e-14 * info.norm());
  std::mt19937_64 gen(5);
  std::normal_distribution<double> nd;
  for (int i = 0; i < 1000; ++i) {
    const Vec4 v(nd(gen), nd(gen), nd(gen), nd(gen));
    EXPECT_GE(v.dot(info * v), 0.0);
  }
  EXPECT_GT(Eigen::SelfAdjointEigenSolver<Mat4>(info).eigenvalues()(0), 0.0);
}

TEST(Information, ConstantPathClosedForm) {
  const double x0 = 1.8;
  const Theta th{2, 1, 0.7, 1.5};
  const PathIntegrals pi = path_integrals(make_path(std::vector<double>(9, x0)), th.alpha);
  EXPECT_NEAR(pi.inv_x2a, std::pow(x0, -2 / th.alpha), 1e-14);
  EXPECT_NEAR(pi.log_x2, std::log(x0) * std::log(x0), 1e-14);
  StableMoments sm;
  sm.h2 = 1.3;
  sm.hk = -0.4;
  sm.k2 = 2.1;
  sm.fh = 0.25;
  sm.fk = -0.6;
  sm.f2 = 0.9;
  const Mat4 m = info_matrix_from(pi, sm, th);
  const double d = th.delta, a2 = th.alpha * th.alpha, l = std::log(x0);
  const double q = std::pow(x0, -1 / th.alpha);
  EXPECT_NEAR(m(0, 0), q * q * sm.h2 / (d * d), 1e-10);
  EXPECT_NEAR(m(1, 1), x0 * x0 * q * q * sm.h2 / (d * d), 1e-10);
  EXPECT_NEAR(m(0, 1), -x0 * q * q * sm.h2 / (d * d), 1e-10);
  EXPECT_NEAR(m(2, 0), q * sm.hk / d, 1e-10);
  EXPECT_NEAR(m(3, 1), x0 * q * (l * sm.hk / a2 + sm.fh) / d, 1e-10);
  EXPECT_NEAR(m(2, 2), sm.k2, 1e-10);
  EXPECT_NEAR(m(3, 2), -l * sm.k2 / a2 - sm.fk, 1e-10);
  EXPECT_NEAR(m(3, 3), l * l * sm.k2 / (a2 * a2) + 2 * l * sm.fk / a2 + sm.f2, 1e-10);
}

TEST(Information, CrossBlockOnFivePoints) {
  const PathGrid p = make_path({1.0, 1.4, 0.7, 2.2, 1.1, 0.9});
  const Theta th{2, 1, 0.5, 1.5};
  LawCache laws;
  const StableMoments sm = stable_moments(laws.get(th.alpha));
  const Mat4 m = info_matrix_from(path_integrals(p, th.alpha), sm, th);
  double s20 = 0, s21 = 0, s30 = 0, s31 = 0;
  for (int i = 0; i < 5; ++i) {
    const double x = p.obs[i], w = std::pow(x, -1 / th.alpha), l = std::log(x);
    s20 += w * sm.hk / th.delta;
    s21 += -x * w * sm.hk / th.delta;
    s30 += -l * w * sm.hk / (th.delta * 2.25) - w * sm.fh / th.delta;
    s31 += l * x * w * sm.hk / (th.delta * 2.25) + x * w * sm.fh / th.delta;
  }
  EXPECT_NEAR(m(2, 0), s20 / 5, 1e-12);
  EXPECT_NEAR(m(2, 1), s21 / 5, 1e-12);
  EXPECT_NEAR(m(3, 0), s30 / 5, 1e-12);
  EXPECT_NEAR(m(3, 1), s31 / 5, 1e-12);
  EXPECT_EQ(m(0, 2), m(2, 0));
}

TEST(EstimateFull, PreconditionsAndStages) {
  LawCache laws;
  EXPECT_THROW(estimate_full(simulate_path(kTheta0, 1.0, 7, 1, 1), {}, laws), DomainError);
  try {
    estimate_full(make_path(std::vector<double>(21, 1.0)), {}, laws);
    FAIL() << "constant path accepted";
  } catch (const StageError& e) {
    EXPECT_EQ(e.stage(), "alpha");
  }
}

TEST(EstimateFull, BitwiseReproducible) {
  const PathGrid p = simulate_path(kTheta0, 1.0, 1000, 8, 22);
  LawCache l1, l2;
  const EstimationResult r1 = estimate_full(p, {}, l1);
  const EstimationResult r2 = estimate_full(p, {}, l2);
  EXPECT_EQ(result_csv_row(r1), result_csv_row(r2));
  EXPECT_EQ(r1.info, r2.info);
  EXPECT_EQ(r1.stderr_, r2.stderr_);
  EXPECT_EQ(r1.seed, 22u);
  EXPECT_EQ(r1.n, 1000);
  for (int k = 0; k < 4; ++k) EXPECT_GT(r1.stderr_(k), 0.0);
}

TEST(EstimateFull, ExtraStepsRepeatTheCorrection) {
  const PathGrid p = simulate_path(kTheta0, 1.0, 1000, 8, 23);
  LawCache laws;
  EstimationConfig cfg;
  const EstimationResult r1 = estimate_full(p, cfg, laws);
  cfg.steps = 2;
  const EstimationResult r2 = estimate_full(p, cfg, laws);
  const OneStepResult again = one_step(p, r1.theta_onestep, laws, cfg.max_condition, cfg.curvature);
  EXPECT_EQ(r2.theta_prelim, r1.theta_prelim);
  EXPECT_EQ(r2.theta_onestep, again.theta);
  cfg.steps = 0;
  EXPECT_THROW(estimate_full(p, cfg, laws), DomainError);
}

TEST(LawCacheTest, ReusesAndEvicts) {
  LawCache cache({}, 2);
  const StableLaw& a = cache.get(1.5);
  EXPECT_EQ(&a, &cache.get(1.5));
  EXPECT_EQ(cache.builds(), 1u);
  cache.get(1.6);
  cache.get(1.7);
  EXPECT_EQ(cache.builds(), 3u);
  cache.get(1.7);
  EXPECT_EQ(cache.builds(), 3u);
  cache.get(1.5);
  EXPECT_EQ(cache.builds(), 4u);
}

TEST(Serialization, CsvAndJsonFields) {
  EXPECT_EQ(result_csv_header(),
            "seed,n,a_hat,b_hat,delta_hat,alpha_hat,a_pre,b_pre,delta_pre,alpha_pre,se_a,se_b,"
            "se_delta,se_alpha,clamps,iters");
  EstimationResult r;
  r.seed = 9;
  r.n = 100;
  r.theta_onestep = {2.25, -0.5, 0.125, 1.5};
  r.theta_prelim = {1.0, 0.0, 0.5, 1.25};
  r.stderr_ = Vec4(0.1, 0.2, 0.3, 0.4);
  r.clamps = 2;
  r.iters = 7;
  EXPECT_EQ(result_csv_row(r), "9,100,2.25,-0.5,0.125,1.5,1,0,0.5,1.25,"
                               "0.10000000000000001,0.20000000000000001,"
                               "0.29999999999999999,0.40000000000000002,2,7");
  const auto j = nlohmann::ordered_json::parse(result_json_line(r));
  std::string keys;
  for (auto it = j.begin(); it != j.end(); ++it) keys += (keys.empty() ? "" : ",") + it.key();
  EXPECT_EQ(keys, result_csv_header());
  EXPECT_EQ(j["alpha_pre"].get<double>(), 1.25);
}
