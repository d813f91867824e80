#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "stable_cir/cir_process.hpp"
#include "stable_cir/stable_dist.hpp"

namespace stable_cir {

using Vec4 = Eigen::Vector4d;
using Mat4 = Eigen::Matrix4d;

// Admissible box used for clamping estimates: (a, b) in [1e-3, 1e3] x [-1e3, 1e3],
// delta >= 1e-8, alpha in [1.001, 1.999].
inline constexpr double kAlphaLo = 1.001;
inline constexpr double kAlphaHi = 1.999;
inline constexpr double kDriftALo = 1e-3;
inline constexpr double kDriftAHi = 1e3;
inline constexpr double kDriftBAbs = 1e3;
inline constexpr double kDeltaLo = 1e-8;

// Small per-worker memo of tabulated stable laws keyed by alpha. Not thread safe;
// give each worker its own.
class LawCache {
 public:
  explicit LawCache(StableLawOptions opts = {}, std::size_t capacity = 6)
      : opts_(opts), capacity_(capacity) {}

  const StableLaw& get(double alpha);
  std::size_t builds() const noexcept { return builds_; }

 private:
  StableLawOptions opts_;
  std::size_t capacity_;
  std::size_t builds_ = 0;
  std::vector<std::shared_ptr<const StableLaw>> laws_;  // most recent last
};

struct PowerVarStats {
  double v1 = 0.0;  // sum_{i=2..n} |D_i - D_{i-1}|^p
  double v2 = 0.0;  // sum_{i=4..n} |D_i - D_{i-1} + D_{i-2} - D_{i-3}|^p
  double p = 0.0;
  int n = 0;
};

PowerVarStats power_variations(const PathGrid& path, double p);
// order 1 -> V^1, order 2 -> V^2
double power_variation(const PathGrid& path, double p, int order);

struct AlphaEstimate {
  double value = 0.0;  // clamped to [kAlphaLo, kAlphaHi]
  double raw = 0.0;
  bool clamped = false;
};

// p log 2 / log(V^2 / V^1). Throws DegeneratePathError when V^1 = V^2 or
// either vanishes (constant or linear paths).
AlphaEstimate estimate_alpha(const PathGrid& path, double p = 0.5);

struct DeltaEstimate {
  double value = 0.0;     // [delta_n(p)]^{1/p}
  double root = 0.0;      // delta_n(p), the normalized power variation
  int skipped = 0;        // terms with X_{(i-2)/n} = 0
};

// Throws NumericalError when more than 1% of the terms are skipped.
DeltaEstimate estimate_delta(const PathGrid& path, double alpha_tilde, double p = 0.5);

// n^{1/alpha} (x_next - x_prev - a/n + b x_prev / n) / (delta x_prev^{1/alpha})
double rescaled_increment(const Theta& theta, double x_prev, double x_next, int n);

struct ScoreReport {
  Vec4 g = Vec4::Zero();  // G_n = -grad L_n
  Mat4 j = Mat4::Zero();  // J_n = grad G_n
  double loglik = 0.0;
  int tail_clamps = 0;
};

// Observations whose rescaled increment falls below the density floor are
// evaluated at the floor (their z no longer moves with theta); more than
// `max_clamp_fraction` of them aborts with TailUnderflowError.
struct LikelihoodOptions {
  double max_clamp_fraction = 0.05;
  bool with_hessian = true;
};

ScoreReport evaluate_quasi_likelihood(const PathGrid& path, const Theta& theta, LawCache& laws,
                                      const LikelihoodOptions& opts = {});

double quasi_loglik(const PathGrid& path, const Theta& theta, LawCache& laws);
Vec4 score(const PathGrid& path, const Theta& theta, LawCache& laws);
Mat4 hessian(const PathGrid& path, const Theta& theta, LawCache& laws);

// Block-diagonal rate matrix u_n with v_n = r_n(theta)^{-1}.
Mat4 rate_matrix(int n, const Theta& theta);
// r_n(theta) = [[1/delta, ln n / alpha^2], [0, 1]]
Eigen::Matrix2d rate_r(int n, const Theta& theta);

struct DriftSolution {
  double a = 0.0;
  double b = 0.0;
  int iterations = 0;
  double residual = 0.0;  // |G^(d)| over the free coordinates at the returned point
  int tail_clamps = 0;
  bool at_bound = false;  // maximum reached on the boundary of the drift box
};

struct DriftOptions {
  double a_init = 1.0;
  double b_init = 0.0;
  int max_iterations = 50;
  double max_condition = 1e12;
};

// Damped Newton for G^(d)(a, b) = 0 at fixed (delta, alpha), maximizing L_n over
// the drift box. When the maximum sits on the box boundary it is returned with
// at_bound set.
DriftSolution solve_drift(const PathGrid& path, double delta_est, double alpha_est, LawCache& laws,
                          const DriftOptions& opts = {});

struct OneStepResult {
  Theta theta{};
  bool clamped = false;
  Vec4 step = Vec4::Zero();  // theta_1 - theta_0 before clamping
};

// Curvature used by the Newton correction. `observed` is J_n(theta_0) itself;
// `expected` swaps u_n^T J_n u_n for its limit I(theta_0) (a scoring step with
// the same asymptotics, and positive definite by construction).
enum class Curvature { observed, expected };

// theta_0 - J_n(theta_0)^{-1} G_n(theta_0), solved in u_n-preconditioned form.
OneStepResult one_step(const PathGrid& path, const Theta& theta0_hat, LawCache& laws,
                       double max_condition = 1e12, Curvature curvature = Curvature::observed);

// Path integrals (left-endpoint Riemann sums) that enter I(theta).
struct PathIntegrals {
  double inv_x2a = 0, x_inv_x2a = 0, x2_inv_x2a = 0;           // X^{-2/a}, X^{1-2/a}, X^{2-2/a}
  double inv_xa = 0, x_inv_xa = 0;                             // X^{-1/a}, X^{1-1/a}
  double log_inv_xa = 0, log_x_inv_xa = 0;                     // ln X X^{-1/a}, ln X X^{1-1/a}
  double log_x = 0, log_x2 = 0;                                // ln X, (ln X)^2
};

PathIntegrals path_integrals(const PathGrid& path, double alpha);

// Information matrix assembled from path integrals and stable expectations.
Mat4 info_matrix_from(const PathIntegrals& pi, const StableMoments& sm, const Theta& theta);

// Throws NumericalError when the result is not positive definite.
Mat4 info_matrix(const PathGrid& path, const Theta& theta, LawCache& laws);

struct EstimationConfig {
  double p = 0.5;
  DriftOptions drift{};
  double max_condition = 1e12;
  Curvature curvature = Curvature::expected;
  int steps = 1;  // Newton corrections after the preliminary fit; 1 is the one-step estimator
};

struct EstimationResult {
  std::uint64_t seed = 0;
  int n = 0;
  Theta theta_prelim{};
  Theta theta_onestep{};
  Vec4 stderr_ = Vec4::Zero();
  Mat4 info = Mat4::Zero();
  Mat4 rates = Mat4::Zero();  // u_n at the one-step estimate
  int clamps = 0;
  int iters = 0;
  bool alpha_clamped = false;
  bool onestep_clamped = false;
};

// Runs alpha -> delta -> drift -> one-step -> information. Errors from a
// stage are rethrown as StageError naming the stage.
EstimationResult estimate_full(const PathGrid& path, const EstimationConfig& config,
                               LawCache& laws);

class StageError : public NumericalError {
 public:
  StageError(std::string stage, const std::string& what)
      : NumericalError(stage + ": " + what), stage_(std::move(stage)) {}
  const std::string& stage() const noexcept { return stage_; }

 private:
  std::string stage_;
};

// Symmetric square root of a positive semidefinite matrix.
Mat4 sym_sqrt(const Mat4& m);

// Serialization of EstimationResult.
std::string result_csv_header();
std::string result_csv_row(const EstimationResult& r);
std::string result_json_line(const EstimationResult& r);

}  // namespace stable_cir
