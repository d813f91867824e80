#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <queue>
#include <vector>

#include "stable_cir/errors.hpp"

namespace stable_cir {

struct QuadConfig {
  double abs_tol = 1e-10;
  double rel_tol = 1e-8;
  int max_intervals = 4000;
};

template <std::size_t N>
struct QuadResult {
  std::array<double, N> value{};
  std::array<double, N> error{};
  std::array<double, N> l1{};  // integral of |integrand|, per component
  int intervals = 0;
};

namespace detail {

// Gauss-Kronrod 7/15 nodes and weights on [-1, 1].
inline constexpr std::array<double, 8> kKronrodNodes = {
    0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
    0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
    0.586087235467691130294144845693013, 0.405845151377397166906606412076961,
    0.207784955007898467600689403773245, 0.000000000000000000000000000000000};
inline constexpr std::array<double, 8> kKronrodWeights = {
    0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
    0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
    0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
    0.204432940075298892414161999234649, 0.209482141084727828012999174891714};
inline constexpr std::array<double, 4> kGaussWeights = {
    0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
    0.381830050505118944950369775488975, 0.417959183673469387755102040816327};

template <std::size_t N>
struct Panel {
  double lo = 0.0;
  double hi = 0.0;
  std::array<double, N> value{};
  std::array<double, N> error{};
  std::array<double, N> l1{};
  double priority = 0.0;
  bool operator<(const Panel& o) const { return priority < o.priority; }
};

template <std::size_t N, class F>
Panel<N> gk15(F& f, double lo, double hi) {
  Panel<N> p;
  p.lo = lo;
  p.hi = hi;
  const double mid = 0.5 * (lo + hi);
  const double half = 0.5 * (hi - lo);
  std::array<double, N> gauss{};
  const std::array<double, N> fc = f(mid);
  for (std::size_t k = 0; k < N; ++k) {
    p.value[k] = fc[k] * kKronrodWeights[7];
    p.l1[k] = std::abs(fc[k]) * kKronrodWeights[7];
    gauss[k] = fc[k] * kGaussWeights[3];
  }
  for (std::size_t j = 0; j < 7; ++j) {
    const double dx = half * kKronrodNodes[j];
    const std::array<double, N> f1 = f(mid - dx);
    const std::array<double, N> f2 = f(mid + dx);
    for (std::size_t k = 0; k < N; ++k) {
      p.value[k] += kKronrodWeights[j] * (f1[k] + f2[k]);
      p.l1[k] += kKronrodWeights[j] * (std::abs(f1[k]) + std::abs(f2[k]));
      if (j % 2 == 1) gauss[k] += kGaussWeights[j / 2] * (f1[k] + f2[k]);
    }
  }
  for (std::size_t k = 0; k < N; ++k) {
    p.value[k] *= half;
    p.l1[k] *= std::abs(half);
    p.error[k] = std::abs(p.value[k] - gauss[k] * half);
  }
  return p;
}

}  // namespace detail

// Tolerance policy for a vector integral. Component k is accepted when
//   err_k <= max(abs_tol, rel_tol * max(|I_k|, |I_ref|), 64 eps * L1_k)
// where ref is `reference` (or k itself when reference < 0). The L1 floor
// keeps oscillatory integrals with heavy cancellation from looping forever.
struct VecTolerance {
  double abs_tol = 1e-10;
  double rel_tol = 1e-8;
  int reference = -1;
  int max_intervals = 4000;
};

// Globally adaptive Gauss-Kronrod integration of a vector-valued integrand
// over [lo, hi]. Throws QuadratureError when the interval budget runs out.
template <std::size_t N, class F>
QuadResult<N> integrate(F&& f, double lo, double hi, const VecTolerance& tol) {
  using detail::Panel;
  std::priority_queue<Panel<N>> heap;
  QuadResult<N> out;

  auto assess = [&](const QuadResult<N>& r, std::array<double, N>& slack) {
    bool ok = true;
    for (std::size_t k = 0; k < N; ++k) {
      double scale = std::abs(r.value[k]);
      if (tol.reference >= 0) scale = std::max(scale, std::abs(r.value[tol.reference]));
      const double target = std::max({tol.abs_tol, tol.rel_tol * scale,
                                      64.0 * std::numeric_limits<double>::epsilon() * r.l1[k]});
      slack[k] = target;
      if (r.error[k] > target) ok = false;
    }
    return ok;
  };

  auto push = [&](Panel<N> p, const std::array<double, N>& slack) {
    double pr = 0.0;
    for (std::size_t k = 0; k < N; ++k) {
      pr = std::max(pr, p.error[k] / (slack[k] > 0 ? slack[k] : 1.0));
    }
    p.priority = pr;
    heap.push(p);
  };

  Panel<N> first = detail::gk15<N>(f, lo, hi);
  out.value = first.value;
  out.error = first.error;
  out.l1 = first.l1;
  out.intervals = 1;
  std::array<double, N> slack{};
  if (assess(out, slack)) return out;
  push(first, slack);

  while (out.intervals < tol.max_intervals) {
    Panel<N> worst = heap.top();
    heap.pop();
    const double mid = 0.5 * (worst.lo + worst.hi);
    Panel<N> left = detail::gk15<N>(f, worst.lo, mid);
    Panel<N> right = detail::gk15<N>(f, mid, worst.hi);
    for (std::size_t k = 0; k < N; ++k) {
      out.value[k] += left.value[k] + right.value[k] - worst.value[k];
      out.error[k] += left.error[k] + right.error[k] - worst.error[k];
      out.l1[k] += left.l1[k] + right.l1[k] - worst.l1[k];
    }
    ++out.intervals;
    // The running error sum drifts with cancellation; rebuild it once in a while.
    if (out.intervals % 64 == 0) {
      std::vector<Panel<N>> all;
      all.reserve(heap.size() + 2);
      while (!heap.empty()) {
        all.push_back(heap.top());
        heap.pop();
      }
      all.push_back(left);
      all.push_back(right);
      out.value.fill(0.0);
      out.error.fill(0.0);
      out.l1.fill(0.0);
      for (const auto& p : all) {
        for (std::size_t k = 0; k < N; ++k) {
          out.value[k] += p.value[k];
          out.error[k] += p.error[k];
          out.l1[k] += p.l1[k];
        }
      }
      if (assess(out, slack)) return out;
      for (auto& p : all) push(p, slack);
      continue;
    }
    if (assess(out, slack)) return out;
    push(left, slack);
    push(right, slack);
  }
  throw QuadratureError("adaptive quadrature did not converge within the interval budget");
}

// Scalar convenience wrapper.
template <class F>
double integrate_scalar(F&& f, double lo, double hi, const QuadConfig& cfg, double* err = nullptr) {
  VecTolerance tol{cfg.abs_tol, cfg.rel_tol, -1, cfg.max_intervals};
  auto wrapped = [&](double x) { return std::array<double, 1>{f(x)}; };
  const QuadResult<1> r = integrate<1>(wrapped, lo, hi, tol);
  if (err != nullptr) *err = r.error[0];
  return r.value[0];
}

}  // namespace stable_cir
