// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "svrattn/errors.hpp"
#include "svrattn/simd.hpp"
#include "svrattn/svr.hpp"

namespace svrattn {
namespace {

double clip(double x, double c) { return std::clamp(x, 0.0, c); }

// Projection of (za, zt) onto [0,C]^2N intersected with sum(a) == sum(t).
// The minimizer has a = clip(za - lam), t = clip(zt + lam) for the root lam of
// g(lam) = sum(a) - sum(t), which is nonincreasing and piecewise linear.
void project_balanced(std::span<double> za, std::span<double> zt, double c) {
  auto g = [&](double lam) {
    double s = 0.0;
    for (std::size_t i = 0; i < za.size(); ++i) s += clip(za[i] - lam, c) - clip(zt[i] + lam, c);
    return s;
  };
  std::vector<double> knots;
  knots.reserve(4 * za.size());
  for (std::size_t i = 0; i < za.size(); ++i) {
    knots.push_back(za[i]);
    knots.push_back(za[i] - c);
    knots.push_back(-zt[i]);
    knots.push_back(c - zt[i]);
  }
  std::sort(knots.begin(), knots.end());
  double lam = 0.0;
  // g at the smallest knot is >= 0 and at the largest <= 0; find the bracketing pair.
  double lo = knots.front(), glo = g(lo);
  if (glo <= 0.0) {
    lam = lo;
  } else {
    lam = knots.back();
    for (std::size_t k = 1; k < knots.size(); ++k) {
      const double hi = knots[k];
      const double ghi = g(hi);
      if (ghi <= 0.0) {
        lam = (glo == ghi) ? hi : lo + (hi - lo) * glo / (glo - ghi);
        break;
      }
      lo = hi;
      glo = ghi;
    }
  }
  for (std::size_t i = 0; i < za.size(); ++i) {
    za[i] = clip(za[i] - lam, c);
    zt[i] = clip(zt[i] + lam, c);
  }
}

struct DimResult {
  std::vector<double> a, t;
  double residual = 0.0;
  std::size_t iters = 0;
};

// State of one iterate: multipliers, beta = a - t, G beta and the objective.
struct Point {
  std::vector<double> a, t, beta, gb;
  double f = 0.0;
};

class DimSolver {
 public:
  DimSolver(const SvrProblem& p, std::size_t d, double lip) : p_(p), d_(d), lip_(lip), n_(p.keys.rows()) {}

  void evaluate(Point& x) const {
    const auto& kern = simd::active();
    x.beta.resize(n_);
    x.gb.resize(n_);
    for (std::size_t i = 0; i < n_; ++i) x.beta[i] = x.a[i] - x.t[i];
    double quad = 0.0, lin = 0.0, pen = 0.0;
    for (std::size_t i = 0; i < n_; ++i) {
      x.gb[i] = kern.dot(p_.gram.row(i), x.beta);
      quad += x.beta[i] * x.gb[i];
      lin += p_.targets(i, d_) * x.beta[i];
      pen += x.a[i] + x.t[i];
    }
    x.f = -0.5 * quad - p_.eps_tube * pen + lin;
  }

  // Projected ascent step of length 1/L taken from (a, t) with G beta = gb.
  Point step_from(const std::vector<double>& a, const std::vector<double>& t, const std::vector<double>& gb) const {
    Point z;
    z.a.resize(n_);
    z.t.resize(n_);
    const double step = 1.0 / lip_, eps = p_.eps_tube;
    for (std::size_t i = 0; i < n_; ++i) {
      const double g = p_.targets(i, d_) - gb[i];
      z.a[i] = a[i] + step * (g - eps);
      z.t[i] = t[i] + step * (-g - eps);
    }
    project(z);
    return z;
  }

  // L * |step_from(x) - x|_inf, zero exactly at a maximizer.
  double residual(const Point& x) const {
    const Point z = step_from(x.a, x.t, x.gb);
    double move = 0.0;
    for (std::size_t i = 0; i < n_; ++i) move = std::max({move, std::abs(z.a[i] - x.a[i]), std::abs(z.t[i] - x.t[i])});
    return move * lip_;
  }

 private:
  void project(Point& z) const {
    if (p_.fit_bias) {
      project_balanced(z.a, z.t, p_.c);
    } else {
      for (std::size_t i = 0; i < n_; ++i) {
        z.a[i] = clip(z.a[i], p_.c);
        z.t[i] = clip(z.t[i], p_.c);
      }
    }
    // both multipliers active at once only costs eps; drop the common part
    for (std::size_t i = 0; i < n_; ++i) {
      const double m = std::min(z.a[i], z.t[i]);
      z.a[i] -= m;
      z.t[i] -= m;
    }
  }

  const SvrProblem& p_;
  std::size_t d_;
  double lip_;
  std::size_t n_;
};

// Projected gradient ascent with Nesterov extrapolation. Whenever the
// extrapolated step would lower the objective, momentum is reset and a plain
// step from the current point is taken instead, so the objective never drops.
DimResult solve_one(const SvrProblem& p, std::size_t d, double lip, const SolverOptions& opt) {
  const std::size_t n = p.keys.rows();
  DimSolver ds(p, d, lip);
  Point x;
  x.a.assign(n, 0.0);
  x.t.assign(n, 0.0);
  ds.evaluate(x);
  Point prev = x;
  double theta = 1.0;
  DimResult r;
  r.residual = ds.residual(x);
  if (r.residual <= opt.tol) {
    r.a = x.a;
    r.t = x.t;
    return r;
  }

  Point y;
  for (std::size_t it = 1; it <= opt.max_iters; ++it) {
    const double theta_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * theta * theta));
    const double mom = (theta - 1.0) / theta_next;
    y.a.resize(n);
    y.t.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      y.a[i] = x.a[i] + mom * (x.a[i] - prev.a[i]);
      y.t[i] = x.t[i] + mom * (x.t[i] - prev.t[i]);
    }
    ds.evaluate(y);
    Point z = ds.step_from(y.a, y.t, y.gb);
    ds.evaluate(z);
    if (z.f < x.f) {
      z = ds.step_from(x.a, x.t, x.gb);
      ds.evaluate(z);
      theta = 1.0;
    } else {
      theta = theta_next;
    }
    prev = std::move(x);
    x = std::move(z);
    r.iters = it;
    if (opt.observer) opt.observer(d, it, x.f);
    r.residual = ds.residual(x);
    if (r.residual <= opt.tol) {
      r.a = x.a;
      r.t = x.t;
      return r;
    }
  }
  throw ConvergenceError("solve_dual: output dim " + std::to_string(d) + " did not converge in " +
                             std::to_string(opt.max_iters) + " iterations (residual " +
                             std::to_string(r.residual) + ")",
                         r.residual);
}

// b from the KKT conditions given w: free multipliers pin it exactly,
// otherwise the bounded ones give an interval and we take its midpoint.
double recover_bias(const SvrProblem& p, std::size_t d, const std::vector<double>& a, const std::vector<double>& t,
                    const std::vector<double>& fit) {
  const double c = p.c, eps = p.eps_tube;
  const double tiny = 1e-12 * c;
  double lo_free = std::numeric_limits<double>::infinity(), hi_free = -lo_free;
  double lower = -std::numeric_limits<double>::infinity(), upper = -lower;
  for (std::size_t j = 0; j < a.size(); ++j) {
    const double r = p.targets(j, d) - fit[j];
    if (a[j] > tiny && a[j] < c - tiny) {
      lo_free = std::min(lo_free, r - eps);
      hi_free = std::max(hi_free, r - eps);
    }
    if (t[j] > tiny && t[j] < c - tiny) {
      lo_free = std::min(lo_free, r + eps);
      hi_free = std::max(hi_free, r + eps);
    }
    if (a[j] < c - tiny) lower = std::max(lower, r - eps);
    if (a[j] > tiny) upper = std::min(upper, r - eps);
    if (t[j] < c - tiny) upper = std::min(upper, r + eps);
    if (t[j] > tiny) lower = std::max(lower, r + eps);
  }
  if (lo_free <= hi_free) return 0.5 * (lo_free + hi_free);
  if (std::isfinite(lower) && std::isfinite(upper)) return 0.5 * (lower + upper);
  if (std::isfinite(lower)) return lower;
  if (std::isfinite(upper)) return upper;
  return 0.0;
}

}  // namespace

double dual_objective(const SvrProblem& p, std::size_t d, std::span<const double> alpha,
                      std::span<const double> alpha_tilde) {
  const std::size_t n = p.keys.rows();
  std::vector<double> beta(n);
  for (std::size_t i = 0; i < n; ++i) beta[i] = alpha[i] - alpha_tilde[i];
  const auto& kern = simd::active();
  double quad = 0.0, lin = 0.0, pen = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    quad += beta[i] * kern.dot(p.gram.row(i), beta);
    lin += p.targets(i, d) * beta[i];
    pen += alpha[i] + alpha_tilde[i];
  }
  return -0.5 * quad - p.eps_tube * pen + lin;
}

SvrSolution solve_dual(const SvrProblem& problem, std::size_t max_iters, double tol) {
  SolverOptions opt;
  opt.max_iters = max_iters;
  opt.tol = tol;
  return solve_dual(problem, opt);
}

SvrSolution solve_dual(const SvrProblem& p, const SolverOptions& options) {
  if (options.max_iters == 0) throw ParameterError("solve_dual: max_iters must be >= 1");
  if (!(options.tol > 0.0)) throw ParameterError("solve_dual: tol must be positive");
  const std::size_t n = p.keys.rows();
  const std::size_t dv = p.targets.cols();

  // Hessian of the dual in (alpha, alpha_tilde) is [[G,-G],[-G,G]], top eigenvalue 2 lambda_max(G).
  double trace = 0.0;
  for (std::size_t i = 0; i < n; ++i) trace += p.gram(i, i);
  double lip = 2.0 * std::min(trace, symmetric_max_eigenvalue(p.gram) * (1.0 + 1e-9) + 1e-300);
  if (!(lip > 0.0)) lip = 1.0;

  SvrSolution sol;
  sol.alpha = Matrix(n, dv);
  sol.alpha_tilde = Matrix(n, dv);
  sol.v = Matrix(n, dv);
  sol.w = Matrix(dv, p.psi.cols());
  sol.b.assign(dv, 0.0);

  for (std::size_t d = 0; d < dv; ++d) {
    DimResult r = solve_one(p, d, lip, options);
    sol.kkt_residual = std::max(sol.kkt_residual, r.residual);
    sol.iterations += r.iters;
    for (std::size_t j = 0; j < n; ++j) {
      sol.alpha(j, d) = r.a[j];
      sol.alpha_tilde(j, d) = r.t[j];
      const double beta = r.a[j] - r.t[j];
      sol.v(j, d) = beta / p.h_keys[j];
      if (beta != 0.0) simd::active().axpy(beta, p.psi.row(j), sol.w.row(d));
    }
    if (p.fit_bias) {
      std::vector<double> fit(n);
      for (std::size_t j = 0; j < n; ++j) fit[j] = simd::active().dot(sol.w.row(d), p.psi.row(j));
      sol.b[d] = recover_bias(p, d, r.a, r.t, fit);
    }
  }
  return sol;
}

}  // namespace svrattn
