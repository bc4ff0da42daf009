// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <string>

#include "svrattn/errors.hpp"
#include "svrattn/simd.hpp"
#include "svrattn/svr.hpp"

namespace svrattn {

const char* normalizer_name(Normalizer n) { return n == Normalizer::HSoftmax ? "softmax" : "one"; }

SvrProblem build_problem(const Matrix& keys, const Matrix& targets, const FeatureMapSpec& fmap,
                         Normalizer normalizer, double c, double eps_tube, bool fit_bias) {
  if (keys.rows() == 0) throw ShapeError("build_problem: no keys");
  if (keys.rows() != targets.rows()) {
    throw ShapeError("build_problem: keys " + keys.shape_str() + " vs targets " + targets.shape_str());
  }
  if (targets.cols() == 0) throw ShapeError("build_problem: targets have no columns");
  if (keys.cols() != fmap.input_dim()) {
    throw ShapeError("build_problem: keys have " + std::to_string(keys.cols()) + " columns, feature map expects " +
                     std::to_string(fmap.input_dim()));
  }
  if (!(c > 0.0) || !std::isfinite(c)) throw ParameterError("build_problem: C must be positive, got " + std::to_string(c));
  if (!(eps_tube >= 0.0) || !std::isfinite(eps_tube)) {
    throw ParameterError("build_problem: eps_tube must be >= 0, got " + std::to_string(eps_tube));
  }

  SvrProblem p;
  p.keys = keys;
  p.targets = targets;
  p.fmap = fmap;
  p.normalizer = normalizer;
  p.c = c;
  p.eps_tube = eps_tube;
  p.fit_bias = fit_bias;

  const std::size_t n = keys.rows();
  Matrix phi = phi_rows(fmap, keys);
  p.h_keys.assign(n, 1.0);
  if (normalizer == Normalizer::HSoftmax) {
    const auto& kern = simd::active();
    for (std::size_t i = 0; i < n; ++i) {
      double h = 0.0;
      for (std::size_t j = 0; j < n; ++j) h += kern.dot(phi.row(i), phi.row(j));
      if (!(h > 0.0)) {
        throw NumericalDomainError("build_problem: h(k_" + std::to_string(i) + ") = " + std::to_string(h) +
                                   " is not positive");
      }
      p.h_keys[i] = h;
    }
  }
  p.psi = phi;
  for (std::size_t i = 0; i < n; ++i) simd::active().scale(1.0 / p.h_keys[i], p.psi.row(i));
  p.gram = matmul_nt(p.psi, p.psi);
  return p;
}

double problem_h(const SvrProblem& problem, std::span<const double> x) {
  if (x.size() != problem.keys.cols()) {
    throw ShapeError("query has " + std::to_string(x.size()) + " entries, keys have " +
                     std::to_string(problem.keys.cols()));
  }
  if (problem.normalizer == Normalizer::HOne) return 1.0;
  const double h = h_normalizer(problem.fmap, x, problem.keys);
  if (!(h > 0.0)) throw NumericalDomainError("h(x) = " + std::to_string(h) + " is not positive");
  return h;
}

std::vector<double> primal_eval(const SvrSolution& sol, const SvrProblem& problem, std::span<const double> x) {
  const double h = problem_h(problem, x);
  const std::vector<double> phi = phi_apply(problem.fmap, x);
  const auto& kern = simd::active();
  std::vector<double> out(sol.w.rows());
  for (std::size_t d = 0; d < out.size(); ++d) out[d] = kern.dot(sol.w.row(d), phi) / h + sol.b[d];
  return out;
}

std::vector<double> expansion_weights(const SvrProblem& problem, std::span<const double> x) {
  const double h = problem_h(problem, x);
  const std::vector<double> phi = phi_apply(problem.fmap, x);
  const auto& kern = simd::active();
  std::vector<double> wts(problem.keys.rows());
  for (std::size_t j = 0; j < wts.size(); ++j) {
    wts[j] = kern.dot(phi, phi_apply(problem.fmap, problem.keys.row(j))) / h;
  }
  return wts;
}

std::vector<double> dual_expansion_eval(const SvrSolution& sol, const SvrProblem& problem,
                                        std::span<const double> x) {
  const std::vector<double> wts = expansion_weights(problem, x);
  std::vector<double> out(sol.b);
  for (std::size_t j = 0; j < wts.size(); ++j) {
    for (std::size_t d = 0; d < out.size(); ++d) out[d] += wts[j] * sol.v(j, d);
  }
  return out;
}

double symmetric_max_eigenvalue(const Matrix& m) {
  if (m.rows() != m.cols()) throw ShapeError("symmetric_max_eigenvalue: " + m.shape_str() + " is not square");
  const std::size_t n = m.rows();
  if (n == 0) return 0.0;
  Matrix a = m;
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) off += a(p, q) * a(p, q);
    if (off < 1e-30) break;
    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        if (a(p, q) == 0.0) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * a(p, q));
        const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double cs = 1.0 / std::sqrt(t * t + 1.0);
        const double sn = t * cs;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a(k, p), akq = a(k, q);
          a(k, p) = cs * akp - sn * akq;
          a(k, q) = sn * akp + cs * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = a(p, k), aqk = a(q, k);
          a(p, k) = cs * apk - sn * aqk;
          a(q, k) = sn * apk + cs * aqk;
        }
      }
    }
  }
  double top = a(0, 0);
  for (std::size_t i = 1; i < n; ++i) top = std::max(top, a(i, i));
  return top;
}

}  // namespace svrattn
