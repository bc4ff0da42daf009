// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "svrattn/featuremap.hpp"
#include "svrattn/tensor.hpp"

namespace svrattn {

/// h(x) = sum_j Phi(x).Phi(k_j) (HSoftmax) or h = 1 (HOne).
enum class Normalizer { HSoftmax, HOne };

const char* normalizer_name(Normalizer n);

/// Epsilon-insensitive regression of targets on Phi(k_j)/h(k_j).
///
/// Built by build_problem, which validates the inputs and caches the scaled
/// features psi_j = Phi(k_j)/h(k_j) and their Gram matrix.
struct SvrProblem {
  Matrix keys;     // N x D
  Matrix targets;  // N x D_v
  FeatureMapSpec fmap = FeatureMapSpec::identity(1);
  Normalizer normalizer = Normalizer::HOne;
  double c = 1.0;
  double eps_tube = 0.0;
  bool fit_bias = false;

  std::vector<double> h_keys;  // h(k_j)
  Matrix psi;                  // N x F
  Matrix gram;                 // N x N, psi psi^T
};

SvrProblem build_problem(const Matrix& keys, const Matrix& targets, const FeatureMapSpec& fmap,
                         Normalizer normalizer, double c, double eps_tube, bool fit_bias = false);

struct SvrSolution {
  Matrix w;                 // D_v x F
  std::vector<double> b;    // D_v, zero unless fit_bias
  Matrix alpha;             // N x D_v
  Matrix alpha_tilde;       // N x D_v
  Matrix v;                 // N x D_v, (alpha - alpha_tilde) / h(k_j)
  double kkt_residual = 0;  // largest final projected-gradient residual over output dims
  std::size_t iterations = 0;  // summed over output dims
};

struct SolverOptions {
  std::size_t max_iters = 200000;
  double tol = 1e-8;
  /// Called after every iteration with (output dim, iteration, dual objective).
  /// Evaluating the objective costs O(N^2) per call, so leave empty unless needed.
  std::function<void(std::size_t, std::size_t, double)> observer;
};

/// Projected gradient ascent on the dual, one output dimension at a time.
/// Throws ConvergenceError if any dimension fails to reach `tol`.
SvrSolution solve_dual(const SvrProblem& problem, const SolverOptions& options = {});
SvrSolution solve_dual(const SvrProblem& problem, std::size_t max_iters, double tol);

/// -1/2 beta^T G beta - eps sum(alpha + alpha_tilde) + y_d^T beta, beta = alpha - alpha_tilde.
double dual_objective(const SvrProblem& problem, std::size_t dim, std::span<const double> alpha,
                      std::span<const double> alpha_tilde);

/// Largest eigenvalue of a symmetric matrix (cyclic Jacobi; meant for small N).
double symmetric_max_eigenvalue(const Matrix& m);

/// h(x) for the problem's normalizer; throws NumericalDomainError if h(x) <= 0.
double problem_h(const SvrProblem& problem, std::span<const double> x);

/// W Phi(x) / h(x) + b.
std::vector<double> primal_eval(const SvrSolution& sol, const SvrProblem& problem, std::span<const double> x);

/// sum_j (Phi(x).Phi(k_j) / h(x)) v_j + b, never reading W.
std::vector<double> dual_expansion_eval(const SvrSolution& sol, const SvrProblem& problem,
                                        std::span<const double> x);

/// The coefficients Phi(x).Phi(k_j) / h(x) multiplying v_j in the expansion.
/// With HSoftmax they sum to 1 over j.
std::vector<double> expansion_weights(const SvrProblem& problem, std::span<const double> x);

struct KktReport {
  double box = 0;              // max distance of alpha, alpha_tilde outside [0, C]
  double complementarity = 0;  // max alpha * alpha_tilde
  double tube = 0;             // max |clip(a + g, 0, C) - a| over both multipliers
  double stationarity = 0;     // max |w - sum_j beta_j psi_j|
  double bias = 0;             // max |sum_j beta_j| per dim, 0 when b is fixed
  double value_bound = 0;      // max(0, |v_j| - C / h(k_j))

  double worst() const;
};

KktReport kkt_check(const SvrProblem& problem, const SvrSolution& sol);

}  // namespace svrattn
