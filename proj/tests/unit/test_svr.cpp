// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <vector>

#include "doctest.h"
#include "oracles.hpp"
#include "svrattn/errors.hpp"
#include "svrattn/svr.hpp"

using namespace svrattn;

namespace {

std::vector<std::vector<double>> gram_of(const SvrProblem& p) {
  std::vector<std::vector<double>> g(p.keys.rows(), std::vector<double>(p.keys.rows()));
  for (std::size_t i = 0; i < p.keys.rows(); ++i)
    for (std::size_t j = 0; j < p.keys.rows(); ++j) g[i][j] = p.gram(i, j);
  return g;
}

std::vector<double> column(const Matrix& m, std::size_t c) {
  std::vector<double> out(m.rows());
  for (std::size_t i = 0; i < m.rows(); ++i) out[i] = m(i, c);
  return out;
}

struct RandomCase {
  SvrProblem problem;
  std::uint64_t seed;
};

RandomCase random_case(std::uint64_t seed, Normalizer norm, bool bias) {
  SplitMix64 rng(seed);
  const std::size_t n = rng.range(2, 8), d = rng.range(1, 3), dv = rng.range(1, 2);
  const Matrix keys = oracle::random(rng, n, d), targets = oracle::random(rng, n, dv);
  const FeatureMapSpec fmap = rng.range(0, 1) == 0 ? FeatureMapSpec::exp_truncated(4, d) : FeatureMapSpec::elu_plus_one(d);
  const double c = rng.uniform(0.5, 5), eps = rng.uniform(0.05, 0.3);
  return {build_problem(keys, targets, fmap, norm, c, eps, bias), seed};
}

}  // namespace

TEST_CASE("build_problem examples") {
  const Matrix k = Matrix::from_rows({{0.5, -2, 1}});
  const auto p = build_problem(k, Matrix::from_rows({{1}}), FeatureMapSpec::identity(3), Normalizer::HOne, 1, 0);
  CHECK(p.gram(0, 0) == doctest::Approx(0.25 + 4 + 1));

  const Matrix same = Matrix::from_rows({{0.3, 0.1}, {0.3, 0.1}, {0.3, 0.1}});
  const auto f = FeatureMapSpec::exp_truncated(4, 2);
  const auto ps = build_problem(same, Matrix(3, 1), f, Normalizer::HSoftmax, 1, 0.1);
  const double kk = kernel_eval(f, same.row(0), same.row(0));
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j) CHECK(ps.gram(i, j) == doctest::Approx(kk / (9 * kk * kk)).epsilon(1e-14));

  SplitMix64 rng(81);
  for (auto norm : {Normalizer::HOne, Normalizer::HSoftmax}) {
    const Matrix keys = oracle::random(rng, 4, 2);
    const auto pr = build_problem(keys, Matrix(4, 2), f, norm, 1, 0.1);
    for (std::size_t i = 0; i < 4; ++i)
      for (std::size_t j = 0; j < 4; ++j) {
        const double hi = norm == Normalizer::HOne ? 1.0 : h_normalizer(f, keys.row(i), keys);
        const double hj = norm == Normalizer::HOne ? 1.0 : h_normalizer(f, keys.row(j), keys);
        CHECK(std::abs(pr.gram(i, j) - kernel_eval(f, keys.row(i), keys.row(j)) / (hi * hj)) <= 1e-12);
      }
  }
}

TEST_CASE("build_problem errors") {
  const Matrix k = Matrix::from_rows({{1}, {-1}});
  const auto id = FeatureMapSpec::identity(1);
  CHECK_THROWS_AS(build_problem(k, Matrix(2, 1), id, Normalizer::HOne, 0, 0), ParameterError);
  CHECK_THROWS_AS(build_problem(k, Matrix(2, 1), id, Normalizer::HOne, 1, -0.1), ParameterError);
  CHECK_THROWS_AS(build_problem(k, Matrix(3, 1), id, Normalizer::HOne, 1, 0), ShapeError);
  // h(k_j) = k_j (k_1 + k_2) = 0 with the identity map
  CHECK_THROWS_AS(build_problem(k, Matrix(2, 1), id, Normalizer::HSoftmax, 1, 0), NumericalDomainError);
}

TEST_CASE("solve_dual hand examples") {
  SUBCASE("a target inside the tube needs no support vectors") {
    const auto p = build_problem(Matrix::from_rows({{0.7}}), Matrix::from_rows({{0.05}}), FeatureMapSpec::identity(1),
                                 Normalizer::HOne, 1, 0.1);
    const auto sol = solve_dual(p);
    CHECK(sol.alpha(0, 0) == 0);
    CHECK(sol.alpha_tilde(0, 0) == 0);
    CHECK(max_abs(sol.w) == 0);
    const std::vector<double> x{0.3};
    CHECK(primal_eval(sol, p, x)[0] == 0);
    const auto r = kkt_check(p, sol);
    CHECK(r.worst() == 0);
  }
  SUBCASE("two points interpolated exactly") {
    const auto p = build_problem(Matrix::from_rows({{1}, {-1}}), Matrix::from_rows({{1}, {-1}}),
                                 FeatureMapSpec::identity(1), Normalizer::HOne, 100, 0);
    const auto sol = solve_dual(p);
    CHECK(sol.alpha(0, 0) - sol.alpha_tilde(0, 0) == doctest::Approx(0.5).epsilon(1e-9));
    CHECK(sol.alpha(1, 0) - sol.alpha_tilde(1, 0) == doctest::Approx(-0.5).epsilon(1e-9));
    CHECK(sol.w(0, 0) == doctest::Approx(1).epsilon(1e-9));
    const std::vector<double> x{1.0};
    CHECK(primal_eval(sol, p, x)[0] == doctest::Approx(1).epsilon(1e-9));
    CHECK(dual_expansion_eval(sol, p, x)[0] == doctest::Approx(1).epsilon(1e-9));
  }
}

TEST_CASE("objective matches the slow reference solver") {
  int n_cases = 0;
  for (std::uint64_t seed = 100; seed < 140; ++seed) {
    const Normalizer norm = seed % 2 ? Normalizer::HSoftmax : Normalizer::HOne;
    const bool bias = (seed / 2) % 2;
    const auto rc = random_case(seed, norm, bias);
    const auto& p = rc.problem;
    const auto sol = solve_dual(p);
    const auto g = gram_of(p);
    for (std::size_t d = 0; d < p.targets.cols(); ++d) {
      const auto y = column(p.targets, d);
      const auto beta_ref = oracle::svr_reference(g, y, p.c, p.eps_tube, bias);
      std::vector<double> beta(p.keys.rows());
      for (std::size_t j = 0; j < beta.size(); ++j) beta[j] = sol.alpha(j, d) - sol.alpha_tilde(j, d);
      CAPTURE(seed);
      CAPTURE(d);
      const double ours = oracle::svr_objective(g, y, beta, p.eps_tube);
      const double ref = oracle::svr_objective(g, y, beta_ref, p.eps_tube);
      CHECK(std::abs(ours - ref) <= 1e-5);
      // the library's own objective agrees with the oracle's beta-space form
      CHECK(dual_objective(p, d, column(sol.alpha, d), column(sol.alpha_tilde, d)) == doctest::Approx(ours).epsilon(1e-10));
    }
    const auto r = kkt_check(p, sol);
    CHECK(r.box == 0);
    CHECK(r.complementarity <= 1e-8 * p.c * p.c);
    CHECK(r.stationarity <= 1e-6);
    CHECK(r.bias <= 1e-6);
    CHECK(r.tube <= 1e-6);
    CHECK(r.value_bound == 0);
    ++n_cases;
  }
  CHECK(n_cases == 40);
}

TEST_CASE("primal and dual expansion agree") {
  SplitMix64 rng(82);
  for (std::uint64_t seed = 200; seed < 220; ++seed) {
    const auto rc = random_case(seed, seed % 2 ? Normalizer::HSoftmax : Normalizer::HOne, (seed / 2) % 2);
    const auto sol = solve_dual(rc.problem);
    for (int q = 0; q < 50; ++q) {
      std::vector<double> x(rc.problem.keys.cols());
      for (double& c : x) c = rng.uniform(-1, 1);
      const auto a = primal_eval(sol, rc.problem, x), b = dual_expansion_eval(sol, rc.problem, x);
      for (std::size_t d = 0; d < a.size(); ++d) CHECK(std::abs(a[d] - b[d]) <= 1e-8);
    }
  }
}

TEST_CASE("softmax normalizer gives softmax expansion weights") {
  SplitMix64 rng(83);
  const std::size_t d = 2;
  const Matrix keys = oracle::random(rng, 5, d, -0.7, 0.7);
  const auto p = build_problem(keys, oracle::random(rng, 5, 1), FeatureMapSpec::exp_truncated(8, d),
                               Normalizer::HSoftmax, 1, 0.1);
  for (int t = 0; t < 20; ++t) {
    const Matrix x = oracle::random(rng, 1, d, -0.7, 0.7);
    const auto w = expansion_weights(p, x.row(0));
    const auto ref = oracle::softmax_attention(x, keys, Matrix::identity(5)).h;
    double sum = 0;
    for (std::size_t j = 0; j < 5; ++j) {
      CHECK(w[j] >= 0);
      CHECK(std::abs(w[j] - ref(0, j)) <= 1e-5);
      sum += w[j];
    }
    CHECK(std::abs(sum - 1) <= 1e-12);
  }
}

TEST_CASE("zero dual variables give b or zero") {
  const auto p = build_problem(Matrix::from_rows({{1}, {2}}), Matrix::from_rows({{3}, {4}}),
                               FeatureMapSpec::identity(1), Normalizer::HOne, 1, 0.1);
  SvrSolution sol;
  sol.w = Matrix(1, 1);
  sol.alpha = Matrix(2, 1);
  sol.alpha_tilde = Matrix(2, 1);
  sol.v = Matrix(2, 1);
  sol.b = {0.0};
  const std::vector<double> x{5.0};
  CHECK(dual_expansion_eval(sol, p, x)[0] == 0);
  sol.b = {2.5};
  CHECK(dual_expansion_eval(sol, p, x)[0] == 2.5);
  CHECK(primal_eval(sol, p, x)[0] == 2.5);
}

TEST_CASE("kkt_check reports a constructed box violation as C") {
  const auto rc = random_case(300, Normalizer::HOne, false);
  auto sol = solve_dual(rc.problem);
  sol.alpha(0, 0) = 2 * rc.problem.c;
  sol.alpha_tilde(0, 0) = 0;
  CHECK(kkt_check(rc.problem, sol).box == doctest::Approx(rc.problem.c));
}

TEST_CASE("dual objective never decreases") {
  for (std::uint64_t seed = 400; seed < 410; ++seed) {
    const auto rc = random_case(seed, seed % 2 ? Normalizer::HSoftmax : Normalizer::HOne, seed % 3 == 0);
    std::vector<double> last(rc.problem.targets.cols(), -INFINITY);
    bool monotone = true;
    SolverOptions opts;
    opts.observer = [&](std::size_t d, std::size_t, double obj) {
      if (obj < last[d] - 1e-12 * (1 + std::abs(obj))) monotone = false;
      last[d] = obj;
    };
    (void)solve_dual(rc.problem, opts);
    CHECK(monotone);
  }
}

TEST_CASE("large C leaves every residual inside the tube") {
  SplitMix64 rng(84);
  for (int t = 0; t < 10; ++t) {
    const std::size_t n = rng.range(2, 6);
    const Matrix keys = oracle::random(rng, n, 2), y = oracle::random(rng, n, 1);
    // exp degree 8 features in 2-D are rich enough to interpolate a handful of points
    const auto p = build_problem(keys, y, FeatureMapSpec::exp_truncated(8, 2), Normalizer::HOne, 1e4, 0.1);
    SolverOptions opts;
    opts.max_iters = 2000000;
    const auto sol = solve_dual(p, opts);
    for (std::size_t j = 0; j < n; ++j)
      CHECK(std::abs(primal_eval(sol, p, keys.row(j))[0] - y(j, 0)) <= 0.1 + 1e-6);
  }
}

TEST_CASE("iteration cap raises a convergence error with the residual") {
  const auto rc = random_case(500, Normalizer::HOne, true);
  try {
    (void)solve_dual(rc.problem, 1, 1e-14);
    FAIL("no throw");
  } catch (const ConvergenceError& e) {
    CHECK(e.residual() > 1e-14);
  }
}

TEST_CASE("symmetric_max_eigenvalue") {
  CHECK(symmetric_max_eigenvalue(Matrix::from_rows({{2, 1}, {1, 2}})) == doctest::Approx(3));
  CHECK(symmetric_max_eigenvalue(Matrix::from_rows({{5}})) == 5);
  CHECK(symmetric_max_eigenvalue(Matrix::filled(4, 4, 1)) == doctest::Approx(4));
}
