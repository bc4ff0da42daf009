// SPDX-License-Identifier: Apache-2.0
#include <cmath>

#include "common.hpp"
#include "svrattn/errors.hpp"
#include "svrattn/svr.hpp"

namespace svrattn {

std::vector<CheckReport> svr_suite(std::uint64_t seed, std::size_t instances) {
  using detail::pick;
  using detail::random_matrix;
  if (instances == 0) throw ParameterError("svr_suite: instances must be >= 1");

  detail::Tally primal_dual("svr/primal_equals_dual", 1e-8);
  detail::Tally box("svr/box", 0.0);
  detail::Tally comp("svr/complementarity_over_c2", 1e-8);
  detail::Tally stat("svr/stationarity", 1e-6);
  detail::Tally bias("svr/bias_balance", 1e-6);
  detail::Tally tube("svr/tube_slackness", 1e-6);
  detail::Tally bound("svr/value_bound_relative", 1e-8);

  for (std::size_t t = 0; t < instances; ++t) {
    SplitMix64 rng = SplitMix64::for_trial(seed ^ 0x5e5, t);
    // cycle through the four normalizer / bias combinations
    const Normalizer norm = (t % 2 == 0) ? Normalizer::HSoftmax : Normalizer::HOne;
    const bool fit_bias = (t / 2) % 2 == 1;
    const std::size_t n = pick(rng, 2, 8), d = pick(rng, 1, 3), dv = pick(rng, 1, 2);
    const std::size_t which = pick(rng, 0, 2);
    FeatureMapSpec fm = which == 0   ? FeatureMapSpec::exp_truncated(2 * pick(rng, 1, 2), d)
                        : which == 1 ? FeatureMapSpec::elu_plus_one(d)
                        : norm == Normalizer::HOne ? FeatureMapSpec::identity(d)
                                                   : FeatureMapSpec::exp_truncated(4, d);
    const Matrix keys = random_matrix(rng, n, d), y = random_matrix(rng, n, dv);
    const double c = rng.uniform(0.5, 5.0), eps = rng.uniform(0.05, 0.3);
    try {
      const SvrProblem p = build_problem(keys, y, fm, norm, c, eps, fit_bias);
      const SvrSolution s = solve_dual(p);
      double pd = 0.0;
      for (int qi = 0; qi < 50; ++qi) {
        const Matrix x = random_matrix(rng, 1, d);
        const auto a = primal_eval(s, p, x.row(0));
        const auto b = dual_expansion_eval(s, p, x.row(0));
        for (std::size_t k = 0; k < dv; ++k) pd = std::max(pd, std::abs(a[k] - b[k]));
      }
      primal_dual.add(t, pd);
      const KktReport r = kkt_check(p, s);
      box.add(t, r.box);
      comp.add(t, r.complementarity / (c * c));
      stat.add(t, r.stationarity);
      tube.add(t, r.tube);
      if (fit_bias) bias.add(t, r.bias);
      double rel = 0.0;
      for (std::size_t j = 0; j < n; ++j)
        for (std::size_t k = 0; k < dv; ++k) rel = std::max(rel, std::abs(s.v(j, k)) * p.h_keys[j] / c - 1.0);
      bound.add(t, std::max(rel, 0.0));
    } catch (const Error&) {
      for (auto* tally : {&primal_dual, &box, &comp, &stat, &tube, &bound}) tally->add(t, INFINITY);
    }
  }
  return {primal_dual.done(), box.done(), comp.done(), stat.done(), bias.done(), tube.done(), bound.done()};
}

}  // namespace svrattn
