// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cmath>

#include "svrattn/errors.hpp"
#include "svrattn/simd.hpp"
#include "svrattn/svr.hpp"

namespace svrattn {

double KktReport::worst() const { return std::max({box, complementarity, tube, stationarity, bias, value_bound}); }

KktReport kkt_check(const SvrProblem& p, const SvrSolution& sol) {
  const std::size_t n = p.keys.rows();
  const std::size_t dv = p.targets.cols();
  if (sol.alpha.rows() != n || sol.alpha.cols() != dv || sol.alpha_tilde.rows() != n ||
      sol.alpha_tilde.cols() != dv || sol.w.rows() != dv || sol.w.cols() != p.psi.cols() || sol.b.size() != dv) {
    throw ShapeError("kkt_check: solution shapes do not match the problem");
  }
  const double c = p.c;
  const auto& kern = simd::active();
  KktReport rep;
  std::vector<double> w_ref(p.psi.cols());
  for (std::size_t d = 0; d < dv; ++d) {
    std::fill(w_ref.begin(), w_ref.end(), 0.0);
    double beta_sum = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double a = sol.alpha(j, d), t = sol.alpha_tilde(j, d);
      rep.box = std::max({rep.box, -a, a - c, -t, t - c});
      rep.complementarity = std::max(rep.complementarity, a * t);
      const double beta = a - t;
      beta_sum += beta;
      kern.axpy(beta, p.psi.row(j), w_ref);
      rep.value_bound = std::max(rep.value_bound, std::abs(beta / p.h_keys[j]) - c / p.h_keys[j]);

      const double r = p.targets(j, d) - (kern.dot(sol.w.row(d), p.psi.row(j)) + sol.b[d]);
      const double ga = r - p.eps_tube, gt = -r - p.eps_tube;
      rep.tube = std::max({rep.tube, std::abs(std::clamp(a + ga, 0.0, c) - a), std::abs(std::clamp(t + gt, 0.0, c) - t)});
    }
    for (std::size_t f = 0; f < w_ref.size(); ++f) {
      rep.stationarity = std::max(rep.stationarity, std::abs(sol.w(d, f) - w_ref[f]));
    }
    if (p.fit_bias) rep.bias = std::max(rep.bias, std::abs(beta_sum));
  }
  rep.value_bound = std::max(rep.value_bound, 0.0);
  return rep;
}

}  // namespace svrattn
