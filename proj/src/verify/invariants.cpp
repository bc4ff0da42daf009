// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cmath>
#include <numeric>

#include "common.hpp"
#include "svrattn/errors.hpp"

namespace svrattn {

namespace {

using detail::pick;
using detail::random_matrix;
using detail::Tally;

constexpr GradVariant kWithMatrix[] = {GradVariant::Softmax, GradVariant::Sparse,  GradVariant::BnFull,
                                       GradVariant::BnRecenter, GradVariant::Conv1D, GradVariant::Conv2D,
                                       GradVariant::FullResidual};
constexpr GradVariant kHull[] = {GradVariant::Softmax, GradVariant::LinearElu, GradVariant::LinearExp,
                                 GradVariant::Sparse,  GradVariant::BnFull,    GradVariant::BnRecenter,
                                 GradVariant::Conv1D,  GradVariant::Conv2D};
constexpr GradVariant kPermutable[] = {GradVariant::Softmax, GradVariant::LinearElu, GradVariant::LinearExp,
                                       GradVariant::BnFull, GradVariant::BnRecenter};

double row_sum_error(const Matrix& a) {
  double err = 0.0;
  for (std::size_t i = 0; i < a.rows(); ++i) {
    double s = 0.0;
    for (double x : a.row(i)) {
      s += x;
      err = std::max(err, -x);
    }
    err = std::max(err, std::abs(s - 1.0));
  }
  return err;
}

std::vector<std::size_t> shuffled(SplitMix64& rng, std::size_t n) {
  std::vector<std::size_t> p(n);
  std::iota(p.begin(), p.end(), 0);
  for (std::size_t i = n; i > 1; --i) std::swap(p[i - 1], p[pick(rng, 0, i - 1)]);
  return p;
}

}  // namespace

std::vector<CheckReport> invariant_suite(std::uint64_t seed, std::size_t trials) {
  if (trials == 0) throw ParameterError("invariant_suite: trials must be >= 1");
  std::vector<CheckReport> out;

  Tally rows("invariant/row_stochastic", 1e-10);
  for (std::size_t t = 0; t < trials; ++t) {
    SplitMix64 rng = SplitMix64::for_trial(seed ^ 0x101, t);
    double err = 0.0;
    for (GradVariant gv : kWithMatrix) {
      const GradInstance inst = random_grad_instance(gv, rng);
      err = std::max(err, row_sum_error(*attend(inst.spec, inst.q, inst.k, inst.v).a));
    }
    err = std::max(err, row_sum_error(row_softmax(random_matrix(rng, pick(rng, 1, 8), pick(rng, 1, 8), -1e3, 1e3))));
    rows.add(t, err);
  }
  out.push_back(rows.done());

  // min_j v_j(d) <= h_i(d) <= max_j v_j(d), excess reported
  Tally hull("invariant/convex_hull", 1e-12);
  for (std::size_t t = 0; t < trials; ++t) {
    SplitMix64 rng = SplitMix64::for_trial(seed ^ 0x102, t);
    double err = 0.0;
    for (GradVariant gv : kHull) {
      const GradInstance inst = random_grad_instance(gv, rng);
      const Matrix h = attend(inst.spec, inst.q, inst.k, inst.v).h;
      for (std::size_t c = 0; c < h.cols(); ++c) {
        double lo = INFINITY, hi = -INFINITY;
        for (std::size_t j = 0; j < inst.v.rows(); ++j) {
          lo = std::min(lo, inst.v(j, c));
          hi = std::max(hi, inst.v(j, c));
        }
        for (std::size_t i = 0; i < h.rows(); ++i) err = std::max({err, lo - h(i, c), h(i, c) - hi});
      }
    }
    hull.add(t, err);
  }
  out.push_back(hull.done());

  Tally perm("invariant/permutation_equivariance", 1e-12);
  for (std::size_t t = 0; t < trials; ++t) {
    SplitMix64 rng = SplitMix64::for_trial(seed ^ 0x103, t);
    double err = 0.0;
    for (GradVariant gv : kPermutable) {
      const GradInstance inst = random_grad_instance(gv, rng);
      const Matrix h = attend(inst.spec, inst.q, inst.k, inst.v).h;
      const auto pk = shuffled(rng, inst.k.rows());
      const Matrix h_kv = attend(inst.spec, inst.q, permute_rows(inst.k, pk), permute_rows(inst.v, pk)).h;
      const auto pq = shuffled(rng, inst.q.rows());
      const Matrix h_q = attend(inst.spec, permute_rows(inst.q, pq), inst.k, inst.v).h;
      err = std::max({err, max_abs_diff(h_kv, h), max_abs_diff(h_q, permute_rows(h, pq))});
    }
    perm.add(t, err);
  }
  out.push_back(perm.done());

  Tally shift("invariant/softmax_shift_invariance", 1e-12);
  for (std::size_t t = 0; t < trials; ++t) {
    SplitMix64 rng = SplitMix64::for_trial(seed ^ 0x104, t);
    const Matrix m = random_matrix(rng, pick(rng, 1, 8), pick(rng, 1, 8), -5.0, 5.0);
    Matrix shifted = m;
    for (std::size_t i = 0; i < m.rows(); ++i) {
      const double c = rng.uniform(-50.0, 50.0);
      for (double& x : shifted.row(i)) x += c;
    }
    shift.add(t, max_abs_diff(row_softmax(m), row_softmax(shifted)));
  }
  out.push_back(shift.done());

  return out;
}

}  // namespace svrattn
