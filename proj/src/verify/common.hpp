// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <string>

#include "svrattn/rng.hpp"
#include "svrattn/tensor.hpp"
#include "svrattn/verify.hpp"

namespace svrattn::detail {

inline Matrix random_matrix(SplitMix64& rng, std::size_t rows, std::size_t cols, double lo = -1.0, double hi = 1.0) {
  Matrix m(rows, cols);
  for (double& x : m.data()) x = rng.uniform(lo, hi);
  return m;
}

inline std::size_t pick(SplitMix64& rng, std::size_t lo, std::size_t hi) {
  return static_cast<std::size_t>(rng.range(lo, hi));
}

// Rescales every row to unit Euclidean norm.
inline Matrix unit_rows(Matrix m) {
  for (std::size_t r = 0; r < m.rows(); ++r) {
    double s = 0.0;
    for (double x : m.row(r)) s += x * x;
    s = std::sqrt(s);
    if (s > 0.0)
      for (double& x : m.row(r)) x /= s;
  }
  return m;
}

// Running max of errors over trials.
class Tally {
 public:
  Tally(std::string name, double tol, bool relative = false) : relative_(relative) {
    r_.name = std::move(name);
    r_.tolerance = tol;
  }

  void add(std::size_t trial, double abs_err, double rel_err = 0.0) {
    ++r_.cases_run;
    if (std::isnan(abs_err)) abs_err = INFINITY;
    if (std::isnan(rel_err)) rel_err = INFINITY;
    r_.max_abs_error = std::max(r_.max_abs_error, abs_err);
    r_.max_rel_error = std::max(r_.max_rel_error, rel_err);
    const double e = relative_ ? rel_err : abs_err;
    if (!(e <= r_.tolerance)) fail(trial);
  }

  void fail(std::size_t trial) {
    if (r_.passed) r_.first_failing_trial = trial;
    r_.passed = false;
  }

  CheckReport done() const { return r_; }

 private:
  bool relative_;
  CheckReport r_;
};

}  // namespace svrattn::detail
