// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "svrattn/attention.hpp"
#include "svrattn/rng.hpp"

namespace svrattn {

/// Outcome of one named check. Gradient checks pass on max_rel_error,
/// everything else on max_abs_error.
struct CheckReport {
  std::string name;
  double max_abs_error = 0.0;
  double max_rel_error = 0.0;
  double tolerance = 0.0;
  bool passed = true;
  std::size_t cases_run = 0;
  std::optional<std::size_t> first_failing_trial;  // replay with SplitMix64::for_trial(seed, trial)
};

// ------------------------------------------------------------ gradients

enum class GradVariant { Softmax, LinearElu, LinearExp, Sparse, BnFull, BnRecenter, Conv1D, Conv2D, FullResidual };

std::span<const GradVariant> all_grad_variants();
const char* grad_variant_name(GradVariant v);

struct GradInstance {
  AttentionSpec spec;
  Matrix q, k, v, dh;  // for FullResidual q == k == v == X
};

/// N in [2,6], D in [2,4], D_v in [1,3], entries uniform in [lo, hi].
GradInstance random_grad_instance(GradVariant variant, SplitMix64& rng, double lo = -1.0, double hi = 1.0);

struct GradErrors {
  double max_abs = 0.0;
  double max_rel = 0.0;
  std::size_t entries = 0;
};

/// attention_backward against central differences of <dh, h> for every
/// input entry and every parameter entry.
GradErrors gradcheck_instance(const GradInstance& inst, double step = 1e-5);

/// `trials` seeded instances plus one large-magnitude trial that must only
/// stay finite. Tolerance 1e-4 relative.
CheckReport gradcheck(GradVariant variant, std::size_t trials, std::uint64_t seed);

// --------------------------------------------------------------- suites

/// Max |Phi(x).Phi(y) - exp(x.y / sqrt(D))| over samples with |x.y / sqrt(D)| <= 1,
/// one report per degree. Each must sit under e / (T+1)! (and under 1e-5 at
/// T = 8), and the errors must not grow with T.
std::vector<CheckReport> kernel_approx_check(std::span<const std::size_t> t_values, std::size_t sample_count,
                                             std::uint64_t seed);

/// Algebraic identities between attention forms and the SVR expansion.
std::vector<CheckReport> identity_suite(std::uint64_t seed, std::size_t trials);

/// Row-stochasticity, convex hull, permutation equivariance, shift invariance.
std::vector<CheckReport> invariant_suite(std::uint64_t seed, std::size_t trials);

/// Solves random SVR instances covering both normalizers and both bias modes
/// and checks primal == dual plus every KKT condition.
std::vector<CheckReport> svr_suite(std::uint64_t seed, std::size_t instances);

/// Closed-form cost ratios for scales [1, 2].
std::vector<CheckReport> cost_suite();

/// Everything above with the default trial counts, in a fixed order.
std::vector<CheckReport> run_all(std::uint64_t seed);

bool all_passed(std::span<const CheckReport> reports);

/// Header `name,max_abs_error,max_rel_error,tolerance,passed,cases_run,first_failing_trial`.
void write_report_csv(std::ostream& out, std::span<const CheckReport> reports);

}  // namespace svrattn
