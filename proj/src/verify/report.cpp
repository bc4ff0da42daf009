// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cmath>

#include "common.hpp"
#include "svrattn/cost.hpp"
#include "svrattn/io.hpp"

namespace svrattn {

std::vector<CheckReport> cost_suite() {
  std::vector<CheckReport> out;
  const std::size_t sh[] = {1, 2}, base[] = {1, 1};
  const auto a = cost_heads_for_scales(sh), b = cost_heads_for_scales(base);

  detail::Tally scores("cost/score_flops_ratio_is_0.75", 0.0);
  detail::Tally mem("cost/attention_memory_ratio_is_0.75", 0.0);
  std::size_t i = 0;
  for (std::size_t n : {2, 64, 1024, 2048, 4096}) {
    for (std::size_t d : {16, 64, 128}) {
      const CostReport ra = flops_estimate(a, n, d, d, d), rb = flops_estimate(b, n, d, d, d);
      scores.add(i, std::abs(double(ra.flops_scores) / double(rb.flops_scores) - 0.75));
      mem.add(i, std::abs(double(ra.mem_attn_matrix) / double(rb.mem_attn_matrix) - 0.75));
      ++i;
    }
  }
  out.push_back(scores.done());
  out.push_back(mem.done());

  // total FLOPs including projections: the ratio must fall as n grows
  detail::Tally mono("cost/total_ratio_decreasing_in_n", 0.0);
  const std::size_t ns[] = {1024, 2048, 4096};
  std::size_t trial = 0;
  for (std::size_t d : {16, 64, 128}) {
    const std::size_t ds[] = {d};
    const auto rows = ratio_sweep(a, b, ns, ds);
    double worst = -INFINITY;
    for (std::size_t k = 1; k < rows.size(); ++k) worst = std::max(worst, rows[k].flops_ratio - rows[k - 1].flops_ratio);
    mono.add(trial, std::max(worst, 0.0));
    if (worst >= 0.0) mono.fail(trial);  // a flat step is not a decrease
    ++trial;
  }
  out.push_back(mono.done());
  return out;
}

std::vector<CheckReport> run_all(std::uint64_t seed) {
  std::vector<CheckReport> out;
  for (GradVariant v : all_grad_variants()) out.push_back(gradcheck(v, 10, seed));
  const std::size_t degrees[] = {0, 1, 2, 3, 4, 6, 8, 10, 12};
  for (auto& r : kernel_approx_check(degrees, 1000, seed)) out.push_back(std::move(r));
  for (auto& r : identity_suite(seed, 50)) out.push_back(std::move(r));
  for (auto& r : invariant_suite(seed, 100)) out.push_back(std::move(r));
  for (auto& r : svr_suite(seed, 20)) out.push_back(std::move(r));
  for (auto& r : cost_suite()) out.push_back(std::move(r));
  return out;
}

bool all_passed(std::span<const CheckReport> reports) {
  return std::all_of(reports.begin(), reports.end(), [](const CheckReport& r) { return r.passed; });
}

void write_report_csv(std::ostream& out, std::span<const CheckReport> reports) {
  out << "name,max_abs_error,max_rel_error,tolerance,passed,cases_run,first_failing_trial\n";
  for (const auto& r : reports) {
    out << csv_field(r.name) << ',' << format_double(r.max_abs_error) << ',' << format_double(r.max_rel_error) << ','
        << format_double(r.tolerance) << ',' << (r.passed ? "true" : "false") << ',' << r.cases_run << ',';
    if (r.first_failing_trial) out << *r.first_failing_trial;
    out << '\n';
  }
}

}  // namespace svrattn
