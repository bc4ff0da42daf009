// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <numbers>
#include <string>

#include "common.hpp"
#include "svrattn/errors.hpp"
#include "svrattn/featuremap.hpp"

namespace svrattn {

std::vector<CheckReport> kernel_approx_check(std::span<const std::size_t> t_values, std::size_t sample_count,
                                             std::uint64_t seed) {
  if (t_values.empty() || sample_count == 0) throw ParameterError("kernel_approx_check: nothing to check");
  struct Sample {
    std::vector<double> x, y;
    double s;
  };
  std::vector<Sample> samples;
  SplitMix64 rng(seed ^ 0x6b65726e656cULL);
  while (samples.size() < sample_count) {
    const std::size_t d = detail::pick(rng, 1, 4);
    Sample smp{std::vector<double>(d), std::vector<double>(d), 0.0};
    double dot = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
      smp.x[i] = rng.uniform(-1.0, 1.0);
      smp.y[i] = rng.uniform(-1.0, 1.0);
      dot += smp.x[i] * smp.y[i];
    }
    smp.s = dot / std::sqrt(static_cast<double>(d));
    if (std::abs(smp.s) <= 1.0) samples.push_back(std::move(smp));
  }

  std::vector<CheckReport> out;
  double previous = INFINITY;
  double factorial = 1.0;
  std::size_t fact_n = 0;
  for (std::size_t t : t_values) {
    while (fact_n < t + 1) factorial *= static_cast<double>(++fact_n);
    double tol = std::numbers::e / factorial;
    if (t == 8) tol = std::min(tol, 1e-5);
    detail::Tally tally("kernel_approx/T=" + std::to_string(t), tol);
    std::vector<FeatureMapSpec> maps;
    for (std::size_t d = 1; d <= 4; ++d) maps.push_back(FeatureMapSpec::exp_truncated(t, d));
    for (std::size_t i = 0; i < samples.size(); ++i) {
      const auto& smp = samples[i];
      const FeatureMapSpec& fm = maps[smp.x.size() - 1];
      const double exact = std::exp(smp.s);
      const double err = std::abs(kernel_eval(fm, smp.x, smp.y) - exact);
      tally.add(i, err, err / exact);
    }
    CheckReport r = tally.done();
    // the error must not grow as T increases
    if (r.max_abs_error > previous) r.passed = false;
    previous = r.max_abs_error;
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace svrattn
