// SPDX-License-Identifier: Apache-2.0
#include <array>
#include <cmath>
#include <functional>
#include <string>

#include "common.hpp"
#include "svrattn/errors.hpp"

namespace svrattn {

namespace {

constexpr std::array kVariants{GradVariant::Softmax, GradVariant::LinearElu, GradVariant::LinearExp,
                               GradVariant::Sparse,  GradVariant::BnFull,    GradVariant::BnRecenter,
                               GradVariant::Conv1D,  GradVariant::Conv2D,    GradVariant::FullResidual};

double loss(const GradInstance& inst) {
  const Matrix h = attend(inst.spec, inst.q, inst.k, inst.v).h;
  double s = 0.0;
  for (std::size_t i = 0; i < h.size(); ++i) s += h.data()[i] * inst.dh.data()[i];
  return s;
}

// Pointer to the idx-th scalar of the named parameter inside a spec copy.
double* param_slot(AttentionSpec& spec, const std::string& name, std::size_t idx) {
  if (auto* bn = std::get_if<BnSpec>(&spec); bn && name == "beta") return &bn->beta;
  if (auto* c1 = std::get_if<Conv1DSpec>(&spec)) {
    if (name == "kernel") return &c1->kernel[idx];
    if (name == "key_kernel") return &(*c1->key_kernel)[idx];
  }
  if (auto* c2 = std::get_if<Conv2DSpec>(&spec)) {
    if (name == "kernel") return &c2->kernel.data()[idx];
    if (name == "key_kernel") return &c2->key_kernel->data()[idx];
  }
  if (auto* r = std::get_if<FullResidualSpec>(&spec)) {
    if (name == "w_q") return &r->w_q.data()[idx];
    if (name == "w_k") return &r->w_k.data()[idx];
    if (name == "w_v") return &r->w_v.data()[idx];
  }
  throw ParameterError("gradcheck: no parameter `" + name + "` in " + variant_name(spec));
}

Mask random_mask(SplitMix64& rng, std::size_t rows, std::size_t cols) {
  Mask m(rows, cols, false);
  for (std::size_t i = 0; i < rows; ++i) {
    bool any = false;
    for (std::size_t j = 0; j < cols; ++j) {
      const bool on = rng.uniform() < 0.6;
      m.set(i, j, on);
      any = any || on;
    }
    if (!any) m.set(i, detail::pick(rng, 0, cols - 1), true);
  }
  return m;
}

std::vector<double> random_vector(SplitMix64& rng, std::size_t n, double lo, double hi) {
  std::vector<double> out(n);
  for (double& x : out) x = rng.uniform(lo, hi);
  return out;
}

}  // namespace

std::span<const GradVariant> all_grad_variants() { return kVariants; }

const char* grad_variant_name(GradVariant v) {
  switch (v) {
    case GradVariant::Softmax: return "softmax";
    case GradVariant::LinearElu: return "linear_elu";
    case GradVariant::LinearExp: return "linear_exp";
    case GradVariant::Sparse: return "sparse";
    case GradVariant::BnFull: return "bn_full";
    case GradVariant::BnRecenter: return "bn_recenter";
    case GradVariant::Conv1D: return "conv1d";
    case GradVariant::Conv2D: return "conv2d";
    case GradVariant::FullResidual: return "full_residual";
  }
  return "?";
}

GradInstance random_grad_instance(GradVariant variant, SplitMix64& rng, double lo, double hi) {
  using detail::pick;
  using detail::random_matrix;
  std::size_t n = pick(rng, 2, 6);
  const std::size_t d = pick(rng, 2, 4);
  const std::size_t dv = pick(rng, 1, 3);
  std::size_t nk = pick(rng, 2, 6);
  GradInstance inst;

  switch (variant) {
    case GradVariant::Softmax: inst.spec = SoftmaxSpec{}; break;
    case GradVariant::LinearElu: inst.spec = LinearSpec{FeatureMapSpec::elu_plus_one(d)}; break;
    case GradVariant::LinearExp: inst.spec = LinearSpec{FeatureMapSpec::exp_truncated(2 * pick(rng, 1, 2), d)}; break;
    case GradVariant::Sparse: inst.spec = SparseSpec{random_mask(rng, n, nk)}; break;
    case GradVariant::BnFull:
      // two keys normalize to +-1 per coordinate whatever their values, leaving
      // a key gradient of order eps that central differences cannot resolve
      nk = pick(rng, 3, 6);
      inst.spec = BnSpec{BnMode::FullBN, 1.0, kDefaultEpsBn};
      break;
    case GradVariant::BnRecenter: inst.spec = BnSpec{BnMode::RecenterOnly, rng.uniform(0.0, 1.5), kDefaultEpsBn}; break;
    case GradVariant::Conv1D: {
      nk = n;
      auto& c = inst.spec.emplace<Conv1DSpec>();
      const std::size_t s = 2 * pick(rng, 0, 2) + 1;
      c.kernel = random_vector(rng, s, -1.0, 1.0);
      if (rng.uniform() < 0.5) c.key_kernel = random_vector(rng, s, -1.0, 1.0);
      break;
    }
    case GradVariant::Conv2D: {
      auto& c = inst.spec.emplace<Conv2DSpec>();
      c.grid_h = pick(rng, 1, 2);
      c.grid_w = pick(rng, 2, 3);
      n = nk = c.grid_h * c.grid_w;
      const std::size_t s = 2 * pick(rng, 0, 1) + 1;
      c.kernel = random_matrix(rng, s, s);
      if (rng.uniform() < 0.5) c.key_kernel = random_matrix(rng, s, s);
      break;
    }
    case GradVariant::FullResidual: {
      FullResidualSpec r{random_matrix(rng, d, d), random_matrix(rng, d, d), random_matrix(rng, d, d)};
      inst.spec = std::move(r);
      inst.q = inst.k = inst.v = random_matrix(rng, n, d, lo, hi);
      inst.dh = random_matrix(rng, n, d);
      return inst;
    }
  }
  inst.q = random_matrix(rng, n, d, lo, hi);
  inst.k = random_matrix(rng, nk, d, lo, hi);
  inst.v = random_matrix(rng, nk, dv, lo, hi);
  inst.dh = random_matrix(rng, n, dv);
  return inst;
}

GradErrors gradcheck_instance(const GradInstance& inst, double step) {
  const Gradients g = attention_backward(inst.spec, inst.q, inst.k, inst.v, inst.dh);
  const bool self = std::holds_alternative<FullResidualSpec>(inst.spec);
  GradErrors err;

  auto compare = [&](double analytic, const std::function<double(double)>& at) {
    const double numeric = (at(step) - at(-step)) / (2.0 * step);
    const double diff = std::abs(analytic - numeric);
    const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
    err.max_abs = std::max(err.max_abs, diff);
    err.max_rel = std::max(err.max_rel, std::isnan(diff) ? INFINITY : diff / denom);
    ++err.entries;
  };

  auto sweep_input = [&](const Matrix& grad, int which) {
    for (std::size_t i = 0; i < grad.size(); ++i) {
      compare(grad.data()[i], [&](double delta) {
        GradInstance p = inst;
        if (self) {
          p.q.data()[i] += delta;
          p.k = p.v = p.q;
        } else {
          Matrix& m = which == 0 ? p.q : which == 1 ? p.k : p.v;
          m.data()[i] += delta;
        }
        return loss(p);
      });
    }
  };
  sweep_input(g.dq, 0);
  if (!self) {
    sweep_input(g.dk, 1);
    sweep_input(g.dv, 2);
  }
  for (const auto& [name, grad] : g.params) {
    for (std::size_t i = 0; i < grad.size(); ++i) {
      compare(grad.data()[i], [&, &name = name](double delta) {
        GradInstance p = inst;
        *param_slot(p.spec, name, i) += delta;
        return loss(p);
      });
    }
  }
  return err;
}

CheckReport gradcheck(GradVariant variant, std::size_t trials, std::uint64_t seed) {
  if (trials == 0) throw ParameterError("gradcheck: trial_count must be >= 1");
  detail::Tally tally(std::string("gradcheck/") + grad_variant_name(variant), 1e-4, true);
  for (std::size_t t = 0; t < trials; ++t) {
    SplitMix64 rng = SplitMix64::for_trial(seed, t);
    const GradInstance inst = random_grad_instance(variant, rng);
    const GradErrors e = gradcheck_instance(inst);
    tally.add(t, e.max_abs, e.max_rel);
  }
  // Large entries: only finiteness is checked, not accuracy.
  SplitMix64 rng = SplitMix64::for_trial(seed, trials);
  const GradInstance big = random_grad_instance(variant, rng, -30.0, 30.0);
  bool finite = true;
  try {
    const AttentionOutput out = attend(big.spec, big.q, big.k, big.v);
    const Gradients g = attention_backward(big.spec, big.q, big.k, big.v, big.dh);
    auto ok = [](const Matrix& m) {
      for (double x : m.data())
        if (!std::isfinite(x)) return false;
      return true;
    };
    finite = ok(out.h) && ok(g.dq) && ok(g.dk) && ok(g.dv);
    for (const auto& p : g.params) finite = finite && ok(p.second);
  } catch (const Error&) {
    finite = false;
  }
  CheckReport r = tally.done();
  if (!finite) {
    if (r.passed) r.first_failing_trial = trials;
    r.passed = false;
  }
  return r;
}

}  // namespace svrattn
