// SPDX-License-Identifier: Apache-2.0
#include "svrattn/featuremap.hpp"

#include <cmath>

#include "svrattn/errors.hpp"
#include "svrattn/simd.hpp"

namespace svrattn {

struct FeatureMapSpec::Tables {
  std::vector<unsigned> exponents;  // feature_count x D
  std::vector<double> coefficient;  // 1 / sqrt(prod n_i!)
};

namespace {

std::size_t binomial(std::size_t n, std::size_t k) {
  std::size_t r = 1;
  for (std::size_t i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return r;
}

// Appends all exponent tuples of total degree `remaining` over coordinates
// [pos, D), highest exponent on the earliest coordinate first.
void enumerate_degree(std::size_t pos, unsigned remaining, std::vector<unsigned>& current,
                      std::vector<unsigned>& out) {
  const std::size_t dim = current.size();
  if (pos + 1 == dim) {
    current[pos] = remaining;
    out.insert(out.end(), current.begin(), current.end());
    return;
  }
  for (unsigned e = remaining + 1; e-- > 0;) {
    current[pos] = e;
    enumerate_degree(pos + 1, remaining - e, current, out);
  }
}

void check_dim(const FeatureMapSpec& spec, std::size_t n, const char* who) {
  if (n != spec.input_dim()) {
    throw ShapeError(std::string(who) + ": input dimension " + std::to_string(n) +
                     " does not match feature map dimension " + std::to_string(spec.input_dim()));
  }
}

}  // namespace

std::size_t exp_feature_count(std::size_t degree, std::size_t dim) {
  std::size_t total = 0;
  for (std::size_t t = 0; t <= degree; ++t) total += binomial(dim + t - 1, t);
  return total;
}

FeatureMapSpec::FeatureMapSpec(FeatureKind kind, std::size_t degree, std::size_t dim)
    : kind_(kind), degree_(degree), dim_(dim) {
  if (dim == 0) throw ParameterError("feature map input dimension must be >= 1");
  if (kind != FeatureKind::ExpTruncated) {
    feature_count_ = dim;
    return;
  }
  if (degree > kMaxDegree) {
    throw ParameterError("ExpTruncated degree " + std::to_string(degree) + " exceeds cap " +
                         std::to_string(kMaxDegree));
  }
  feature_count_ = exp_feature_count(degree, dim);

  std::vector<double> factorial(degree + 1, 1.0);
  for (std::size_t t = 1; t <= degree; ++t) factorial[t] = factorial[t - 1] * static_cast<double>(t);

  auto tables = std::make_shared<Tables>();
  tables->exponents.reserve(feature_count_ * dim);
  std::vector<unsigned> current(dim, 0);
  for (unsigned t = 0; t <= degree; ++t) enumerate_degree(0, t, current, tables->exponents);

  tables->coefficient.resize(feature_count_);
  for (std::size_t f = 0; f < feature_count_; ++f) {
    double denom = 1.0;
    for (std::size_t i = 0; i < dim; ++i) denom *= factorial[tables->exponents[f * dim + i]];
    tables->coefficient[f] = 1.0 / std::sqrt(denom);
  }
  tables_ = std::move(tables);
}

FeatureMapSpec FeatureMapSpec::exp_truncated(std::size_t degree, std::size_t dim) {
  return FeatureMapSpec(FeatureKind::ExpTruncated, degree, dim);
}
FeatureMapSpec FeatureMapSpec::elu_plus_one(std::size_t dim) {
  return FeatureMapSpec(FeatureKind::EluPlusOne, 0, dim);
}
FeatureMapSpec FeatureMapSpec::identity(std::size_t dim) {
  return FeatureMapSpec(FeatureKind::Identity, 0, dim);
}

std::span<const unsigned> FeatureMapSpec::exponents() const {
  if (!tables_) return {};
  return tables_->exponents;
}

bool FeatureMapSpec::kernel_strictly_positive() const noexcept {
  switch (kind_) {
    case FeatureKind::EluPlusOne: return true;
    case FeatureKind::ExpTruncated: return degree_ % 2 == 0;
    case FeatureKind::Identity: return false;
  }
  return false;
}

std::string FeatureMapSpec::describe() const {
  switch (kind_) {
    case FeatureKind::ExpTruncated: return "exp:" + std::to_string(degree_);
    case FeatureKind::EluPlusOne: return "elu";
    case FeatureKind::Identity: return "identity";
  }
  return "?";
}

double elu_plus_one(double z) { return z >= 0.0 ? z + 1.0 : std::exp(z); }
double elu_plus_one_grad(double z) { return z >= 0.0 ? 1.0 : std::exp(z); }

std::vector<double> phi_apply(const FeatureMapSpec& spec, std::span<const double> x) {
  check_dim(spec, x.size(), "phi_apply");
  const std::size_t dim = spec.input_dim();
  switch (spec.kind()) {
    case FeatureKind::Identity: return {x.begin(), x.end()};
    case FeatureKind::EluPlusOne: {
      std::vector<double> out(dim);
      for (std::size_t i = 0; i < dim; ++i) out[i] = elu_plus_one(x[i]);
      return out;
    }
    case FeatureKind::ExpTruncated: break;
  }

  const std::size_t degree = spec.degree();
  const double inv_root4 = 1.0 / std::sqrt(std::sqrt(static_cast<double>(dim)));
  // powers[i * (T+1) + n] = (x_i / D^(1/4))^n
  std::vector<double> powers(dim * (degree + 1));
  for (std::size_t i = 0; i < dim; ++i) {
    const double xi = x[i] * inv_root4;
    double p = 1.0;
    for (std::size_t n = 0; n <= degree; ++n) {
      powers[i * (degree + 1) + n] = p;
      p *= xi;
    }
  }
  const auto& tab = *spec.tables_;
  std::vector<double> out(spec.feature_count());
  for (std::size_t f = 0; f < out.size(); ++f) {
    double v = tab.coefficient[f];
    for (std::size_t i = 0; i < dim; ++i) v *= powers[i * (degree + 1) + tab.exponents[f * dim + i]];
    out[f] = v;
  }
  return out;
}

Matrix phi_rows(const FeatureMapSpec& spec, const Matrix& m) {
  check_dim(spec, m.cols(), "phi_rows");
  Matrix out(m.rows(), spec.feature_count());
  for (std::size_t r = 0; r < m.rows(); ++r) {
    auto f = phi_apply(spec, m.row(r));
    std::ranges::copy(f, out.row(r).begin());
  }
  return out;
}

Matrix phi_jacobian(const FeatureMapSpec& spec, std::span<const double> x) {
  check_dim(spec, x.size(), "phi_jacobian");
  const std::size_t dim = spec.input_dim();
  Matrix jac(spec.feature_count(), dim);
  switch (spec.kind()) {
    case FeatureKind::Identity:
      for (std::size_t i = 0; i < dim; ++i) jac(i, i) = 1.0;
      return jac;
    case FeatureKind::EluPlusOne:
      for (std::size_t i = 0; i < dim; ++i) jac(i, i) = elu_plus_one_grad(x[i]);
      return jac;
    case FeatureKind::ExpTruncated: break;
  }

  const std::size_t degree = spec.degree();
  const double inv_root4 = 1.0 / std::sqrt(std::sqrt(static_cast<double>(dim)));
  std::vector<double> powers(dim * (degree + 1));
  for (std::size_t i = 0; i < dim; ++i) {
    const double xi = x[i] * inv_root4;
    double p = 1.0;
    for (std::size_t n = 0; n <= degree; ++n) {
      powers[i * (degree + 1) + n] = p;
      p *= xi;
    }
  }
  const auto& tab = *spec.tables_;
  for (std::size_t f = 0; f < spec.feature_count(); ++f) {
    const unsigned* e = &tab.exponents[f * dim];
    for (std::size_t i = 0; i < dim; ++i) {
      if (e[i] == 0) continue;
      // d/dx_i of (x_i s)^n = n s (x_i s)^(n-1), s = D^(-1/4)
      double v = tab.coefficient[f] * static_cast<double>(e[i]) * inv_root4;
      for (std::size_t l = 0; l < dim; ++l) {
        const unsigned n = l == i ? e[l] - 1 : e[l];
        v *= powers[l * (degree + 1) + n];
      }
      jac(f, i) = v;
    }
  }
  return jac;
}

double kernel_eval(const FeatureMapSpec& spec, std::span<const double> x, std::span<const double> y) {
  check_dim(spec, y.size(), "kernel_eval");
  const auto fx = phi_apply(spec, x);
  const auto fy = phi_apply(spec, y);
  return simd::active().dot(fx, fy);
}

double h_normalizer(const FeatureMapSpec& spec, std::span<const double> x, const Matrix& keys) {
  if (keys.rows() == 0) throw ShapeError("h_normalizer: no keys");
  check_dim(spec, keys.cols(), "h_normalizer");
  const auto fx = phi_apply(spec, x);
  const auto& k = simd::active();
  double h = 0.0;
  for (std::size_t j = 0; j < keys.rows(); ++j) h += k.dot(fx, phi_apply(spec, keys.row(j)));
  return h;
}

}  // namespace svrattn
