#pragma once

// Truncated univariate Taylor polynomials ("jets").
//
// A jet of order K holds c_0..c_K of a series in the trajectory time t. All
// products are truncated at t^K, which makes the arithmetic exact for the
// coefficients that are kept.

#include <cstddef>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <vector>

namespace lyapdoa {

namespace jet_kernels {

inline void add(std::span<const double> a, std::span<const double> b, std::span<double> out) {
  for (std::size_t k = 0; k < out.size(); ++k) out[k] = a[k] + b[k];
}

inline void sub(std::span<const double> a, std::span<const double> b, std::span<double> out) {
  for (std::size_t k = 0; k < out.size(); ++k) out[k] = a[k] - b[k];
}

inline void neg(std::span<const double> a, std::span<double> out) {
  for (std::size_t k = 0; k < out.size(); ++k) out[k] = -a[k];
}

// out must not alias a or b.
inline void mul(std::span<const double> a, std::span<const double> b, std::span<double> out) {
  for (std::size_t k = 0; k < out.size(); ++k) {
    double acc = 0.0;
    for (std::size_t j = 0; j <= k; ++j) acc += a[j] * b[k - j];
    out[k] = acc;
  }
}

// Requires b[0] != 0; out must not alias a or b.
inline void div(std::span<const double> a, std::span<const double> b, std::span<double> out) {
  for (std::size_t k = 0; k < out.size(); ++k) {
    double acc = a[k];
    for (std::size_t j = 1; j <= k; ++j) acc -= b[j] * out[k - j];
    out[k] = acc / b[0];
  }
}

// Non-negative integer power by repeated squaring. scratch needs 2*out.size().
inline void pow_uint(std::span<const double> a, unsigned e, std::span<double> out,
                     std::span<double> scratch) {
  const std::size_t len = out.size();
  std::span<double> base = scratch.subspan(0, len);
  std::span<double> tmp = scratch.subspan(len, len);
  for (std::size_t k = 0; k < len; ++k) {
    base[k] = a[k];
    out[k] = (k == 0) ? 1.0 : 0.0;
  }
  while (e > 0) {
    if (e & 1u) {
      mul(out, base, tmp);
      for (std::size_t k = 0; k < len; ++k) out[k] = tmp[k];
    }
    e >>= 1u;
    if (e > 0) {
      mul(base, base, tmp);
      for (std::size_t k = 0; k < len; ++k) base[k] = tmp[k];
    }
  }
}

}  // namespace jet_kernels

class TaylorJet {
 public:
  explicit TaylorJet(std::size_t order) : c_(order + 1, 0.0) {}
  TaylorJet(std::initializer_list<double> coeffs) : c_(coeffs) {
    if (c_.empty()) throw std::invalid_argument("TaylorJet needs at least one coefficient");
  }

  static TaylorJet constant(double v, std::size_t order) {
    TaylorJet j(order);
    j.c_[0] = v;
    return j;
  }

  /// The identity series t ↦ v + t.
  static TaylorJet variable(double v, std::size_t order) {
    TaylorJet j(order);
    j.c_[0] = v;
    if (order >= 1) j.c_[1] = 1.0;
    return j;
  }

  [[nodiscard]] std::size_t order() const noexcept { return c_.size() - 1; }
  [[nodiscard]] double operator[](std::size_t k) const { return c_[k]; }
  double& operator[](std::size_t k) { return c_[k]; }
  [[nodiscard]] std::span<const double> coeffs() const noexcept { return c_; }

  friend TaylorJet operator+(const TaylorJet& a, const TaylorJet& b) {
    TaylorJet r(check(a, b));
    jet_kernels::add(a.c_, b.c_, r.c_);
    return r;
  }
  friend TaylorJet operator-(const TaylorJet& a, const TaylorJet& b) {
    TaylorJet r(check(a, b));
    jet_kernels::sub(a.c_, b.c_, r.c_);
    return r;
  }
  friend TaylorJet operator-(const TaylorJet& a) {
    TaylorJet r(a.order());
    jet_kernels::neg(a.c_, r.c_);
    return r;
  }
  friend TaylorJet operator*(const TaylorJet& a, const TaylorJet& b) {
    TaylorJet r(check(a, b));
    jet_kernels::mul(a.c_, b.c_, r.c_);
    return r;
  }
  friend TaylorJet operator/(const TaylorJet& a, const TaylorJet& b) {
    TaylorJet r(check(a, b));
    if (b.c_[0] == 0.0) throw std::domain_error("jet division by a series with zero constant term");
    jet_kernels::div(a.c_, b.c_, r.c_);
    return r;
  }

  friend TaylorJet pow(const TaylorJet& a, int e) {
    TaylorJet r(a.order());
    std::vector<double> scratch(2 * a.c_.size());
    const unsigned mag = static_cast<unsigned>(e < 0 ? -e : e);
    jet_kernels::pow_uint(a.c_, mag, r.c_, scratch);
    if (e < 0) return constant(1.0, a.order()) / r;
    return r;
  }

 private:
  static std::size_t check(const TaylorJet& a, const TaylorJet& b) {
    if (a.c_.size() != b.c_.size()) throw std::invalid_argument("TaylorJet order mismatch");
    return a.order();
  }

  std::vector<double> c_;
};

}  // namespace lyapdoa
