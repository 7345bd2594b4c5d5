#pragma once

// Explicit Runge-Kutta integrators for x' = f(x).
//
// Both integrators call `observe(t, x)` after every accepted step (and once at
// the start); returning true stops the integration early. This is how the
// sampler implements its convergence and divergence tests.

#include <algorithm>
#include <array>
#include <cmath>
#include <span>
#include <vector>

namespace lyapdoa {

struct AdaptiveTolerances {
  double rtol = 1e-8;
  double atol = 1e-10;
  double h_init = 1e-3;
  double h_min = 1e-12;
  long max_steps = 2'000'000;
};

enum class IntegrationStatus { Finished, Stopped, StepUnderflow, StepLimit, NonFinite };

struct IntegrationOutcome {
  IntegrationStatus status = IntegrationStatus::Finished;
  double t = 0.0;
  long steps = 0;
  long rejected = 0;
};

/// Classical RK4 with fixed step h (the last step is shortened to hit t_end).
/// A negative h integrates backward in time.
template <class Rhs, class Observer>
IntegrationOutcome integrate_rk4(const Rhs& f, std::span<double> x, double t_end, double h, Observer&& observe) {
  const std::size_t n = x.size();
  std::vector<double> k1(n), k2(n), k3(n), k4(n), tmp(n);
  IntegrationOutcome out;
  double t = 0.0;
  if (observe(t, std::span<const double>(x))) {
    out.status = IntegrationStatus::Stopped;
    return out;
  }
  const double dir = t_end >= 0.0 ? 1.0 : -1.0;
  h = dir * std::abs(h);
  while (dir * (t_end - t) > 0.0) {
    const double step = dir * std::min(std::abs(h), std::abs(t_end - t));
    f(std::span<const double>(x), std::span<double>(k1));
    for (std::size_t i = 0; i < n; ++i) tmp[i] = x[i] + 0.5 * step * k1[i];
    f(std::span<const double>(tmp), std::span<double>(k2));
    for (std::size_t i = 0; i < n; ++i) tmp[i] = x[i] + 0.5 * step * k2[i];
    f(std::span<const double>(tmp), std::span<double>(k3));
    for (std::size_t i = 0; i < n; ++i) tmp[i] = x[i] + step * k3[i];
    f(std::span<const double>(tmp), std::span<double>(k4));
    bool finite = true;
    for (std::size_t i = 0; i < n; ++i) {
      x[i] += step / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
      finite = finite && std::isfinite(x[i]);
    }
    t = (std::abs(t_end - (t + step)) < 1e-15 * std::max(1.0, std::abs(t_end))) ? t_end : t + step;
    ++out.steps;
    out.t = t;
    if (!finite) {
      out.status = IntegrationStatus::NonFinite;
      return out;
    }
    if (observe(t, std::span<const double>(x))) {
      out.status = IntegrationStatus::Stopped;
      return out;
    }
  }
  return out;
}

/// Dormand-Prince 5(4) with standard PI-free step control.
template <class Rhs, class Observer>
IntegrationOutcome integrate_dp45(const Rhs& f, std::span<double> x, double t_end, const AdaptiveTolerances& tol,
                                  Observer&& observe) {
  static constexpr double a21 = 1.0 / 5;
  static constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
  static constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
  static constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561,
                          a54 = -212.0 / 729;
  static constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                          a65 = -5103.0 / 18656;
  static constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192, b5 = -2187.0 / 6784,
                          b6 = 11.0 / 84;
  static constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920, e5 = -17253.0 / 339200,
                          e6 = 22.0 / 525, e7 = -1.0 / 40;

  const std::size_t n = x.size();
  std::vector<double> k1(n), k2(n), k3(n), k4(n), k5(n), k6(n), k7(n), y(n), tmp(n);
  IntegrationOutcome out;
  double t = 0.0;
  if (observe(t, std::span<const double>(x))) {
    out.status = IntegrationStatus::Stopped;
    return out;
  }
  auto F = [&](const std::vector<double>& in, std::vector<double>& res) {
    f(std::span<const double>(in), std::span<double>(res));
  };
  std::copy(x.begin(), x.end(), y.begin());
  F(y, k1);
  double h = std::min(tol.h_init, t_end);
  while (t < t_end) {
    if (out.steps + out.rejected >= tol.max_steps) {
      out.status = IntegrationStatus::StepLimit;
      break;
    }
    if (h < tol.h_min) {
      out.status = IntegrationStatus::StepUnderflow;
      break;
    }
    h = std::min(h, t_end - t);
    for (std::size_t i = 0; i < n; ++i) tmp[i] = y[i] + h * a21 * k1[i];
    F(tmp, k2);
    for (std::size_t i = 0; i < n; ++i) tmp[i] = y[i] + h * (a31 * k1[i] + a32 * k2[i]);
    F(tmp, k3);
    for (std::size_t i = 0; i < n; ++i) tmp[i] = y[i] + h * (a41 * k1[i] + a42 * k2[i] + a43 * k3[i]);
    F(tmp, k4);
    for (std::size_t i = 0; i < n; ++i)
      tmp[i] = y[i] + h * (a51 * k1[i] + a52 * k2[i] + a53 * k3[i] + a54 * k4[i]);
    F(tmp, k5);
    for (std::size_t i = 0; i < n; ++i)
      tmp[i] = y[i] + h * (a61 * k1[i] + a62 * k2[i] + a63 * k3[i] + a64 * k4[i] + a65 * k5[i]);
    F(tmp, k6);
    for (std::size_t i = 0; i < n; ++i)
      tmp[i] = y[i] + h * (b1 * k1[i] + b3 * k3[i] + b4 * k4[i] + b5 * k5[i] + b6 * k6[i]);
    F(tmp, k7);

    double err = 0.0;
    bool finite = true;
    for (std::size_t i = 0; i < n; ++i) {
      const double ei = h * (e1 * k1[i] + e3 * k3[i] + e4 * k4[i] + e5 * k5[i] + e6 * k6[i] + e7 * k7[i]);
      const double sc = tol.atol + tol.rtol * std::max(std::abs(y[i]), std::abs(tmp[i]));
      err = std::max(err, std::abs(ei) / sc);
      finite = finite && std::isfinite(tmp[i]) && std::isfinite(ei);
    }
    if (!finite) {
      // Treat overflow inside a trial step as a rejection with a strong cut.
      h *= 0.1;
      ++out.rejected;
      continue;
    }
    if (err <= 1.0) {
      t += h;
      std::swap(y, tmp);
      std::swap(k1, k7);  // FSAL
      ++out.steps;
      out.t = t;
      std::copy(y.begin(), y.end(), x.begin());
      if (observe(t, std::span<const double>(x))) {
        out.status = IntegrationStatus::Stopped;
        return out;
      }
      const double fac = err == 0.0 ? 5.0 : std::clamp(0.9 * std::pow(err, -0.2), 0.2, 5.0);
      h *= fac;
    } else {
      ++out.rejected;
      h *= std::clamp(0.9 * std::pow(err, -0.2), 0.1, 1.0);
    }
  }
  std::copy(y.begin(), y.end(), x.begin());
  out.t = t;
  return out;
}

}  // namespace lyapdoa
