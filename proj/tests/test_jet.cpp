#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

#include "lyapdoa/benchmarks.hpp"
#include "lyapdoa/dynamics.hpp"
#include "lyapdoa/jet.hpp"
#include "oracles.hpp"

using namespace lyapdoa;
using namespace oracle;

namespace {

std::vector<double> convolve(const std::vector<double>& a, const std::vector<double>& b) {
  std::vector<double> r(a.size(), 0.0);
  for (std::size_t k = 0; k < a.size(); ++k)
    for (std::size_t j = 0; j <= k; ++j) r[k] += a[j] * b[k - j];
  return r;
}

}  // namespace

TEST(TaylorJet, ProductIsTruncatedConvolution) {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> g;
  for (int t = 0; t < 50; ++t) {
    std::vector<double> a(6), b(6);
    for (auto& v : a) v = g(rng);
    for (auto& v : b) v = g(rng);
    TaylorJet ja(5), jb(5);
    ja = TaylorJet{a[0], a[1], a[2], a[3], a[4], a[5]};
    jb = TaylorJet{b[0], b[1], b[2], b[3], b[4], b[5]};
    const auto r = ja * jb;
    const auto ref = convolve(a, b);
    for (std::size_t k = 0; k < 6; ++k) EXPECT_NEAR(r[k], ref[k], 1e-12 * (1 + std::abs(ref[k])));
  }
}

TEST(TaylorJet, QuotientInvertsProduct) {
  const TaylorJet a{1.5, -2.0, 0.25, 3.0};
  const TaylorJet b{2.0, 0.5, -1.0, 0.125};
  const auto q = (a * b) / b;
  for (std::size_t k = 0; k < 4; ++k) EXPECT_NEAR(q[k], a[k], 1e-13);
  const TaylorJet z{0.0, 1.0, 0.0, 0.0};
  EXPECT_THROW((void)(a / z), std::exception);
}

TEST(TaylorJet, PowerMatchesRepeatedProduct) {
  const TaylorJet a{0.7, -1.1, 0.3, 2.0, -0.5};
  auto ref = TaylorJet::constant(1.0, 4);
  for (int e = 0; e <= 5; ++e) {
    const auto p = pow(a, e);
    for (std::size_t k = 0; k < 5; ++k) EXPECT_NEAR(p[k], ref[k], 1e-12 * (1 + std::abs(ref[k])));
    ref = ref * a;
  }
  const auto inv = pow(a, -2) * pow(a, 2);
  EXPECT_NEAR(inv[0], 1.0, 1e-14);
  for (std::size_t k = 1; k < 5; ++k) EXPECT_NEAR(inv[k], 0.0, 1e-12);
}

TEST(Lift, OriginLiftsToZero) {
  const auto s = lift(builtin("vdp2"), Vec{0.0, 0.0}, 2);
  ASSERT_EQ(s.z.size(), 6u);
  for (double v : s.z) EXPECT_EQ(v, 0.0);
  for (double v : s.zdot) EXPECT_EQ(v, 0.0);
}

TEST(Lift, VanDerPolByHand) {
  // f(1,1) = (1, -4); J(1,1) = [[0, 1], [0, -2]] so fdot = J f = (-4, 8).
  const auto s = lift(builtin("vdp2"), Vec{1.0, 1.0}, 1);
  const Vec z{1, 1, 1, -4}, zdot{1, -4, -4, 8};
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_DOUBLE_EQ(s.z[i], z[i]);
    EXPECT_DOUBLE_EQ(s.zdot[i], zdot[i]);
  }
}

TEST(Lift, ShiftIdentityIsExact) {
  std::mt19937_64 rng(9);
  for (const auto& row : benchmark_rows()) {
    const auto sys = builtin(row.system);
    const auto n = static_cast<std::size_t>(sys.dim());
    for (int k = 0; k < 20; ++k) {
      Vec x(n);
      for (std::size_t i = 0; i < n; ++i)
        x[i] = std::uniform_real_distribution<double>(row.roi.lower[i], row.roi.upper[i])(rng);
      for (int d = 1; d <= 3; ++d) {
        const auto s = lift(sys, x, d);
        for (std::size_t i = 0; i < n; ++i) EXPECT_EQ(s.z[i], x[i]);
        for (std::size_t i = 0; i < n * static_cast<std::size_t>(d); ++i) EXPECT_EQ(s.z[n + i], s.zdot[i]);
      }
    }
  }
}

TEST(Lift, RejectsBadOrderAndDimension) {
  const auto sys = builtin("vdp2");
  EXPECT_THROW((void)lift(sys, Vec{1.0, 1.0}, 0), ConfigError);
  EXPECT_THROW((void)lift(sys, Vec{1.0}, 1), ConfigError);
}

// Every f^(i), i <= 3, against finite differences of f along a long-double
// trajectory, at 100 random ROI points per builtin system.
TEST(Lift, MatchesTrajectoryFiniteDifferences) {
  const int d = 3;
  std::mt19937_64 rng(21);
  for (const auto& row : benchmark_rows()) {
    const auto sys = builtin(row.system);
    const auto n = static_cast<std::size_t>(sys.dim());
    double worst = 0.0;
    for (int k = 0; k < 100; ++k) {
      Vec x(n);
      for (std::size_t i = 0; i < n; ++i)
        x[i] = std::uniform_real_distribution<double>(row.roi.lower[i], row.roi.upper[i])(rng);
      const auto s = lift(sys, x, d);
      double fnorm = 0.0;
      for (std::size_t i = 0; i < n; ++i) fnorm = std::max(fnorm, std::abs(s.zdot[i]));
      // Step scaled to the local time scale of the flow.
      const LD h = 0.02L / (1.0L + fnorm);
      const auto ref = fd_derivatives(sys, x, d, h);
      for (int o = 0; o <= d; ++o) {
        double diff = 0.0, mag = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
          const double jet = s.zdot[static_cast<std::size_t>(o) * n + i];
          diff += std::pow(jet - static_cast<double>(ref[o][i]), 2);
          mag += std::pow(static_cast<double>(ref[o][i]), 2);
        }
        const double rel = std::sqrt(diff) / (1.0 + std::sqrt(mag));
        worst = std::max(worst, rel);
        EXPECT_LE(rel, 1e-6) << row.system << " order " << o << " at point " << k;
      }
    }
    RecordProperty(row.system + "_worst_rel_err", std::to_string(worst));
  }
}
