#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <string>

#include "lyapdoa/dynamics.hpp"

using namespace lyapdoa;

namespace {

// Hand-written right-hand sides of the benchmarks, used as the reference.
Vec vdp(const Vec& x) { return {x[1], -2 * x[0] - 3 * x[1] + x[0] * x[0] * x[1]}; }

Vec ex3(const Vec& x) {
  const double z = x[0] / (x[1] * x[1] + 1);
  return {x[1] + 0.5 * z, -x[0] - x[1] + 0.5 * x[0] * x[0]};
}

Vec sys5(const Vec& x) {
  const double z = x[2] / (x[3] * x[3] + 1);
  return {x[1], -2 * x[0] - 3 * x[1] + x[0] * x[0] * x[1] - x[3], x[3] + 0.5 * x[4] + 0.5 * z,
          -x[2] - x[3] + 0.5 * x[2] * x[2], 0.5 * (-2 * x[2] - 2 * x[4] - x[2] * x[2])};
}

std::string random_expr(std::mt19937_64& rng, int depth) {
  std::uniform_int_distribution<int> pick(0, depth <= 0 ? 1 : 6);
  std::uniform_int_distribution<int> var(1, 3);
  std::uniform_int_distribution<int> small(1, 9);
  switch (pick(rng)) {
    case 0: return "x" + std::to_string(var(rng));
    case 1: return std::to_string(small(rng)) + "." + std::to_string(small(rng));
    case 2: return "(" + random_expr(rng, depth - 1) + " + " + random_expr(rng, depth - 1) + ")";
    case 3: return random_expr(rng, depth - 1) + " - " + random_expr(rng, depth - 1);
    case 4: return random_expr(rng, depth - 1) + "*" + random_expr(rng, depth - 1);
    case 5: return "-" + random_expr(rng, depth - 1);
    default: return "(" + random_expr(rng, depth - 1) + ")^" + std::to_string(small(rng) % 4);
  }
}

}  // namespace

TEST(Parser, VanDerPolMatchesHandEvaluation) {
  const auto sys = parse_system("x2; -2*x1 - 3*x2 + x1^2*x2", 2);
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-5, 5);
  for (int k = 0; k < 50; ++k) {
    Vec x{u(rng), u(rng)};
    const Vec f = sys.eval(x), g = vdp(x);
    EXPECT_DOUBLE_EQ(f[0], g[0]);
    EXPECT_NEAR(f[1], g[1], 1e-12 * (1 + std::abs(g[1])));
  }
}

TEST(Parser, ZeroFieldLiftsToZero) {
  const auto sys = parse_system("0; 0", 2);
  const auto s = lift(sys, Vec{1.5, -2.0}, 3);
  for (std::size_t i = 2; i < s.z.size(); ++i) EXPECT_EQ(s.z[i], 0.0);
  for (double v : s.zdot) EXPECT_EQ(v, 0.0);
}

TEST(Parser, AcceptsRationalTerm) {
  const auto sys = parse_system("x1/(x2^2+1); x1", 2);
  const Vec f = sys.eval(Vec{2.0, 3.0});
  EXPECT_DOUBLE_EQ(f[0], 0.2);
  EXPECT_DOUBLE_EQ(f[1], 2.0);
}

TEST(Parser, ParametersAreSubstituted) {
  const auto sys = parse_system("p1*x1 - k*p1; -x2", 2, {{"p1", 0.5}, {"k", 4.0}});
  EXPECT_EQ(sys.source(), "0.5*x1 - 2; -x2");
}

TEST(Parser, ReportsErrorsWithPosition) {
  auto pos_of = [](const std::string& src, int n) -> std::size_t {
    try {
      (void)parse_system(src, n);
    } catch (const ParseError& e) {
      return e.position();
    }
    ADD_FAILURE() << "no error for " << src;
    return 0;
  };
  EXPECT_EQ(pos_of("x1 + y; x2", 2), 5u);
  EXPECT_EQ(pos_of("x1; x3", 2), 4u);
  EXPECT_EQ(pos_of("x0; x1", 2), 0u);
  EXPECT_EQ(pos_of("x1 $ 2; x2", 2), 3u);
  EXPECT_THROW((void)parse_system("(x1 + x2; x2", 2), ParseError);
  EXPECT_THROW((void)parse_system("x1^; x2", 2), ParseError);
  EXPECT_THROW((void)parse_system("x1^1.5; x2", 2), ParseError);
  EXPECT_THROW((void)parse_system("", 1), ParseError);
  EXPECT_THROW((void)parse_system("x1", 2), ParseError);
  EXPECT_THROW((void)parse_system("x1; x2; x1", 2), ParseError);
}

TEST(Parser, ArityMessageNamesCounts) {
  try {
    (void)parse_system("x1; x2; x1", 2);
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("expected 2"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("found 3"), std::string::npos);
  }
}

TEST(Parser, DivisionByZeroIsReportedAtEvaluation) {
  const auto sys = parse_system("x1/x2; x2", 2);
  EXPECT_NO_THROW((void)sys.eval(Vec{1.0, 2.0}));
  try {
    (void)sys.eval(Vec{1.0, 0.0});
    FAIL();
  } catch (const EvaluationError& e) {
    EXPECT_NE(std::string(e.what()).find("division by zero"), std::string::npos);
  }
  EXPECT_THROW((void)lift(sys, Vec{1.0, 0.0}, 2), EvaluationError);
}

TEST(Parser, PrintParseIsAFixedPoint) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-2, 2);
  for (int k = 0; k < 300; ++k) {
    const std::string src = random_expr(rng, 4);
    const auto a = parse_system(src + "; x2; x3", 3);
    const std::string p1 = a.source();
    const auto b = parse_system(p1, 3);
    EXPECT_EQ(b.source(), p1) << src;
    const Vec x{u(rng), u(rng), u(rng)};
    const double fa = a.eval(x)[0], fb = b.eval(x)[0];
    EXPECT_NEAR(fa, fb, 1e-12 * (1 + std::abs(fa))) << src;
  }
  for (const auto& name : builtin_names()) {
    const auto s = builtin(name);
    EXPECT_EQ(parse_system(s.source(), s.dim()).source(), s.source()) << name;
  }
}

TEST(Builtins, MatchTheirDefinitions) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-3, 3);
  const auto v = builtin("vdp2");
  const auto e3 = builtin("ex3_2d");
  const auto s5 = builtin("sys5d");
  ASSERT_EQ(s5.dim(), 5);
  for (int k = 0; k < 20; ++k) {
    Vec x2{u(rng), u(rng)};
    Vec x5{u(rng), u(rng), u(rng), u(rng), u(rng)};
    for (int i = 0; i < 2; ++i) {
      EXPECT_NEAR(v.eval(x2)[i], vdp(x2)[i], 1e-12);
      EXPECT_NEAR(e3.eval(x2)[i], ex3(x2)[i], 1e-12);
    }
    for (int i = 0; i < 5; ++i) EXPECT_NEAR(s5.eval(x5)[i], sys5(x5)[i], 1e-11);
  }
  // The -x4 coupling is the only link between the two subsystems.
  Vec x{0, 0, 0, 1, 0};
  EXPECT_DOUBLE_EQ(s5.eval(x)[1], -1.0);
}

TEST(Builtins, EquilibriumAtOrigin) {
  for (const auto& name : builtin_names()) {
    const auto s = builtin(name);
    EXPECT_LE(s.equilibrium_residual(), 1e-12) << name;
    EXPECT_NO_THROW(s.require_equilibrium_at_origin());
  }
  EXPECT_THROW(parse_system("x1 + 1; x2", 2).require_equilibrium_at_origin(), ConfigError);
  EXPECT_THROW((void)builtin("nope"), ConfigError);
}

TEST(Builtins, HashFollowsSource) {
  EXPECT_EQ(builtin("vdp2").hash(), parse_system("x2; -2*x1 - 3*x2 + x1^2*x2", 2).hash());
  EXPECT_NE(builtin("vdp2").hash(), builtin("ex2_2d").hash());
}
