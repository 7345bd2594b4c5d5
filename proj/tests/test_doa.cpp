#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "lyapdoa/doa.hpp"

using namespace lyapdoa;

namespace {

LyapunovCandidate scaled_norm(int n, double s) {
  LyapunovCandidate c;
  c.n = n;
  c.d = 1;
  c.P = Eigen::MatrixXd::Zero(2 * n, 2 * n);
  for (int i = 0; i < n; ++i) c.P(i, i) = s;
  return c;
}

// x' = x^3 - 4x with V = 0.1 x^2 + f^2: {V <= 1} is an interval around the
// origin plus two islands around the unstable equilibria +-2.
const DynamicalSystem& island_sys() {
  static const auto sys = parse_system("x1^3 - 4*x1", 1);
  return sys;
}
LyapunovCandidate island_cand() {
  LyapunovCandidate c;
  c.n = 1;
  c.d = 1;
  c.P = Eigen::Matrix2d{{0.1, 0.0}, {0.0, 1.0}};
  return c;
}
double island_V(double x) {
  const double f = x * x * x - 4 * x;
  return 0.1 * x * x + f * f;
}

RunConfig decay_config() {
  RunConfig c;
  c.system = "-x1 + x2; -x2";
  c.roi = {{-1, -1}, {1, 1}};
  c.grid = 10;
  c.d = 1;
  c.volume_samples = 20000;
  c.audit_samples = 100;
  c.true_grid = 10;
  return c;
}

}  // namespace

TEST(Volume, UnitDiskInBox) {
  const auto sys = parse_system("-x1; -x2", 2);
  const Roi roi{{-2, -2}, {2, 2}};
  const auto v = volume(sys, scaled_norm(2, 1.0), roi, 200000, 4);
  EXPECT_NEAR(v.volume, std::numbers::pi, 4 * v.std_error);
  const double q = static_cast<double>(v.hits) / static_cast<double>(v.samples);
  EXPECT_DOUBLE_EQ(v.std_error, 16.0 * std::sqrt(q * (1 - q) / 200000.0));
}

TEST(Volume, WholeBoxHasNoError) {
  const auto sys = parse_system("-x1; -x2", 2);
  const Roi roi{{-1, -1}, {1, 1}};
  const auto v = volume(sys, scaled_norm(2, 0.1), roi, 10000, 1);
  EXPECT_DOUBLE_EQ(v.volume, 4.0);
  EXPECT_DOUBLE_EQ(v.std_error, 0.0);
}

TEST(Volume, ComponentDropsIslands) {
  const Roi roi{{-3.0}, {3.0}};
  // Oracle: the origin interval ends where V crosses 1 (bisection), the full
  // sublevel measure comes from a fine scan.
  double lo = 0.0, hi = 1.0;
  for (int k = 0; k < 200; ++k) {
    const double mid = 0.5 * (lo + hi);
    (island_V(mid) <= 1.0 ? lo : hi) = mid;
  }
  const double origin_len = 2.0 * lo;
  double full_len = 0.0;
  const int N = 2'000'000;
  for (int k = 0; k < N; ++k) full_len += island_V(-3.0 + 6.0 * (k + 0.5) / N) <= 1.0 ? 6.0 / N : 0.0;
  ASSERT_GT(full_len, origin_len + 0.05);

  const auto cand = island_cand();
  const SublevelComponent comp(island_sys(), cand, roi, 4001);
  const auto with = volume(island_sys(), cand, roi, 400000, 2, &comp);
  const auto without = volume(island_sys(), cand, roi, 400000, 2);
  EXPECT_NEAR(with.volume, origin_len, 4 * with.std_error + 1e-3);
  EXPECT_NEAR(without.volume, full_len, 4 * without.std_error);
}

TEST(Volume, SeededAndThreadIndependent) {
  const auto sys = parse_system("-x1; -x2", 2);
  const Roi roi{{-2, -2}, {2, 2}};
  set_thread_count(1);
  const auto a = volume(sys, scaled_norm(2, 1.0), roi, 100000, 9);
  set_thread_count(3);
  const auto b = volume(sys, scaled_norm(2, 1.0), roi, 100000, 9);
  set_thread_count(0);
  const auto c = volume(sys, scaled_norm(2, 1.0), roi, 100000, 10);
  EXPECT_EQ(a.hits, b.hits);
  EXPECT_NE(a.hits, c.hits);
  EXPECT_THROW(volume(sys, scaled_norm(2, 1.0), roi, 9999, 1), ConfigError);
}

TEST(TrueVolume, GloballyStableSystemFillsTheBox) {
  const auto sys = parse_system("-x1; -x2", 2);
  EXPECT_DOUBLE_EQ(true_doa_volume(sys, Roi{{-1, -1}, {1, 1}}, 11, SimConfig{}), 4.0);
}

TEST(Audit, DecayPassesGrowthFails) {
  const Roi roi{{-2, -2}, {2, 2}};
  const auto a = soundness_audit(parse_system("-x1; -x2", 2), scaled_norm(2, 1.0), roi, 200, SimConfig{}, 3);
  EXPECT_EQ(a.samples, 200u);
  EXPECT_DOUBLE_EQ(a.pass_rate, 1.0);
  const auto b = soundness_audit(parse_system("x1; x2", 2), scaled_norm(2, 1.0), roi, 200, SimConfig{}, 3);
  EXPECT_LT(b.pass_rate, 0.05);
  EXPECT_EQ(b.failures.size(), 20u);
}

TEST(Audit, UnstableMargin) {
  const auto sys = parse_system("-x1; -x2", 2);
  const auto c = scaled_norm(2, 1.0);
  EXPECT_DOUBLE_EQ(unstable_margin_rate(sys, c, {{2, 0}, {0, 1.2}}, 0.1), 1.0);
  EXPECT_DOUBLE_EQ(unstable_margin_rate(sys, c, {{2, 0}, {0, 1.0}}, 0.1), 0.5);
  EXPECT_DOUBLE_EQ(unstable_margin_rate(sys, c, {}, 0.1), 1.0);
}

TEST(Contour, UnitCircle) {
  const auto sys = parse_system("-x1; -x2", 2);
  const Roi roi{{-2, -2}, {2, 2}};
  const auto lines = export_contour(sys, scaled_norm(2, 1.0), roi, SlicePlane{}, 201);
  ASSERT_EQ(lines.size(), 1u);
  const auto& l = lines.front();
  EXPECT_EQ(l.front(), l.back());  // closed
  EXPECT_GT(l.size(), 100u);
  for (const auto& [a, b] : l) EXPECT_NEAR(std::hypot(a, b), 1.0, 1e-3);
}

TEST(Contour, SliceOfSphere) {
  const auto sys = parse_system("-x1; -x2; -x3", 3);
  const Roi roi{{-2, -2, -2}, {2, 2, 2}};
  const SlicePlane plane{0, 2, {0.0, 0.6, 0.0}};
  const auto lines = export_contour(sys, scaled_norm(3, 1.0), roi, plane, 201);
  ASSERT_EQ(lines.size(), 1u);
  for (const auto& [a, b] : lines.front()) EXPECT_NEAR(std::hypot(a, b), 0.8, 1e-3);
}

TEST(Contour, TwoLoops) {
  // V = (x1^2 - 4)^2 + x2^2 through the f block: two discs around x1 = +-2.
  const Roi roi{{-3, -3}, {3, 3}};
  const auto sys = parse_system("x1^2 - 4; -x2", 2);
  LyapunovCandidate c;
  c.n = 2;
  c.d = 1;
  c.P = Eigen::MatrixXd::Zero(4, 4);
  c.P(2, 2) = 1.0;
  c.P(1, 1) = 1.0;
  const auto lines = export_contour(sys, c, roi, SlicePlane{}, 301);
  ASSERT_EQ(lines.size(), 2u);
  for (const auto& l : lines) EXPECT_EQ(l.front(), l.back());
  EXPECT_THROW(export_contour(sys, c, roi, SlicePlane{0, 0, {}}, 50), ConfigError);
}

TEST(Contour, SliceMissingTheSetIsEmpty) {
  const auto sys = parse_system("-x1; -x2; -x3", 3);
  const Roi roi{{-2, -2, -2}, {2, 2, 2}};
  EXPECT_TRUE(export_contour(sys, scaled_norm(3, 1.0), roi, SlicePlane{0, 1, {0.0, 0.0, 1.5}}, 50).empty());
}

TEST(Run, LinearSystemVerifiesAtOnce) {
  const auto rep = run(decay_config());
  ASSERT_TRUE(rep.verified);
  EXPECT_EQ(rep.iterations, 1);
  EXPECT_TRUE(rep.failure.empty());
  ASSERT_TRUE(rep.estimated_volume);
  EXPECT_GT(rep.estimated_volume->volume, 0.0);
  EXPECT_DOUBLE_EQ(*rep.true_volume, 4.0);
  ASSERT_TRUE(rep.audit);
  EXPECT_DOUBLE_EQ(rep.audit->pass_rate, 1.0);
  EXPECT_DOUBLE_EQ(*rep.unstable_margin_rate, 1.0);
  const auto j = to_json(rep);
  EXPECT_EQ(j["config"]["system"], "-x1 + x2; -x2");
  EXPECT_TRUE(j.contains("times"));
  EXPECT_FALSE(to_json(rep, false).contains("times"));
}

TEST(Run, ReproducibleModuloTimings) {
  auto cfg = decay_config();
  cfg.system = "ex2_2d";
  cfg.roi = {{-2.5, -2.5}, {2.5, 2.5}};
  cfg.grid = 12;
  set_thread_count(1);
  const auto a = to_json(run(cfg), false).dump();
  set_thread_count(4);
  const auto b = to_json(run(cfg), false).dump();
  set_thread_count(0);
  EXPECT_EQ(a, b);
}

TEST(Run, StopsAtIterationLimitWithCounterexample) {
  auto cfg = decay_config();
  cfg.system = "vdp2";
  cfg.roi = {{-4, -10}, {4, 10}};
  cfg.grid = 30;
  cfg.d = 2;
  cfg.learner.delta = 0.15;
  cfg.i_max = 1;
  const auto rep = run(cfg);
  EXPECT_FALSE(rep.verified);
  EXPECT_FALSE(rep.candidate.has_value());
  EXPECT_NE(rep.failure.find("i_max"), std::string::npos);
  ASSERT_EQ(rep.history.size(), 1u);
  EXPECT_TRUE(rep.history[0].counterexample.has_value());
  EXPECT_GE(rep.history[0].gamma_star, 0.0);
}

TEST(Run, RepeatedCounterexampleEndsTheLoop) {
  auto cfg = decay_config();
  cfg.system = "vdp2";
  cfg.roi = {{-4, -10}, {4, 10}};
  cfg.grid = 30;
  cfg.d = 2;
  cfg.learner.delta = 0.15;
  cfg.dedup_tol = 100.0;  // every point is "close" to a sample
  const auto rep = run(cfg);
  EXPECT_FALSE(rep.verified);
  EXPECT_EQ(rep.iterations, 1);
  EXPECT_NE(rep.failure.find("repeats"), std::string::npos);
}

TEST(Run, NoStableSamplesIsAnError) {
  auto cfg = decay_config();
  const auto sys = resolve_system(cfg.system, 2);
  SampleSet set;
  set.roi = cfg.roi;
  set.grid_points_per_dim = 2;
  set.points = {{1, 1}, {-1, 1}};
  set.labels = {Stability::Unstable, Stability::Unstable};
  EXPECT_THROW(run_on_dataset(sys, set, cfg), Error);
}

TEST(Run, ConsensusBackendCertifiesToo) {
  auto cfg = decay_config();
  AdmmConfig a;
  a.m = 2;
  cfg.admm = a;
  const auto rep = run(cfg);
  EXPECT_TRUE(rep.verified);
  ASSERT_FALSE(rep.history.empty());
  EXPECT_GT(rep.history[0].admm_iterations, 0);
}

TEST(RunConfig, Validation) {
  auto c = decay_config();
  EXPECT_NO_THROW(c.validate());
  c.volume_samples = 100;
  EXPECT_THROW(c.validate(), ConfigError);
  c = decay_config();
  c.system.clear();
  EXPECT_THROW(c.validate(), ConfigError);
  c = decay_config();
  c.i_max = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = decay_config();
  c.true_grid = 1;
  EXPECT_THROW(c.validate(), ConfigError);
  EXPECT_EQ(decay_config().resolved_true_grid(), 10);
  c = decay_config();
  c.true_grid = -1;
  EXPECT_EQ(c.resolved_true_grid(), 100);
}

TEST(ResolveSystem, BuiltinDimensionMustMatch) {
  EXPECT_EQ(resolve_system("vdp2", 2).name(), "vdp2");
  EXPECT_THROW(resolve_system("vdp2", 3), ConfigError);
  EXPECT_EQ(resolve_system("x2; -x1", 2).dim(), 2);
}
