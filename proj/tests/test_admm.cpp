#include <gtest/gtest.h>

#include <cmath>
#include <algorithm>
#include <random>
#include <sstream>

#include "lyapdoa/admm.hpp"
#include "lyapdoa/benchmarks.hpp"
#include "lyapdoa/learner.hpp"
#include "lyapdoa/sampling.hpp"

using namespace lyapdoa;

namespace {

// Small learner LP: 10 stable samples on a ring, 4 unstable ones just outside.
LinearProgram small_learner_lp() {
  const auto sys = parse_system("-x1 + 0.2*x2; -x2 - 0.5*x1^3", 2);
  std::vector<Vec> st, un;
  for (int k = 0; k < 10; ++k) {
    const double a = 0.6 * k;
    st.push_back({0.8 * std::cos(a), 0.8 * std::sin(a)});
  }
  un = {{0.9, 0}, {0, 0.9}, {-0.9, 0}, {0, -0.9}};
  LearnerData data;
  data.n = 2;
  data.d = 1;
  data.stable = lift_all(sys, st, 1, SampleLabel::Stable);
  data.unstable = lift_all(sys, un, 1, SampleLabel::Unstable);
  LearnerConfig cfg;
  cfg.epsilon = 1e-3;
  cfg.delta = 1.0;  // unstable ring just outside the stable one: some alpha > 0
  return assemble(data, cfg);
}

const LinearProgram& vdp_learner_lp() {
  static const LinearProgram lp = [] {
    const auto row = benchmark_row("vdp2");
    const auto sys = builtin("vdp2");
    const auto set = build_dataset(sys, row.roi, row.grid, SimConfig{});
    LearnerConfig cfg;
    cfg.epsilon = row.epsilon;
    cfg.delta = row.delta;
    return assemble(lift_dataset(sys, set, row.d, {}), cfg);
  }();
  return lp;
}

std::size_t count_divisible(const LinearProgram& lp) {
  std::size_t k = 0;
  for (auto v : lp.divisible) k += v != 0;
  return k;
}

}  // namespace

TEST(Split, SingleBlockIsTheOriginal) {
  const auto lp = small_learner_lp();
  const auto b = split(lp, 1);
  ASSERT_EQ(b.size(), 1u);
  EXPECT_EQ(b[0].A.rows(), lp.A.rows());
  EXPECT_EQ((Eigen::MatrixXd(b[0].A) - Eigen::MatrixXd(lp.A)).cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(b[0].b, lp.b);
}

TEST(Split, TwoBlocksShareTheCommonRows) {
  const auto lp = small_learner_lp();
  const std::size_t D = count_divisible(lp);
  ASSERT_EQ(D, 20u);  // level and decrease rows of 10 samples
  const auto shared = static_cast<std::size_t>(lp.A.rows()) - D;
  const auto b = split(lp, 2);
  ASSERT_EQ(b.size(), 2u);
  for (const auto& blk : b) {
    EXPECT_EQ(static_cast<std::size_t>(blk.A.rows()), shared + 10);
    EXPECT_EQ(count_divisible(blk), 10u);
  }
  // Odd counts differ by at most one row.
  const auto b3 = split(lp, 3);
  std::size_t total = 0;
  for (const auto& blk : b3) {
    total += count_divisible(blk);
    EXPECT_GE(count_divisible(blk), 6u);
    EXPECT_LE(count_divisible(blk), 7u);
  }
  EXPECT_EQ(total, D);
}

TEST(Split, FeasibleSetIsTheIntersectionOfBlocks) {
  const auto lp = small_learner_lp();
  const auto blocks = split(lp, 4);
  std::mt19937_64 rng(8);
  std::normal_distribution<double> g(0.0, 0.5);
  for (int t = 0; t < 100; ++t) {
    Eigen::VectorXd x(lp.c.size());
    for (auto& v : x) v = g(rng);
    double worst = 0.0;
    for (const auto& b : blocks) worst = std::max(worst, b.max_violation(x));
    EXPECT_NEAR(worst, lp.max_violation(x), 1e-14);
  }
}

TEST(Split, RejectsTooManyBlocks) {
  const auto lp = small_learner_lp();
  EXPECT_NO_THROW((void)split(lp, 20));
  EXPECT_THROW((void)split(lp, 21), ConfigError);
  EXPECT_THROW((void)split(lp, 0), ConfigError);
}

TEST(Admm, OneBlockMatchesDirectSolve) {
  const auto lp = small_learner_lp();
  const auto direct = solve_lp(lp);
  ASSERT_EQ(direct.status, SolveStatus::Optimal);
  AdmmConfig cfg;
  const auto r = admm_solve(lp, cfg);
  ASSERT_EQ(r.solve.status, SolveStatus::Optimal) << r.solve.message;
  EXPECT_NEAR(r.solve.obj, direct.obj, 1e-6 * std::abs(direct.obj));
}

TEST(Admm, RandomProgramObjectiveConsistency) {
  // Random halfspaces a'x <= 1 (divisible) inside a shared box |x_j| <= 5.
  std::mt19937_64 rng(17);
  std::normal_distribution<double> g;
  int converged = 0;
  for (int t = 0; t < 10; ++t) {
    const int n = 4, rows = 24;
    std::vector<Eigen::Triplet<double>> trip;
    LinearProgram lp;
    lp.b.resize(rows + 2 * n);
    for (int i = 0; i < rows; ++i) {
      for (int j = 0; j < n; ++j) trip.emplace_back(i, j, g(rng));
      lp.b[i] = 1.0;
    }
    for (int j = 0; j < n; ++j) {
      trip.emplace_back(rows + 2 * j, j, 1.0);
      trip.emplace_back(rows + 2 * j + 1, j, -1.0);
      lp.b[rows + 2 * j] = lp.b[rows + 2 * j + 1] = 5.0;
    }
    lp.A.resize(rows + 2 * n, n);
    lp.A.setFromTriplets(trip.begin(), trip.end());
    lp.c = Eigen::VectorXd::NullaryExpr(n, [&] { return g(rng); });
    lp.lower = Eigen::VectorXd::Constant(n, -kInf);
    lp.divisible.assign(static_cast<std::size_t>(rows + 2 * n), 0);
    for (int i = 0; i < rows; ++i) lp.divisible[static_cast<std::size_t>(i)] = 1;
    const auto direct = solve_lp(lp);
    ASSERT_EQ(direct.status, SolveStatus::Optimal);
    for (int m : {2, 3}) {
      AdmmConfig cfg;
      cfg.m = m;
      cfg.max_iters = 2000;
      const auto r = admm_solve(lp, cfg);
      if (r.solve.status != SolveStatus::Optimal) continue;
      ++converged;
      EXPECT_NEAR(consensus_objective(lp, r.state), direct.obj, 10 * r.tolerance) << "t=" << t << " m=" << m;
    }
  }
  EXPECT_EQ(converged, 20);
}

TEST(Admm, VanDerPolTwoBlocksMatchDirectSolve) {
  const auto& lp = vdp_learner_lp();
  const auto direct = solve_lp(lp);
  ASSERT_EQ(direct.status, SolveStatus::Optimal);
  AdmmConfig cfg;
  cfg.m = 2;
  const auto r = admm_solve(lp, cfg);
  EXPECT_EQ(r.solve.status, SolveStatus::Optimal) << r.solve.message;
  EXPECT_LE(std::abs(r.solve.obj - direct.obj), 1e-3 * std::abs(direct.obj));
  EXPECT_LE(r.state.r_norm, r.tolerance);
  EXPECT_LE(r.state.s_norm, r.tolerance);
}

TEST(Admm, InfeasibleBlockIsReported) {
  LinearProgram lp;
  lp.c = Eigen::VectorXd::Ones(1);
  Eigen::MatrixXd A(2, 1);
  A << 1, -1;
  lp.A = A.sparseView();
  lp.b = Eigen::Vector2d(-1, -1);  // x <= -1 and x >= 1
  lp.lower = Eigen::VectorXd::Constant(1, -kInf);
  lp.divisible = {1, 1};
  AdmmConfig cfg;
  cfg.m = 1;
  EXPECT_EQ(admm_solve(lp, cfg).solve.status, SolveStatus::Infeasible);
}

TEST(Admm, DeterministicAcrossThreadCounts) {
  const auto lp = small_learner_lp();
  AdmmConfig cfg;
  cfg.m = 3;
  cfg.max_iters = 60;
  set_thread_count(1);
  const auto a = admm_solve(lp, cfg);
  set_thread_count(4);
  const auto b = admm_solve(lp, cfg);
  set_thread_count(0);
  EXPECT_EQ(a.solve.x, b.solve.x);
  ASSERT_EQ(a.history.size(), b.history.size());
  for (std::size_t k = 0; k < a.history.size(); ++k) EXPECT_EQ(a.history[k].r_norm, b.history[k].r_norm);
}

TEST(Admm, ScaledDualsSumToZeroAfterEveryUpdate) {
  // z is the exact mean of xi + u, so sum(u) stays at its initial value 0.
  const auto lp = small_learner_lp();
  AdmmConfig cfg;
  cfg.m = 4;
  cfg.max_iters = 25;
  const auto r = admm_solve(lp, cfg);
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(lp.c.size());
  for (const auto& u : r.state.u) sum += u;
  EXPECT_LE(sum.cwiseAbs().maxCoeff(), 1e-9 * (1 + r.state.z.cwiseAbs().maxCoeff()));
}

TEST(Admm, WarmStartAtOptimumStaysThere) {
  const auto lp = small_learner_lp();
  const auto direct = solve_lp(lp);
  AdmmConfig cfg;
  cfg.m = 2;
  ConsensusState st;
  st.xi.assign(2, direct.x);
  st.u.assign(2, Eigen::VectorXd::Zero(lp.c.size()));
  st.z = direct.x;
  st.rho = 1.0;
  EXPECT_EQ(residuals(st, st.z).first, 0.0);
  // Block optima differ from the global one, so only closeness is asserted.
  const auto r = admm_solve(lp, cfg, {}, &st);
  EXPECT_EQ(r.solve.status, SolveStatus::Optimal);
  EXPECT_NEAR(r.solve.obj, direct.obj, 1e-2 * std::abs(direct.obj));
  ConsensusState bad = st;
  bad.xi.resize(3);
  EXPECT_THROW((void)admm_solve(lp, cfg, {}, &bad), ConfigError);
}

TEST(Residuals, ConsensusAndUnchangedZ) {
  ConsensusState st;
  st.z = Eigen::Vector3d(1, -2, 3);
  st.xi.assign(3, st.z);
  st.u.assign(3, Eigen::VectorXd::Zero(3));
  st.rho = 2.0;
  const auto [r, s] = residuals(st, Eigen::Vector3d(0, 0, 0));
  EXPECT_EQ(r, 0.0);
  EXPECT_NEAR(s, 2.0 * std::sqrt(3.0) * std::sqrt(14.0), 1e-12);
  EXPECT_EQ(residuals(st, st.z).second, 0.0);
}

TEST(Residuals, MatchDirectRecomputation) {
  std::mt19937_64 rng(13);
  std::normal_distribution<double> g;
  for (int t = 0; t < 50; ++t) {
    const int m = 1 + t % 5, n = 7;
    ConsensusState st;
    st.rho = std::exp(g(rng));
    st.z = Eigen::VectorXd::NullaryExpr(n, [&] { return g(rng); });
    const Eigen::VectorXd zp = Eigen::VectorXd::NullaryExpr(n, [&] { return g(rng); });
    for (int i = 0; i < m; ++i) st.xi.push_back(Eigen::VectorXd::NullaryExpr(n, [&] { return g(rng); }));
    // Stacked matrices [xi_1 .. xi_m] - [z .. z] and rho ([z .. z] - [zp .. zp]).
    Eigen::MatrixXd R(n, m), S(n, m);
    for (int i = 0; i < m; ++i) {
      R.col(i) = st.xi[static_cast<std::size_t>(i)] - st.z;
      S.col(i) = st.rho * (st.z - zp);
    }
    const auto [r, s] = residuals(st, zp);
    EXPECT_NEAR(r, R.norm(), 1e-12 * (1 + R.norm()));
    EXPECT_NEAR(s, S.norm(), 1e-12 * (1 + S.norm()));
  }
}

TEST(AdmmConfig, Validation) {
  AdmmConfig c;
  EXPECT_NO_THROW(c.validate());
  c.m = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.rho = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.eps_bar = -1;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.max_iters = 0;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(AdmmHistory, CsvHasOneLinePerIteration) {
  const auto lp = small_learner_lp();
  AdmmConfig cfg;
  cfg.m = 2;
  cfg.max_iters = 10;
  const auto r = admm_solve(lp, cfg);
  std::ostringstream os;
  write_admm_history_csv(os, r.history);
  const std::string text = os.str();
  EXPECT_EQ(text.rfind("iter,r_norm,s_norm,objective,rho\n", 0), 0u);
  EXPECT_EQ(static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n')), r.history.size() + 1);
}
