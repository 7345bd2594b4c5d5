#pragma once

// Consensus ADMM over a row partition of the learner LP.
//
// Shared rows go to every block; divisible rows (the per-sample level and
// decrease rows) are cut into m contiguous slices. Each iteration solves m
// proximal LPs (diagonal QPs), averages, and updates the scaled duals.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <string>
#include <tuple>
#include <vector>

#include <nlohmann/json.hpp>

#include "lyapdoa/error.hpp"
#include "lyapdoa/lp.hpp"
#include "lyapdoa/parallel.hpp"

namespace lyapdoa {

struct AdmmConfig {
  int m = 1;
  double rho = 1.0;
  double eps_bar = 1e-4;  // scaled by sqrt(n_opt * m)
  int max_iters = 500;
  // Double/halve rho when |r|/|s| leaves [0.1, 10], checked only at
  // iterations 1, 2, 4, 8, ... so that rho settles.
  bool adaptive_rho = true;

  void validate() const {
    if (m < 1) throw ConfigError("admm.m must be >= 1");
    if (!(rho > 0.0)) throw ConfigError("admm.rho must be > 0");
    if (!(eps_bar > 0.0)) throw ConfigError("admm.eps_bar must be > 0");
    if (max_iters < 1) throw ConfigError("admm.max_iters must be >= 1");
  }
};

struct ConsensusState {
  std::vector<Eigen::VectorXd> xi;
  Eigen::VectorXd z;  // the common column of z~
  std::vector<Eigen::VectorXd> u;
  double rho = 1.0;
  int iter = 0;
  double r_norm = 0.0;
  double s_norm = 0.0;

  [[nodiscard]] int blocks() const noexcept { return static_cast<int>(xi.size()); }
};

/// Frobenius norms of r = xi~ - z~ and s = rho (z~_new - z~_old).
inline std::pair<double, double> residuals(const ConsensusState& st, const Eigen::VectorXd& z_prev) {
  double r2 = 0.0;
  for (const auto& x : st.xi) r2 += (x - st.z).squaredNorm();
  const double s = st.rho * std::sqrt(static_cast<double>(st.xi.size())) * (st.z - z_prev).norm();
  return {std::sqrt(r2), s};
}

struct AdmmRecord {
  int iter = 0;
  double r_norm = 0.0;
  double s_norm = 0.0;
  double objective = 0.0;
  double rho = 0.0;
};

struct AdmmResult {
  SolveResult solve;
  ConsensusState state;
  std::vector<AdmmRecord> history;
  double tolerance = 0.0;  // eps_bar * sqrt(n_opt * m)
  int subproblem_iters = 0;
  int inexact_subproblems = 0;  // block solves that stopped short of the IPM tolerances
};

/// Block i: all shared rows plus the i-th contiguous slice of divisible rows.
/// Slice sizes differ by at most one row.
inline std::vector<LinearProgram> split(const LinearProgram& lp, int m) {
  lp.validate();
  if (m < 1) throw ConfigError("split: m must be >= 1");
  if (m == 1) {
    LinearProgram copy = lp;
    return {copy};
  }
  std::vector<Eigen::Index> shared, divisible;
  for (Eigen::Index i = 0; i < lp.A.rows(); ++i) {
    const bool d = !lp.divisible.empty() && lp.divisible[static_cast<std::size_t>(i)] != 0;
    (d ? divisible : shared).push_back(i);
  }
  if (static_cast<std::size_t>(m) > divisible.size())
    throw ConfigError("split: m = " + std::to_string(m) + " exceeds the " + std::to_string(divisible.size()) +
                      " divisible rows");
  std::vector<LinearProgram> blocks;
  const std::size_t D = divisible.size();
  for (int k = 0; k < m; ++k) {
    const std::size_t begin = D * static_cast<std::size_t>(k) / static_cast<std::size_t>(m);
    const std::size_t end = D * static_cast<std::size_t>(k + 1) / static_cast<std::size_t>(m);
    std::vector<Eigen::Index> rows;
    rows.insert(rows.end(), divisible.begin() + static_cast<std::ptrdiff_t>(begin),
                divisible.begin() + static_cast<std::ptrdiff_t>(end));
    rows.insert(rows.end(), shared.begin(), shared.end());
    std::sort(rows.begin(), rows.end());
    std::vector<Eigen::Triplet<double>> trip;
    Eigen::VectorXd b(static_cast<Eigen::Index>(rows.size()));
    std::vector<std::uint8_t> div(rows.size());
    for (std::size_t r = 0; r < rows.size(); ++r) {
      for (SparseRowMatrix::InnerIterator it(lp.A, rows[r]); it; ++it)
        trip.emplace_back(static_cast<Eigen::Index>(r), it.col(), it.value());
      b[static_cast<Eigen::Index>(r)] = lp.b[rows[r]];
      div[r] = lp.divisible.empty() ? 0 : lp.divisible[static_cast<std::size_t>(rows[r])];
    }
    LinearProgram blk;
    blk.c = lp.c;
    blk.A.resize(static_cast<Eigen::Index>(rows.size()), lp.c.size());
    blk.A.setFromTriplets(trip.begin(), trip.end());
    blk.A.makeCompressed();
    blk.b = std::move(b);
    blk.lower = lp.lower;
    blk.divisible = std::move(div);
    blocks.push_back(std::move(blk));
  }
  return blocks;
}

/// Sum over blocks of the scaled cost (1/m) c'xi_i; equals c'z at consensus.
inline double consensus_objective(const LinearProgram& lp, const ConsensusState& st) {
  double v = 0.0;
  for (const auto& x : st.xi) v += lp.c.dot(x);
  return v / static_cast<double>(st.xi.size());
}

inline AdmmResult admm_solve(const LinearProgram& lp, const AdmmConfig& cfg, const SolverTolerances& tol = {},
                             const ConsensusState* warm = nullptr) {
  cfg.validate();
  if (lp.has_proximal()) throw Error("admm_solve: expects a linear objective");
  const auto t0 = std::chrono::steady_clock::now();
  const auto blocks = split(lp, cfg.m);
  const Eigen::Index n = lp.c.size();
  const double m = static_cast<double>(cfg.m);

  AdmmResult out;
  out.tolerance = cfg.eps_bar * std::sqrt(static_cast<double>(n) * m);
  ConsensusState& st = out.state;
  if (warm) {
    st = *warm;
    if (st.blocks() != cfg.m || st.z.size() != n) throw ConfigError("admm_solve: warm start has the wrong shape");
  } else {
    st.xi.assign(static_cast<std::size_t>(cfg.m), Eigen::VectorXd::Zero(n));
    st.u.assign(static_cast<std::size_t>(cfg.m), Eigen::VectorXd::Zero(n));
    st.z = Eigen::VectorXd::Zero(n);
    st.rho = cfg.rho;
  }

  std::vector<LinearProgram> sub(blocks.begin(), blocks.end());
  for (auto& s : sub) {
    s.c = lp.c / m;
    s.q = Eigen::VectorXd::Constant(n, st.rho);
    s.x0 = Eigen::VectorXd::Zero(n);
  }
  std::vector<SolveResult> results(sub.size());

  SolveStatus status = SolveStatus::IterationLimit;
  for (int k = 0; k < cfg.max_iters; ++k) {
    for (std::size_t i = 0; i < sub.size(); ++i) {
      sub[i].x0 = st.z - st.u[i];
      sub[i].q.setConstant(st.rho);
    }
    parallel_for(sub.size(), [&](std::size_t i) { results[i] = solve_qp_diag(sub[i], tol); }, 1);
    for (std::size_t i = 0; i < sub.size(); ++i) {
      out.subproblem_iters += results[i].iterations;
      if (results[i].status == SolveStatus::Infeasible) {
        out.solve.status = SolveStatus::Infeasible;
        out.solve.message = "consensus block " + std::to_string(i + 1) + " of " + std::to_string(cfg.m) +
                            " is infeasible, so the full problem is infeasible";
        out.solve.x = st.z;
        out.solve.iterations = k;
        return out;
      }
      // The IPM hands back its best iterate when it stalls; ADMM tolerates
      // inexact block solves, so only a missing or non-finite point aborts.
      if (results[i].status == SolveStatus::IterationLimit && results[i].x.size() == n && results[i].x.allFinite()) {
        ++out.inexact_subproblems;
      } else if (results[i].status != SolveStatus::Optimal) {
        out.solve.status = SolveStatus::IterationLimit;
        out.solve.message = "consensus block " + std::to_string(i + 1) + " subproblem failed: " + results[i].message;
        out.solve.x = st.z;
        out.solve.iterations = k;
        return out;
      }
      st.xi[i] = results[i].x;
    }
    const Eigen::VectorXd z_prev = st.z;
    Eigen::VectorXd zsum = Eigen::VectorXd::Zero(n);
    for (std::size_t i = 0; i < sub.size(); ++i) zsum += st.xi[i] + st.u[i];
    st.z = zsum / m;
    for (std::size_t i = 0; i < sub.size(); ++i) st.u[i] += st.xi[i] - st.z;
    st.iter = k + 1;
    std::tie(st.r_norm, st.s_norm) = residuals(st, z_prev);
    out.history.push_back({st.iter, st.r_norm, st.s_norm, consensus_objective(lp, st), st.rho});
    if (st.r_norm <= out.tolerance && st.s_norm <= out.tolerance) {
      status = SolveStatus::Optimal;
      break;
    }
    if (cfg.adaptive_rho && (st.iter & (st.iter - 1)) == 0) {
      // Scaled duals u = y / rho are rescaled with rho.
      if (st.r_norm > 10.0 * st.s_norm) {
        st.rho *= 2.0;
        for (auto& u : st.u) u *= 0.5;
      } else if (st.s_norm > 10.0 * st.r_norm) {
        st.rho *= 0.5;
        for (auto& u : st.u) u *= 2.0;
      }
    }
  }

  // The block iterates agree to within r; their mean is reported.
  Eigen::VectorXd x = Eigen::VectorXd::Zero(n);
  for (const auto& xi : st.xi) x += xi;
  x /= m;
  out.solve.status = status;
  out.solve.x = x;
  out.solve.obj = lp.c.dot(x);
  out.solve.dual_obj = out.solve.obj;
  out.solve.primal_residual = lp.max_violation(x);
  out.solve.iterations = st.iter;
  out.solve.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (status != SolveStatus::Optimal) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "consensus not reached in %d iterations (|r| %.3e, |s| %.3e, target %.3e)",
                  cfg.max_iters, st.r_norm, st.s_norm, out.tolerance);
    out.solve.message = buf;
  }
  return out;
}

/// LpBackend adaptor so the learner can run on ADMM.
class AdmmBackend final : public LpBackend {
 public:
  explicit AdmmBackend(AdmmConfig cfg) : cfg_(cfg) {}
  SolveResult solve(const LinearProgram& lp, const SolverTolerances& tol) const override {
    last_ = admm_solve(lp, cfg_, tol);
    return last_.solve;
  }
  [[nodiscard]] const AdmmResult& last() const noexcept { return last_; }

 private:
  AdmmConfig cfg_;
  mutable AdmmResult last_;
};

inline void write_admm_history_csv(std::ostream& os, const std::vector<AdmmRecord>& h) {
  os << "iter,r_norm,s_norm,objective,rho\n";
  for (const auto& r : h) os << r.iter << "," << r.r_norm << "," << r.s_norm << "," << r.objective << "," << r.rho << "\n";
}

inline nlohmann::json to_json(const AdmmConfig& c) {
  return {{"m", c.m}, {"rho", c.rho}, {"eps_bar", c.eps_bar}, {"max_iters", c.max_iters}, {"adaptive_rho", c.adaptive_rho}};
}

}  // namespace lyapdoa
